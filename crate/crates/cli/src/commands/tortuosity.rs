//! `rfim tortuosity`: per-scale annulus-crossing and lasso statistics of the
//! disagreement set, with per-pair event rows and shortest-length quantiles.

use crate::commands::{parse_mode, PhysicsArgs};
use crate::config;
use crate::output::{fmt_f64, OutDir};
use anyhow::Result;
use rayon::prelude::*;
use rfim_core::analysis::{self};
use rfim_core::disagreement::{self, CrossingReport};
use rfim_core::lattice::{ExtendedGraph, Region, Vertex};
use rfim_core::sampler::{self, Purpose, RandomSource};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::io::Write;
use std::path::PathBuf;

#[derive(clap::Args, Serialize, Deserialize, Clone, Default)]
#[serde(default)]
pub struct TortuosityArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Annulus scales, comma separated; the annulus at scale l is
    /// Λ(2l) \ Λ(l).
    #[arg(long = "l", value_delimiter = ',')]
    pub l_list: Option<Vec<u32>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub physics: PhysicsArgs,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub sweeps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Resolved {
    l_list: Vec<u32>,
    beta: f64,
    #[serde(rename = "J")]
    j: f64,
    h: f64,
    eps: f64,
    replicas: usize,
    workers: usize,
    mode: String,
    sweeps: Option<u64>,
    seed: u64,
    out: PathBuf,
}

struct PairEvents {
    crossing: CrossingReport,
    lasso: bool,
    boundary_cluster_size: usize,
}

pub fn run(args: TortuosityArgs) -> Result<bool> {
    let file: TortuosityArgs = match &args.config {
        Some(p) => config::load(p)?,
        None => TortuosityArgs::default(),
    };
    let physics = args.physics.overlay(file.physics);
    let params = physics.resolve()?;
    let resolved = Resolved {
        l_list: config::pick(args.l_list, file.l_list, vec![2, 3, 4]),
        beta: params.beta,
        j: params.j,
        h: params.h,
        eps: params.eps,
        replicas: config::pick(args.replicas, file.replicas, 200),
        workers: config::pick(args.workers, file.workers, 0),
        mode: config::pick(args.mode, file.mode, "glauber".into()),
        sweeps: config::pick_opt(args.sweeps, file.sweeps),
        seed: config::pick(args.seed, file.seed, 0),
        out: config::pick(args.out, file.out, PathBuf::from("out/tortuosity")),
    };
    let mode = parse_mode(&resolved.mode)?;
    let out = OutDir::create(&resolved.out)?;
    out.write_manifest("tortuosity", &resolved, "running", &[])?;

    let pool = config::thread_pool(resolved.workers)?;
    let mut results = out.writer("results.csv")?;
    writeln!(
        results,
        "l,replicas,crossings,crossing_prob,lasso_freq,len_q10,len_q25,len_q50"
    )?;
    let mut events_csv = out.writer("events.csv")?;
    writeln!(
        events_csv,
        "replica,l1,l2,crossed,shortest_length,lasso,boundary_cluster_size"
    )?;

    let mut summaries = Vec::new();
    let mut per_scale_lengths: Vec<(u32, Vec<u32>)> = Vec::new();
    for (scale_idx, &l) in resolved.l_list.iter().enumerate() {
        let region = Region::ball(Vertex::ORIGIN, 2 * l);
        let boundary = region.internal_boundary(None);
        let graph = ExtendedGraph::new(&region);
        let replicas = resolved.replicas;
        let seed = resolved.seed;
        let sweeps = resolved
            .sweeps
            .unwrap_or(100 * region.num_vertices() as u64);
        let events: Vec<PairEvents> = pool.install(|| {
            (0..replicas as u64)
                .into_par_iter()
                .map(|rep| -> Result<PairEvents> {
                    let stream_id = rep * resolved.l_list.len() as u64 + scale_idx as u64;
                    let src = RandomSource::new(seed, stream_id);
                    let field =
                        sampler::gaussian_field(&region, &mut src.stream(Purpose::Field));
                    let pair = sampler::sample_pair(
                        &region, params, &field, &boundary, mode, sweeps, &src,
                    )?;
                    let geom =
                        disagreement::disagreement_set(&graph, &pair.plus, &pair.minus)?;
                    let crossing = disagreement::annulus_crossing(&geom, Vertex::ORIGIN, l, 2 * l);
                    let lasso =
                        disagreement::lasso_present(&geom, Vertex::ORIGIN, l, 2 * l, true);
                    let boundary_sites: Vec<_> = boundary
                        .iter()
                        .filter_map(|&v| {
                            region.vertex_index(v).map(|i| graph.vertex_site(i))
                        })
                        .collect();
                    let boundary_cluster_size = geom.cluster_of(&boundary_sites).len();
                    Ok(PairEvents {
                        crossing,
                        lasso,
                        boundary_cluster_size,
                    })
                })
                .collect::<Result<_>>()
        })?;

        for (rep, e) in events.iter().enumerate() {
            writeln!(
                events_csv,
                "{},{},{},{},{},{},{}",
                rep,
                l,
                2 * l,
                e.crossing.crossed,
                e.crossing
                    .shortest_length
                    .map_or(String::new(), |n| n.to_string()),
                e.lasso,
                e.boundary_cluster_size
            )?;
        }

        let reports: Vec<CrossingReport> = events.iter().map(|e| e.crossing).collect();
        let summary = analysis::tortuosity_summary(&reports, l);
        let lasso_freq =
            events.iter().filter(|e| e.lasso).count() as f64 / replicas.max(1) as f64;
        let q = |idx: usize| {
            summary
                .length_quantiles
                .get(idx)
                .map_or(String::new(), |&(_, v)| fmt_f64(v * l as f64))
        };
        writeln!(
            results,
            "{},{},{},{},{},{},{},{}",
            l,
            replicas,
            summary.crossings,
            fmt_f64(summary.crossing_prob),
            fmt_f64(lasso_freq),
            q(0),
            q(1),
            q(2)
        )?;
        println!(
            "l={:<3} crossing_prob={:.4} lasso_freq={:.4} crossings={}",
            l, summary.crossing_prob, lasso_freq, summary.crossings
        );
        per_scale_lengths.push((
            l,
            reports.iter().filter_map(|r| r.shortest_length).collect(),
        ));
        summaries.push(json!({ "summary": summary, "lasso_freq": lasso_freq }));
    }
    results.flush()?;
    events_csv.flush()?;

    let exponent = analysis::tortuosity_exponent(&per_scale_lengths, 0.25)
        .ok()
        .map(|(slope, se)| json!({ "exponent": slope, "stderr": se }));
    out.write_json(
        "summary.json",
        &json!({ "config": resolved, "scales": summaries, "length_exponent": exponent }),
    )?;
    out.write_manifest(
        "tortuosity",
        &resolved,
        "complete",
        &["results.csv", "events.csv", "summary.json"],
    )?;
    Ok(true)
}
