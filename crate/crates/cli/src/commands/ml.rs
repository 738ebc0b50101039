//! `rfim mL`: Monte Carlo estimates of the order parameter m(L) as the
//! probability that the origin connects to the boundary of Λ(L) through the
//! disagreement set, averaged over disorder and thermal randomness.

use crate::commands::{parse_mode, PhysicsArgs};
use crate::config;
use crate::output::{fmt_f64, OutDir};
use anyhow::Result;
use rayon::prelude::*;
use rfim_core::disagreement::{self};
use rfim_core::lattice::{ExtendedGraph, Region, Vertex};
use rfim_core::sampler::{self, Purpose, RandomSource, SampleMode};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::io::Write;
use std::path::PathBuf;

#[derive(clap::Args, Serialize, Deserialize, Clone, Default)]
#[serde(default)]
pub struct MlArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Box radii, comma separated (e.g. --L 2,4,8).
    #[arg(long = "L", value_delimiter = ',')]
    #[serde(rename = "L")]
    pub l_list: Option<Vec<u32>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub physics: PhysicsArgs,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// glauber | cftp
    #[arg(long)]
    pub mode: Option<String>,
    /// Glauber burn-in sweeps (default 100·|vertices| per box).
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

#[derive(Serialize)]
pub struct LEstimate {
    pub l: u32,
    pub m_hat: f64,
    pub stderr: f64,
    pub replicas: usize,
}

/// Estimates m(L) for each L with one shared disorder realization per
/// replica (drawn on the largest box and restricted to each smaller one).
pub fn estimate_m(
    l_list: &[u32],
    params: rfim_core::model::CouplingParams,
    replicas: usize,
    mode: SampleMode,
    sweeps: Option<u64>,
    seed: u64,
) -> Result<Vec<LEstimate>> {
    let l_max = l_list.iter().copied().max().unwrap_or(0);
    let big = Region::ball(Vertex::ORIGIN, l_max);
    let boxes: Vec<(u32, Region, Vec<Vertex>, ExtendedGraph)> = l_list
        .iter()
        .map(|&l| {
            let r = Region::ball(Vertex::ORIGIN, l);
            let b = r.internal_boundary(None);
            let g = ExtendedGraph::new(&r);
            (l, r, b, g)
        })
        .collect();

    let events: Vec<Vec<bool>> = (0..replicas as u64)
        .into_par_iter()
        .map(|rep| -> Result<Vec<bool>> {
            let src = RandomSource::new(seed, rep);
            let field = sampler::gaussian_field(&big, &mut src.stream(Purpose::Field));
            let mut row = Vec::with_capacity(boxes.len());
            for (i, (l, region, boundary, graph)) in boxes.iter().enumerate() {
                let n_sweeps = sweeps.unwrap_or(100 * region.num_vertices() as u64);
                // One chain stream per (replica, box) pair.
                let pair = sampler::sample_pair(
                    region,
                    params,
                    &field,
                    boundary,
                    mode,
                    n_sweeps,
                    &RandomSource::new(seed, rep * boxes.len() as u64 + i as u64),
                )?;
                let geom = disagreement::disagreement_set(graph, &pair.plus, &pair.minus)?;
                row.push(disagreement::order_parameter_event(
                    &geom,
                    region,
                    Vertex::ORIGIN,
                    *l,
                ));
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    Ok(l_list
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let hits = events.iter().filter(|row| row[i]).count();
            let p = hits as f64 / replicas.max(1) as f64;
            LEstimate {
                l,
                m_hat: p,
                stderr: (p * (1.0 - p) / replicas.max(1) as f64).sqrt(),
                replicas,
            }
        })
        .collect())
}

pub fn run(args: MlArgs) -> Result<bool> {
    let file: MlArgs = match &args.config {
        Some(p) => config::load(p)?,
        None => MlArgs::default(),
    };
    let physics = args.physics.overlay(file.physics);
    let params = physics.resolve()?;
    let resolved = Resolved {
        l_list: config::pick(args.l_list, file.l_list, vec![1, 2, 4]),
        beta: params.beta,
        j: params.j,
        h: params.h,
        eps: params.eps,
        replicas: config::pick(args.replicas, file.replicas, 1000),
        workers: config::pick(args.workers, file.workers, 0),
        mode: config::pick(args.mode, file.mode, "glauber".into()),
        sweeps: config::pick_opt(args.sweeps, file.sweeps),
        seed: config::pick(args.seed, file.seed, 0),
        out: config::pick(args.out, file.out, PathBuf::from("out/mL")),
    };
    let mode = parse_mode(&resolved.mode)?;
    let out = OutDir::create(&resolved.out)?;
    out.write_manifest("mL", &resolved, "running", &[])?;

    let pool = config::thread_pool(resolved.workers)?;
    let estimates = pool.install(|| {
        estimate_m(
            &resolved.l_list,
            params,
            resolved.replicas,
            mode,
            resolved.sweeps,
            resolved.seed,
        )
    })?;

    let mut csv = out.writer("results.csv")?;
    writeln!(csv, "L,m_hat,stderr,replicas")?;
    for e in &estimates {
        writeln!(
            csv,
            "{},{},{},{}",
            e.l,
            fmt_f64(e.m_hat),
            fmt_f64(e.stderr),
            e.replicas
        )?;
        println!("L={:<3} m_hat={:.6} +- {:.6}", e.l, e.m_hat, e.stderr);
    }
    csv.flush()?;
    out.write_json(
        "summary.json",
        &json!({ "config": resolved, "estimates": estimates }),
    )?;
    out.write_manifest("mL", &resolved, "complete", &["results.csv", "summary.json"])?;
    Ok(true)
}
