//! `rfim surface-tension`: per-replica exact surface tension against its
//! tilt-integral form, plus the aggregate anti-concentration report.

use crate::commands::PhysicsArgs;
use crate::config;
use crate::output::{fmt_f64, OutDir};
use anyhow::{bail, Result};
use rayon::prelude::*;
use rfim_core::analysis::{self, QuadRule, QuadratureSpec};
use rfim_core::gibbs::{self, Caps};
use rfim_core::lattice::{Region, RegionSpec};
use rfim_core::sampler::{self, Purpose, RandomSource};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::io::Write;
use std::path::PathBuf;

#[derive(clap::Args, Serialize, Deserialize, Clone, Default)]
#[serde(default)]
pub struct SurfaceTensionArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Inner box radius (ignored when --inner-spec is given).
    #[arg(long)]
    pub inner_radius: Option<u32>,
    /// Outer box radius (ignored when --outer-spec is given).
    #[arg(long)]
    pub outer_radius: Option<u32>,
    /// Inner region as JSON, e.g. '{"kind":"box","center":[0,0],"radius":0}'.
    #[arg(long)]
    pub inner_spec: Option<String>,
    /// Outer region as JSON.
    #[arg(long)]
    pub outer_spec: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub physics: PhysicsArgs,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Quadrature node count (odd for simpson).
    #[arg(long)]
    pub quad_points: Option<usize>,
    /// Quadrature truncation radius (defaults to the tilt scale).
    #[arg(long)]
    pub quad_tmax: Option<f64>,
    /// trapezoid | simpson
    #[arg(long)]
    pub quad_rule: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Resolved {
    inner: RegionSpec,
    outer: RegionSpec,
    beta: f64,
    #[serde(rename = "J")]
    j: f64,
    h: f64,
    eps: f64,
    replicas: usize,
    workers: usize,
    quad_points: usize,
    quad_tmax: f64,
    quad_rule: String,
    seed: u64,
    out: PathBuf,
}

fn region_spec(json: Option<String>, radius: Option<u32>, default_radius: u32) -> Result<RegionSpec> {
    match json {
        Some(s) => Ok(serde_json::from_str(&s)?),
        None => Ok(RegionSpec::Box {
            center: [0, 0],
            radius: radius.unwrap_or(default_radius),
        }),
    }
}

pub fn run(args: SurfaceTensionArgs) -> Result<bool> {
    let file: SurfaceTensionArgs = match &args.config {
        Some(p) => config::load(p)?,
        None => SurfaceTensionArgs::default(),
    };
    let physics = args.physics.overlay(file.physics);
    let params = physics.resolve()?;
    let inner_spec = region_spec(
        config::pick_opt(args.inner_spec, file.inner_spec),
        config::pick_opt(args.inner_radius, file.inner_radius),
        0,
    )?;
    let outer_spec = region_spec(
        config::pick_opt(args.outer_spec, file.outer_spec),
        config::pick_opt(args.outer_radius, file.outer_radius),
        2,
    )?;
    let inner: Region = inner_spec.build()?;
    let outer: Region = outer_spec.build()?;
    if !inner.is_subset_of(&outer) {
        bail!("inner region must be contained in the outer region");
    }
    let default_quad = QuadratureSpec::default_for(&params, &inner);
    let resolved = Resolved {
        inner: inner_spec,
        outer: outer_spec,
        beta: params.beta,
        j: params.j,
        h: params.h,
        eps: params.eps,
        replicas: config::pick(args.replicas, file.replicas, 100),
        workers: config::pick(args.workers, file.workers, 0),
        quad_points: config::pick(args.quad_points, file.quad_points, default_quad.n_points),
        quad_tmax: config::pick(args.quad_tmax, file.quad_tmax, default_quad.t_max),
        quad_rule: config::pick(args.quad_rule, file.quad_rule, "simpson".into()),
        seed: config::pick(args.seed, file.seed, 0),
        out: config::pick(args.out, file.out, PathBuf::from("out/surface-tension")),
    };
    let rule = match resolved.quad_rule.as_str() {
        "simpson" => QuadRule::Simpson,
        "trapezoid" => QuadRule::Trapezoid,
        other => bail!("unknown quadrature rule '{other}'"),
    };
    let quad = QuadratureSpec {
        t_max: resolved.quad_tmax,
        n_points: resolved.quad_points,
        rule,
    };
    let caps = Caps::default();
    let out = OutDir::create(&resolved.out)?;
    out.write_manifest("surface-tension", &resolved, "running", &[])?;

    let pool = config::thread_pool(resolved.workers)?;
    let replicas = resolved.replicas;
    let seed = resolved.seed;
    let rows: Vec<(f64, f64, f64)> = pool.install(|| {
        (0..replicas as u64)
            .into_par_iter()
            .map(|rep| -> Result<(f64, f64, f64)> {
                let mut rng = RandomSource::new(seed, rep).stream(Purpose::Field);
                let field = sampler::gaussian_field(&outer, &mut rng);
                let exact =
                    gibbs::surface_tension_exact(&inner, &outer, params, &field, &caps)?;
                let integral = analysis::surface_tension_integral(
                    &inner, &outer, params, &field, &quad, &caps,
                )?;
                Ok((exact, integral.value, integral.error_bound))
            })
            .collect::<Result<_>>()
    })?;

    let mut csv = out.writer("results.csv")?;
    writeln!(csv, "replica,t_exact,t_integral,abs_diff,error_bound")?;
    let mut within_bound = true;
    let mut max_diff = 0.0f64;
    for (rep, (exact, integral, bound)) in rows.iter().enumerate() {
        let diff = (exact - integral).abs();
        max_diff = max_diff.max(diff);
        within_bound &= diff <= *bound;
        writeln!(
            csv,
            "{},{},{},{},{}",
            rep,
            fmt_f64(*exact),
            fmt_f64(*integral),
            fmt_f64(diff),
            fmt_f64(*bound)
        )?;
    }
    csv.flush()?;

    let anti = pool.install(|| {
        analysis::anti_concentration_check(&inner, &outer, params, replicas, seed, &caps)
    })?;
    println!(
        "replicas={} max|exact-integral|={:.3e} within_bound={} anti_concentration_pass={}",
        replicas, max_diff, within_bound, anti.pass
    );
    let pass = within_bound && anti.pass;
    out.write_json(
        "summary.json",
        &json!({
            "config": resolved,
            "max_abs_diff": max_diff,
            "per_replica_within_bound": within_bound,
            "anti_concentration": anti,
            "pass": pass,
        }),
    )?;
    out.write_manifest(
        "surface-tension",
        &resolved,
        "complete",
        &["results.csv", "summary.json"],
    )?;
    Ok(pass)
}
