//! `rfim fit`: weighted exponential-decay fit of an mL results table.

use crate::config;
use crate::output::OutDir;
use anyhow::{bail, Context, Result};
use rfim_core::analysis::{fit_exponential, DecayPoint};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::PathBuf;

#[derive(clap::Args, Serialize, Deserialize, Clone, Default)]
#[serde(default)]
pub struct FitArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// CSV with header columns L, m_hat, stderr (as emitted by `rfim mL`).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Resolved {
    input: PathBuf,
    out: PathBuf,
}

pub fn read_points(path: &std::path::Path) -> Result<Vec<DecayPoint>> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut lines = raw.lines();
    let header = lines.next().context("empty input")?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .with_context(|| format!("missing column '{name}' in {header}"))
    };
    let (il, im, ise) = (find("L")?, find("m_hat")?, find("stderr")?);
    let mut points = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let get = |i: usize| -> Result<f64> {
            fields
                .get(i)
                .with_context(|| format!("line {}: missing field {i}", lineno + 2))?
                .trim()
                .parse::<f64>()
                .with_context(|| format!("line {}: bad number", lineno + 2))
        };
        points.push(DecayPoint {
            l: get(il)?,
            estimate: get(im)?,
            stderr: get(ise)?,
        });
    }
    Ok(points)
}

pub fn run(args: FitArgs) -> Result<bool> {
    let file: FitArgs = match &args.config {
        Some(p) => config::load(p)?,
        None => FitArgs::default(),
    };
    let resolved = Resolved {
        input: config::pick_opt(args.input, file.input)
            .context("--input is required for fit")?,
        out: config::pick(args.out, file.out, PathBuf::from("out/fit")),
    };
    let points = read_points(&resolved.input)?;
    if points.is_empty() {
        bail!("no data rows in {}", resolved.input.display());
    }
    let out = OutDir::create(&resolved.out)?;
    out.write_manifest("fit", &resolved, "running", &[])?;
    let fit = fit_exponential(&points)?;
    if fit.n_dropped > 0 {
        eprintln!(
            "warning: dropped {} nonpositive estimate(s) before fitting",
            fit.n_dropped
        );
    }
    println!(
        "rate={:.6} +- {:.6}  amplitude={:.6}  r2={:.4}  (n={}, dropped={})",
        fit.rate, fit.rate_stderr, fit.amplitude, fit.r2, fit.n_used, fit.n_dropped
    );
    out.write_json("summary.json", &json!({ "config": resolved, "fit": fit }))?;
    out.write_manifest("fit", &resolved, "complete", &["summary.json"])?;
    Ok(true)
}
