//! Derived quantities and statistical post-processing: the surface-tension
//! integral representation, the Gaussian two-sided tail χ, anti-concentration
//! checking, regular-stretch selection, exponential decay fitting, and
//! tortuosity summaries.

use crate::disagreement::CrossingReport;
use crate::gibbs::{self, Caps, GibbsError};
use crate::lattice::Region;
use crate::model::{CouplingParams, FieldRealization, ModelError};
use crate::sampler::{self, Purpose, RandomSource};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("chi is defined for t >= 0, got {0}")]
    NegativeChiArgument(f64),
    #[error("invalid quadrature: {0}")]
    BadQuadrature(String),
    #[error("sequence is not monotone non-increasing at index {0}")]
    NotMonotone(usize),
    #[error("sequence values must lie in [0, 1], found {0}")]
    ValueOutOfRange(f64),
    #[error("gamma must lie in (0, 1], got {0}")]
    BadGamma(f64),
    #[error("need at least {needed} usable points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("refusing to extrapolate to L = {l} beyond the fitted maximum {l_max}")]
    ExtrapolationRefused { l: f64, l_max: f64 },
    #[error("degenerate abscissae: all points share the same L")]
    DegenerateAbscissae,
    #[error(transparent)]
    Gibbs(#[from] GibbsError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Two-sided standard Gaussian tail χ(t) = 2∫_t^∞ φ(s) ds = erfc(t/√2).
pub fn chi(t: f64) -> Result<f64, AnalysisError> {
    if t < 0.0 {
        return Err(AnalysisError::NegativeChiArgument(t));
    }
    Ok(erfc(t / std::f64::consts::SQRT_2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadRule {
    Trapezoid,
    Simpson,
}

/// Truncated uniform-grid quadrature specification for the tilt integral.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub t_max: f64,
    pub n_points: usize,
    pub rule: QuadRule,
}

impl QuadratureSpec {
    /// Default: Simpson on 801 points, truncated where the tilted
    /// disagreement count is far below any tolerance of interest.
    pub fn default_for(params: &CouplingParams, inner: &Region) -> Self {
        let scale = params.beta * params.eps.max(1e-9) * inner.num_vertices().max(1) as f64;
        QuadratureSpec {
            t_max: 40.0 / scale,
            n_points: 801,
            rule: QuadRule::Simpson,
        }
    }

    fn validate(&self) -> Result<(), AnalysisError> {
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(AnalysisError::BadQuadrature(format!(
                "t_max must be positive, got {}",
                self.t_max
            )));
        }
        if self.n_points < 3 {
            return Err(AnalysisError::BadQuadrature(
                "need at least 3 points".into(),
            ));
        }
        if self.rule == QuadRule::Simpson && self.n_points % 2 == 0 {
            return Err(AnalysisError::BadQuadrature(
                "simpson needs an odd point count".into(),
            ));
        }
        Ok(())
    }
}

/// Quadrature value with an a-posteriori discretization + truncation bound.
/// The discretization part is a first-order total-variation bound, so it
/// halves under step halving by construction.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct IntegralEstimate {
    pub value: f64,
    pub error_bound: f64,
}

/// 2ε ∫ D(η^{(t)}) dt over t ∈ [−t_max, t_max], with D evaluated exactly at
/// each node via enumeration. The ε = 0 prefactor short-circuits to zero.
pub fn surface_tension_integral(
    inner: &Region,
    outer: &Region,
    params: CouplingParams,
    field: &FieldRealization,
    quad: &QuadratureSpec,
    caps: &Caps,
) -> Result<IntegralEstimate, AnalysisError> {
    quad.validate()?;
    if params.eps == 0.0 {
        return Ok(IntegralEstimate {
            value: 0.0,
            error_bound: 0.0,
        });
    }
    let n = quad.n_points;
    let h = 2.0 * quad.t_max / (n - 1) as f64;
    let g: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<f64, AnalysisError> {
            let t = -quad.t_max + i as f64 * h;
            let tilted = sampler::tilt_field(field, inner, t)?;
            let d = gibbs::disagreement_count_via_means(inner, outer, params, &tilted, caps)?;
            Ok(2.0 * params.eps * d)
        })
        .collect::<Result<_, _>>()?;

    let value = match quad.rule {
        QuadRule::Trapezoid => {
            let mut acc = 0.5 * (g[0] + g[n - 1]);
            for gi in g.iter().take(n - 1).skip(1) {
                acc += gi;
            }
            acc * h
        }
        QuadRule::Simpson => {
            let mut acc = g[0] + g[n - 1];
            for (i, gi) in g.iter().enumerate().take(n - 1).skip(1) {
                acc += if i % 2 == 1 { 4.0 * gi } else { 2.0 * gi };
            }
            acc * h / 3.0
        }
    };

    let discretization: f64 =
        0.5 * h * g.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>();
    let tail = |end: f64, prev: f64| -> f64 {
        if end <= 0.0 {
            0.0
        } else if prev > end {
            // Exponential tail extrapolation from the last two nodes.
            let rate = (prev / end).ln() / h;
            end / rate
        } else {
            // Non-decaying endpoint: no useful bound, report the mass of one
            // extra step per unit as a conservative placeholder.
            end * quad.t_max
        }
    };
    let truncation = tail(g[n - 1], g[n - 2]) + tail(g[0], g[1]);
    Ok(IntegralEstimate {
        value,
        error_bound: discretization + truncation,
    })
}

/// Outcome of the anti-concentration comparison over disorder replicas.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AntiConcentrationReport {
    pub replicas: usize,
    /// Empirical P[D < E[D]/2].
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// χ((1/2ε)·(E[T]/√|Λ1|)·(|Λ1|/E[D])).
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub chi_arg: f64,
    pub mean_d: f64,
    pub mean_d_stderr: f64,
    pub mean_t: f64,
    pub mean_t_stderr: f64,
    pub pass: bool,
}

/// Estimates both sides of the anti-concentration inequality with exact
/// per-replica D and surface tension, over independent disorder draws.
pub fn anti_concentration_check(
    inner: &Region,
    outer: &Region,
    params: CouplingParams,
    replicas: usize,
    master_seed: u64,
    caps: &Caps,
) -> Result<AntiConcentrationReport, AnalysisError> {
    let samples: Vec<(f64, f64)> = (0..replicas as u64)
        .into_par_iter()
        .map(|rep| -> Result<(f64, f64), AnalysisError> {
            let mut rng = RandomSource::new(master_seed, rep).stream(Purpose::Field);
            let field = sampler::gaussian_field(outer, &mut rng);
            let d = gibbs::disagreement_count_via_means(inner, outer, params, &field, caps)?;
            let t = gibbs::surface_tension_exact(inner, outer, params, &field, caps)?;
            Ok((d, t))
        })
        .collect::<Result<_, _>>()?;
    let ds: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let ts: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let (mean_d, mean_d_stderr) = crate::stats::mean_and_stderr(&ds);
    let (mean_t, mean_t_stderr) = crate::stats::mean_and_stderr(&ts);

    let hits = ds.iter().filter(|&&d| d < 0.5 * mean_d).count();
    let lhs = hits as f64 / replicas.max(1) as f64;
    let lhs_stderr = (lhs * (1.0 - lhs) / replicas.max(1) as f64).sqrt();

    let vol = inner.num_vertices() as f64;
    let (chi_arg, rhs, rhs_stderr) = if params.eps == 0.0 || mean_d == 0.0 {
        (f64::INFINITY, 0.0, 0.0)
    } else {
        let arg = (1.0 / (2.0 * params.eps)) * (mean_t / vol.sqrt()) * (vol / mean_d);
        // Independent recomputation of the same argument.
        let arg2 = mean_t * vol.sqrt() / (2.0 * params.eps * mean_d);
        assert!(
            (arg - arg2).abs() <= 1e-10 * arg.abs().max(1.0),
            "chi argument recomputation mismatch: {arg} vs {arg2}"
        );
        let arg = arg.max(0.0);
        let rhs = chi(arg)?;
        let phi = (-0.5 * arg * arg).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let rel = (mean_t_stderr / mean_t.abs().max(1e-300)).hypot(
            mean_d_stderr / mean_d.abs().max(1e-300),
        );
        (arg, rhs, 2.0 * phi * arg.abs() * rel)
    };
    let pass = lhs >= rhs - 4.0 * (lhs_stderr + rhs_stderr);
    Ok(AntiConcentrationReport {
        replicas,
        lhs,
        lhs_stderr,
        rhs,
        rhs_stderr,
        chi_arg,
        mean_d,
        mean_d_stderr,
        mean_t,
        mean_t_stderr,
        pass,
    })
}

/// Index n ≤ k maximizing p_j (j+1)^{1+γ} (smallest on ties). The returned
/// index satisfies p_n ≤ p_j ≤ p_n ((n+1)/(j+1))^{1+γ} for all j ≤ n and
/// (k+1) p_k^{1/(1+γ)} − 1 ≤ n.
pub fn regular_stretch(p: &[f64], gamma: f64, k: usize) -> Result<usize, AnalysisError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(AnalysisError::BadGamma(gamma));
    }
    if p.len() < k + 1 {
        return Err(AnalysisError::TooFewPoints {
            needed: k + 1,
            got: p.len(),
        });
    }
    for (i, &x) in p.iter().enumerate().take(k + 1) {
        if !(0.0..=1.0).contains(&x) {
            return Err(AnalysisError::ValueOutOfRange(x));
        }
        if i > 0 && x > p[i - 1] {
            return Err(AnalysisError::NotMonotone(i));
        }
    }
    let mut best = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    for (j, &pj) in p.iter().enumerate().take(k + 1) {
        let score = pj * ((j + 1) as f64).powf(1.0 + gamma);
        if score > best_score {
            best_score = score;
            best = j;
        }
    }
    Ok(best)
}

/// Brute-force verifier of the regular-stretch conclusion.
pub fn regular_stretch_verify(p: &[f64], gamma: f64, k: usize, n: usize) -> bool {
    let tol = 1e-9;
    if n > k || p.len() < k + 1 {
        return false;
    }
    let lower = (k + 1) as f64 * p[k].powf(1.0 / (1.0 + gamma)) - 1.0;
    if (n as f64) < lower - tol {
        return false;
    }
    for j in 0..=n {
        if p[n] > p[j] * (1.0 + tol) + tol * 1e-6 {
            return false;
        }
        let bound = p[n] * (((n + 1) as f64) / ((j + 1) as f64)).powf(1.0 + gamma);
        if p[j] > bound * (1.0 + tol) + tol * 1e-6 {
            return false;
        }
    }
    true
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DecayPoint {
    pub l: f64,
    pub estimate: f64,
    pub stderr: f64,
}

/// Weighted log-linear fit of estimates against L.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DecayFit {
    pub amplitude: f64,
    pub rate: f64,
    pub rate_stderr: f64,
    pub r2: f64,
    pub n_used: usize,
    pub n_dropped: usize,
    l_max: f64,
}

impl DecayFit {
    pub fn predict(&self, l: f64) -> Result<f64, AnalysisError> {
        if l > self.l_max + 1e-12 {
            return Err(AnalysisError::ExtrapolationRefused {
                l,
                l_max: self.l_max,
            });
        }
        Ok(self.amplitude * (-self.rate * l).exp())
    }

    pub fn l_max(&self) -> f64 {
        self.l_max
    }
}

/// Weighted least squares of log estimates against L. Nonpositive estimates
/// are dropped (counted in `n_dropped`); at least 3 usable points required.
pub fn fit_exponential(points: &[DecayPoint]) -> Result<DecayFit, AnalysisError> {
    let used: Vec<&DecayPoint> = points.iter().filter(|p| p.estimate > 0.0).collect();
    let n_dropped = points.len() - used.len();
    if used.len() < 3 {
        return Err(AnalysisError::TooFewPoints {
            needed: 3,
            got: used.len(),
        });
    }
    let weighted = used.iter().all(|p| p.stderr > 0.0);
    let xs: Vec<f64> = used.iter().map(|p| p.l).collect();
    let ys: Vec<f64> = used.iter().map(|p| p.estimate.ln()).collect();
    let ws: Vec<f64> = used
        .iter()
        .map(|p| {
            if weighted {
                let se_log = p.stderr / p.estimate;
                1.0 / (se_log * se_log)
            } else {
                1.0
            }
        })
        .collect();
    let sw: f64 = ws.iter().sum();
    let xbar = xs.iter().zip(&ws).map(|(x, w)| w * x).sum::<f64>() / sw;
    let ybar = ys.iter().zip(&ws).map(|(y, w)| w * y).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x - xbar) * (x - xbar)).sum();
    if sxx <= 0.0 {
        return Err(AnalysisError::DegenerateAbscissae);
    }
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .zip(&ws)
        .map(|((x, y), w)| w * (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .zip(&ws)
        .map(|((x, y), w)| {
            let e = y - (intercept + slope * x);
            w * e * e
        })
        .sum();
    let ss_tot: f64 = ys
        .iter()
        .zip(&ws)
        .map(|(y, w)| w * (y - ybar) * (y - ybar))
        .sum();
    let rate_stderr = if weighted {
        (1.0 / sxx).sqrt()
    } else {
        let s2 = ss_res / (used.len() as f64 - 2.0);
        (s2 / sxx).sqrt()
    };
    let r2 = if ss_tot > 1e-30 {
        1.0 - ss_res / ss_tot
    } else {
        0.0
    };
    Ok(DecayFit {
        amplitude: intercept.exp(),
        rate: -slope,
        rate_stderr,
        r2,
        n_used: used.len(),
        n_dropped,
        l_max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Per-scale summary of crossing reports.
#[derive(Clone, Debug, Serialize)]
pub struct TortuositySummary {
    pub scale: u32,
    pub n: usize,
    pub crossings: usize,
    pub crossing_prob: f64,
    /// (quantile, shortest_length / scale) among crossed reports.
    pub length_quantiles: Vec<(f64, f64)>,
}

pub fn tortuosity_summary(reports: &[CrossingReport], scale: u32) -> TortuositySummary {
    let mut lengths: Vec<u32> = reports.iter().filter_map(|r| r.shortest_length).collect();
    lengths.sort_unstable();
    let crossings = lengths.len();
    let qs = [0.1, 0.25, 0.5];
    let length_quantiles = if crossings == 0 {
        Vec::new()
    } else {
        qs.iter()
            .map(|&q| (q, lower_quantile(&lengths, q) as f64 / scale as f64))
            .collect()
    };
    TortuositySummary {
        scale,
        n: reports.len(),
        crossings,
        crossing_prob: if reports.is_empty() {
            0.0
        } else {
            crossings as f64 / reports.len() as f64
        },
        length_quantiles,
    }
}

fn lower_quantile(sorted: &[u32], q: f64) -> u32 {
    let idx = ((sorted.len() - 1) as f64 * q).floor() as usize;
    sorted[idx]
}

/// Growth exponent of the lower quantile of shortest crossing lengths across
/// scales, by log-log regression. Returns (slope, stderr).
pub fn tortuosity_exponent(
    per_scale: &[(u32, Vec<u32>)],
    quantile: f64,
) -> Result<(f64, f64), AnalysisError> {
    let mut pts = Vec::new();
    for (scale, lengths) in per_scale {
        if lengths.is_empty() {
            continue;
        }
        let mut ls = lengths.clone();
        ls.sort_unstable();
        let q = lower_quantile(&ls, quantile);
        if q > 0 {
            pts.push(((*scale as f64).ln(), (q as f64).ln()));
        }
    }
    if pts.len() < 3 {
        return Err(AnalysisError::TooFewPoints {
            needed: 3,
            got: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let xbar = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ybar = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.0 - xbar)).sum();
    if sxx <= 0.0 {
        return Err(AnalysisError::DegenerateAbscissae);
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_res: f64 = pts
        .iter()
        .map(|p| {
            let e = p.1 - (intercept + slope * p.0);
            e * e
        })
        .sum();
    let se = if pts.len() > 2 {
        (ss_res / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok((slope, se))
}
