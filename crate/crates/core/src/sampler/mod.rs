//! Reproducible random generation: Gaussian disorder fields, heat-bath
//! Glauber dynamics under fixed boundary values, exact sampling by monotone
//! coupling from the past, and conditional mid-edge augmentation.

mod rng;

pub use rng::{Purpose, RandomSource};

use crate::lattice::{Region, Vertex};
use crate::model::{
    BoundarySpec, CouplingParams, ExtendedConfig, FieldRealization, ModelError, SpinConfig,
};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Default cap on how far into the past coupling from the past will look.
pub const DEFAULT_CFTP_CAP: u64 = 1 << 20;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("chains did not coalesce within {past_sweeps} past sweeps")]
    NoCoalescence { past_sweeps: u64 },
    #[error("sweeps must be >= 1")]
    NoSweeps,
}

/// How a single thermal sample is produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    Glauber,
    Cftp,
}

/// An ordered pair of extended configurations drawn independently under (+)
/// and (−) boundary values, sharing one disorder realization.
#[derive(Clone, Debug)]
pub struct PairSample {
    pub plus: ExtendedConfig,
    pub minus: ExtendedConfig,
    pub field: FieldRealization,
}

/// I.i.d. standard normals indexed by the region's vertices in canonical
/// order.
pub fn gaussian_field(region: &Region, rng: &mut impl Rng) -> FieldRealization {
    FieldRealization::from_fn(region, |_| rng.sample(StandardNormal))
}

/// η_v + t on `inner`, unchanged elsewhere.
pub fn tilt_field(
    field: &FieldRealization,
    inner: &Region,
    t: f64,
) -> Result<FieldRealization, ModelError> {
    let mut out = field.clone();
    for &v in inner.vertices() {
        out.set(v, field.eta(v)? + t);
    }
    Ok(out)
}

/// η̂_r = |r|^{−1/2} Σ_{v ∈ r} η_v.
pub fn normalized_field_sum(
    field: &FieldRealization,
    region: &Region,
) -> Result<f64, ModelError> {
    let mut sum = 0.0;
    for &v in region.vertices() {
        sum += field.eta(v)?;
    }
    Ok(sum / (region.num_vertices() as f64).sqrt())
}

/// Precomputed single-site update data for heat-bath sweeps.
struct ChainContext {
    /// Free vertex indices in canonical scan order.
    free: Vec<u32>,
    /// Neighbor vertex indices per free vertex.
    neighbors: Vec<Vec<u32>>,
    /// β(h + ε η_v) per free vertex.
    field_term: Vec<f64>,
    beta_j: f64,
    /// Full configuration template with boundary values applied, 0 on free.
    template: Vec<i8>,
}

impl ChainContext {
    fn build(
        region: &Region,
        params: CouplingParams,
        field: &FieldRealization,
        bc: &BoundarySpec,
    ) -> Result<Self, SamplerError> {
        bc.validate(region)?;
        let n = region.num_vertices();
        let mut template = vec![0i8; n];
        for (&v, &s) in bc.vertex_entries() {
            template[region.vertex_index(v).expect("validated") as usize] = s;
        }
        let mut free = Vec::new();
        let mut neighbors = Vec::new();
        let mut field_term = Vec::new();
        for (i, &v) in region.vertices().iter().enumerate() {
            if template[i] != 0 {
                continue;
            }
            free.push(i as u32);
            neighbors.push(
                v.neighbors()
                    .iter()
                    .filter_map(|&n| region.vertex_index(n))
                    .collect(),
            );
            field_term.push(params.field_term(field.eta(v)?));
        }
        Ok(ChainContext {
            free,
            neighbors,
            field_term,
            beta_j: params.beta * params.j,
            template,
        })
    }

    fn start(&self, fill: i8) -> Vec<i8> {
        let mut sigma = self.template.clone();
        for &i in &self.free {
            sigma[i as usize] = fill;
        }
        sigma
    }

    /// One deterministic raster-scan heat-bath sweep driven by the given
    /// uniforms (one per free vertex). Shared uniforms preserve the partial
    /// order between configurations.
    fn sweep(&self, sigma: &mut [i8], uniforms: &[f64]) {
        for (k, &i) in self.free.iter().enumerate() {
            let mut local = self.field_term[k];
            for &nb in &self.neighbors[k] {
                local += self.beta_j * f64::from(sigma[nb as usize]);
            }
            let p_plus = 1.0 / (1.0 + (-2.0 * local).exp());
            sigma[i as usize] = if uniforms[k] < p_plus { 1 } else { -1 };
        }
    }

    fn fill_uniforms(&self, rng: &mut impl Rng, buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend((0..self.free.len()).map(|_| rng.random::<f64>()));
    }
}

fn start_value(bc: &BoundarySpec) -> i8 {
    let mut values = bc.vertex_entries().map(|(_, &s)| s);
    match values.next() {
        Some(first) if bc.vertex_entries().all(|(_, &s)| s == first) => first,
        _ => 1,
    }
}

/// Heat-bath Glauber chain run for `sweeps` full raster scans from an
/// all-boundary-value start. Boundary vertices are never updated.
pub fn glauber_sample(
    region: &Region,
    params: CouplingParams,
    field: &FieldRealization,
    bc: &BoundarySpec,
    sweeps: u64,
    rng: &mut impl Rng,
) -> Result<SpinConfig, SamplerError> {
    if sweeps == 0 {
        return Err(SamplerError::NoSweeps);
    }
    let ctx = ChainContext::build(region, params, field, bc)?;
    let mut sigma = ctx.start(start_value(bc));
    let mut uniforms = Vec::new();
    for _ in 0..sweeps {
        ctx.fill_uniforms(rng, &mut uniforms);
        ctx.sweep(&mut sigma, &uniforms);
    }
    Ok(SpinConfig { sigma })
}

/// Perfect sample via monotone coupling from the past: doubling epochs, top
/// chain started all +1 and bottom all −1, with sweep randomness a fixed
/// function of the (negative) time index so epochs reuse their suffixes.
pub fn cftp_sample(
    region: &Region,
    params: CouplingParams,
    field: &FieldRealization,
    bc: &BoundarySpec,
    source: &RandomSource,
    purpose: Purpose,
    max_past_sweeps: u64,
) -> Result<SpinConfig, SamplerError> {
    let ctx = ChainContext::build(region, params, field, bc)?;
    if ctx.free.is_empty() {
        return Ok(SpinConfig {
            sigma: ctx.template,
        });
    }
    let mut uniforms = Vec::new();
    let mut past: u64 = 1;
    loop {
        let mut top = ctx.start(1);
        let mut bottom = ctx.start(-1);
        for t in (1..=past).rev() {
            let mut rng = source.substream(purpose, t);
            ctx.fill_uniforms(&mut rng, &mut uniforms);
            ctx.sweep(&mut top, &uniforms);
            ctx.sweep(&mut bottom, &uniforms);
        }
        if top == bottom {
            return Ok(SpinConfig { sigma: top });
        }
        if past >= max_past_sweeps {
            return Err(SamplerError::NoCoalescence {
                past_sweeps: past,
            });
        }
        past *= 2;
    }
}

/// Per-edge independent draw given the endpoint spins: a disagreeing edge
/// forces κ = 0; agreeing endpoints of value s take κ = s with probability
/// 1 − e^{−2βJ} and κ = 0 otherwise.
pub fn attach_midedges(
    cfg: &SpinConfig,
    region: &Region,
    params: CouplingParams,
    rng: &mut impl Rng,
) -> ExtendedConfig {
    let p_copy = params.midedge_copy_prob();
    let kappa = region
        .edges()
        .iter()
        .map(|&[a, b]| {
            let (su, sv) = (cfg.sigma[a as usize], cfg.sigma[b as usize]);
            if su == sv && rng.random::<f64>() < p_copy {
                su
            } else {
                0
            }
        })
        .collect();
    let out = ExtendedConfig {
        sigma: cfg.sigma.clone(),
        kappa,
    };
    assert!(
        out.satisfies_hard_constraints(region),
        "mid-edge augmentation violated the hard constraints"
    );
    out
}

/// Two independent thermal draws with (+) and (−) values on `boundary`, each
/// augmented with mid-edges, sharing the given disorder realization.
#[allow(clippy::too_many_arguments)]
pub fn sample_pair(
    region: &Region,
    params: CouplingParams,
    field: &FieldRealization,
    boundary: &[Vertex],
    mode: SampleMode,
    sweeps: u64,
    source: &RandomSource,
) -> Result<PairSample, SamplerError> {
    let bc_plus = BoundarySpec::plus_on(boundary.iter().copied());
    let bc_minus = BoundarySpec::minus_on(boundary.iter().copied());
    let draw = |bc: &BoundarySpec,
                chain: Purpose,
                midedges: Purpose|
     -> Result<ExtendedConfig, SamplerError> {
        let spins = match mode {
            SampleMode::Glauber => {
                glauber_sample(region, params, field, bc, sweeps, &mut source.stream(chain))?
            }
            SampleMode::Cftp => {
                cftp_sample(region, params, field, bc, source, chain, DEFAULT_CFTP_CAP)?
            }
        };
        Ok(attach_midedges(
            &spins,
            region,
            params,
            &mut source.stream(midedges),
        ))
    };
    Ok(PairSample {
        plus: draw(&bc_plus, Purpose::ChainPlus, Purpose::MidEdgesPlus)?,
        minus: draw(&bc_minus, Purpose::ChainMinus, Purpose::MidEdgesMinus)?,
        field: field.clone(),
    })
}
