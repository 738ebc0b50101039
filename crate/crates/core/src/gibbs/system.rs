//! Internal enumeration machinery: free-vertex bitmask iteration with
//! log-sum-exp accumulation, for both the plain and the extended model.

use crate::gibbs::{Caps, GibbsError};
use crate::lattice::Region;
use crate::model::{BoundarySpec, CouplingParams, ExtendedConfig, FieldRealization};

/// Online log-sum-exp accumulator. Deterministic for a fixed push order.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    pub fn new() -> Self {
        LogSum {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    pub fn push(&mut self, lw: f64) {
        if lw == f64::NEG_INFINITY {
            return;
        }
        if lw <= self.max {
            self.sum += (lw - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - lw).exp() + 1.0;
            self.max = lw;
        }
    }

    pub fn value(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// A region with parameters, disorder, boundary values and an optional set of
/// deleted edges, prepared for exhaustive enumeration.
pub(crate) struct System<'a> {
    pub region: &'a Region,
    pub params: CouplingParams,
    /// β(h + ε η_v) per region vertex.
    pub field_term: Vec<f64>,
    /// 0 = free, ±1 = fixed by the boundary values.
    pub fixed: Vec<i8>,
    pub free: Vec<u32>,
    /// Edge indices that participate (not deleted).
    pub active_edges: Vec<u32>,
    /// Mid-edge values imposed by the boundary, per region edge.
    pub kappa_fixed: Vec<Option<i8>>,
}

impl<'a> System<'a> {
    pub fn build(
        region: &'a Region,
        params: CouplingParams,
        field: &FieldRealization,
        bc: &BoundarySpec,
        deleted_edges: Option<&[bool]>,
    ) -> Result<Self, GibbsError> {
        bc.validate(region)?;
        let mut field_term = Vec::with_capacity(region.num_vertices());
        for &v in region.vertices() {
            field_term.push(params.field_term(field.eta(v)?));
        }
        let mut fixed = vec![0i8; region.num_vertices()];
        for (&v, &s) in bc.vertex_entries() {
            fixed[region.vertex_index(v).expect("validated") as usize] = s;
        }
        let free: Vec<u32> = (0..region.num_vertices() as u32)
            .filter(|&i| fixed[i as usize] == 0)
            .collect();
        let mut kappa_fixed = vec![None; region.num_edges()];
        let mut active_edges = Vec::with_capacity(region.num_edges());
        for e in 0..region.num_edges() as u32 {
            let (u, v) = region.edge_endpoints(e);
            kappa_fixed[e as usize] = bc.midedge_value(u, v);
            let deleted = deleted_edges.map_or(false, |d| d[e as usize]);
            if !deleted {
                active_edges.push(e);
            }
        }
        Ok(System {
            region,
            params,
            field_term,
            fixed,
            free,
            active_edges,
            kappa_fixed,
        })
    }

    pub fn check_free_cap(&self, caps: &Caps) -> Result<(), GibbsError> {
        if self.free.len() as u32 > caps.max_free_vertices {
            return Err(GibbsError::TooLarge {
                needed: self.free.len() as u64,
                cap: caps.max_free_vertices as u64,
            });
        }
        Ok(())
    }

    pub fn num_configs(&self) -> u64 {
        1u64 << self.free.len()
    }

    fn fill_sigma(&self, mask: u64, sigma: &mut [i8]) {
        sigma.copy_from_slice(&self.fixed);
        for (bit, &fi) in self.free.iter().enumerate() {
            sigma[fi as usize] = if mask >> bit & 1 == 1 { 1 } else { -1 };
        }
    }

    /// −βH(σ) = βJ Σ σσ' + Σ β(h+εη)σ over active edges and all vertices.
    pub fn log_weight_plain(&self, sigma: &[i8]) -> f64 {
        let bj = self.params.beta * self.params.j;
        let mut acc = 0.0;
        for &e in &self.active_edges {
            let [a, b] = self.region.edges()[e as usize];
            acc += bj * f64::from(sigma[a as usize] * sigma[b as usize]);
        }
        for (v, &b) in self.field_term.iter().enumerate() {
            acc += b * f64::from(sigma[v]);
        }
        acc
    }

    /// Log-weight of σ in the extended model with the mid-edges summed out
    /// explicitly: per edge, Σ over admissible κ of W(σ_u,κ)·W(σ_v,κ),
    /// honoring any boundary-fixed κ. Returns −∞ when a fixed κ is
    /// incompatible with σ.
    pub fn log_weight_extended(&self, sigma: &[i8]) -> f64 {
        let p = &self.params;
        let mut acc = 0.0;
        for &e in &self.active_edges {
            let [a, b] = self.region.edges()[e as usize];
            let (su, sv) = (sigma[a as usize], sigma[b as usize]);
            let factor: f64 = match self.kappa_fixed[e as usize] {
                Some(k) => p.w(su, k) * p.w(sv, k),
                None => [-1i8, 0, 1]
                    .iter()
                    .map(|&k| p.w(su, k) * p.w(sv, k))
                    .sum(),
            };
            if factor == 0.0 {
                return f64::NEG_INFINITY;
            }
            acc += factor.ln();
        }
        for (v, &bt) in self.field_term.iter().enumerate() {
            acc += bt * f64::from(sigma[v]);
        }
        acc
    }

    pub fn for_each_config(&self, mut f: impl FnMut(&[i8], f64)) {
        let mut sigma = vec![0i8; self.region.num_vertices()];
        for mask in 0..self.num_configs() {
            self.fill_sigma(mask, &mut sigma);
            let lw = self.log_weight_plain(&sigma);
            f(&sigma, lw);
        }
    }

    pub fn log_partition_plain(&self) -> f64 {
        let mut ls = LogSum::new();
        self.for_each_config(|_, lw| ls.push(lw));
        ls.value()
    }

    pub fn log_partition_extended(&self) -> f64 {
        let mut ls = LogSum::new();
        let mut sigma = vec![0i8; self.region.num_vertices()];
        for mask in 0..self.num_configs() {
            self.fill_sigma(mask, &mut sigma);
            ls.push(self.log_weight_extended(&sigma));
        }
        ls.value()
    }

    /// ⟨σ_v⟩ for every region vertex (fixed vertices report their value).
    pub fn one_point_means(&self) -> Vec<f64> {
        let n = self.region.num_vertices();
        // Two passes: a max-shift pass, then weighted accumulation.
        let mut max_lw = f64::NEG_INFINITY;
        self.for_each_config(|_, lw| max_lw = max_lw.max(lw));
        let mut z = 0.0;
        let mut acc = vec![0.0f64; n];
        self.for_each_config(|sigma, lw| {
            let w = (lw - max_lw).exp();
            z += w;
            for v in 0..n {
                acc[v] += w * f64::from(sigma[v]);
            }
        });
        acc.iter().map(|a| a / z).collect()
    }

    /// Boltzmann average of an observable of the spin configuration.
    pub fn expectation(&self, mut obs: impl FnMut(&[i8]) -> f64) -> f64 {
        let mut max_lw = f64::NEG_INFINITY;
        self.for_each_config(|_, lw| max_lw = max_lw.max(lw));
        let mut z = 0.0;
        let mut acc = 0.0;
        self.for_each_config(|sigma, lw| {
            let w = (lw - max_lw).exp();
            z += w;
            acc += w * obs(sigma);
        });
        acc / z
    }

    /// Spin-marginal probabilities over the free-vertex masks, for the plain
    /// (−βH) route and for the explicit mid-edge-weight route.
    pub fn marginal_probabilities(&self) -> (Vec<f64>, Vec<f64>) {
        let n_cfg = self.num_configs() as usize;
        let mut lw_plain = Vec::with_capacity(n_cfg);
        let mut lw_ext = Vec::with_capacity(n_cfg);
        let mut sigma = vec![0i8; self.region.num_vertices()];
        for mask in 0..self.num_configs() {
            self.fill_sigma(mask, &mut sigma);
            lw_plain.push(self.log_weight_plain(&sigma));
            lw_ext.push(self.log_weight_extended(&sigma));
        }
        (normalize_log_weights(&lw_plain), normalize_log_weights(&lw_ext))
    }

    /// All extended configurations consistent with the boundary values and
    /// hard constraints, with their log-weights.
    pub fn enumerate_extended(
        &self,
        max_states: u64,
    ) -> Result<Vec<(ExtendedConfig, f64)>, GibbsError> {
        let n_edges = self.region.num_edges();
        // Admissible κ values per edge given endpoint spins.
        let admissible = |su: i8, sv: i8, e: usize| -> Vec<i8> {
            let candidates: &[i8] = match self.kappa_fixed[e] {
                Some(k) => std::slice::from_ref(match k {
                    -1 => &-1,
                    0 => &0,
                    _ => &1,
                }),
                None => &[-1, 0, 1],
            };
            candidates
                .iter()
                .copied()
                .filter(|&k| self.params.w(su, k) * self.params.w(sv, k) > 0.0)
                .collect()
        };

        // Count states first.
        let mut total: u64 = 0;
        let mut sigma = vec![0i8; self.region.num_vertices()];
        for mask in 0..self.num_configs() {
            self.fill_sigma(mask, &mut sigma);
            let mut per_sigma: u64 = 1;
            let mut dead = false;
            for (e, &[a, b]) in self.region.edges().iter().enumerate() {
                let opts = admissible(sigma[a as usize], sigma[b as usize], e) ;
                if opts.is_empty() {
                    dead = true;
                    break;
                }
                per_sigma = per_sigma.saturating_mul(opts.len() as u64);
            }
            if !dead {
                total = total.saturating_add(per_sigma);
            }
        }
        if total > max_states {
            return Err(GibbsError::TooLarge {
                needed: total,
                cap: max_states,
            });
        }

        let mut out = Vec::with_capacity(total as usize);
        for mask in 0..self.num_configs() {
            self.fill_sigma(mask, &mut sigma);
            let options: Vec<Vec<i8>> = (0..n_edges)
                .map(|e| {
                    let [a, b] = self.region.edges()[e];
                    admissible(sigma[a as usize], sigma[b as usize], e)
                })
                .collect();
            if options.iter().any(|o| o.is_empty()) {
                continue;
            }
            let mut base_lw = 0.0;
            for (v, &bt) in self.field_term.iter().enumerate() {
                base_lw += bt * f64::from(sigma[v]);
            }
            // Odometer over the κ choices.
            let mut idx = vec![0usize; n_edges];
            loop {
                let mut kappa = Vec::with_capacity(n_edges);
                let mut lw = base_lw;
                for (e, &[a, b]) in self.region.edges().iter().enumerate() {
                    let k = options[e][idx[e]];
                    kappa.push(k);
                    lw += (self.params.w(sigma[a as usize], k)
                        * self.params.w(sigma[b as usize], k))
                    .ln();
                }
                out.push((
                    ExtendedConfig {
                        sigma: sigma.clone(),
                        kappa,
                    },
                    lw,
                ));
                // Advance odometer.
                let mut pos = 0;
                loop {
                    if pos == n_edges {
                        break;
                    }
                    idx[pos] += 1;
                    if idx[pos] < options[pos].len() {
                        break;
                    }
                    idx[pos] = 0;
                    pos += 1;
                }
                if pos == n_edges {
                    break;
                }
            }
        }
        Ok(out)
    }
}

pub(crate) fn normalize_log_weights(lws: &[f64]) -> Vec<f64> {
    let mut ls = LogSum::new();
    for &lw in lws {
        ls.push(lw);
    }
    let lse = ls.value();
    lws.iter().map(|&lw| (lw - lse).exp()).collect()
}
