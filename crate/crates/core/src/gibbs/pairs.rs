//! Exact expectations under the product of two restricted extended measures.
//!
//! The spin marginal of each factor is the plain Gibbs measure, and given the
//! spins the mid-edge values are independent across edges. Expectations of
//! functionals of the disagreement set are therefore computed by enumerating
//! spin pairs and, per pair, the joint mid-edge disagreement patterns with
//! their exact probabilities. Connectivity runs over u64 site masks, which
//! limits the engine to 64 extended sites; the pair-state cap keeps instances
//! within that range anyway.

use crate::gibbs::system::{normalize_log_weights, System};
use crate::gibbs::{Caps, GibbsError};
use crate::lattice::{ExtendedGraph, Region, SiteId};
use crate::model::{BoundarySpec, CouplingParams, FieldRealization};
use rayon::prelude::*;

/// Site-mask view of one disagreement pattern.
pub struct PairView<'a> {
    adjacency: &'a [u64],
    /// Mask of sites where the two copies differ.
    pub d_mask: u64,
}

impl PairView<'_> {
    /// Sites reachable from `seeds` through `within ∩ d_mask`.
    pub fn reach(&self, seeds: u64, within: u64) -> u64 {
        let allowed = within & self.d_mask;
        let mut visited = seeds & allowed;
        let mut frontier = visited;
        while frontier != 0 {
            let mut next = 0u64;
            let mut f = frontier;
            while f != 0 {
                let i = f.trailing_zeros() as usize;
                f &= f - 1;
                next |= self.adjacency[i];
            }
            frontier = next & allowed & !visited;
            visited |= frontier;
        }
        visited
    }

    pub fn connected(&self, a: u64, b: u64) -> bool {
        self.reach(a, u64::MAX) & b != 0
    }
}

pub(crate) struct PairEngine<'a> {
    sys_a: System<'a>,
    sys_b: System<'a>,
    /// Extended-graph adjacency as site masks.
    adjacency: Vec<u64>,
    n_vertices: usize,
    active_edges: Vec<u32>,
    prob_a: Vec<f64>,
    prob_b: Vec<f64>,
    copy_prob: f64,
}

impl<'a> PairEngine<'a> {
    pub fn build(
        region: &'a Region,
        params: CouplingParams,
        field: &FieldRealization,
        bc_a: &BoundarySpec,
        bc_b: &BoundarySpec,
        caps: &Caps,
        deleted_edges: Option<&'a [bool]>,
    ) -> Result<Self, GibbsError> {
        if !bc_a.is_vertex_only() || !bc_b.is_vertex_only() {
            return Err(GibbsError::VertexBoundaryRequired);
        }
        let graph = ExtendedGraph::new(region);
        if graph.n_sites() > 64 {
            return Err(GibbsError::TooLarge {
                needed: graph.n_sites() as u64,
                cap: 64,
            });
        }
        let sys_a = System::build(region, params, field, bc_a, deleted_edges)?;
        let sys_b = System::build(region, params, field, bc_b, deleted_edges)?;
        sys_a.check_free_cap(caps)?;
        sys_b.check_free_cap(caps)?;

        let mut adjacency = vec![0u64; graph.n_sites()];
        for s in graph.sites() {
            for &n in graph.neighbors(s) {
                adjacency[s.0 as usize] |= 1 << n.0;
            }
        }
        // Deleted edges drop out of the coupling and of the geometry.
        if let Some(del) = deleted_edges {
            for (e, &d) in del.iter().enumerate() {
                if d {
                    let m = graph.midedge_site(e as u32);
                    let [a, b] = region.edges()[e];
                    adjacency[m.0 as usize] = 0;
                    adjacency[a as usize] &= !(1 << m.0);
                    adjacency[b as usize] &= !(1 << m.0);
                }
            }
        }

        let collect_lws = |sys: &System| -> Vec<f64> {
            let mut lws = Vec::with_capacity(sys.num_configs() as usize);
            sys.for_each_config(|_, lw| lws.push(lw));
            lws
        };
        let prob_a = normalize_log_weights(&collect_lws(&sys_a));
        let prob_b = normalize_log_weights(&collect_lws(&sys_b));
        let active_edges = sys_a.active_edges.clone();
        Ok(PairEngine {
            sys_a,
            sys_b,
            adjacency,
            n_vertices: region.num_vertices(),
            active_edges,
            prob_a,
            prob_b,
            copy_prob: params.midedge_copy_prob(),
        })
    }

    /// Total number of (spin pair, mid-edge pattern) states to be visited.
    pub fn state_count(&self) -> u64 {
        let mut total: u64 = 0;
        let mut sa = vec![0i8; self.n_vertices];
        let mut sb = vec![0i8; self.n_vertices];
        for a in 0..self.prob_a.len() as u64 {
            self.fill(&self.sys_a, a, &mut sa);
            for b in 0..self.prob_b.len() as u64 {
                self.fill(&self.sys_b, b, &mut sb);
                let m = self.classify(&sa, &sb).1.len() as u32;
                total = total.saturating_add(1u64 << m);
            }
        }
        total
    }

    fn fill(&self, sys: &System, mask: u64, sigma: &mut [i8]) {
        sigma.copy_from_slice(&sys.fixed);
        for (bit, &fi) in sys.free.iter().enumerate() {
            sigma[fi as usize] = if mask >> bit & 1 == 1 { 1 } else { -1 };
        }
    }

    /// Base vertex-disagreement mask and the random mid-edges with their
    /// disagreement probabilities.
    fn classify(&self, sa: &[i8], sb: &[i8]) -> (u64, Vec<(u32, f64)>) {
        let q1 = self.copy_prob;
        let q0 = 1.0 - q1;
        let mut base = 0u64;
        for v in 0..self.n_vertices {
            if sa[v] != sb[v] {
                base |= 1 << v;
            }
        }
        let mut random = Vec::new();
        for &e in &self.active_edges {
            let [u, v] = self.sys_a.region.edges()[e as usize];
            let (au, av) = (sa[u as usize], sa[v as usize]);
            let (bu, bv) = (sb[u as usize], sb[v as usize]);
            let agree_a = au == av;
            let agree_b = bu == bv;
            let p = match (agree_a, agree_b) {
                (false, false) => 0.0,
                (true, false) | (false, true) => q1,
                (true, true) => {
                    if au == bu {
                        2.0 * q1 * q0
                    } else {
                        1.0 - q0 * q0
                    }
                }
            };
            if p > 0.0 {
                random.push((self.n_vertices as u32 + e, p));
            }
        }
        (base, random)
    }

    /// Expectation of `g` over the product measure; `g` sees each
    /// disagreement pattern with its exact probability.
    pub fn expectation(
        &self,
        caps: &Caps,
        g: impl Fn(&PairView) -> f64 + Sync,
    ) -> Result<f64, GibbsError> {
        let states = self.state_count();
        if states > caps.max_pair_states {
            return Err(GibbsError::TooLarge {
                needed: states,
                cap: caps.max_pair_states,
            });
        }
        // Parallel over the first copy's spin masks; per-mask partials are
        // summed in mask order so results do not depend on thread count.
        let partials: Vec<f64> = (0..self.prob_a.len() as u64)
            .into_par_iter()
            .map(|a| {
                let mut sa = vec![0i8; self.n_vertices];
                let mut sb = vec![0i8; self.n_vertices];
                self.fill(&self.sys_a, a, &mut sa);
                let pa = self.prob_a[a as usize];
                let mut acc = 0.0;
                for b in 0..self.prob_b.len() as u64 {
                    let pb = self.prob_b[b as usize];
                    self.fill(&self.sys_b, b, &mut sb);
                    let (base, random) = self.classify(&sa, &sb);
                    let m = random.len();
                    for pattern in 0..1u64 << m {
                        let mut d = base;
                        let mut prob = pa * pb;
                        for (bit, &(site, p)) in random.iter().enumerate() {
                            if pattern >> bit & 1 == 1 {
                                d |= 1 << site;
                                prob *= p;
                            } else {
                                prob *= 1.0 - p;
                            }
                        }
                        let view = PairView {
                            adjacency: &self.adjacency,
                            d_mask: d,
                        };
                        acc += prob * g(&view);
                    }
                }
                acc
            })
            .collect();
        Ok(partials.iter().sum())
    }
}

pub(crate) fn site_mask(sites: &[SiteId]) -> u64 {
    sites.iter().fold(0u64, |m, s| m | (1 << s.0))
}

#[allow(clippy::too_many_arguments)]
pub fn pair_expectation(
    region: &Region,
    params: CouplingParams,
    field: &FieldRealization,
    bc_a: &BoundarySpec,
    bc_b: &BoundarySpec,
    caps: &Caps,
    g: impl Fn(&PairView) -> f64 + Sync,
) -> Result<f64, GibbsError> {
    let engine = PairEngine::build(region, params, field, bc_a, bc_b, caps, None)?;
    engine.expectation(caps, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Vertex;

    #[test]
    fn pair_view_reachability() {
        // Path graph on sites 0-1-2.
        let adjacency = vec![0b010u64, 0b101, 0b010];
        let view = PairView {
            adjacency: &adjacency,
            d_mask: 0b111,
        };
        assert!(view.connected(0b001, 0b100));
        let view = PairView {
            adjacency: &adjacency,
            d_mask: 0b101,
        };
        assert!(!view.connected(0b001, 0b100));
        assert!(view.connected(0b001, 0b001));
    }

    #[test]
    fn identical_boundaries_zero_base_disagreement() {
        let r = Region::from_vertices([Vertex::ORIGIN, Vertex::new(1, 0)]);
        let p = CouplingParams::new(0.8, 1.0, 0.1, 0.5).unwrap();
        let mut f = FieldRealization::new();
        f.set(Vertex::ORIGIN, 0.3);
        f.set(Vertex::new(1, 0), -1.1);
        let caps = Caps::default();
        // Probability that the disagreement set is nonempty lies in (0, 1).
        let p_nonempty = pair_expectation(
            &r,
            p,
            &f,
            &BoundarySpec::free(),
            &BoundarySpec::free(),
            &caps,
            |view| if view.d_mask != 0 { 1.0 } else { 0.0 },
        )
        .unwrap();
        assert!(p_nonempty > 0.0 && p_nonempty < 1.0);
    }
}
