//! Model parameters, spin and extended configurations, disorder fields,
//! and boundary specifications.

use crate::lattice::{Region, Vertex};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("beta must be positive and finite, got {0}")]
    InvalidBeta(f64),
    #[error("coupling J must be >= 0 and finite, got {0}")]
    InvalidCoupling(f64),
    #[error("disorder intensity eps must be >= 0, got {0}")]
    InvalidDisorder(f64),
    #[error("missing disorder value at ({x}, {y})")]
    MissingField { x: i32, y: i32 },
    #[error("boundary value {value} invalid at a {site} site")]
    BadBoundaryValue { site: &'static str, value: i8 },
    #[error("boundary site ({x}, {y}) not in region")]
    BoundarySiteOutsideRegion { x: i32, y: i32 },
    #[error("boundary mid-edge ({ax},{ay})-({bx},{by}) not an edge of the region")]
    BoundaryEdgeOutsideRegion { ax: i32, ay: i32, bx: i32, by: i32 },
    #[error("boundary values admit no configuration satisfying the hard constraints")]
    NotAllowed,
}

/// Inverse temperature, coupling, uniform field and disorder intensity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub beta: f64,
    pub j: f64,
    pub h: f64,
    pub eps: f64,
}

impl CouplingParams {
    pub fn new(beta: f64, j: f64, h: f64, eps: f64) -> Result<Self, ModelError> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(ModelError::InvalidBeta(beta));
        }
        if !(j >= 0.0 && j.is_finite()) {
            return Err(ModelError::InvalidCoupling(j));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(ModelError::InvalidDisorder(eps));
        }
        Ok(CouplingParams { beta, j, h, eps })
    }

    /// t = (e^{2Jβ} − 1)^{−1/2}. Diverges at J = 0; the weight products that
    /// actually enter computations use the finite combination λt instead.
    pub fn t(&self) -> f64 {
        1.0 / ((2.0 * self.j * self.beta).exp_m1()).sqrt()
    }

    /// λ = (2 sinh(Jβ))^{1/2}; the unique normalization for which summing the
    /// mid-edge weights over an edge reproduces e^{βJσσ'}.
    pub fn lambda(&self) -> f64 {
        (2.0 * (self.j * self.beta).sinh()).sqrt()
    }

    /// λ·t in closed form: e^{−βJ/2}. Finite for all J ≥ 0.
    pub fn lambda_t(&self) -> f64 {
        (-self.beta * self.j / 2.0).exp()
    }

    /// Mid-edge weight W(a, b) = λ(δ_{a,b} + t δ_{b,0}) for a = ±1, b ∈ {−1,0,1}.
    pub fn w(&self, a: i8, b: i8) -> f64 {
        debug_assert!(a == 1 || a == -1);
        debug_assert!(b == 0 || b == 1 || b == -1);
        if b == a {
            self.lambda()
        } else if b == 0 {
            self.lambda_t()
        } else {
            0.0
        }
    }

    /// Conditional law of a mid-edge given agreeing endpoints of value s:
    /// P(κ = s) = 1/(1+t²) = 1 − e^{−2βJ}, else κ = 0.
    pub fn midedge_copy_prob(&self) -> f64 {
        -(-2.0 * self.beta * self.j).exp_m1()
    }

    /// Per-vertex field term β(h + ε η_v).
    pub fn field_term(&self, eta: f64) -> f64 {
        self.beta * (self.h + self.eps * eta)
    }
}

/// ±1 spins aligned to a region's canonical vertex order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpinConfig {
    pub sigma: Vec<i8>,
}

impl SpinConfig {
    pub fn uniform(region: &Region, s: i8) -> Self {
        SpinConfig {
            sigma: vec![s; region.num_vertices()],
        }
    }

    pub fn get(&self, region: &Region, v: Vertex) -> Option<i8> {
        region.vertex_index(v).map(|i| self.sigma[i as usize])
    }
}

/// Spins plus mid-edge values in {−1, 0, +1}, aligned to region vertex and
/// edge order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtendedConfig {
    pub sigma: Vec<i8>,
    pub kappa: Vec<i8>,
}

impl ExtendedConfig {
    /// The hard constraints: disagreeing endpoints force κ = 0, and κ = ±1
    /// forces both endpoints to match it.
    pub fn satisfies_hard_constraints(&self, region: &Region) -> bool {
        region.edges().iter().enumerate().all(|(e, &[a, b])| {
            let (su, sv, k) = (
                self.sigma[a as usize],
                self.sigma[b as usize],
                self.kappa[e],
            );
            if k == 0 {
                true
            } else {
                su == k && sv == k
            }
        })
    }
}

/// Per-vertex standard-Gaussian disorder values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldRealization {
    eta: BTreeMap<Vertex, f64>,
}

impl FieldRealization {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn zero_on(region: &Region) -> Self {
        FieldRealization {
            eta: region.vertices().iter().map(|&v| (v, 0.0)).collect(),
        }
    }

    pub fn from_fn(region: &Region, mut f: impl FnMut(Vertex) -> f64) -> Self {
        FieldRealization {
            eta: region.vertices().iter().map(|&v| (v, f(v))).collect(),
        }
    }

    pub fn set(&mut self, v: Vertex, value: f64) {
        self.eta.insert(v, value);
    }

    pub fn eta(&self, v: Vertex) -> Result<f64, ModelError> {
        self.eta
            .get(&v)
            .copied()
            .ok_or(ModelError::MissingField { x: v.x, y: v.y })
    }

    pub fn covers(&self, region: &Region) -> bool {
        region.vertices().iter().all(|v| self.eta.contains_key(v))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vertex, &f64)> {
        self.eta.iter()
    }
}

/// Values imposed on a subset of extended sites: ±1 on vertices, {−1,0,+1}
/// on mid-edges. Mid-edges are keyed by their endpoint pair.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundarySpec {
    vertex: BTreeMap<Vertex, i8>,
    midedge: BTreeMap<(Vertex, Vertex), i8>,
}

impl BoundarySpec {
    pub fn free() -> Self {
        Self::default()
    }

    pub fn uniform(vertices: impl IntoIterator<Item = Vertex>, s: i8) -> Self {
        BoundarySpec {
            vertex: vertices.into_iter().map(|v| (v, s)).collect(),
            midedge: BTreeMap::new(),
        }
    }

    pub fn plus_on(vertices: impl IntoIterator<Item = Vertex>) -> Self {
        Self::uniform(vertices, 1)
    }

    pub fn minus_on(vertices: impl IntoIterator<Item = Vertex>) -> Self {
        Self::uniform(vertices, -1)
    }

    pub fn set_vertex(&mut self, v: Vertex, s: i8) -> &mut Self {
        self.vertex.insert(v, s);
        self
    }

    pub fn set_midedge(&mut self, u: Vertex, v: Vertex, k: i8) -> &mut Self {
        let key = if u <= v { (u, v) } else { (v, u) };
        self.midedge.insert(key, k);
        self
    }

    pub fn vertex_value(&self, v: Vertex) -> Option<i8> {
        self.vertex.get(&v).copied()
    }

    pub fn midedge_value(&self, u: Vertex, v: Vertex) -> Option<i8> {
        let key = if u <= v { (u, v) } else { (v, u) };
        self.midedge.get(&key).copied()
    }

    pub fn vertex_entries(&self) -> impl Iterator<Item = (&Vertex, &i8)> {
        self.vertex.iter()
    }

    pub fn is_vertex_only(&self) -> bool {
        self.midedge.is_empty()
    }

    /// Checks that all values are in range, all sites lie in the region, and
    /// at least one extended configuration satisfies the hard constraints.
    ///
    /// The constraints are edge-local apart from vertex forcing: a fixed
    /// κ = s ≠ 0 forces both endpoints to s, so all nonzero κ incident to one
    /// vertex must agree with each other and with any fixed vertex value, and
    /// fixed unequal endpoints exclude a fixed nonzero κ. These local checks
    /// are complete: absent a contradiction, forced vertices take their forced
    /// value, remaining free sites take +1 spins and 0 mid-edges.
    pub fn validate(&self, region: &Region) -> Result<(), ModelError> {
        for (&v, &s) in &self.vertex {
            if s != 1 && s != -1 {
                return Err(ModelError::BadBoundaryValue {
                    site: "vertex",
                    value: s,
                });
            }
            if !region.contains(v) {
                return Err(ModelError::BoundarySiteOutsideRegion { x: v.x, y: v.y });
            }
        }
        let mut forced: BTreeMap<Vertex, i8> = self.vertex.clone();
        for (&(u, v), &k) in &self.midedge {
            if !(-1..=1).contains(&k) {
                return Err(ModelError::BadBoundaryValue {
                    site: "mid-edge",
                    value: k,
                });
            }
            let in_region = region
                .vertex_index(u)
                .zip(region.vertex_index(v))
                .map(|_| u.distance(v) == 1)
                .unwrap_or(false);
            if !in_region {
                return Err(ModelError::BoundaryEdgeOutsideRegion {
                    ax: u.x,
                    ay: u.y,
                    bx: v.x,
                    by: v.y,
                });
            }
            if k != 0 {
                for w in [u, v] {
                    match forced.get(&w) {
                        Some(&s) if s != k => return Err(ModelError::NotAllowed),
                        _ => {
                            forced.insert(w, k);
                        }
                    }
                }
            }
        }
        // Fixed unequal endpoints are incompatible with a fixed nonzero κ;
        // forced values above already catch that case, but a κ = 0 edge is
        // always satisfiable, so nothing further to check.
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Region;

    #[test]
    fn weight_summation_reproduces_coupling_factor() {
        // Σ_κ W(σu, κ) W(σv, κ) = e^{βJ σu σv} for all spin pairs.
        for (beta, j) in [(0.3, 1.0), (1.0, 0.5), (2.5, 2.0)] {
            let p = CouplingParams::new(beta, j, 0.0, 0.0).unwrap();
            for su in [-1i8, 1] {
                for sv in [-1i8, 1] {
                    let sum: f64 = [-1i8, 0, 1]
                        .iter()
                        .map(|&k| p.w(su, k) * p.w(sv, k))
                        .sum();
                    let expected = (beta * j * f64::from(su) * f64::from(sv)).exp();
                    assert!(
                        (sum - expected).abs() <= 1e-12 * expected,
                        "beta={beta} j={j} su={su} sv={sv}: {sum} vs {expected}"
                    );
                }
            }
        }
    }

    #[test]
    fn midedge_copy_prob_matches_weight_ratio() {
        let p = CouplingParams::new((2.0f64).ln() / 2.0, 1.0, 0.0, 0.0).unwrap();
        // e^{2βJ} = 2 so t = 1 and the conditional probability is 1/2.
        assert!((p.t() - 1.0).abs() < 1e-12);
        assert!((p.midedge_copy_prob() - 0.5).abs() < 1e-12);
        // General identity 1/(1+t²) = 1 − e^{−2βJ}.
        for (beta, j) in [(0.2, 0.5), (1.3, 1.0), (3.0, 2.0)] {
            let p = CouplingParams::new(beta, j, 0.0, 0.0).unwrap();
            let t2 = p.t() * p.t();
            assert!((p.midedge_copy_prob() - 1.0 / (1.0 + t2)).abs() < 1e-12);
        }
    }

    #[test]
    fn params_validation() {
        assert!(CouplingParams::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(CouplingParams::new(f64::INFINITY, 1.0, 0.0, 0.0).is_err());
        assert!(CouplingParams::new(1.0, -1.0, 0.0, 0.0).is_err());
        assert!(CouplingParams::new(1.0, 1.0, 0.0, -0.5).is_err());
        // The decoupled limit stays well defined through λt = e^{−βJ/2}.
        let p = CouplingParams::new(1.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(p.lambda_t(), 1.0);
        assert_eq!(p.w(1, 0), 1.0);
        assert_eq!(p.w(1, 1), 0.0);
        assert_eq!(p.midedge_copy_prob(), 0.0);
    }

    #[test]
    fn hard_constraints_checker() {
        let r = Region::from_vertices([Vertex::ORIGIN, Vertex::new(1, 0)]);
        let ok = ExtendedConfig {
            sigma: vec![1, 1],
            kappa: vec![1],
        };
        assert!(ok.satisfies_hard_constraints(&r));
        let ok0 = ExtendedConfig {
            sigma: vec![1, -1],
            kappa: vec![0],
        };
        assert!(ok0.satisfies_hard_constraints(&r));
        let bad = ExtendedConfig {
            sigma: vec![1, -1],
            kappa: vec![1],
        };
        assert!(!bad.satisfies_hard_constraints(&r));
        let bad2 = ExtendedConfig {
            sigma: vec![-1, -1],
            kappa: vec![1],
        };
        assert!(!bad2.satisfies_hard_constraints(&r));
    }

    #[test]
    fn boundary_validation() {
        let r = Region::ball(Vertex::ORIGIN, 1);
        let bc = BoundarySpec::plus_on(r.internal_boundary(None));
        assert!(bc.validate(&r).is_ok());

        let mut bad = BoundarySpec::free();
        bad.set_vertex(Vertex::new(5, 5), 1);
        assert!(matches!(
            bad.validate(&r),
            Err(ModelError::BoundarySiteOutsideRegion { .. })
        ));

        // κ = +1 forces both endpoints +1; a −1 vertex on the same edge is
        // not an allowed configuration.
        let mut conflict = BoundarySpec::free();
        conflict.set_vertex(Vertex::new(1, 0), -1);
        conflict.set_midedge(Vertex::ORIGIN, Vertex::new(1, 0), 1);
        assert_eq!(conflict.validate(&r), Err(ModelError::NotAllowed));

        // Two incident mid-edges forcing different signs on a shared vertex.
        let mut clash = BoundarySpec::free();
        clash.set_midedge(Vertex::ORIGIN, Vertex::new(1, 0), 1);
        clash.set_midedge(Vertex::ORIGIN, Vertex::new(0, 1), -1);
        assert_eq!(clash.validate(&r), Err(ModelError::NotAllowed));

        let mut fine = BoundarySpec::free();
        fine.set_midedge(Vertex::ORIGIN, Vertex::new(1, 0), 0);
        assert!(fine.validate(&r).is_ok());
    }

    #[test]
    fn field_lookup() {
        let r = Region::ball(Vertex::ORIGIN, 1);
        let f = FieldRealization::zero_on(&r);
        assert!(f.covers(&r));
        assert_eq!(f.eta(Vertex::ORIGIN).unwrap(), 0.0);
        assert!(f.eta(Vertex::new(9, 9)).is_err());
    }
}
