//! Simulation and verification laboratory for the two-dimensional
//! random-field Ising model and its mid-edge extension.
//!
//! The crate provides:
//! - [`lattice`]: finite regions of Z², their boundaries, and the extended
//!   graph with one site per edge midpoint;
//! - [`gibbs`]: exact enumeration of partition functions, expectations,
//!   correlations, surface tension, and the cluster-swap map;
//! - [`sampler`]: reproducible Gaussian disorder, heat-bath Glauber dynamics,
//!   exact sampling by monotone coupling from the past, and conditional
//!   mid-edge augmentation;
//! - [`disagreement`]: geometry of the disagreement set of a plus/minus pair
//!   (clusters, crossings, lassoes, non-anticipatory exploration);
//! - [`analysis`]: the surface-tension tilt integral, the Gaussian tail χ,
//!   anti-concentration checking, regular-stretch selection, and decay fits;
//! - [`verify`]: a randomized exact-identity suite exercising all of the
//!   above against independent routes.

pub mod analysis;
pub mod disagreement;
pub mod gibbs;
pub mod lattice;
pub mod model;
pub mod sampler;
pub mod stats;
pub mod verify;
