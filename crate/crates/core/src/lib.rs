//! Hyperbolic mutually-nearest-neighbour (MNNR) cooperation of resource-marked
//! wireless nodes.
//!
//! A node is a planar position plus a positive resource mark, embedded as a
//! point of the upper half-space `H³`. Two nodes cooperate when each is the
//! other's hyperbolic nearest neighbour and their marks pass a symmetric
//! control set. For independently marked Poisson processes the crate
//! evaluates the cooperation probability, the fraction of nodes in pairs and
//! the expected interference of singles and pairs, and checks them against
//! Monte Carlo simulation.
//!
//! Module map:
//!
//! - [`hypgeom`]: half-space metric, hyperbolic balls as Euclidean balls, lens geometry
//! - [`marks`]: mark distributions and control sets
//! - [`numerics`]: adaptive quadrature and the union-volume function `F`
//! - [`pointprocess`]: windows, planar metrics, marked PPP sampling, pattern files
//! - [`mnnr`]: nearest neighbours and the pair/single partition
//! - [`analytics`]: pair probability, pair fraction, expected interference
//! - [`simharness`]: replicated simulation with reproducible seeding

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod error;
pub mod hypgeom;
pub mod marks;
pub mod mnnr;
pub mod numerics;
pub mod pointprocess;
pub mod rng;
pub mod simharness;

pub use error::{Error, Result};
pub use hypgeom::MarkedAtom;
pub use marks::{ControlSet, MarkModel};
pub use rng::SeededRng;
