//! Energy-aware gradient coordination for generalized category discovery.
//!
//! The crate is organized bottom-up:
//!
//! * [`numerics`]: dense linear algebra and seeded randomness;
//! * [`subspace`]: conceptor and PCA subspaces of known-class features;
//! * [`coordinator`]: anchor alignment and energy-aware elastic projection of
//!   feature gradients;
//! * [`metrics`]: entanglement diagnostics and Hungarian-matched accuracy;
//! * [`simulator`]: synthetic data and analytic-gradient training loops;
//! * [`theory`]: the linear deviation model behind the proximal anchor;
//! * [`io`]: text formats for datasets, matrices, models and traces.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coordinator;
pub mod error;
pub mod io;
pub mod metrics;
pub mod numerics;
pub mod simulator;
pub mod subspace;
pub mod theory;

pub use error::{Error, Result};
