//! Conservative solutions of the periodic Camassa–Holm equation in Lagrangian
//! coordinates, with the relabeling-invariant distance used to measure their stability.

// Validation writes `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evolution;
pub mod grid;
pub mod metric;
pub mod nonlocal;
pub mod peakons;
pub mod projection;
pub mod samples;
pub mod state;
pub mod toymetric;
pub mod transforms;

pub use error::{Error, Result};
pub use state::{LagrangianState, Relabeling};
pub use transforms::EulerianState;
