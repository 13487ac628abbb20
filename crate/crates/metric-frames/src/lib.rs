//! Frames for finite metric spaces.
//!
//! A family of Lipschitz maps `f_1, ..., f_N` on a metric space `M` is a
//! p-frame with bounds `0 < a <= b` when
//!
//! ```text
//! a * d(x, y) <= || (f_n(x) - f_n(y))_n ||_p <= b * d(x, y)
//! ```
//!
//! for every pair of points. This crate computes and certifies such bounds
//! exactly on finite spaces by exhaustive pair scans, builds the classical
//! closed-form families (logarithmic, geometric, Kuratowski), predicts and
//! verifies how bounds move under scaling, composition, and perturbation,
//! and evaluates norms in the Lipschitz-free space of a finite metric space
//! through a linear program over the Lipschitz unit ball.

pub mod construct;
pub mod frame;
pub mod free;
pub mod json;
pub mod lipschitz;
pub mod norms;
pub mod perturb;
pub mod space;
pub mod stability;

pub use frame::{FrameBounds, FrameSystem, ReconstructionMap};
pub use lipschitz::{LipschitzFamily, TabulatedMap};
pub use norms::SequenceNormSpec;
pub use space::FiniteMetricSpace;

use thiserror::Error;

/// Errors shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("structural: {0}")]
    Structural(String),

    #[error("invalid metric: {kind} at ({i}, {j}, {k}), magnitude {magnitude:.6e}")]
    InvalidMetric {
        kind: String,
        i: usize,
        j: usize,
        k: usize,
        magnitude: f64,
    },

    #[error("domain: {0}")]
    Domain(String),

    #[error("map is not normalized: |f(base)| = {0:.6e} exceeds 1e-12")]
    NotNormalized(f64),

    #[error("extension infeasible: claimed constant {claimed} below the data's Lipschitz number {actual} (witness pair {i}, {j})")]
    InfeasibleExtension {
        claimed: f64,
        actual: f64,
        i: usize,
        j: usize,
    },

    #[error("quasi-norm p = {0} rejected: the operation relies on the triangle inequality, which requires p >= 1")]
    QuasiNorm(f64),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("solver: {0}")]
    Solver(String),

    #[error("no convergence after {iterations} iterations, last step {last_step:.6e}")]
    NoConvergence { iterations: usize, last_step: f64 },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
