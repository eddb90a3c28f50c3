//! Learned state observer for rigid-body systems whose estimates stay on
//! SO(3) by construction.
//!
//! The observer is a recurrent network that outputs a residual on the Lie
//! algebra; the estimate is advanced through the exponential map and the
//! group action, so the rotational state never leaves the manifold no matter
//! what the network weights are. The crate contains everything needed to
//! train and evaluate such an observer end to end on the rigid-body
//! rotation/translation system:
//!
//! - [`so3`]: hat/vee, Rodrigues exponential and logarithm, Haar-uniform
//!   sampling, the flattening embedding, and manifold-distance diagnostics.
//! - [`sim`]: ground-truth trajectory generation with an adaptive RK5(4)
//!   integrator, biased/noisy sensor models, and binary dataset I/O.
//! - [`nn`]: dense GRU layers, a linear head, exact reverse-mode gradients
//!   through the whole rollout (including the exponential map and the group
//!   composition), and the AdamW optimizer.
//! - [`observer`]: input packing, the manifold-constrained update law, and
//!   sequence rollouts.
//! - [`training`]: the embedding loss, the training loop, and
//!   validation-based checkpoint selection.
//! - [`eval`]: Monte-Carlo error statistics, noise sweeps, and report files.
//! - [`cli`]: configuration handling and the subcommand implementations
//!   behind the `lieobs` binary.

pub mod cli;
pub mod eval;
pub mod nn;
pub mod observer;
pub mod sim;
pub mod so3;
pub mod training;

use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not a rotation: |R R^T - I| = {distance:.3e}, det = {det:.6}")]
    InvalidRotation { distance: f64, det: f64 },
    #[error("matrix is not skew-symmetric: |M + M^T| = {deviation:.3e}")]
    NotSkewSymmetric { deviation: f64 },
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("integrator step size underflow at t = {t:.6}: next step {step:.3e}")]
    StepSizeUnderflow { t: f64, step: f64 },
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("{0}")]
    CheckFailed(String),
    #[error("length mismatch in {context}: {left} vs {right}")]
    LengthMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI contract: 1 for configuration or input
    /// validation problems, 2 for runtime and numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
