//! Dense network primitives for the observer: two GRU layers, a linear
//! head, exact reverse-mode gradients through a whole rollout, and the
//! AdamW optimizer.
//!
//! Everything is 64-bit. Parameters live in a fixed canonical block order
//! used by the optimizer state and the checkpoint format:
//!
//! 1. `gru1.input_weights`   (3H x 36, column-major)
//! 2. `gru1.hidden_weights`  (3H x H, column-major)
//! 3. `gru1.input_bias`      (3H)
//! 4. `gru1.hidden_bias`     (3H)
//! 5. `gru2.*` in the same order (input size H)
//! 6. `head.weights`         (12 x H, column-major)
//! 7. `head.bias`            (12)
//!
//! Within each GRU weight matrix the gate rows are stacked
//! [reset; update; candidate].

mod adamw;
mod checkpoint;
pub(crate) mod gru;
mod tape;

pub use adamw::{adamw_step, AdamWConfig, OptimizerState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, RngState};
pub use gru::{gru_forward, linear_forward, GruStep};
pub use tape::{backward, network_forward, Tape, TapeStep};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::{Error, Result};

/// Observer input dimension: embedded estimate (18) plus measurement (18).
pub const INPUT_DIM: usize = 36;
/// Observer output dimension: the four stacked residuals.
pub const OUTPUT_DIM: usize = 12;

/// Weights of one GRU layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GruLayerParams {
    /// (3H x D): input-to-hidden weights, gate rows [reset; update; candidate].
    pub input_weights: DMatrix<f64>,
    /// (3H x H): hidden-to-hidden weights, same gate order.
    pub hidden_weights: DMatrix<f64>,
    /// (3H): input-side gate biases.
    pub input_bias: DVector<f64>,
    /// (3H): hidden-side gate biases; the candidate entry is gated by reset.
    pub hidden_bias: DVector<f64>,
}

impl GruLayerParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        GruLayerParams {
            input_weights: DMatrix::zeros(3 * hidden_size, input_size),
            hidden_weights: DMatrix::zeros(3 * hidden_size, hidden_size),
            input_bias: DVector::zeros(3 * hidden_size),
            hidden_bias: DVector::zeros(3 * hidden_size),
        }
    }

    pub fn input_size(&self) -> usize {
        self.input_weights.ncols()
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_weights.ncols()
    }
}

/// Weights of the fully connected head.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    /// (O x H).
    pub weights: DMatrix<f64>,
    /// (O).
    pub bias: DVector<f64>,
}

impl LinearParams {
    pub fn zeros(input_size: usize, output_size: usize) -> Self {
        LinearParams {
            weights: DMatrix::zeros(output_size, input_size),
            bias: DVector::zeros(output_size),
        }
    }
}

/// All weights of the observer network: GRU(36 -> H), GRU(H -> H),
/// FC(H -> 12). Also used as the gradient accumulator, which shares the
/// same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverParams {
    pub gru1: GruLayerParams,
    pub gru2: GruLayerParams,
    pub head: LinearParams,
}

impl ObserverParams {
    pub fn zeros(hidden_size: usize) -> Self {
        ObserverParams {
            gru1: GruLayerParams::zeros(INPUT_DIM, hidden_size),
            gru2: GruLayerParams::zeros(hidden_size, hidden_size),
            head: LinearParams::zeros(hidden_size, OUTPUT_DIM),
        }
    }

    /// Random initialization: every weight matrix uniform in
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, all biases zero. Entries are
    /// drawn in canonical block order, column-major within each matrix.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, hidden_size: usize) -> Self {
        let mut params = Self::zeros(hidden_size);
        for block in [
            &mut params.gru1.input_weights,
            &mut params.gru1.hidden_weights,
            &mut params.gru2.input_weights,
            &mut params.gru2.hidden_weights,
            &mut params.head.weights,
        ] {
            let bound = 1.0 / (block.ncols() as f64).sqrt();
            for x in block.as_mut_slice() {
                *x = rng.random_range(-bound..=bound);
            }
        }
        params
    }

    pub fn hidden_size(&self) -> usize {
        self.gru1.hidden_size()
    }

    /// Total number of scalar parameters for hidden size `h`.
    pub fn param_count(hidden_size: usize) -> usize {
        let h = hidden_size;
        let gru1 = 3 * h * INPUT_DIM + 3 * h * h + 6 * h;
        let gru2 = 3 * h * h + 3 * h * h + 6 * h;
        let head = OUTPUT_DIM * h + OUTPUT_DIM;
        gru1 + gru2 + head
    }

    /// Parameter blocks in canonical order.
    pub fn blocks(&self) -> [&[f64]; 10] {
        [
            self.gru1.input_weights.as_slice(),
            self.gru1.hidden_weights.as_slice(),
            self.gru1.input_bias.as_slice(),
            self.gru1.hidden_bias.as_slice(),
            self.gru2.input_weights.as_slice(),
            self.gru2.hidden_weights.as_slice(),
            self.gru2.input_bias.as_slice(),
            self.gru2.hidden_bias.as_slice(),
            self.head.weights.as_slice(),
            self.head.bias.as_slice(),
        ]
    }

    /// Mutable parameter blocks in canonical order.
    pub fn blocks_mut(&mut self) -> [&mut [f64]; 10] {
        [
            self.gru1.input_weights.as_mut_slice(),
            self.gru1.hidden_weights.as_mut_slice(),
            self.gru1.input_bias.as_mut_slice(),
            self.gru1.hidden_bias.as_mut_slice(),
            self.gru2.input_weights.as_mut_slice(),
            self.gru2.hidden_weights.as_mut_slice(),
            self.gru2.input_bias.as_mut_slice(),
            self.gru2.hidden_bias.as_mut_slice(),
            self.head.weights.as_mut_slice(),
            self.head.bias.as_mut_slice(),
        ]
    }

    /// Flattens all blocks in canonical order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(Self::param_count(self.hidden_size()));
        for block in self.blocks() {
            flat.extend_from_slice(block);
        }
        flat
    }

    /// Rebuilds parameters from a canonical flat vector.
    pub fn from_flat(hidden_size: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != Self::param_count(hidden_size) {
            return Err(Error::ShapeMismatch {
                context: "flat parameter vector",
                expected: Self::param_count(hidden_size),
                actual: flat.len(),
            });
        }
        let mut params = Self::zeros(hidden_size);
        let mut offset = 0;
        for block in params.blocks_mut() {
            block.copy_from_slice(&flat[offset..offset + block.len()]);
            offset += block.len();
        }
        Ok(params)
    }

    pub fn is_finite(&self) -> bool {
        self.blocks()
            .iter()
            .all(|block| block.iter().all(|x| x.is_finite()))
    }

    /// `self += scale * other`, block by block.
    pub fn add_scaled(&mut self, other: &ObserverParams, scale: f64) {
        let mut mine = self.blocks_mut();
        let theirs = other.blocks();
        for (dst, src) in mine.iter_mut().zip(theirs.iter()) {
            for (d, s) in dst.iter_mut().zip(src.iter()) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for block in self.blocks_mut() {
            for x in block {
                *x *= factor;
            }
        }
    }

    /// Euclidean norm over all parameters (used for gradient clipping).
    pub fn norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}
