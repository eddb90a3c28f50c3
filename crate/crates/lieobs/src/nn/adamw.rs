//! AdamW: Adam moment estimation with decoupled weight decay,
//! `theta' = theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::ObserverParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 3e-4,
            weight_decay: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment accumulators, flat in canonical block order,
/// plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(param_count: usize) -> Self {
        OptimizerState {
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step: 0,
        }
    }
}

/// One optimizer step. Rejects non-finite gradients without touching the
/// parameters or the moments.
pub fn adamw_step(
    params: &mut ObserverParams,
    grads: &ObserverParams,
    state: &mut OptimizerState,
    cfg: &AdamWConfig,
) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::NonFinite {
            context: "gradient passed to optimizer".into(),
        });
    }
    let expected = ObserverParams::param_count(params.hidden_size());
    if state.first_moment.len() != expected {
        return Err(Error::ShapeMismatch {
            context: "optimizer state",
            expected,
            actual: state.first_moment.len(),
        });
    }

    state.step += 1;
    let bias1 = 1.0 - cfg.beta1.powi(state.step as i32);
    let bias2 = 1.0 - cfg.beta2.powi(state.step as i32);

    let mut offset = 0;
    let grad_blocks = grads.blocks();
    for (block_idx, param_block) in params.blocks_mut().into_iter().enumerate() {
        let grad_block = grad_blocks[block_idx];
        for (i, p) in param_block.iter_mut().enumerate() {
            let g = grad_block[i];
            let m = &mut state.first_moment[offset + i];
            let v = &mut state.second_moment[offset + i];
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= cfg.learning_rate * (m_hat / (v_hat.sqrt() + cfg.epsilon) + cfg.weight_decay * *p);
        }
        offset += grad_block.len();
    }
    Ok(())
}
