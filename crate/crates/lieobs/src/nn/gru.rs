//! GRU cell and linear layer, forward and cell-level backward.
//!
//! Gate equations, with `W*` the input-to-hidden rows, `U*` the
//! hidden-to-hidden rows and two bias vectors (the hidden-side candidate
//! bias sits inside the reset product):
//!
//! ```text
//! r  = sigmoid(W_r x + b_ir + U_r h + b_hr)
//! z  = sigmoid(W_z x + b_iz + U_z h + b_hz)
//! n  = tanh(W_n x + b_in + r .* (U_n h + b_hn))
//! h' = (1 - z) .* n + z .* h
//! ```
//!
//! `h'` is a convex combination of `tanh` output and the previous hidden
//! state, so rollouts started from `h = 0` stay inside `[-1, 1]`.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

use super::{GruLayerParams, LinearParams};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-step cache of one GRU cell evaluation, retained for backward.
#[derive(Debug, Clone)]
pub struct GruStep {
    pub h_prev: DVector<f64>,
    pub reset: DVector<f64>,
    pub update: DVector<f64>,
    pub candidate: DVector<f64>,
    /// `U_n h_prev + b_hn`: the hidden-side candidate preactivation.
    pub candidate_hidden_pre: DVector<f64>,
    pub h_next: DVector<f64>,
}

fn check_shapes(params: &GruLayerParams, x: &DVector<f64>, h: &DVector<f64>) -> Result<()> {
    if x.len() != params.input_size() {
        return Err(Error::ShapeMismatch {
            context: "gru input",
            expected: params.input_size(),
            actual: x.len(),
        });
    }
    if h.len() != params.hidden_size() {
        return Err(Error::ShapeMismatch {
            context: "gru hidden state",
            expected: params.hidden_size(),
            actual: h.len(),
        });
    }
    Ok(())
}

/// One GRU cell evaluation with the full cache.
pub(crate) fn gru_forward_cached(
    params: &GruLayerParams,
    x: &DVector<f64>,
    h: &DVector<f64>,
) -> GruStep {
    let hs = params.hidden_size();
    let a = &params.input_weights * x + &params.input_bias;
    let g = &params.hidden_weights * h + &params.hidden_bias;

    let mut reset = DVector::zeros(hs);
    let mut update = DVector::zeros(hs);
    let mut candidate = DVector::zeros(hs);
    let mut candidate_hidden_pre = DVector::zeros(hs);
    let mut h_next = DVector::zeros(hs);
    for i in 0..hs {
        reset[i] = sigmoid(a[i] + g[i]);
        update[i] = sigmoid(a[hs + i] + g[hs + i]);
        candidate_hidden_pre[i] = g[2 * hs + i];
        candidate[i] = (a[2 * hs + i] + reset[i] * candidate_hidden_pre[i]).tanh();
        h_next[i] = (1.0 - update[i]) * candidate[i] + update[i] * h[i];
    }
    GruStep {
        h_prev: h.clone(),
        reset,
        update,
        candidate,
        candidate_hidden_pre,
        h_next,
    }
}

/// One GRU cell evaluation; returns the next hidden state.
pub fn gru_forward(
    params: &GruLayerParams,
    x: &DVector<f64>,
    h: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_shapes(params, x, h)?;
    Ok(gru_forward_cached(params, x, h).h_next)
}

/// Cell-level reverse pass. `d_h_next` is the loss gradient with respect to
/// the cell output; gradients are accumulated into `grads` and the
/// gradients with respect to the cell input and previous hidden state are
/// returned.
pub(crate) fn gru_backward(
    params: &GruLayerParams,
    step: &GruStep,
    x: &DVector<f64>,
    d_h_next: &DVector<f64>,
    grads: &mut GruLayerParams,
) -> (DVector<f64>, DVector<f64>) {
    let hs = params.hidden_size();
    let mut d_input_pre = DVector::zeros(3 * hs);
    let mut d_hidden_pre = DVector::zeros(3 * hs);
    for i in 0..hs {
        let r = step.reset[i];
        let z = step.update[i];
        let n = step.candidate[i];
        let u = step.candidate_hidden_pre[i];
        let g = d_h_next[i];

        let d_n = g * (1.0 - z);
        let d_z = g * (step.h_prev[i] - n);
        let d_n_pre = d_n * (1.0 - n * n);
        let d_r = d_n_pre * u;
        let d_r_pre = d_r * r * (1.0 - r);
        let d_z_pre = d_z * z * (1.0 - z);

        d_input_pre[i] = d_r_pre;
        d_input_pre[hs + i] = d_z_pre;
        d_input_pre[2 * hs + i] = d_n_pre;
        d_hidden_pre[i] = d_r_pre;
        d_hidden_pre[hs + i] = d_z_pre;
        d_hidden_pre[2 * hs + i] = d_n_pre * r;
    }

    grads.input_weights.ger(1.0, &d_input_pre, x, 1.0);
    grads.hidden_weights.ger(1.0, &d_hidden_pre, &step.h_prev, 1.0);
    grads.input_bias += &d_input_pre;
    grads.hidden_bias += &d_hidden_pre;

    let d_x = params.input_weights.tr_mul(&d_input_pre);
    let mut d_h_prev = params.hidden_weights.tr_mul(&d_hidden_pre);
    for i in 0..hs {
        d_h_prev[i] += d_h_next[i] * step.update[i];
    }
    (d_x, d_h_prev)
}

/// Affine map `W h + b`.
pub fn linear_forward(params: &LinearParams, h: &DVector<f64>) -> Result<DVector<f64>> {
    if h.len() != params.weights.ncols() {
        return Err(Error::ShapeMismatch {
            context: "linear input",
            expected: params.weights.ncols(),
            actual: h.len(),
        });
    }
    Ok(&params.weights * h + &params.bias)
}

/// Reverse pass of the linear layer; returns the gradient with respect to
/// the input.
pub(crate) fn linear_backward(
    params: &LinearParams,
    input: &DVector<f64>,
    d_output: &DVector<f64>,
    grads: &mut LinearParams,
) -> DVector<f64> {
    grads.weights.ger(1.0, d_output, input, 1.0);
    grads.bias += d_output;
    params.weights.tr_mul(d_output)
}

#[allow(dead_code)]
pub(crate) fn naive_matvec(w: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(w.nrows());
    for i in 0..w.nrows() {
        for j in 0..w.ncols() {
            out[i] += w[(i, j)] * x[j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn zero_cell_maps_zero_to_zero() {
        let params = GruLayerParams::zeros(4, 3);
        let h = gru_forward(&params, &DVector::zeros(4), &DVector::zeros(3)).unwrap();
        assert_eq!(h, DVector::zeros(3));
    }

    #[test]
    fn scalar_cell_matches_hand_computation() {
        // Single-unit GRU with hand-set weights, evaluated against the four
        // gate equations computed in scalar arithmetic.
        let mut params = GruLayerParams::zeros(1, 1);
        params.input_weights[(0, 0)] = 0.5; // W_r
        params.input_weights[(1, 0)] = -0.3; // W_z
        params.input_weights[(2, 0)] = 0.8; // W_n
        params.hidden_weights[(0, 0)] = 0.2; // U_r
        params.hidden_weights[(1, 0)] = 0.7; // U_z
        params.hidden_weights[(2, 0)] = -0.4; // U_n
        params.input_bias[0] = 0.1;
        params.input_bias[1] = -0.2;
        params.input_bias[2] = 0.3;
        params.hidden_bias[0] = 0.05;
        params.hidden_bias[1] = 0.15;
        params.hidden_bias[2] = -0.25;

        let x = 0.9;
        let h = -0.6;
        let r = sigmoid(0.5 * x + 0.1 + 0.2 * h + 0.05);
        let z = sigmoid(-0.3 * x - 0.2 + 0.7 * h + 0.15);
        let n = (0.8 * x + 0.3 + r * (-0.4 * h - 0.25)).tanh();
        let expected = (1.0 - z) * n + z * h;

        let out = gru_forward(
            &params,
            &DVector::from_element(1, x),
            &DVector::from_element(1, h),
        )
        .unwrap();
        assert_relative_eq!(out[0], expected, epsilon = 1e-15);
    }

    #[test]
    fn hidden_state_stays_bounded() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let params = crate::nn::ObserverParams::init(&mut rng, 6);
        let mut h = DVector::zeros(6);
        for _ in 0..2000 {
            let x = DVector::from_fn(36, |_, _| rng.random_range(-10.0..10.0));
            h = gru_forward(&params.gru1, &x, &h).unwrap();
            assert!(h.iter().all(|&v| (-1.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let params = GruLayerParams::zeros(4, 3);
        assert!(gru_forward(&params, &DVector::zeros(5), &DVector::zeros(3)).is_err());
        assert!(gru_forward(&params, &DVector::zeros(4), &DVector::zeros(2)).is_err());
    }

    #[test]
    fn linear_constant_and_identity() {
        let mut params = LinearParams::zeros(3, 3);
        params.bias = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let out = linear_forward(&params, &DVector::from_vec(vec![9.0, 9.0, 9.0])).unwrap();
        assert_eq!(out, params.bias);

        params.weights = DMatrix::identity(3, 3);
        params.bias = DVector::zeros(3);
        let h = DVector::from_vec(vec![0.3, -0.6, 2.0]);
        assert_eq!(linear_forward(&params, &h).unwrap(), h);
    }

    #[test]
    fn linear_matches_naive_matvec() {
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        let mut params = LinearParams::zeros(7, 4);
        for x in params.weights.as_mut_slice() {
            *x = rng.random_range(-1.0..1.0);
        }
        for x in params.bias.as_mut_slice() {
            *x = rng.random_range(-1.0..1.0);
        }
        let h = DVector::from_fn(7, |_, _| rng.random_range(-1.0..1.0));
        let expected = naive_matvec(&params.weights, &h) + &params.bias;
        assert_relative_eq!(
            linear_forward(&params, &h).unwrap(),
            expected,
            epsilon = 1e-14
        );
    }
}
