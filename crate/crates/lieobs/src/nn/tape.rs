//! Rollout tape and exact reverse-mode differentiation through time.
//!
//! The forward rollout records, per epoch, the packed input, both GRU cell
//! caches, the network output and the exponential of the rotational
//! residual. The reverse pass walks the tape backwards and propagates the
//! loss gradient through
//!
//! - the linear head and both GRU recurrences (classic BPTT),
//! - the group composition `R_{k+1} = R_k exp(hat(alpha_k))`, which routes
//!   gradient both into `alpha_k` (via the Jacobian of the Rodrigues
//!   formula) and back into `R_k`,
//! - the additive position update, and
//! - the re-use of the full estimate in the next epoch's packed input.
//!
//! Bias estimates are direct assignments, so no gradient flows from one
//! bias estimate to the previous one; they still receive gradient through
//! the next epoch's input.

use nalgebra::{DVector, Matrix3, SVector, Vector3};

use crate::observer::{EstimateCotangent, EstimateState};
use crate::so3::{exp_so3_vjp, Rotation};
use crate::{Error, Result};

use super::gru::{gru_backward, gru_forward_cached, linear_backward, GruStep};
use super::{ObserverParams, INPUT_DIM};

/// Everything recorded during one epoch of a taped rollout.
#[derive(Debug, Clone)]
pub struct TapeStep {
    /// Packed 36-dimensional input.
    pub input: DVector<f64>,
    pub gru1: GruStep,
    pub gru2: GruStep,
    /// Network output `v_k`.
    pub output: SVector<f64, 12>,
    /// `exp(hat(alpha_k))`, cached from the forward pass.
    pub residual_exp: Rotation,
}

/// Recording of a completed forward rollout, sufficient to replay it
/// bit-exactly and to run the reverse pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// The estimate the rollout started from.
    pub initial: EstimateState,
    /// Estimates for epochs `1..=M`.
    pub estimates: Vec<EstimateState>,
    pub steps: Vec<TapeStep>,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Estimate entering step `k` (the one packed into its input).
    fn estimate_before(&self, k: usize) -> &EstimateState {
        if k == 0 {
            &self.initial
        } else {
            &self.estimates[k - 1]
        }
    }

    /// Recomputes every recorded network output from the recorded inputs
    /// and hidden states; bitwise-identical outputs certify the tape is a
    /// faithful recording of the forward pass.
    pub fn replay_matches(&self, params: &ObserverParams) -> bool {
        self.steps.iter().all(|step| {
            let s1 = gru_forward_cached(&params.gru1, &step.input, &step.gru1.h_prev);
            let s2 = gru_forward_cached(&params.gru2, &s1.h_next, &step.gru2.h_prev);
            let v = &params.head.weights * &s2.h_next + &params.head.bias;
            s1.h_next == step.gru1.h_next
                && s2.h_next == step.gru2.h_next
                && v.as_slice() == step.output.as_slice()
        })
    }
}

/// One evaluation of the full network: gru1 -> gru2 -> head. Returns the
/// 12-dimensional output and both next hidden states.
pub fn network_forward(
    params: &ObserverParams,
    input: &DVector<f64>,
    h1: &DVector<f64>,
    h2: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    if input.len() != INPUT_DIM {
        return Err(Error::ShapeMismatch {
            context: "network input",
            expected: INPUT_DIM,
            actual: input.len(),
        });
    }
    let h1_next = super::gru::gru_forward(&params.gru1, input, h1)?;
    let h2_next = super::gru::gru_forward(&params.gru2, &h1_next, h2)?;
    let output = super::gru::linear_forward(&params.head, &h2_next)?;
    Ok((output, h1_next, h2_next))
}

/// Exact reverse-mode gradients of a scalar loss with respect to every
/// parameter, given the per-epoch loss cotangents `dL/d(estimate_k)` for
/// `k = 1..=M` in ambient coordinates.
pub fn backward(
    params: &ObserverParams,
    tape: &Tape,
    cotangents: &[EstimateCotangent],
) -> Result<ObserverParams> {
    if cotangents.len() != tape.len() {
        return Err(Error::LengthMismatch {
            context: "loss cotangents vs tape steps",
            left: cotangents.len(),
            right: tape.len(),
        });
    }
    let hidden = params.hidden_size();
    if tape
        .steps
        .iter()
        .any(|s| s.gru1.h_prev.len() != hidden || s.input.len() != INPUT_DIM)
    {
        return Err(Error::ShapeMismatch {
            context: "tape recorded with different dimensions",
            expected: hidden,
            actual: tape.steps[0].gru1.h_prev.len(),
        });
    }

    let mut grads = ObserverParams::zeros(hidden);

    // Adjoints of the estimate produced by the step being processed.
    let mut g_rotation = Matrix3::zeros();
    let mut g_position = Vector3::zeros();
    let mut g_gyro = Vector3::zeros();
    let mut g_vel = Vector3::zeros();
    // Adjoints of the hidden states produced by the step being processed.
    let mut d_h1 = DVector::zeros(hidden);
    let mut d_h2 = DVector::zeros(hidden);

    for k in (0..tape.len()).rev() {
        let step = &tape.steps[k];
        let est_prev = tape.estimate_before(k);

        // Direct loss contribution at epoch k+1.
        g_rotation += cotangents[k].rotation;
        g_position += cotangents[k].position;
        g_gyro += cotangents[k].gyro_bias;
        g_vel += cotangents[k].vel_bias;

        // Output cotangent: alpha through the exponential-map Jacobian
        // (dL/dE = R_k^T dL/dR_{k+1}), the rest directly.
        let d_alpha = exp_so3_vjp(
            step.output.fixed_rows::<3>(0).into_owned(),
            &(est_prev.rotation.matrix().transpose() * g_rotation),
        );
        let mut d_output = DVector::zeros(12);
        for i in 0..3 {
            d_output[i] = d_alpha[i];
            d_output[3 + i] = g_position[i];
            d_output[6 + i] = g_gyro[i];
            d_output[9 + i] = g_vel[i];
        }

        // Head, then both GRU cells.
        let d_h2_from_head = linear_backward(&params.head, &step.gru2.h_next, &d_output, &mut grads.head);
        d_h2 += d_h2_from_head;
        let (d_x2, d_h2_prev) =
            gru_backward(&params.gru2, &step.gru2, &step.gru1.h_next, &d_h2, &mut grads.gru2);
        d_h1 += d_x2;
        let (d_input, d_h1_prev) =
            gru_backward(&params.gru1, &step.gru1, &step.input, &d_h1, &mut grads.gru1);

        // Chain into the previous estimate: the group composition and the
        // additive position update...
        let mut g_rotation_prev = g_rotation * step.residual_exp.matrix().transpose();
        let mut g_position_prev = g_position;
        // ...plus the estimate's appearance in this step's packed input.
        g_rotation_prev += Matrix3::from_column_slice(&d_input.as_slice()[0..9]);
        g_position_prev += Vector3::new(d_input[9], d_input[10], d_input[11]);
        let g_gyro_prev = Vector3::new(d_input[12], d_input[13], d_input[14]);
        let g_vel_prev = Vector3::new(d_input[15], d_input[16], d_input[17]);

        g_rotation = g_rotation_prev;
        g_position = g_position_prev;
        g_gyro = g_gyro_prev;
        g_vel = g_vel_prev;
        d_h1 = d_h1_prev;
        d_h2 = d_h2_prev;
    }

    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observer::rollout_with_tape;
    use crate::sim::{generate_sequence, SequenceConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn network_forward_with_zero_params_returns_head_bias() {
        let mut params = ObserverParams::zeros(4);
        params.head.bias = DVector::from_fn(12, |i, _| i as f64 / 10.0);
        let (v, h1, h2) = network_forward(
            &params,
            &DVector::zeros(36),
            &DVector::zeros(4),
            &DVector::zeros(4),
        )
        .unwrap();
        assert_eq!(v, params.head.bias);
        assert_eq!(h1, DVector::zeros(4));
        assert_eq!(h2, DVector::zeros(4));
    }

    #[test]
    fn network_forward_matches_manual_chain() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let params = ObserverParams::init(&mut rng, 6);
        let x = DVector::from_fn(36, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let h1 = DVector::from_fn(6, |_, _| rand::Rng::random_range(&mut rng, -0.5..0.5));
        let h2 = DVector::from_fn(6, |_, _| rand::Rng::random_range(&mut rng, -0.5..0.5));

        let (v, h1n, h2n) = network_forward(&params, &x, &h1, &h2).unwrap();

        let h1_manual = super::super::gru::gru_forward(&params.gru1, &x, &h1).unwrap();
        let h2_manual = super::super::gru::gru_forward(&params.gru2, &h1_manual, &h2).unwrap();
        let v_manual = super::super::gru::linear_forward(&params.head, &h2_manual).unwrap();
        assert_eq!(h1n, h1_manual);
        assert_eq!(h2n, h2_manual);
        assert_eq!(v, v_manual);
    }

    #[test]
    fn network_forward_rejects_bad_input_length() {
        let params = ObserverParams::zeros(4);
        assert!(network_forward(
            &params,
            &DVector::zeros(35),
            &DVector::zeros(4),
            &DVector::zeros(4)
        )
        .is_err());
    }

    #[test]
    fn tape_replay_is_bit_exact() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let params = ObserverParams::init(&mut rng, 5);
        let seq = generate_sequence(&SequenceConfig::new(8, 0.1), 17, 0).unwrap();
        let (_, tape) = rollout_with_tape(
            &params,
            &seq.measurements,
            &crate::observer::EstimateState::identity(),
        )
        .unwrap();
        assert!(tape.replay_matches(&params));

        let mut other = params.clone();
        other.head.bias[0] += 1e-9;
        assert!(!tape.replay_matches(&other));
    }

    #[test]
    fn zero_cotangents_give_zero_gradients() {
        let mut rng = ChaCha12Rng::seed_from_u64(43);
        let params = ObserverParams::init(&mut rng, 4);
        let seq = generate_sequence(&SequenceConfig::new(5, 0.1), 19, 0).unwrap();
        let (_, tape) = rollout_with_tape(
            &params,
            &seq.measurements,
            &crate::observer::EstimateState::identity(),
        )
        .unwrap();
        let cotangents = vec![EstimateCotangent::zeros(); tape.len()];
        let grads = backward(&params, &tape, &cotangents).unwrap();
        assert_eq!(grads.norm(), 0.0);
    }

    #[test]
    fn cotangent_length_mismatch_is_rejected() {
        let mut rng = ChaCha12Rng::seed_from_u64(44);
        let params = ObserverParams::init(&mut rng, 4);
        let seq = generate_sequence(&SequenceConfig::new(5, 0.1), 19, 0).unwrap();
        let (_, tape) = rollout_with_tape(
            &params,
            &seq.measurements,
            &crate::observer::EstimateState::identity(),
        )
        .unwrap();
        let cotangents = vec![EstimateCotangent::zeros(); 3];
        assert!(backward(&params, &tape, &cotangents).is_err());
    }

    #[test]
    fn outputs_without_influence_get_zero_gradient() {
        // Single step, cotangent only on the position channel: the head
        // rows for the rotational residual and both bias outputs cannot
        // influence the loss and must receive exactly zero gradient.
        let mut rng = ChaCha12Rng::seed_from_u64(45);
        let params = ObserverParams::init(&mut rng, 4);
        let seq = generate_sequence(&SequenceConfig::new(1, 0.1), 23, 0).unwrap();
        let (_, tape) = rollout_with_tape(
            &params,
            &seq.measurements,
            &crate::observer::EstimateState::identity(),
        )
        .unwrap();
        let mut cotangent = EstimateCotangent::zeros();
        cotangent.position = Vector3::new(1.0, -2.0, 0.5);
        let grads = backward(&params, &tape, &[cotangent]).unwrap();
        for row in 0..12 {
            let row_norm = grads.head.weights.row(row).norm() + grads.head.bias[row].abs();
            if (3..6).contains(&row) {
                assert!(row_norm > 0.0, "position row {row} should be nonzero");
            } else {
                assert_eq!(row_norm, 0.0, "row {row} should be exactly zero");
            }
        }
    }
}
