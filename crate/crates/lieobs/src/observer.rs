//! The manifold-constrained observer: packing of estimate and measurement
//! into the network input, the update law mapping the network output
//! through the exponential map and the group action, and sequence rollouts.
//!
//! The rotational estimate is advanced by `R' = R exp(hat(alpha))`, a group
//! operation, so it satisfies the rotation invariants for any network
//! weights; nothing about staying on SO(3) is learned.

use nalgebra::{DVector, Matrix3, SVector, Vector3};

use crate::nn::{ObserverParams, Tape, TapeStep};
use crate::sim::MeasurementFrame;
use crate::so3::{exp_so3, Rotation};
use crate::{Error, Result};

/// The observer's state estimate; same shape as the true state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateState {
    pub rotation: Rotation,
    pub position: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
    pub vel_bias: Vector3<f64>,
}

impl EstimateState {
    /// The group identity with zero biases: the fixed prior every rollout
    /// starts from.
    pub fn identity() -> Self {
        EstimateState {
            rotation: Rotation::identity(),
            position: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
            vel_bias: Vector3::zeros(),
        }
    }

    /// The estimate as a point of R^18: (vec(R), p, gyro bias, vel bias).
    pub fn embed(&self) -> SVector<f64, 18> {
        let mut out = SVector::<f64, 18>::zeros();
        out.fixed_rows_mut::<9>(0)
            .copy_from_slice(self.rotation.matrix().as_slice());
        out.fixed_rows_mut::<3>(9).copy_from(&self.position);
        out.fixed_rows_mut::<3>(12).copy_from(&self.gyro_bias);
        out.fixed_rows_mut::<3>(15).copy_from(&self.vel_bias);
        out
    }
}

/// The network output split into its four residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentUpdate {
    /// Rotational residual on so(3), applied through the exponential map.
    pub rotation_residual: Vector3<f64>,
    /// Additive position residual.
    pub position_residual: Vector3<f64>,
    /// New gyro-bias estimate (direct assignment, not an increment).
    pub gyro_bias: Vector3<f64>,
    /// New velocity-bias estimate (direct assignment).
    pub vel_bias: Vector3<f64>,
}

impl TangentUpdate {
    pub fn zero() -> Self {
        Self::from_vector(&SVector::<f64, 12>::zeros())
    }

    /// Splits the 12-dimensional network output.
    pub fn from_vector(v: &SVector<f64, 12>) -> Self {
        TangentUpdate {
            rotation_residual: v.fixed_rows::<3>(0).into_owned(),
            position_residual: v.fixed_rows::<3>(3).into_owned(),
            gyro_bias: v.fixed_rows::<3>(6).into_owned(),
            vel_bias: v.fixed_rows::<3>(9).into_owned(),
        }
    }

    pub fn to_vector(&self) -> SVector<f64, 12> {
        let mut out = SVector::<f64, 12>::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&self.rotation_residual);
        out.fixed_rows_mut::<3>(3).copy_from(&self.position_residual);
        out.fixed_rows_mut::<3>(6).copy_from(&self.gyro_bias);
        out.fixed_rows_mut::<3>(9).copy_from(&self.vel_bias);
        out
    }
}

/// Gradient of a scalar loss with respect to an [`EstimateState`], in the
/// ambient R^18 coordinates.
#[derive(Debug, Clone, Copy)]
pub struct EstimateCotangent {
    pub rotation: Matrix3<f64>,
    pub position: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
    pub vel_bias: Vector3<f64>,
}

impl EstimateCotangent {
    pub fn zeros() -> Self {
        EstimateCotangent {
            rotation: Matrix3::zeros(),
            position: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
            vel_bias: Vector3::zeros(),
        }
    }
}

/// Network input: the embedded estimate followed by the measurement,
/// `(vec(R), p, bw, bv, vec(Rm), pm, wm, vm)`, dimension 36.
pub fn pack_input(est: &EstimateState, measurement: &MeasurementFrame) -> SVector<f64, 36> {
    let mut out = SVector::<f64, 36>::zeros();
    out.fixed_rows_mut::<18>(0).copy_from(&est.embed());
    out.fixed_rows_mut::<18>(18)
        .copy_from(&measurement.to_vector());
    out
}

/// Splits a packed input back into its estimate and measurement halves.
pub fn unpack_input(x: &SVector<f64, 36>) -> (SVector<f64, 18>, SVector<f64, 18>) {
    (
        x.fixed_rows::<18>(0).into_owned(),
        x.fixed_rows::<18>(18).into_owned(),
    )
}

/// The update law: `R' = R exp(hat(alpha))`, `p' = p + beta`, and the
/// biases are assigned to `gamma` and `delta`.
pub fn apply_update(est: &EstimateState, update: &TangentUpdate) -> EstimateState {
    EstimateState {
        rotation: est.rotation * exp_so3(update.rotation_residual),
        position: est.position + update.position_residual,
        gyro_bias: update.gyro_bias,
        vel_bias: update.vel_bias,
    }
}

fn rollout_impl(
    params: &ObserverParams,
    measurements: &[MeasurementFrame],
    initial: &EstimateState,
    record: bool,
) -> Result<(Vec<EstimateState>, Option<Tape>)> {
    if measurements.is_empty() {
        return Err(Error::EmptyInput("rollout needs at least one measurement"));
    }
    let hidden = params.hidden_size();
    let mut h1 = DVector::zeros(hidden);
    let mut h2 = DVector::zeros(hidden);
    let mut est = *initial;
    let mut estimates = Vec::with_capacity(measurements.len());
    let mut steps = Vec::with_capacity(if record { measurements.len() } else { 0 });

    for (k, measurement) in measurements.iter().enumerate() {
        let packed = pack_input(&est, measurement);
        let input = DVector::from_column_slice(packed.as_slice());
        let step1 = crate::nn::gru::gru_forward_cached(&params.gru1, &input, &h1);
        let step2 = crate::nn::gru::gru_forward_cached(&params.gru2, &step1.h_next, &h2);
        let output = &params.head.weights * &step2.h_next + &params.head.bias;
        if !output.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("network output at epoch {}", k + 1),
            });
        }
        let v = SVector::<f64, 12>::from_column_slice(output.as_slice());
        let update = TangentUpdate::from_vector(&v);
        let residual_exp = exp_so3(update.rotation_residual);
        let next = EstimateState {
            rotation: est.rotation * residual_exp,
            position: est.position + update.position_residual,
            gyro_bias: update.gyro_bias,
            vel_bias: update.vel_bias,
        };

        h1 = step1.h_next.clone();
        h2 = step2.h_next.clone();
        if record {
            steps.push(TapeStep {
                input,
                gru1: step1,
                gru2: step2,
                output: v,
                residual_exp,
            });
        }
        estimates.push(next);
        est = next;
    }

    let tape = record.then(|| Tape {
        initial: *initial,
        estimates: estimates.clone(),
        steps,
    });
    Ok((estimates, tape))
}

/// Rolls the observer over a measurement stream from `initial` (the group
/// identity in training and evaluation), producing estimates for epochs
/// `1..=M`. GRU hidden states start at zero and are threaded through the
/// sequence.
pub fn rollout(
    params: &ObserverParams,
    measurements: &[MeasurementFrame],
    initial: &EstimateState,
) -> Result<Vec<EstimateState>> {
    rollout_impl(params, measurements, initial, false).map(|(estimates, _)| estimates)
}

/// Like [`rollout`] but also records the tape needed for the reverse pass.
pub fn rollout_with_tape(
    params: &ObserverParams,
    measurements: &[MeasurementFrame],
    initial: &EstimateState,
) -> Result<(Vec<EstimateState>, Tape)> {
    rollout_impl(params, measurements, initial, true)
        .map(|(estimates, tape)| (estimates, tape.expect("tape recorded")))
}

/// Anything that can produce a sequence of estimates from measurements.
/// Implemented by [`ObserverParams`] (the real observer from the identity
/// prior) and by test oracles.
pub trait Estimator {
    fn estimate_sequence(&self, measurements: &[MeasurementFrame]) -> Result<Vec<EstimateState>>;
}

impl Estimator for ObserverParams {
    fn estimate_sequence(&self, measurements: &[MeasurementFrame]) -> Result<Vec<EstimateState>> {
        rollout(self, measurements, &EstimateState::identity())
    }
}
