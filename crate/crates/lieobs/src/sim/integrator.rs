//! Adaptive Dormand-Prince RK5(4) integration of the rigid-body kinematics.
//!
//! The rotation is integrated as nine raw matrix entries (column-major)
//! alongside the three position entries, i.e. a 12-dimensional ODE in the
//! ambient space, and the result is projected back onto SO(3) with the polar
//! decomposition after each epoch. At the tolerances used here the per-epoch
//! drift before projection is far below 1e-9.

use nalgebra::{Matrix3, SVector, Vector3};

use crate::so3::{hat, polar_project, Rotation};
use crate::{Error, Result};

use super::{RigidBodyState, VelocityInput};

type AmbientState = SVector<f64, 12>;

/// Relative step-size bounds and safety factor of the standard controller.
const SAFETY: f64 = 0.9;
const MIN_SCALE: f64 = 0.2;
const MAX_SCALE: f64 = 5.0;
/// A step shorter than this fraction of the epoch means the tolerance is
/// unreachable.
const MIN_STEP_FRACTION: f64 = 1e-12;

fn pack(rotation: &Matrix3<f64>, position: &Vector3<f64>) -> AmbientState {
    let mut y = AmbientState::zeros();
    y.fixed_rows_mut::<9>(0)
        .copy_from_slice(rotation.as_slice());
    y.fixed_rows_mut::<3>(9).copy_from(position);
    y
}

fn unpack(y: &AmbientState) -> (Matrix3<f64>, Vector3<f64>) {
    (
        Matrix3::from_column_slice(&y.as_slice()[0..9]),
        Vector3::new(y[9], y[10], y[11]),
    )
}

/// Right-hand side of the kinematics on the ambient 12-dimensional state;
/// `m` is not assumed orthogonal mid-step.
fn rhs(y: &AmbientState, input: &VelocityInput) -> AmbientState {
    let (m, _) = unpack(y);
    let m_dot = m * hat(input.angular);
    let p_dot = m * input.linear;
    pack(&m_dot, &p_dot)
}

/// Single Dormand-Prince step from `y` with step `h`; returns the 5th-order
/// solution and the embedded 4th/5th-order error estimate.
fn dopri5_step(y: &AmbientState, input: &VelocityInput, h: f64) -> (AmbientState, AmbientState) {
    let k1 = rhs(y, input);
    let k2 = rhs(&(y + h * (1.0 / 5.0) * k1), input);
    let k3 = rhs(&(y + h * (3.0 / 40.0 * k1 + 9.0 / 40.0 * k2)), input);
    let k4 = rhs(
        &(y + h * (44.0 / 45.0 * k1 - 56.0 / 15.0 * k2 + 32.0 / 9.0 * k3)),
        input,
    );
    let k5 = rhs(
        &(y + h
            * (19372.0 / 6561.0 * k1 - 25360.0 / 2187.0 * k2 + 64448.0 / 6561.0 * k3
                - 212.0 / 729.0 * k4)),
        input,
    );
    let k6 = rhs(
        &(y + h
            * (9017.0 / 3168.0 * k1 - 355.0 / 33.0 * k2 + 46732.0 / 5247.0 * k3
                + 49.0 / 176.0 * k4
                - 5103.0 / 18656.0 * k5)),
        input,
    );
    let y5 = y + h
        * (35.0 / 384.0 * k1 + 500.0 / 1113.0 * k3 + 125.0 / 192.0 * k4 - 2187.0 / 6784.0 * k5
            + 11.0 / 84.0 * k6);
    let k7 = rhs(&y5, input);
    let y4 = y + h
        * (5179.0 / 57600.0 * k1 + 7571.0 / 16695.0 * k3 + 393.0 / 640.0 * k4
            - 92097.0 / 339200.0 * k5
            + 187.0 / 2100.0 * k6
            + 1.0 / 40.0 * k7);
    (y5, y5 - y4)
}

/// Hairer-style scaled RMS error norm with atol = rtol = tol.
fn error_norm(err: &AmbientState, y0: &AmbientState, y1: &AmbientState, tol: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..12 {
        let sc = tol * (1.0 + y0[i].abs().max(y1[i].abs()));
        let e = err[i] / sc;
        acc += e * e;
    }
    (acc / 12.0).sqrt()
}

/// Integrates the ambient ODE over `[0, dt]` with adaptive sub-stepping.
fn integrate_ambient(
    mut y: AmbientState,
    input: &VelocityInput,
    dt: f64,
    tol: f64,
) -> Result<AmbientState> {
    let mut t = 0.0;
    let mut h = dt;
    let h_min = dt * MIN_STEP_FRACTION;
    while t < dt {
        h = h.min(dt - t);
        let (y_next, err) = dopri5_step(&y, input, h);
        let norm = error_norm(&err, &y, &y_next, tol);
        if norm <= 1.0 {
            t += h;
            y = y_next;
            h *= (SAFETY * norm.max(1e-10).powf(-0.2)).clamp(MIN_SCALE, MAX_SCALE);
        } else {
            h *= (SAFETY * norm.powf(-0.2)).clamp(MIN_SCALE, 1.0);
            if h < h_min {
                return Err(Error::StepSizeUnderflow { t, step: h });
            }
        }
    }
    Ok(y)
}

/// Advances the state by one epoch of length `dt` under a constant velocity
/// input, then re-orthonormalizes the rotation by polar projection. Biases
/// are turn-on constants and are copied unchanged.
pub fn integrate_epoch(
    state: &RigidBodyState,
    input: &VelocityInput,
    dt: f64,
    tol: f64,
) -> Result<RigidBodyState> {
    let y0 = pack(state.rotation.matrix(), &state.position);
    let y1 = integrate_ambient(y0, input, dt, tol)?;
    let (m, position) = unpack(&y1);
    Ok(RigidBodyState {
        rotation: polar_project(&m),
        position,
        gyro_bias: state.gyro_bias,
        vel_bias: state.vel_bias,
    })
}

/// Kinematics `(dR, dp) = (R hat(w), R v)` at a valid state.
pub fn dynamics_rhs(
    rotation: &Rotation,
    input: &VelocityInput,
) -> (Matrix3<f64>, Vector3<f64>) {
    (
        rotation.matrix() * hat(input.angular),
        rotation.matrix() * input.linear,
    )
}
