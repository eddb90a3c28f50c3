//! C ABI for the lieobs observer library.
//!
//! The surface is deliberately small: the SO(3) primitives that define the
//! observer's geometry, and an opaque observer handle that loads a trained
//! checkpoint and filters one measurement per call. All matrices cross the
//! boundary as column-major `double[9]`; state and measurement vectors are
//! the crate's standard 18-component layout
//! `(vec(R), p, gyro bias, velocity bias)` /
//! `(vec(Rm), pm, angular, linear)`.
//!
//! Every fallible function returns a [`LieObsStatus`]; out-parameters are
//! written only on `Ok`. Handles must be released with
//! [`lieobs_observer_free`].

use std::ffi::{c_char, CStr};
use std::path::Path;

use nalgebra::{DVector, Matrix3, SVector, Vector3};

use lieobs::nn::{load_checkpoint, ObserverParams};
use lieobs::observer::{apply_update, pack_input, EstimateState, TangentUpdate};
use lieobs::so3::{exp_so3, log_so3, manifold_distance, Rotation};

/// Result codes of the C API.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LieObsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NumericError = 3,
    IoError = 4,
}

fn status_of(err: &lieobs::Error) -> LieObsStatus {
    match err {
        lieobs::Error::Io { .. } | lieobs::Error::Format { .. } => LieObsStatus::IoError,
        lieobs::Error::NonFinite { .. } | lieobs::Error::StepSizeUnderflow { .. } => {
            LieObsStatus::NumericError
        }
        _ => LieObsStatus::InvalidArgument,
    }
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn lieobs_status_message(status: LieObsStatus) -> *const c_char {
    let msg: &'static [u8] = match status {
        LieObsStatus::Ok => b"ok\0",
        LieObsStatus::NullPointer => b"null pointer argument\0",
        LieObsStatus::InvalidArgument => b"invalid argument\0",
        LieObsStatus::NumericError => b"numeric error\0",
        LieObsStatus::IoError => b"i/o or file format error\0",
    };
    msg.as_ptr() as *const c_char
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lieobs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Exponential map: writes the rotation `exp(hat(v))` to `out` in
/// column-major order.
///
/// # Safety
/// `v` must point to 3 readable doubles and `out` to 9 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lieobs_exp_so3(v: *const f64, out: *mut f64) -> LieObsStatus {
    if v.is_null() || out.is_null() {
        return LieObsStatus::NullPointer;
    }
    let v = Vector3::new(*v, *v.add(1), *v.add(2));
    if !v.iter().all(|x| x.is_finite()) {
        return LieObsStatus::InvalidArgument;
    }
    let rotation = exp_so3(v);
    std::ptr::copy_nonoverlapping(rotation.matrix().as_slice().as_ptr(), out, 9);
    LieObsStatus::Ok
}

/// Logarithm map: writes the vee coordinates of `log(R)` to `out`.
///
/// # Safety
/// `rotation` must point to 9 readable doubles (column-major) and `out` to
/// 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lieobs_log_so3(rotation: *const f64, out: *mut f64) -> LieObsStatus {
    if rotation.is_null() || out.is_null() {
        return LieObsStatus::NullPointer;
    }
    let m = Matrix3::from_column_slice(std::slice::from_raw_parts(rotation, 9));
    let r = match Rotation::try_new(m) {
        Ok(r) => r,
        Err(_) => return LieObsStatus::InvalidArgument,
    };
    let v = log_so3(&r);
    std::ptr::copy_nonoverlapping(v.as_slice().as_ptr(), out, 3);
    LieObsStatus::Ok
}

/// Distance of a 3x3 matrix from the orthogonal group,
/// `|M M^T - I|_F`.
///
/// # Safety
/// `matrix` must point to 9 readable doubles and `out` to one writable
/// double.
#[no_mangle]
pub unsafe extern "C" fn lieobs_manifold_distance(
    matrix: *const f64,
    out: *mut f64,
) -> LieObsStatus {
    if matrix.is_null() || out.is_null() {
        return LieObsStatus::NullPointer;
    }
    let m = Matrix3::from_column_slice(std::slice::from_raw_parts(matrix, 9));
    if !m.iter().all(|x| x.is_finite()) {
        return LieObsStatus::InvalidArgument;
    }
    *out = manifold_distance(&m);
    LieObsStatus::Ok
}

/// Opaque observer: trained weights plus the running estimate and the GRU
/// hidden states of one rollout.
pub struct LieObsObserver {
    params: ObserverParams,
    estimate: EstimateState,
    h1: DVector<f64>,
    h2: DVector<f64>,
}

impl LieObsObserver {
    fn new(params: ObserverParams) -> Self {
        let hidden = params.hidden_size();
        LieObsObserver {
            params,
            estimate: EstimateState::identity(),
            h1: DVector::zeros(hidden),
            h2: DVector::zeros(hidden),
        }
    }
}

/// Loads a checkpoint file and returns a fresh observer handle through
/// `out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer slot.
#[no_mangle]
pub unsafe extern "C" fn lieobs_observer_load(
    path: *const c_char,
    out: *mut *mut LieObsObserver,
) -> LieObsStatus {
    if path.is_null() || out.is_null() {
        return LieObsStatus::NullPointer;
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(p) => p,
        Err(_) => return LieObsStatus::InvalidArgument,
    };
    match load_checkpoint(Path::new(path)) {
        Ok(checkpoint) => {
            let handle = Box::new(LieObsObserver::new(checkpoint.params));
            *out = Box::into_raw(handle);
            LieObsStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Creates an observer with freshly initialized (untrained) weights; mainly
/// useful for smoke tests of a binding.
///
/// # Safety
/// `out` must be a valid pointer slot.
#[no_mangle]
pub unsafe extern "C" fn lieobs_observer_random(
    hidden_size: u32,
    seed: u64,
    out: *mut *mut LieObsObserver,
) -> LieObsStatus {
    if out.is_null() {
        return LieObsStatus::NullPointer;
    }
    if hidden_size == 0 {
        return LieObsStatus::InvalidArgument;
    }
    let mut rng = <rand_chacha::ChaCha12Rng as rand::SeedableRng>::seed_from_u64(seed);
    let params = ObserverParams::init(&mut rng, hidden_size as usize);
    *out = Box::into_raw(Box::new(LieObsObserver::new(params)));
    LieObsStatus::Ok
}

/// Hidden size of the observer's GRU layers; 0 for a null handle.
///
/// # Safety
/// `observer` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn lieobs_observer_hidden_size(observer: *const LieObsObserver) -> u32 {
    if observer.is_null() {
        return 0;
    }
    (*observer).params.hidden_size() as u32
}

/// Resets the estimate to the group identity and zeroes the hidden states,
/// starting a new rollout.
///
/// # Safety
/// `observer` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn lieobs_observer_reset(observer: *mut LieObsObserver) {
    if observer.is_null() {
        return;
    }
    let observer = &mut *observer;
    let hidden = observer.params.hidden_size();
    observer.estimate = EstimateState::identity();
    observer.h1 = DVector::zeros(hidden);
    observer.h2 = DVector::zeros(hidden);
}

/// Filters one epoch: consumes an 18-component measurement
/// `(vec(Rm) column-major, pm, angular, linear)` and writes the new
/// 18-component estimate `(vec(R), p, gyro bias, velocity bias)`.
///
/// # Safety
/// `observer` must be a live handle; `measurement` must point to 18
/// readable doubles and `estimate_out` to 18 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lieobs_observer_step(
    observer: *mut LieObsObserver,
    measurement: *const f64,
    estimate_out: *mut f64,
) -> LieObsStatus {
    if observer.is_null() || measurement.is_null() || estimate_out.is_null() {
        return LieObsStatus::NullPointer;
    }
    let observer = &mut *observer;
    let y = std::slice::from_raw_parts(measurement, 18);
    if !y.iter().all(|x| x.is_finite()) {
        return LieObsStatus::InvalidArgument;
    }
    let rotation = match Rotation::try_new(Matrix3::from_column_slice(&y[0..9])) {
        Ok(r) => r,
        Err(_) => return LieObsStatus::InvalidArgument,
    };
    let frame = lieobs::sim::MeasurementFrame {
        rotation,
        position: Vector3::new(y[9], y[10], y[11]),
        angular: Vector3::new(y[12], y[13], y[14]),
        linear: Vector3::new(y[15], y[16], y[17]),
    };

    let packed = pack_input(&observer.estimate, &frame);
    let input = DVector::from_column_slice(packed.as_slice());
    let (output, h1, h2) =
        match lieobs::nn::network_forward(&observer.params, &input, &observer.h1, &observer.h2) {
            Ok(r) => r,
            Err(e) => return status_of(&e),
        };
    if !output.iter().all(|x| x.is_finite()) {
        return LieObsStatus::NumericError;
    }
    let update =
        TangentUpdate::from_vector(&SVector::<f64, 12>::from_column_slice(output.as_slice()));
    observer.estimate = apply_update(&observer.estimate, &update);
    observer.h1 = h1;
    observer.h2 = h2;

    let embedded = observer.estimate.embed();
    std::ptr::copy_nonoverlapping(embedded.as_slice().as_ptr(), estimate_out, 18);
    LieObsStatus::Ok
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `observer` must be null or a live handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn lieobs_observer_free(observer: *mut LieObsObserver) {
    if !observer.is_null() {
        drop(Box::from_raw(observer));
    }
}
