use std::ffi::CString;

use lieobs::nn::{save_checkpoint, Checkpoint, ObserverParams, OptimizerState, RngState};
use lieobs::observer::Estimator;
use lieobs::sim::{generate_sequence, SequenceConfig};
use lieobs_ffi::*;

#[test]
fn version_is_a_c_string() {
    let v = unsafe { std::ffi::CStr::from_ptr(lieobs_version()) };
    assert!(!v.to_str().unwrap().is_empty());
}

#[test]
fn exp_log_roundtrip_through_the_abi() {
    let v = [0.3, -0.2, 0.9];
    let mut rotation = [0.0; 9];
    let status = unsafe { lieobs_exp_so3(v.as_ptr(), rotation.as_mut_ptr()) };
    assert_eq!(status, LieObsStatus::Ok);

    let mut dist = f64::NAN;
    assert_eq!(
        unsafe { lieobs_manifold_distance(rotation.as_ptr(), &mut dist) },
        LieObsStatus::Ok
    );
    assert!(dist < 1e-12);

    let mut back = [0.0; 3];
    assert_eq!(
        unsafe { lieobs_log_so3(rotation.as_ptr(), back.as_mut_ptr()) },
        LieObsStatus::Ok
    );
    for i in 0..3 {
        assert!((back[i] - v[i]).abs() < 1e-12);
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    let mut out = [0.0; 9];
    assert_eq!(
        unsafe { lieobs_exp_so3(std::ptr::null(), out.as_mut_ptr()) },
        LieObsStatus::NullPointer
    );
    let not_a_rotation = [2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let mut v = [0.0; 3];
    assert_eq!(
        unsafe { lieobs_log_so3(not_a_rotation.as_ptr(), v.as_mut_ptr()) },
        LieObsStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { lieobs_observer_load(std::ptr::null(), std::ptr::null_mut()) },
        LieObsStatus::NullPointer
    );
}

#[test]
fn loading_a_missing_checkpoint_reports_io_error() {
    let path = CString::new("/nonexistent/model.ckpt").unwrap();
    let mut handle: *mut LieObsObserver = std::ptr::null_mut();
    assert_eq!(
        unsafe { lieobs_observer_load(path.as_ptr(), &mut handle) },
        LieObsStatus::IoError
    );
    assert!(handle.is_null());
}

#[test]
fn stepping_matches_the_library_rollout() {
    // Save a small random checkpoint, load it through the ABI, and compare
    // its per-epoch estimates against the crate's own rollout.
    let dir = tempfile::tempdir().unwrap();
    let ckpt_path = dir.path().join("model.ckpt");
    let mut rng = <rand_chacha::ChaCha12Rng as rand::SeedableRng>::seed_from_u64(11);
    let params = ObserverParams::init(&mut rng, 6);
    save_checkpoint(
        &ckpt_path,
        &Checkpoint {
            params: params.clone(),
            optimizer: OptimizerState::new(ObserverParams::param_count(6)),
            rng: RngState::zeroed(),
        },
    )
    .unwrap();

    let path = CString::new(ckpt_path.to_str().unwrap()).unwrap();
    let mut handle: *mut LieObsObserver = std::ptr::null_mut();
    assert_eq!(
        unsafe { lieobs_observer_load(path.as_ptr(), &mut handle) },
        LieObsStatus::Ok
    );
    assert_eq!(unsafe { lieobs_observer_hidden_size(handle) }, 6);

    let seq = generate_sequence(&SequenceConfig::new(12, 0.1), 12, 0).unwrap();
    let expected = params.estimate_sequence(&seq.measurements).unwrap();

    for run in 0..2 {
        unsafe { lieobs_observer_reset(handle) };
        for (k, frame) in seq.measurements.iter().enumerate() {
            let y = frame.to_vector();
            let mut est = [0.0; 18];
            assert_eq!(
                unsafe { lieobs_observer_step(handle, y.as_slice().as_ptr(), est.as_mut_ptr()) },
                LieObsStatus::Ok,
                "run {run}, epoch {k}"
            );
            let reference = expected[k].embed();
            assert_eq!(est.as_slice(), reference.as_slice(), "run {run}, epoch {k}");
        }
    }
    unsafe { lieobs_observer_free(handle) };
}

#[test]
fn random_observer_keeps_estimates_on_the_manifold() {
    let mut handle: *mut LieObsObserver = std::ptr::null_mut();
    assert_eq!(
        unsafe { lieobs_observer_random(8, 99, &mut handle) },
        LieObsStatus::Ok
    );
    let seq = generate_sequence(&SequenceConfig::new(200, 0.3), 13, 0).unwrap();
    for frame in &seq.measurements {
        let y = frame.to_vector();
        let mut est = [0.0; 18];
        assert_eq!(
            unsafe { lieobs_observer_step(handle, y.as_slice().as_ptr(), est.as_mut_ptr()) },
            LieObsStatus::Ok
        );
        let mut dist = f64::NAN;
        assert_eq!(
            unsafe { lieobs_manifold_distance(est.as_ptr(), &mut dist) },
            LieObsStatus::Ok
        );
        assert!(dist <= 1e-6);
    }
    unsafe { lieobs_observer_free(handle) };
}
