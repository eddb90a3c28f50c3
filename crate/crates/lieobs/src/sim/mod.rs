//! Ground-truth trajectory generation and sensor simulation for the
//! rigid-body rotation/translation system.
//!
//! A sequence is produced by sampling a random initial pose and turn-on
//! biases, then repeatedly drawing body-frame velocities, integrating the
//! kinematics over one epoch, and attaching biased (and optionally noisy)
//! measurements of the new state. All randomness flows through counter-mode
//! substreams of a single master seed, so generation is reproducible
//! bit-for-bit regardless of thread count.

mod dataset;
mod integrator;

pub use dataset::{
    load_split, read_sequences, write_sequences, DatasetManifest, InferSet, SplitCounts,
};
pub use integrator::{dynamics_rhs, integrate_epoch};

use nalgebra::{SVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::so3::{exp_so3, random_rotation, Rotation};
use crate::Result;

/// Body-frame velocity components are drawn from U[-1, 1].
pub const VELOCITY_RANGE: f64 = 1.0;
/// Turn-on bias components are drawn from U[-10, 10].
pub const BIAS_RANGE: f64 = 10.0;
/// Initial position components are drawn from U[-1, 1].
pub const INIT_POSITION_RANGE: f64 = 1.0;
/// Epoch length in seconds.
pub const DEFAULT_DT: f64 = 0.01;
/// Local error tolerance of the RK5(4) integrator.
pub const DEFAULT_INTEGRATOR_TOL: f64 = 1e-10;

/// Full state of the rigid body: pose plus the constant sensor biases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyState {
    pub rotation: Rotation,
    /// Position in the inertial frame, meters.
    pub position: Vector3<f64>,
    /// Angular-velocity turn-on bias, rad/s; constant within a sequence.
    pub gyro_bias: Vector3<f64>,
    /// Linear-velocity turn-on bias, m/s; constant within a sequence.
    pub vel_bias: Vector3<f64>,
}

impl RigidBodyState {
    pub fn identity() -> Self {
        RigidBodyState {
            rotation: Rotation::identity(),
            position: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
            vel_bias: Vector3::zeros(),
        }
    }

    /// The state as a point of R^18: (vec(R), p, gyro bias, velocity bias).
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

/// Body-frame velocities held constant over one inter-epoch interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityInput {
    /// Angular velocity, rad/s.
    pub angular: Vector3<f64>,
    /// Linear velocity, m/s.
    pub linear: Vector3<f64>,
}

/// One epoch's sensor outputs: pose measurements of the state reached at
/// the epoch and velocity measurements of the input that led to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementFrame {
    /// `R exp(hat(w1))`: still a rotation.
    pub rotation: Rotation,
    pub position: Vector3<f64>,
    /// Biased, noisy angular velocity.
    pub angular: Vector3<f64>,
    /// Biased, noisy linear velocity.
    pub linear: Vector3<f64>,
}

impl MeasurementFrame {
    /// The measurement as a point of R^18: (vec(Rm), pm, wm, vm).
    pub fn to_vector(&self) -> SVector<f64, 18> {
        let mut out = SVector::<f64, 18>::zeros();
        out.fixed_rows_mut::<9>(0)
            .copy_from_slice(self.rotation.matrix().as_slice());
        out.fixed_rows_mut::<3>(9).copy_from(&self.position);
        out.fixed_rows_mut::<3>(12).copy_from(&self.angular);
        out.fixed_rows_mut::<3>(15).copy_from(&self.linear);
        out
    }
}

/// Provenance and noise level of one generated sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceMeta {
    pub master_seed: u64,
    pub stream: u64,
    pub dt: f64,
    pub sigma: f64,
}

/// A generated rollout: states 0..=M, velocities 0..M and measurements for
/// epochs 1..=M (measurement k is aligned with state k and velocity k-1).
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub states: Vec<RigidBodyState>,
    pub velocities: Vec<VelocityInput>,
    pub measurements: Vec<MeasurementFrame>,
    pub meta: SequenceMeta,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }
}

/// Parameters for generating one sequence.
#[derive(Debug, Clone, Copy)]
pub struct SequenceConfig {
    /// Number of epochs M; the sequence holds M+1 states.
    pub length: usize,
    pub dt: f64,
    /// Measurement noise standard deviation per component.
    pub sigma: f64,
    pub integrator_tol: f64,
}

impl SequenceConfig {
    pub fn new(length: usize, sigma: f64) -> Self {
        SequenceConfig {
            length,
            dt: DEFAULT_DT,
            sigma,
            integrator_tol: DEFAULT_INTEGRATOR_TOL,
        }
    }
}

fn uniform3<R: Rng + ?Sized>(rng: &mut R, range: f64) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-range..=range),
        rng.random_range(-range..=range),
        rng.random_range(-range..=range),
    )
}

fn gaussian3<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Vector3<f64> {
    Vector3::new(
        sigma * rng.sample::<f64, _>(StandardNormal),
        sigma * rng.sample::<f64, _>(StandardNormal),
        sigma * rng.sample::<f64, _>(StandardNormal),
    )
}

/// Attaches one measurement frame to a state.
///
/// `input` is the velocity over the interval that ended at this state. The
/// four noise vectors are i.i.d. zero-mean Gaussians with per-component
/// standard deviation `sigma`; `sigma = 0` yields exact biased measurements
/// and consumes no randomness.
pub fn measure<R: Rng + ?Sized>(
    state: &RigidBodyState,
    input: &VelocityInput,
    sigma: f64,
    rng: &mut R,
) -> MeasurementFrame {
    let (w1, w2, w3, w4) = if sigma > 0.0 {
        (
            gaussian3(rng, sigma),
            gaussian3(rng, sigma),
            gaussian3(rng, sigma),
            gaussian3(rng, sigma),
        )
    } else {
        (
            Vector3::zeros(),
            Vector3::zeros(),
            Vector3::zeros(),
            Vector3::zeros(),
        )
    };
    MeasurementFrame {
        rotation: state.rotation * exp_so3(w1),
        position: state.position + w2,
        angular: input.angular + state.gyro_bias + w3,
        linear: input.linear + state.vel_bias + w4,
    }
}

/// Generates one sequence deterministically from `(master_seed, stream)`.
///
/// Stream `2 s` drives the trajectory (initial state, biases, velocities)
/// and stream `2 s + 1` the measurement noise, so the ground truth for a
/// given stream id is identical across noise levels.
pub fn generate_sequence(cfg: &SequenceConfig, master_seed: u64, stream: u64) -> Result<Sequence> {
    let mut traj_rng = ChaCha12Rng::seed_from_u64(master_seed);
    traj_rng.set_stream(2 * stream);
    let mut noise_rng = ChaCha12Rng::seed_from_u64(master_seed);
    noise_rng.set_stream(2 * stream + 1);

    let rotation = random_rotation(&mut traj_rng);
    let position = uniform3(&mut traj_rng, INIT_POSITION_RANGE);
    let gyro_bias = uniform3(&mut traj_rng, BIAS_RANGE);
    let vel_bias = uniform3(&mut traj_rng, BIAS_RANGE);
    let mut state = RigidBodyState {
        rotation,
        position,
        gyro_bias,
        vel_bias,
    };

    let mut states = Vec::with_capacity(cfg.length + 1);
    let mut velocities = Vec::with_capacity(cfg.length);
    let mut measurements = Vec::with_capacity(cfg.length);
    states.push(state);

    for _ in 0..cfg.length {
        let input = VelocityInput {
            angular: uniform3(&mut traj_rng, VELOCITY_RANGE),
            linear: uniform3(&mut traj_rng, VELOCITY_RANGE),
        };
        state = integrate_epoch(&state, &input, cfg.dt, cfg.integrator_tol)?;
        velocities.push(input);
        states.push(state);
        measurements.push(measure(&state, &input, cfg.sigma, &mut noise_rng));
    }

    Ok(Sequence {
        states,
        velocities,
        measurements,
        meta: SequenceMeta {
            master_seed,
            stream,
            dt: cfg.dt,
            sigma: cfg.sigma,
        },
    })
}

/// Stream ids for inference sequences live far above the training ids.
const INFER_STREAM_BASE: u64 = 1 << 32;

/// Stream id of inference sequence `index` of the sweep entry `sigma_index`.
pub fn infer_stream(sigma_index: usize, count: usize, index: usize) -> u64 {
    INFER_STREAM_BASE + (sigma_index * count + index) as u64
}

/// Dataset-level generation parameters.
#[derive(Debug, Clone)]
pub struct DatasetConfig {
    /// Total number of noiseless sequences to split into train/val/test.
    pub num_sequences: usize,
    /// Epochs per train/val/test sequence.
    pub sequence_length: usize,
    pub dt: f64,
    pub seed: u64,
    /// Train/val/test fractions; must sum to 1.
    pub split: [f64; 3],
    /// Noise levels for which inference sets are generated.
    pub infer_sigmas: Vec<f64>,
    pub infer_count: usize,
    pub infer_length: usize,
    pub integrator_tol: f64,
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_sequences == 0 {
            return Err(crate::Error::Config("num_sequences must be positive".into()));
        }
        if self.sequence_length == 0 {
            return Err(crate::Error::Config(
                "sequence_length must be positive".into(),
            ));
        }
        if self.dt <= 0.0 {
            return Err(crate::Error::Config("dt must be positive".into()));
        }
        if ((self.split[0] + self.split[1] + self.split[2]) - 1.0).abs() > 1e-12 {
            return Err(crate::Error::Config(format!(
                "split fractions must sum to 1, got {:?}",
                self.split
            )));
        }
        if self.split.iter().any(|&f| f < 0.0) {
            return Err(crate::Error::Config("split fractions must be >= 0".into()));
        }
        if self.infer_sigmas.iter().any(|&s| s < 0.0) {
            return Err(crate::Error::Config("sigma must be >= 0".into()));
        }
        Ok(())
    }

    /// Train/val/test counts: floor for train and val, remainder to test.
    pub fn split_counts(&self) -> SplitCounts {
        let train = (self.split[0] * self.num_sequences as f64).floor() as usize;
        let val = (self.split[1] * self.num_sequences as f64).floor() as usize;
        SplitCounts {
            train,
            val,
            test: self.num_sequences - train - val,
        }
    }
}

/// Generates a batch of sequences (in parallel) with consecutive stream ids
/// starting at `first_stream`.
pub fn generate_batch(
    cfg: &SequenceConfig,
    master_seed: u64,
    first_stream: u64,
    count: usize,
) -> Result<Vec<Sequence>> {
    use rayon::prelude::*;
    (0..count)
        .into_par_iter()
        .map(|i| generate_sequence(cfg, master_seed, first_stream + i as u64))
        .collect()
}

/// Generates the train/val/test splits and all inference sets, writing one
/// binary file per split plus `manifest.json` into `out_dir`.
pub fn generate_dataset(cfg: &DatasetConfig, out_dir: &std::path::Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| crate::Error::io(out_dir, e))?;

    let counts = cfg.split_counts();
    let seq_cfg = SequenceConfig {
        length: cfg.sequence_length,
        dt: cfg.dt,
        sigma: 0.0,
        integrator_tol: cfg.integrator_tol,
    };

    let mut next_stream = 0u64;
    for (name, count) in [
        ("train", counts.train),
        ("val", counts.val),
        ("test", counts.test),
    ] {
        let sequences = generate_batch(&seq_cfg, cfg.seed, next_stream, count)?;
        write_sequences(&out_dir.join(format!("{name}.bin")), &sequences)?;
        next_stream += count as u64;
    }

    let mut infer = Vec::new();
    for (j, &sigma) in cfg.infer_sigmas.iter().enumerate() {
        let infer_cfg = SequenceConfig {
            length: cfg.infer_length,
            dt: cfg.dt,
            sigma,
            integrator_tol: cfg.integrator_tol,
        };
        let first = infer_stream(j, cfg.infer_count, 0);
        let sequences = generate_batch(&infer_cfg, cfg.seed, first, cfg.infer_count)?;
        let file = format!("infer_{sigma}.bin");
        write_sequences(&out_dir.join(&file), &sequences)?;
        infer.push(InferSet {
            sigma,
            count: cfg.infer_count,
            length: cfg.infer_length,
            file,
        });
    }

    let manifest = DatasetManifest {
        format_version: dataset::FORMAT_VERSION,
        seed: cfg.seed,
        dt: cfg.dt,
        sequence_length: cfg.sequence_length,
        num_sequences: cfg.num_sequences,
        split_fractions: cfg.split,
        counts,
        train_sigma: 0.0,
        bias_range: BIAS_RANGE,
        velocity_range: VELOCITY_RANGE,
        init_position_range: INIT_POSITION_RANGE,
        integrator_tolerance: cfg.integrator_tol,
        infer,
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}
