//! Training: the embedding loss, full-rollout gradients, the optimization
//! loop with validation-based checkpoint selection, and the
//! finite-difference gradient check harness.
//!
//! The loss over one sequence of M estimated epochs is
//! `1/(18 M) * sum_k |est_k - truth_k|^2` in the ambient R^18 coordinates,
//! i.e. the squared Frobenius error of the rotation plus the squared
//! Euclidean errors of position and both biases, averaged over the 18
//! ambient dimensions and the M epochs. Estimates exist for epochs 1..=M;
//! the fixed identity prior at epoch 0 is not scored.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::nn::{
    adamw_step, backward, save_checkpoint, AdamWConfig, Checkpoint, ObserverParams,
    OptimizerState, RngState,
};
use crate::observer::{rollout_with_tape, EstimateCotangent, EstimateState, Estimator};
use crate::sim::{RigidBodyState, Sequence};
use crate::{Error, Result};

/// Ambient dimension of the embedded state.
const STATE_DIM: f64 = 18.0;

/// Mean squared embedding error over a sequence of estimates.
pub fn sequence_loss(estimates: &[EstimateState], truths: &[RigidBodyState]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::LengthMismatch {
            context: "estimates vs ground truth",
            left: estimates.len(),
            right: truths.len(),
        });
    }
    if estimates.is_empty() {
        return Err(Error::EmptyInput("sequence loss needs at least one epoch"));
    }
    let m = estimates.len() as f64;
    let total: f64 = estimates
        .iter()
        .zip(truths.iter())
        .map(|(est, truth)| (est.embed() - truth.embed()).norm_squared())
        .sum();
    Ok(total / (STATE_DIM * m))
}

/// Loss value together with `dL/d(est_k)` for every epoch.
pub fn sequence_loss_with_cotangents(
    estimates: &[EstimateState],
    truths: &[RigidBodyState],
) -> Result<(f64, Vec<EstimateCotangent>)> {
    let loss = sequence_loss(estimates, truths)?;
    let scale = 2.0 / (STATE_DIM * estimates.len() as f64);
    let cotangents = estimates
        .iter()
        .zip(truths.iter())
        .map(|(est, truth)| EstimateCotangent {
            rotation: (est.rotation.matrix() - truth.rotation.matrix()) * scale,
            position: (est.position - truth.position) * scale,
            gyro_bias: (est.gyro_bias - truth.gyro_bias) * scale,
            vel_bias: (est.vel_bias - truth.vel_bias) * scale,
        })
        .collect();
    Ok((loss, cotangents))
}

/// Ground-truth states scored by the loss: epochs 1..=M.
fn truth_slice(seq: &Sequence) -> &[RigidBodyState] {
    &seq.states[1..]
}

/// Loss of one sequence under the observer, rolled out from the identity
/// prior.
pub fn observer_sequence_loss(params: &ObserverParams, seq: &Sequence) -> Result<f64> {
    let estimates = params.estimate_sequence(&seq.measurements)?;
    sequence_loss(&estimates, truth_slice(seq))
}

/// Loss and parameter gradients of one sequence (forward rollout with tape,
/// reverse pass through the whole rollout).
pub fn sequence_loss_and_gradients(
    params: &ObserverParams,
    seq: &Sequence,
) -> Result<(f64, ObserverParams)> {
    let (estimates, tape) =
        rollout_with_tape(params, &seq.measurements, &EstimateState::identity())?;
    let (loss, cotangents) = sequence_loss_with_cotangents(&estimates, truth_slice(seq))?;
    let grads = backward(params, &tape, &cotangents)?;
    Ok((loss, grads))
}

/// Mean loss over a validation split; does not mutate anything.
pub fn validate(params: &ObserverParams, val_set: &[Sequence]) -> Result<f64> {
    if val_set.is_empty() {
        return Err(Error::EmptyInput("validation split"));
    }
    let losses: Vec<f64> = val_set
        .par_iter()
        .map(|seq| observer_sequence_loss(params, seq))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub hidden_size: usize,
    pub optimizer: AdamWConfig,
    /// Sequences per optimizer step.
    pub batch_size: usize,
    /// Passes over the training set; one validation per pass.
    pub max_passes: usize,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    /// Cosine-anneal the learning rate from `optimizer.learning_rate` down
    /// to this value over the pass budget; `None` keeps it constant.
    pub final_learning_rate: Option<f64>,
    pub seed: u64,
    /// Where checkpoints and the history file go; nothing is written when
    /// absent.
    pub checkpoint_dir: Option<PathBuf>,
}

impl TrainConfig {
    pub fn new(hidden_size: usize, seed: u64) -> Self {
        TrainConfig {
            hidden_size,
            optimizer: AdamWConfig::default(),
            batch_size: 64,
            max_passes: 30,
            clip_norm: 10.0,
            final_learning_rate: None,
            seed,
            checkpoint_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 {
            return Err(Error::Config("hidden size must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.optimizer.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.optimizer.weight_decay < 0.0 {
            return Err(Error::Config("weight decay must be >= 0".into()));
        }
        if self.clip_norm <= 0.0 {
            return Err(Error::Config("clip norm must be positive".into()));
        }
        Ok(())
    }
}

/// One optimizer step in the history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub pass: usize,
    pub train_loss: f64,
}

/// One validation evaluation in the history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationRecord {
    pub pass: usize,
    pub step: u64,
    pub val_loss: f64,
}

/// Complete record of a training run. The returned parameters always
/// correspond to the entry of `validations` with the smallest loss.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    pub validations: Vec<ValidationRecord>,
    /// Index into `validations` of the selected checkpoint.
    pub best: Option<usize>,
}

impl TrainHistory {
    pub fn best_validation(&self) -> Option<&ValidationRecord> {
        self.best.map(|i| &self.validations[i])
    }

    /// Line-delimited text: `step,train_loss,val_loss`, with the field left
    /// empty where a row has no value (validation rows repeat the step of
    /// the optimizer step they follow; the pass-0 row has no train loss).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("step,train_loss,val_loss\n");
        let mut val_iter = self.validations.iter().peekable();
        if let Some(v) = val_iter.peek() {
            if v.pass == 0 {
                out.push_str(&format!("{},,{}\n", v.step, v.val_loss));
                val_iter.next();
            }
        }
        for s in &self.steps {
            if let Some(v) = val_iter.peek() {
                if v.step == s.step {
                    out.push_str(&format!("{},{},{}\n", s.step, s.train_loss, v.val_loss));
                    val_iter.next();
                    continue;
                }
            }
            out.push_str(&format!("{},{},\n", s.step, s.train_loss));
        }
        std::fs::write(path, out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Mean loss and mean gradients over one batch of sequences. Per-sequence
/// work runs in parallel; the reduction is in fixed index order, so the
/// result does not depend on the thread count.
fn batch_gradients(
    params: &ObserverParams,
    batch: &[&Sequence],
) -> Result<(f64, ObserverParams)> {
    let per_sequence: Vec<(f64, ObserverParams)> = batch
        .par_iter()
        .map(|seq| sequence_loss_and_gradients(params, seq))
        .collect::<Result<_>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grads = ObserverParams::zeros(params.hidden_size());
    for (seq_loss, seq_grads) in &per_sequence {
        loss += seq_loss * scale;
        grads.add_scaled(seq_grads, scale);
    }
    Ok((loss, grads))
}

/// Runs the training loop and returns the validation-best parameters with
/// the full history.
///
/// Each pass shuffles the training sequences, steps the optimizer once per
/// batch, then evaluates the validation split. A checkpoint named by the
/// global step count is written after every validation, and the best one is
/// also copied to `best.ckpt`. With `max_passes == 0` the initial
/// parameters are returned untouched with an empty history.
pub fn train(
    train_set: &[Sequence],
    val_set: &[Sequence],
    cfg: &TrainConfig,
) -> Result<(ObserverParams, TrainHistory)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyInput("training split"));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut params = ObserverParams::init(&mut rng, cfg.hidden_size);
    let mut optimizer = OptimizerState::new(ObserverParams::param_count(cfg.hidden_size));
    let mut history = TrainHistory::default();

    if cfg.max_passes == 0 {
        return Ok((params, history));
    }

    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let save = |step: u64,
                params: &ObserverParams,
                optimizer: &OptimizerState,
                rng: &ChaCha12Rng|
     -> Result<Option<PathBuf>> {
        if let Some(dir) = &cfg.checkpoint_dir {
            let path = dir.join(format!("checkpoint_{step:08}.ckpt"));
            save_checkpoint(
                &path,
                &Checkpoint {
                    params: params.clone(),
                    optimizer: optimizer.clone(),
                    rng: RngState::capture(rng),
                },
            )?;
            Ok(Some(path))
        } else {
            Ok(None)
        }
    };

    // Validation of the fresh initialization anchors best-checkpoint
    // selection and the training-works acceptance check.
    let initial_val = validate(&params, val_set)?;
    history.validations.push(ValidationRecord {
        pass: 0,
        step: 0,
        val_loss: initial_val,
    });
    history.best = Some(0);
    let mut best_params = params.clone();
    let mut best_path = save(0, &params, &optimizer, &rng)?;

    let mut step: u64 = 0;
    let mut indices: Vec<usize> = (0..train_set.len()).collect();
    let mut pass_optimizer = cfg.optimizer;
    for pass in 1..=cfg.max_passes {
        if let Some(final_lr) = cfg.final_learning_rate {
            let progress = (pass - 1) as f64 / cfg.max_passes.max(1) as f64;
            let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
            pass_optimizer.learning_rate =
                final_lr + (cfg.optimizer.learning_rate - final_lr) * cosine;
        }
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(cfg.batch_size) {
            let batch: Vec<&Sequence> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, mut grads) = batch_gradients(&params, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("training loss at step {} (pass {pass})", step + 1),
                });
            }
            let grad_norm = grads.norm();
            if grad_norm > cfg.clip_norm {
                grads.scale(cfg.clip_norm / grad_norm);
            }
            adamw_step(&mut params, &grads, &mut optimizer, &pass_optimizer)?;
            step += 1;
            history.steps.push(StepRecord {
                step,
                pass,
                train_loss: loss,
            });
        }

        let val_loss = validate(&params, val_set)?;
        history.validations.push(ValidationRecord {
            pass,
            step,
            val_loss,
        });
        let path = save(step, &params, &optimizer, &rng)?;
        let best_so_far = history.best_validation().map(|v| v.val_loss).unwrap();
        if val_loss < best_so_far {
            history.best = Some(history.validations.len() - 1);
            best_params = params.clone();
            best_path = path;
        }
    }

    if let (Some(dir), Some(path)) = (&cfg.checkpoint_dir, &best_path) {
        let best = dir.join("best.ckpt");
        std::fs::copy(path, &best).map_err(|e| Error::io(&best, e))?;
        history.save(&dir.join("history.csv"))?;
    } else if let Some(dir) = &cfg.checkpoint_dir {
        history.save(&dir.join("history.csv"))?;
    }

    Ok((best_params, history))
}

/// Outcome of the finite-difference gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `block[index]` of the worst parameter.
    pub worst_param: String,
    pub analytic: f64,
    pub numeric: f64,
    pub params_checked: usize,
}

const BLOCK_NAMES: [&str; 10] = [
    "gru1.input_weights",
    "gru1.hidden_weights",
    "gru1.input_bias",
    "gru1.hidden_bias",
    "gru2.input_weights",
    "gru2.hidden_weights",
    "gru2.input_bias",
    "gru2.hidden_bias",
    "head.weights",
    "head.bias",
];

fn param_name(params: &ObserverParams, flat_index: usize) -> String {
    let mut offset = 0;
    for (name, block) in BLOCK_NAMES.iter().zip(params.blocks().iter()) {
        if flat_index < offset + block.len() {
            return format!("{name}[{}]", flat_index - offset);
        }
        offset += block.len();
    }
    format!("param[{flat_index}]")
}

/// Compares the reverse-mode gradient of the full pipeline (rollout through
/// the exponential map and group composition, then the sequence loss)
/// against central finite differences for every parameter.
///
/// The relative error uses a denominator floor of 1e-3, i.e. parameters
/// whose gradient is tiny are held to an absolute tolerance instead.
pub fn finite_difference_check(
    hidden_size: usize,
    length: usize,
    seed: u64,
    fd_step: f64,
) -> Result<GradCheckReport> {
    finite_difference_check_with(hidden_size, length, seed, fd_step, false)
}

/// [`finite_difference_check`] with an optional fault injection: with
/// `corrupt` set, one analytic gradient entry is shifted before the
/// comparison, so the check must fail. Negative control for the harness
/// itself.
pub fn finite_difference_check_with(
    hidden_size: usize,
    length: usize,
    seed: u64,
    fd_step: f64,
    corrupt: bool,
) -> Result<GradCheckReport> {
    let seq = crate::sim::generate_sequence(
        &crate::sim::SequenceConfig::new(length, 0.1),
        seed,
        0,
    )?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let params = ObserverParams::init(&mut rng, hidden_size);

    let (_, analytic) = sequence_loss_and_gradients(&params, &seq)?;
    let mut analytic_flat = analytic.to_flat();
    if corrupt {
        analytic_flat[0] += 1.0;
    }

    let flat = params.to_flat();
    let loss_at = |theta: &[f64]| -> Result<f64> {
        let p = ObserverParams::from_flat(hidden_size, theta)?;
        observer_sequence_loss(&p, &seq)
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        analytic: 0.0,
        numeric: 0.0,
        params_checked: flat.len(),
    };
    let mut perturbed = flat.clone();
    for i in 0..flat.len() {
        perturbed[i] = flat[i] + fd_step;
        let plus = loss_at(&perturbed)?;
        perturbed[i] = flat[i] - fd_step;
        let minus = loss_at(&perturbed)?;
        perturbed[i] = flat[i];
        let numeric = (plus - minus) / (2.0 * fd_step);
        let a = analytic_flat[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_param = param_name(&params, i);
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}
