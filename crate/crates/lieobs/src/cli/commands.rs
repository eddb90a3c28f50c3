//! Implementations behind the CLI subcommands.

use crate::eval::{mean_traces, monte_carlo, noise_sweep, render_report, SweepRow};
use crate::nn::{load_checkpoint, save_checkpoint, Checkpoint, ObserverParams, OptimizerState, RngState};
use crate::sim::{generate_dataset, load_split, DatasetConfig, DatasetManifest};
use crate::training::finite_difference_check_with;
use crate::{Error, Result};

use super::config::{
    EvaluateOptions, GenerateOptions, GradcheckOptions, SweepOptions, TrainOptions,
};

/// Gradient-check pass threshold on the relative error.
const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub(crate) fn generate(options: GenerateOptions) -> Result<()> {
    print!("{}", options.echo());
    let cfg = DatasetConfig {
        num_sequences: options.n.value,
        sequence_length: options.m.value,
        dt: options.dt.value,
        seed: options.seed.value,
        split: options.split.value,
        infer_sigmas: options.sigmas.value.clone(),
        infer_count: options.infer_count.value,
        infer_length: options.infer_length.value,
        integrator_tol: crate::sim::DEFAULT_INTEGRATOR_TOL,
    };
    let manifest = generate_dataset(&cfg, &options.out)?;
    println!(
        "wrote dataset to {}: {} train / {} val / {} test sequences of {} epochs, {} inference set(s)",
        options.out.display(),
        manifest.counts.train,
        manifest.counts.val,
        manifest.counts.test,
        manifest.sequence_length,
        manifest.infer.len()
    );
    Ok(())
}

pub(crate) fn train(options: TrainOptions) -> Result<()> {
    print!("{}", options.echo());
    let manifest = DatasetManifest::load(&options.data.join("manifest.json"))?;
    let train_set = load_split(&options.data, "train")?;
    let val_set = load_split(&options.data, "val")?;
    println!(
        "loaded {} train / {} val sequences of {} epochs (dataset seed {})",
        train_set.len(),
        val_set.len(),
        manifest.sequence_length,
        manifest.seed
    );

    let cfg = options.to_train_config();
    if cfg.max_passes == 0 {
        std::fs::create_dir_all(&options.out).map_err(|e| Error::io(&options.out, e))?;
        let mut rng = <rand_chacha::ChaCha12Rng as rand::SeedableRng>::seed_from_u64(cfg.seed);
        let params = ObserverParams::init(&mut rng, cfg.hidden_size);
        let checkpoint = Checkpoint {
            optimizer: OptimizerState::new(ObserverParams::param_count(cfg.hidden_size)),
            rng: RngState::capture(&rng),
            params,
        };
        save_checkpoint(&options.out.join("checkpoint_00000000.ckpt"), &checkpoint)?;
        save_checkpoint(&options.out.join("best.ckpt"), &checkpoint)?;
        std::fs::write(options.out.join("history.csv"), "step,train_loss,val_loss\n")
            .map_err(|e| Error::io(&options.out, e))?;
        eprintln!("warning: --max-iters 0 requested; wrote the initial checkpoint without training");
        return Ok(());
    }

    let (_, history) = crate::training::train(&train_set, &val_set, &cfg)?;
    let best = history
        .best_validation()
        .expect("training with passes > 0 records validations");
    println!(
        "best validation loss {} at pass {} (step {}); checkpoints and history in {}",
        best.val_loss,
        best.pass,
        best.step,
        options.out.display()
    );
    Ok(())
}

pub(crate) fn evaluate(options: EvaluateOptions) -> Result<()> {
    print!("{}", options.echo());
    let checkpoint = load_checkpoint(&options.checkpoint)?;
    let manifest = DatasetManifest::load(&options.data.join("manifest.json"))?;
    let infer = manifest.infer_set(options.sigma.value).ok_or_else(|| {
        Error::Config(format!(
            "dataset {} has no inference set for sigma = {}; available: {}",
            options.data.display(),
            options.sigma.value,
            manifest
                .infer
                .iter()
                .map(|s| s.sigma.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ))
    })?;
    let sequences = crate::sim::read_sequences(&options.data.join(&infer.file))?;
    println!(
        "evaluating {} sequences of {} epochs at sigma = {}",
        sequences.len(),
        infer.length,
        infer.sigma
    );

    let skip = options.skip.value;
    let stats = monte_carlo(&checkpoint.params, &sequences, skip)?;
    let traces = mean_traces(&checkpoint.params, &sequences, skip)?;
    let row = SweepRow::from_stats(infer.sigma, &stats);
    render_report(std::slice::from_ref(&row), Some(&traces), &options.out)?;

    println!(
        "mean errors (epochs {}..): rotation {:.4} (measured {:.4}), position {:.4} (measured {:.4}), manifold {:.3e}",
        skip + 1,
        stats.rot_est,
        stats.rot_meas,
        stats.pos_est,
        stats.pos_meas,
        stats.manifold
    );
    println!("report written to {}", options.out.display());
    Ok(())
}

pub(crate) fn sweep(options: SweepOptions) -> Result<()> {
    print!("{}", options.echo());
    let checkpoint = load_checkpoint(&options.checkpoint)?;
    let rows = noise_sweep(&checkpoint.params, &options.to_sweep_config())?;
    render_report(&rows, None, &options.out)?;
    let summary = std::fs::read_to_string(options.out.join("summary.txt"))
        .map_err(|e| Error::io(options.out.join("summary.txt"), e))?;
    print!("{summary}");
    println!("report written to {}", options.out.display());
    Ok(())
}

pub(crate) fn gradcheck(options: GradcheckOptions) -> Result<()> {
    print!("{}", options.echo());
    let report = finite_difference_check_with(
        options.hidden.value,
        options.length.value,
        options.seed.value,
        options.step.value,
        options.corrupt,
    )?;
    println!(
        "checked {} parameters: max relative error {:.3e} at {} (analytic {:.6e}, central difference {:.6e})",
        report.params_checked,
        report.max_rel_error,
        report.worst_param,
        report.analytic,
        report.numeric
    );
    if report.max_rel_error <= GRADCHECK_TOLERANCE {
        println!("gradcheck PASS (tolerance {GRADCHECK_TOLERANCE:e})");
        Ok(())
    } else {
        Err(Error::CheckFailed(format!(
            "gradcheck FAIL: relative error {:.3e} above {GRADCHECK_TOLERANCE:e} at {}",
            report.max_rel_error, report.worst_param
        )))
    }
}
