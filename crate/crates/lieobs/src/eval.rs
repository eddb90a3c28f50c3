//! Monte-Carlo evaluation: per-epoch error traces, mean statistics over
//! many rollouts, noise sweeps, and plot-ready report files.
//!
//! Error channels, all nonnegative:
//! - `rot_meas` / `rot_est`: Frobenius error of the measured / estimated
//!   rotation against the truth;
//! - `pos_meas` / `pos_est`: Euclidean position errors;
//! - `gyro_bias_est` / `vel_bias_est`: Euclidean bias-estimate errors;
//! - `manifold`: `|R R^T - I|_F` of the rotational estimate;
//! - `rot_angle_est`: geodesic angle between estimate and truth, an extra
//!   diagnostic on top of the Frobenius table columns.

use std::path::Path;

use rayon::prelude::*;

use crate::observer::Estimator;
use crate::sim::{generate_batch, infer_stream, Sequence, SequenceConfig};
use crate::so3::{geodesic_angle, manifold_distance};
use crate::{Error, Result};

/// Channel names in the order used by every report.
pub const CHANNELS: [&str; 8] = [
    "rot_meas",
    "rot_est",
    "pos_meas",
    "pos_est",
    "gyro_bias_est",
    "vel_bias_est",
    "manifold",
    "rot_angle_est",
];

/// Per-epoch error channels of one evaluated sequence.
#[derive(Debug, Clone, Default)]
pub struct ErrorTrace {
    pub rot_meas: Vec<f64>,
    pub rot_est: Vec<f64>,
    pub pos_meas: Vec<f64>,
    pub pos_est: Vec<f64>,
    pub gyro_bias_est: Vec<f64>,
    pub vel_bias_est: Vec<f64>,
    pub manifold: Vec<f64>,
    pub rot_angle_est: Vec<f64>,
}

impl ErrorTrace {
    pub fn len(&self) -> usize {
        self.rot_est.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rot_est.is_empty()
    }

    fn channels(&self) -> [&Vec<f64>; 8] {
        [
            &self.rot_meas,
            &self.rot_est,
            &self.pos_meas,
            &self.pos_est,
            &self.gyro_bias_est,
            &self.vel_bias_est,
            &self.manifold,
            &self.rot_angle_est,
        ]
    }
}

/// Channel means over epochs and sequences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStats {
    pub rot_meas: f64,
    pub rot_est: f64,
    pub pos_meas: f64,
    pub pos_est: f64,
    pub gyro_bias_est: f64,
    pub vel_bias_est: f64,
    pub manifold: f64,
    pub rot_angle_est: f64,
}

/// Rolls the estimator over one sequence (from the identity prior) and
/// computes every error channel per epoch. Measurement channels depend
/// only on the sequence, never on the estimator.
pub fn evaluate_sequence(estimator: &impl Estimator, seq: &Sequence) -> Result<ErrorTrace> {
    let estimates = estimator.estimate_sequence(&seq.measurements)?;
    if estimates.len() != seq.len() {
        return Err(Error::LengthMismatch {
            context: "estimates vs sequence length",
            left: estimates.len(),
            right: seq.len(),
        });
    }
    let mut trace = ErrorTrace::default();
    for (k, est) in estimates.iter().enumerate() {
        let truth = &seq.states[k + 1];
        let meas = &seq.measurements[k];
        trace
            .rot_meas
            .push((meas.rotation.matrix() - truth.rotation.matrix()).norm());
        trace
            .rot_est
            .push((est.rotation.matrix() - truth.rotation.matrix()).norm());
        trace.pos_meas.push((meas.position - truth.position).norm());
        trace.pos_est.push((est.position - truth.position).norm());
        trace
            .gyro_bias_est
            .push((est.gyro_bias - truth.gyro_bias).norm());
        trace
            .vel_bias_est
            .push((est.vel_bias - truth.vel_bias).norm());
        trace.manifold.push(manifold_distance(est.rotation.matrix()));
        trace
            .rot_angle_est
            .push(geodesic_angle(&est.rotation, &truth.rotation));
    }
    Ok(trace)
}

fn traces_for(
    estimator: &(impl Estimator + Sync),
    sequences: &[Sequence],
) -> Result<Vec<ErrorTrace>> {
    sequences
        .par_iter()
        .map(|seq| evaluate_sequence(estimator, seq))
        .collect()
}

fn mean_of_traces(traces: &[ErrorTrace], skip: usize) -> Result<MeanStats> {
    if traces.is_empty() {
        return Err(Error::EmptyInput("monte carlo needs at least one sequence"));
    }
    if traces.iter().any(|t| skip >= t.len()) {
        return Err(Error::Config(format!(
            "skip count {skip} must be smaller than the rollout length"
        )));
    }
    let mut sums = [0.0f64; 8];
    let mut count = 0usize;
    for trace in traces {
        for (acc, channel) in sums.iter_mut().zip(trace.channels().iter()) {
            *acc += channel[skip..].iter().sum::<f64>();
        }
        count += trace.len() - skip;
    }
    let n = count as f64;
    Ok(MeanStats {
        rot_meas: sums[0] / n,
        rot_est: sums[1] / n,
        pos_meas: sums[2] / n,
        pos_est: sums[3] / n,
        gyro_bias_est: sums[4] / n,
        vel_bias_est: sums[5] / n,
        manifold: sums[6] / n,
        rot_angle_est: sums[7] / n,
    })
}

/// Channel means over all epochs after the first `skip` of every sequence.
/// The initial epochs are excluded so the fixed identity prior's transient
/// does not bias the statistics.
pub fn monte_carlo(
    estimator: &(impl Estimator + Sync),
    sequences: &[Sequence],
    skip: usize,
) -> Result<MeanStats> {
    mean_of_traces(&traces_for(estimator, sequences)?, skip)
}

/// Per-epoch channel means across sequences, for epochs `skip+1 ..= M`.
/// All sequences must share one rollout length.
#[derive(Debug, Clone)]
pub struct MeanTraces {
    /// First epoch covered (1-based): `skip + 1`.
    pub first_epoch: usize,
    pub channels: [Vec<f64>; 8],
}

pub fn mean_traces(
    estimator: &(impl Estimator + Sync),
    sequences: &[Sequence],
    skip: usize,
) -> Result<MeanTraces> {
    let traces = traces_for(estimator, sequences)?;
    if traces.is_empty() {
        return Err(Error::EmptyInput("trace evaluation needs sequences"));
    }
    let len = traces[0].len();
    if traces.iter().any(|t| t.len() != len) {
        return Err(Error::LengthMismatch {
            context: "per-epoch traces over sequences of unequal length",
            left: len,
            right: traces.iter().map(|t| t.len()).find(|&l| l != len).unwrap(),
        });
    }
    if skip >= len {
        return Err(Error::Config(format!(
            "skip count {skip} must be smaller than the rollout length {len}"
        )));
    }
    let n = traces.len() as f64;
    let mut channels: [Vec<f64>; 8] = Default::default();
    for (c, out) in channels.iter_mut().enumerate() {
        *out = (skip..len)
            .map(|k| traces.iter().map(|t| t.channels()[c][k]).sum::<f64>() / n)
            .collect();
    }
    Ok(MeanTraces {
        first_epoch: skip + 1,
        channels,
    })
}

/// One row of the noise sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub sigma: f64,
    pub rot_meas: f64,
    pub rot_est: f64,
    pub pos_meas: f64,
    pub pos_est: f64,
    pub gyro_bias_est: f64,
    pub vel_bias_est: f64,
    /// `100 (rot_meas - rot_est) / rot_meas`.
    pub rot_reduction_pct: f64,
    pub pos_reduction_pct: f64,
    pub manifold: f64,
    pub rot_angle_est: f64,
}

fn reduction_pct(meas: f64, est: f64) -> f64 {
    if meas == 0.0 {
        0.0
    } else {
        100.0 * (meas - est) / meas
    }
}

impl SweepRow {
    pub fn from_stats(sigma: f64, stats: &MeanStats) -> Self {
        SweepRow {
            sigma,
            rot_meas: stats.rot_meas,
            rot_est: stats.rot_est,
            pos_meas: stats.pos_meas,
            pos_est: stats.pos_est,
            gyro_bias_est: stats.gyro_bias_est,
            vel_bias_est: stats.vel_bias_est,
            rot_reduction_pct: reduction_pct(stats.rot_meas, stats.rot_est),
            pos_reduction_pct: reduction_pct(stats.pos_meas, stats.pos_est),
            manifold: stats.manifold,
            rot_angle_est: stats.rot_angle_est,
        }
    }
}

/// Noise-sweep protocol: sequence count, rollout length and noise levels.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub sigmas: Vec<f64>,
    pub count: usize,
    pub length: usize,
    pub dt: f64,
    pub integrator_tol: f64,
    pub seed: u64,
    pub skip: usize,
}

/// Evaluates the estimator on freshly generated inference sequences per
/// noise level; one row per sigma.
pub fn noise_sweep(
    estimator: &(impl Estimator + Sync),
    cfg: &SweepConfig,
) -> Result<Vec<SweepRow>> {
    if cfg.count == 0 || cfg.length == 0 {
        return Err(Error::Config("sweep needs count > 0 and length > 0".into()));
    }
    let mut rows = Vec::with_capacity(cfg.sigmas.len());
    for (j, &sigma) in cfg.sigmas.iter().enumerate() {
        let seq_cfg = SequenceConfig {
            length: cfg.length,
            dt: cfg.dt,
            sigma,
            integrator_tol: cfg.integrator_tol,
        };
        let sequences = generate_batch(&seq_cfg, cfg.seed, infer_stream(j, cfg.count, 0), cfg.count)?;
        let stats = monte_carlo(estimator, &sequences, cfg.skip)?;
        rows.push(SweepRow::from_stats(sigma, &stats));
    }
    Ok(rows)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents.as_bytes()).map_err(|e| Error::io(path, e))
}

/// CSV of sweep rows. Full double precision, shortest-roundtrip formatting.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "sigma,rot_meas,rot_est,pos_meas,pos_est,gyro_bias_est,vel_bias_est,\
         rot_reduction_pct,pos_reduction_pct,manifold,rot_angle_est\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.sigma,
            r.rot_meas,
            r.rot_est,
            r.pos_meas,
            r.pos_est,
            r.gyro_bias_est,
            r.vel_bias_est,
            r.rot_reduction_pct,
            r.pos_reduction_pct,
            r.manifold,
            r.rot_angle_est
        ));
    }
    out
}

/// Parses a CSV produced by [`sweep_csv`].
pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format {
                path: "sweep.csv".into(),
                reason: format!("line {}: {e}", i + 1),
            })?;
        if fields.len() != 11 {
            return Err(Error::Format {
                path: "sweep.csv".into(),
                reason: format!("line {}: expected 11 fields, got {}", i + 1, fields.len()),
            });
        }
        rows.push(SweepRow {
            sigma: fields[0],
            rot_meas: fields[1],
            rot_est: fields[2],
            pos_meas: fields[3],
            pos_est: fields[4],
            gyro_bias_est: fields[5],
            vel_bias_est: fields[6],
            rot_reduction_pct: fields[7],
            pos_reduction_pct: fields[8],
            manifold: fields[9],
            rot_angle_est: fields[10],
        });
    }
    Ok(rows)
}

fn aligned_table(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:>6} {:>9} {:>9} {:>9} {:>9} {:>10} {:>10} {:>8} {:>8} {:>10}\n",
        "sigma", "rot_meas", "rot_est", "pos_meas", "pos_est", "gyro_bias", "vel_bias",
        "rot_red%", "pos_red%", "manifold"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:>6.2} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>10.4} {:>10.4} {:>8.2} {:>8.2} {:>10.3e}\n",
            r.sigma,
            r.rot_meas,
            r.rot_est,
            r.pos_meas,
            r.pos_est,
            r.gyro_bias_est,
            r.vel_bias_est,
            r.rot_reduction_pct,
            r.pos_reduction_pct,
            r.manifold
        ));
    }
    out
}

/// Writes `sweep.csv`, optional per-channel trace CSVs under `traces/`,
/// and a human-readable `summary.txt` into `out_dir`.
pub fn render_report(
    rows: &[SweepRow],
    traces: Option<&MeanTraces>,
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_file(&out_dir.join("sweep.csv"), &sweep_csv(rows))?;

    if let Some(traces) = traces {
        let trace_dir = out_dir.join("traces");
        std::fs::create_dir_all(&trace_dir).map_err(|e| Error::io(&trace_dir, e))?;
        for (name, values) in CHANNELS.iter().zip(traces.channels.iter()) {
            let mut csv = String::from("epoch,mean\n");
            for (i, v) in values.iter().enumerate() {
                csv.push_str(&format!("{},{}\n", traces.first_epoch + i, v));
            }
            write_file(&trace_dir.join(format!("{name}.csv")), &csv)?;
        }
    }

    let mut summary = String::new();
    summary.push_str("mean errors vs noise level\n\n");
    summary.push_str(&aligned_table(rows));
    if let Some(traces) = traces {
        summary.push_str(&format!(
            "\nper-epoch mean traces: epochs {}..={} in traces/<channel>.csv\n",
            traces.first_epoch,
            traces.first_epoch + traces.channels[0].len() - 1
        ));
    }
    write_file(&out_dir.join("summary.txt"), &summary)
}
