//! Layered option resolution with provenance tracking.
//!
//! Order of precedence (low to high): built-in defaults, `--preset`, config
//! file, command-line flags. Each resolved field remembers which layer set
//! it; the echo block prints all of them.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Deserialize;

use crate::{Error, Result};

use super::{
    EvaluateArgs, GenerateArgs, GradcheckArgs, SweepArgs, TrainArgs, CONFIG_ENV_VAR,
};

/// Which layer a resolved value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Default,
    Preset(Preset),
    File,
    Flag,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Default => write!(f, "default"),
            Source::Preset(p) => write!(f, "preset {p}"),
            Source::File => write!(f, "file"),
            Source::Flag => write!(f, "flag"),
        }
    }
}

/// The two canonical experiment scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// N=2000 sequences of 50 epochs, hidden size 64.
    Desk,
    /// N=20000 sequences of 100 epochs, hidden size 512.
    Paper,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Desk => write!(f, "desk"),
            Preset::Paper => write!(f, "paper"),
        }
    }
}

/// A resolved value plus the layer that set it.
#[derive(Debug, Clone)]
pub struct Field<T> {
    pub value: T,
    pub source: Source,
}

impl<T> Field<T> {
    fn new(default: T) -> Self {
        Field {
            value: default,
            source: Source::Default,
        }
    }

    fn set(&mut self, value: T, source: Source) {
        self.value = value;
        self.source = source;
    }

    fn merge(&mut self, value: Option<T>, source: Source) {
        if let Some(value) = value {
            self.set(value, source);
        }
    }
}

fn join<T: fmt::Display>(values: &[T]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// One `key = value [source]` line of the echo block.
pub(crate) fn echo_line<T: fmt::Display>(key: &str, field: &Field<T>) -> String {
    format!("  {key:<16} = {:<24} [{}]", field.value.to_string(), field.source)
}

// ---------------------------------------------------------------------------
// Config file
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct FileConfig {
    #[serde(default)]
    generate: GenerateFile,
    #[serde(default)]
    train: TrainFile,
    #[serde(default)]
    eval: EvalFile,
    #[serde(default)]
    sweep: SweepFile,
    #[serde(default)]
    gradcheck: GradcheckFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateFile {
    n: Option<usize>,
    m: Option<usize>,
    dt: Option<f64>,
    seed: Option<u64>,
    sigmas: Option<Vec<f64>>,
    infer_count: Option<usize>,
    infer_length: Option<usize>,
    split: Option<[f64; 3]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFile {
    hidden: Option<usize>,
    learning_rate: Option<f64>,
    weight_decay: Option<f64>,
    batch_size: Option<usize>,
    max_iters: Option<usize>,
    clip_norm: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalFile {
    sigma: Option<f64>,
    skip: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    sigmas: Option<Vec<f64>>,
    count: Option<usize>,
    length: Option<usize>,
    dt: Option<f64>,
    seed: Option<u64>,
    skip: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GradcheckFile {
    h: Option<usize>,
    m: Option<usize>,
    seed: Option<u64>,
    step: Option<f64>,
}

/// Loads the config file from the flag, falling back to `$LIEOBS_CONFIG`.
pub(crate) fn load_file(path: Option<&Path>) -> Result<FileConfig> {
    let path = match path {
        Some(p) => Some(p.to_path_buf()),
        None => std::env::var_os(CONFIG_ENV_VAR).map(PathBuf::from),
    };
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Resolved per-command options
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct GenerateOptions {
    pub out: PathBuf,
    pub n: Field<usize>,
    pub m: Field<usize>,
    pub dt: Field<f64>,
    pub seed: Field<u64>,
    pub sigmas: Field<Vec<f64>>,
    pub infer_count: Field<usize>,
    pub infer_length: Field<usize>,
    pub split: Field<[f64; 3]>,
}

impl GenerateOptions {
    pub(crate) fn resolve(file: &FileConfig, args: &GenerateArgs) -> Result<Self> {
        let mut n = Field::new(2000);
        let mut m = Field::new(50);
        let mut dt = Field::new(crate::sim::DEFAULT_DT);
        let mut seed = Field::new(42u64);
        let mut sigmas = Field::new(vec![0.1, 0.2, 0.3, 0.4, 0.5]);
        let mut infer_count = Field::new(100);
        let mut infer_length = Field::new(1000);
        let mut split = Field::new([0.8, 0.1, 0.1]);

        if let Some(preset) = args.preset {
            let src = Source::Preset(preset);
            match preset {
                Preset::Desk => {
                    n.set(2000, src);
                    m.set(50, src);
                    infer_count.set(100, src);
                }
                Preset::Paper => {
                    n.set(20_000, src);
                    m.set(100, src);
                    infer_count.set(1000, src);
                }
            }
        }

        let f = &file.generate;
        n.merge(f.n, Source::File);
        m.merge(f.m, Source::File);
        dt.merge(f.dt, Source::File);
        seed.merge(f.seed, Source::File);
        sigmas.merge(f.sigmas.clone(), Source::File);
        infer_count.merge(f.infer_count, Source::File);
        infer_length.merge(f.infer_length, Source::File);
        split.merge(f.split, Source::File);

        n.merge(args.n, Source::Flag);
        m.merge(args.m, Source::Flag);
        dt.merge(args.dt, Source::Flag);
        seed.merge(args.seed, Source::Flag);
        sigmas.merge(args.sigmas.clone(), Source::Flag);
        infer_count.merge(args.infer_count, Source::Flag);
        infer_length.merge(args.infer_length, Source::Flag);

        let options = GenerateOptions {
            out: args.out.clone(),
            n,
            m,
            dt,
            seed,
            sigmas,
            infer_count,
            infer_length,
            split,
        };
        options.validate()?;
        Ok(options)
    }

    fn validate(&self) -> Result<()> {
        if self.m.value == 0 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if self.n.value == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.infer_length.value == 0 && !self.sigmas.value.is_empty() {
            return Err(Error::Config("infer_length must be at least 1".into()));
        }
        Ok(())
    }

    pub fn echo(&self) -> String {
        let mut out = String::from("effective config (generate):\n");
        out.push_str(&format!("  {:<16} = {}\n", "out", self.out.display()));
        out.push_str(&echo_line("n", &self.n));
        out.push('\n');
        out.push_str(&echo_line("m", &self.m));
        out.push('\n');
        out.push_str(&echo_line("dt", &self.dt));
        out.push('\n');
        out.push_str(&echo_line("seed", &self.seed));
        out.push('\n');
        out.push_str(&echo_line(
            "sigmas",
            &Field {
                value: join(&self.sigmas.value),
                source: self.sigmas.source,
            },
        ));
        out.push('\n');
        out.push_str(&echo_line("infer_count", &self.infer_count));
        out.push('\n');
        out.push_str(&echo_line("infer_length", &self.infer_length));
        out.push('\n');
        out.push_str(&echo_line(
            "split",
            &Field {
                value: join(&self.split.value),
                source: self.split.source,
            },
        ));
        out.push('\n');
        out
    }
}

#[derive(Debug)]
pub struct TrainOptions {
    pub data: PathBuf,
    pub out: PathBuf,
    pub hidden: Field<usize>,
    pub learning_rate: Field<f64>,
    pub weight_decay: Field<f64>,
    pub batch_size: Field<usize>,
    pub max_iters: Field<usize>,
    pub clip_norm: Field<f64>,
    pub seed: Field<u64>,
}

impl TrainOptions {
    pub(crate) fn resolve(file: &FileConfig, args: &TrainArgs) -> Result<Self> {
        let mut hidden = Field::new(64);
        let mut learning_rate = Field::new(3e-4);
        let mut weight_decay = Field::new(0.1);
        let mut batch_size = Field::new(16);
        let mut max_iters = Field::new(30);
        let mut clip_norm = Field::new(10.0);
        let mut seed = Field::new(7u64);

        if let Some(preset) = args.preset {
            let src = Source::Preset(preset);
            match preset {
                Preset::Desk => hidden.set(64, src),
                Preset::Paper => hidden.set(512, src),
            }
        }

        let f = &file.train;
        hidden.merge(f.hidden, Source::File);
        learning_rate.merge(f.learning_rate, Source::File);
        weight_decay.merge(f.weight_decay, Source::File);
        batch_size.merge(f.batch_size, Source::File);
        max_iters.merge(f.max_iters, Source::File);
        clip_norm.merge(f.clip_norm, Source::File);
        seed.merge(f.seed, Source::File);

        hidden.merge(args.hidden, Source::Flag);
        learning_rate.merge(args.lr, Source::Flag);
        weight_decay.merge(args.weight_decay, Source::Flag);
        batch_size.merge(args.batch_size, Source::Flag);
        max_iters.merge(args.max_iters, Source::Flag);
        clip_norm.merge(args.clip_norm, Source::Flag);
        seed.merge(args.seed, Source::Flag);

        let options = TrainOptions {
            data: args.data.clone(),
            out: args.out.clone(),
            hidden,
            learning_rate,
            weight_decay,
            batch_size,
            max_iters,
            clip_norm,
            seed,
        };
        options.to_train_config().validate()?;
        Ok(options)
    }

    pub fn to_train_config(&self) -> crate::training::TrainConfig {
        let mut cfg = crate::training::TrainConfig::new(self.hidden.value, self.seed.value);
        cfg.optimizer.learning_rate = self.learning_rate.value;
        cfg.optimizer.weight_decay = self.weight_decay.value;
        cfg.batch_size = self.batch_size.value;
        cfg.max_passes = self.max_iters.value;
        cfg.clip_norm = self.clip_norm.value;
        cfg.checkpoint_dir = Some(self.out.clone());
        cfg
    }

    pub fn echo(&self) -> String {
        let mut out = String::from("effective config (train):\n");
        out.push_str(&format!("  {:<16} = {}\n", "data", self.data.display()));
        out.push_str(&format!("  {:<16} = {}\n", "out", self.out.display()));
        out.push_str(&echo_line("hidden", &self.hidden));
        out.push('\n');
        out.push_str(&echo_line("learning_rate", &self.learning_rate));
        out.push('\n');
        out.push_str(&echo_line("weight_decay", &self.weight_decay));
        out.push('\n');
        out.push_str(&echo_line("batch_size", &self.batch_size));
        out.push('\n');
        out.push_str(&echo_line("max_iters", &self.max_iters));
        out.push('\n');
        out.push_str(&echo_line("clip_norm", &self.clip_norm));
        out.push('\n');
        out.push_str(&echo_line("seed", &self.seed));
        out.push('\n');
        out
    }
}

#[derive(Debug)]
pub struct EvaluateOptions {
    pub data: PathBuf,
    pub checkpoint: PathBuf,
    pub out: PathBuf,
    pub sigma: Field<f64>,
    pub skip: Field<usize>,
}

impl EvaluateOptions {
    pub(crate) fn resolve(file: &FileConfig, args: &EvaluateArgs) -> Result<Self> {
        let mut sigma = Field::new(0.1);
        let mut skip = Field::new(10);

        sigma.merge(file.eval.sigma, Source::File);
        skip.merge(file.eval.skip, Source::File);
        sigma.merge(args.sigma, Source::Flag);
        skip.merge(args.skip, Source::Flag);

        Ok(EvaluateOptions {
            data: args.data.clone(),
            checkpoint: args.checkpoint.clone(),
            out: args.out.clone(),
            sigma,
            skip,
        })
    }

    pub fn echo(&self) -> String {
        let mut out = String::from("effective config (evaluate):\n");
        out.push_str(&format!("  {:<16} = {}\n", "data", self.data.display()));
        out.push_str(&format!(
            "  {:<16} = {}\n",
            "checkpoint",
            self.checkpoint.display()
        ));
        out.push_str(&format!("  {:<16} = {}\n", "out", self.out.display()));
        out.push_str(&echo_line("sigma", &self.sigma));
        out.push('\n');
        out.push_str(&echo_line("skip", &self.skip));
        out.push('\n');
        out
    }
}

#[derive(Debug)]
pub struct SweepOptions {
    pub checkpoint: PathBuf,
    pub out: PathBuf,
    pub sigmas: Field<Vec<f64>>,
    pub count: Field<usize>,
    pub length: Field<usize>,
    pub dt: Field<f64>,
    pub seed: Field<u64>,
    pub skip: Field<usize>,
}

impl SweepOptions {
    pub(crate) fn resolve(file: &FileConfig, args: &SweepArgs) -> Result<Self> {
        let mut sigmas = Field::new(vec![0.1, 0.2, 0.3, 0.4, 0.5]);
        let mut count = Field::new(100);
        let mut length = Field::new(1000);
        let mut dt = Field::new(crate::sim::DEFAULT_DT);
        let mut seed = Field::new(43u64);
        let mut skip = Field::new(10);

        let f = &file.sweep;
        sigmas.merge(f.sigmas.clone(), Source::File);
        count.merge(f.count, Source::File);
        length.merge(f.length, Source::File);
        dt.merge(f.dt, Source::File);
        seed.merge(f.seed, Source::File);
        skip.merge(f.skip, Source::File);

        sigmas.merge(args.sigmas.clone(), Source::Flag);
        count.merge(args.count, Source::Flag);
        length.merge(args.length, Source::Flag);
        dt.merge(args.dt, Source::Flag);
        seed.merge(args.seed, Source::Flag);
        skip.merge(args.skip, Source::Flag);

        let options = SweepOptions {
            checkpoint: args.checkpoint.clone(),
            out: args.out.clone(),
            sigmas,
            count,
            length,
            dt,
            seed,
            skip,
        };
        if options.skip.value >= options.length.value {
            return Err(Error::Config(format!(
                "skip ({}) must be smaller than length ({})",
                options.skip.value, options.length.value
            )));
        }
        Ok(options)
    }

    pub fn to_sweep_config(&self) -> crate::eval::SweepConfig {
        crate::eval::SweepConfig {
            sigmas: self.sigmas.value.clone(),
            count: self.count.value,
            length: self.length.value,
            dt: self.dt.value,
            integrator_tol: crate::sim::DEFAULT_INTEGRATOR_TOL,
            seed: self.seed.value,
            skip: self.skip.value,
        }
    }

    pub fn echo(&self) -> String {
        let mut out = String::from("effective config (sweep):\n");
        out.push_str(&format!(
            "  {:<16} = {}\n",
            "checkpoint",
            self.checkpoint.display()
        ));
        out.push_str(&format!("  {:<16} = {}\n", "out", self.out.display()));
        out.push_str(&echo_line(
            "sigmas",
            &Field {
                value: join(&self.sigmas.value),
                source: self.sigmas.source,
            },
        ));
        out.push('\n');
        out.push_str(&echo_line("count", &self.count));
        out.push('\n');
        out.push_str(&echo_line("length", &self.length));
        out.push('\n');
        out.push_str(&echo_line("dt", &self.dt));
        out.push('\n');
        out.push_str(&echo_line("seed", &self.seed));
        out.push('\n');
        out.push_str(&echo_line("skip", &self.skip));
        out.push('\n');
        out
    }
}

#[derive(Debug)]
pub struct GradcheckOptions {
    pub hidden: Field<usize>,
    pub length: Field<usize>,
    pub seed: Field<u64>,
    pub step: Field<f64>,
    pub corrupt: bool,
}

impl GradcheckOptions {
    pub(crate) fn resolve(file: &FileConfig, args: &GradcheckArgs) -> Result<Self> {
        let mut hidden = Field::new(4);
        let mut length = Field::new(3);
        let mut seed = Field::new(9u64);
        let mut step = Field::new(1e-5);

        let f = &file.gradcheck;
        hidden.merge(f.h, Source::File);
        length.merge(f.m, Source::File);
        seed.merge(f.seed, Source::File);
        step.merge(f.step, Source::File);

        hidden.merge(args.h, Source::Flag);
        length.merge(args.m, Source::Flag);
        seed.merge(args.seed, Source::Flag);
        step.merge(args.step, Source::Flag);

        if hidden.value == 0 || length.value == 0 {
            return Err(Error::Config("gradcheck needs h >= 1 and m >= 1".into()));
        }
        if step.value <= 0.0 {
            return Err(Error::Config("finite-difference step must be positive".into()));
        }
        Ok(GradcheckOptions {
            hidden,
            length,
            seed,
            step,
            corrupt: args.corrupt,
        })
    }

    pub fn echo(&self) -> String {
        let mut out = String::from("effective config (gradcheck):\n");
        out.push_str(&echo_line("h", &self.hidden));
        out.push('\n');
        out.push_str(&echo_line("m", &self.length));
        out.push('\n');
        out.push_str(&echo_line("seed", &self.seed));
        out.push('\n');
        out.push_str(&echo_line("step", &self.step));
        out.push('\n');
        out
    }
}
