//! Experiment configuration: a flat TOML table whose hyperparameter keys use
//! the conventional short names (`fw-lr`, `i-steps`, `fb-gamma`, ...).
//! Unknown keys are rejected so a misspelt hyperparameter cannot silently
//! fall back to its default.

use std::path::{Path, PathBuf};

use lll_core::learners::{ActivityStep, Algorithm, LearnerConfig, SweepOrder, TrainerConfig};
use lll_core::numkit::{Activation, DType, Initializer};
use lll_core::optim::{OptimConfig, OptimKind, Schedule};
use lll_core::{Error, Result};
use serde::Deserialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Mlp,
    SmallCnn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Mnist,
    FashionMnist,
    SynthLinear,
    Cifar10Smoke,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    WarmupCosine,
    Constant,
}

fn default_hidden() -> Vec<usize> {
    vec![128, 128]
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "ExperimentConfig::default_model")]
    pub model: Model,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    pub dataset: DatasetKind,
    /// Directory holding the dataset files; relative paths resolve against
    /// the config file's directory.
    pub data_dir: Option<PathBuf>,
    /// Use only the first N training samples.
    pub train_limit: Option<usize>,
    /// Use only the first N test samples.
    pub test_limit: Option<usize>,
    /// Optional input standardization (x − mean) / std after [0, 1] scaling.
    pub normalize_mean: Option<f64>,
    pub normalize_std: Option<f64>,
    #[serde(default = "ExperimentConfig::default_synth_in")]
    pub synth_in: usize,
    #[serde(default = "ExperimentConfig::default_synth_out")]
    pub synth_out: usize,
    #[serde(default = "ExperimentConfig::default_synth_n")]
    pub synth_n: usize,

    pub algorithm: String,
    #[serde(default = "ExperimentConfig::default_epochs")]
    pub epochs: usize,
    #[serde(default = "ExperimentConfig::default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "ExperimentConfig::default_dtype")]
    pub dtype: String,

    #[serde(default = "ExperimentConfig::default_activation")]
    pub activation: String,
    #[serde(default = "ExperimentConfig::default_init")]
    pub fw_init: String,
    pub fw_lr: f64,
    #[serde(default)]
    pub fw_decay: f64,
    #[serde(default = "ExperimentConfig::default_opt")]
    pub fw_opt: String,
    #[serde(default = "ExperimentConfig::default_schedule")]
    pub fw_schedule: ScheduleKind,
    /// Warmup length in epochs for the warmup-cosine schedule.
    #[serde(default = "ExperimentConfig::default_warmup")]
    pub fw_warmup: f64,
    #[serde(default)]
    pub fw_min_lr: f64,

    #[serde(default = "ExperimentConfig::default_i_lr")]
    pub i_lr: f64,
    #[serde(default)]
    pub i_mom: f64,
    #[serde(default = "ExperimentConfig::default_i_steps")]
    pub i_steps: usize,
    #[serde(default = "ExperimentConfig::default_sweep")]
    pub sweep_order: String,
    /// "sample": i-lr is the per-sample step of the activity update.
    /// "batch-mean": i-lr scales the gradient of the batch-mean energy.
    #[serde(default = "ExperimentConfig::default_i_lr_reduction")]
    pub i_lr_reduction: String,

    #[serde(default = "ExperimentConfig::default_init")]
    pub fb_init: String,
    #[serde(default = "ExperimentConfig::default_fb_lr")]
    pub fb_lr: f64,
    #[serde(default)]
    pub fb_decay: f64,
    #[serde(default = "ExperimentConfig::default_opt")]
    pub fb_opt: String,
    #[serde(default = "ExperimentConfig::default_fb_gamma")]
    pub fb_gamma: f64,

    /// Ablation: drop the inference-phase forward update of DKP-PC.
    #[serde(default)]
    pub skip_pc_forward: bool,
    /// DKP-PC phase-1 step taken as a plain gradient step at the scheduled
    /// forward rate rather than through the forward optimizer.
    #[serde(default)]
    pub raw_phase1: bool,
    /// Ablation: never update Ψ.
    #[serde(default)]
    pub freeze_feedback: bool,

    pub out_dir: Option<PathBuf>,
    /// Write 0 for wall_seconds so metrics files compare byte for byte.
    #[serde(default)]
    pub deterministic_metrics: bool,

    /// Batches recorded by `diag --kind align` and `--kind energy`.
    #[serde(default = "ExperimentConfig::default_diag_batches")]
    pub diag_batches: usize,
    /// EMA window for alignment traces.
    #[serde(default = "ExperimentConfig::default_align_window")]
    pub align_window: usize,
    /// Sweeps recorded by `diag --kind errorprop`; defaults to max(i-steps, depth).
    pub errorprop_steps: Option<usize>,

    /// Directory of the config file, for resolving relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    fn default_model() -> Model {
        Model::Mlp
    }
    fn default_synth_in() -> usize {
        20
    }
    fn default_synth_out() -> usize {
        5
    }
    fn default_synth_n() -> usize {
        512
    }
    fn default_epochs() -> usize {
        25
    }
    fn default_batch() -> usize {
        128
    }
    fn default_dtype() -> String {
        "f32".into()
    }
    fn default_activation() -> String {
        "gelu".into()
    }
    fn default_init() -> String {
        "ka-unif".into()
    }
    fn default_opt() -> String {
        "adamw".into()
    }
    fn default_schedule() -> ScheduleKind {
        ScheduleKind::WarmupCosine
    }
    fn default_warmup() -> f64 {
        1.0
    }
    fn default_i_lr() -> f64 {
        0.1
    }
    fn default_i_steps() -> usize {
        1
    }
    fn default_sweep() -> String {
        "jacobi".into()
    }
    fn default_i_lr_reduction() -> String {
        "sample".into()
    }
    fn default_fb_lr() -> f64 {
        1e-4
    }
    fn default_fb_gamma() -> f64 {
        1.0
    }
    fn default_diag_batches() -> usize {
        300
    }
    fn default_align_window() -> usize {
        100
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    pub fn algorithm(&self) -> Result<Algorithm> {
        self.algorithm.parse()
    }

    pub fn dtype(&self) -> Result<DType> {
        match self.dtype.as_str() {
            "f32" => Ok(DType::F32),
            "f64" => Ok(DType::F64),
            other => Err(Error::Config(format!("dtype must be f32 or f64, got {other:?}"))),
        }
    }

    pub fn activation(&self) -> Result<Activation> {
        self.activation.parse()
    }

    pub fn fw_init(&self) -> Result<Initializer> {
        self.fw_init.parse()
    }

    pub fn fb_init(&self) -> Result<Initializer> {
        self.fb_init.parse()
    }

    pub fn learner(&self) -> Result<LearnerConfig> {
        let mut l = LearnerConfig::new(self.algorithm()?, self.i_lr, self.i_steps);
        l.sweep = self.sweep_order.parse::<SweepOrder>()?;
        l.activity_step = self.i_lr_reduction.parse::<ActivityStep>()?;
        Ok(l)
    }

    pub fn forward_opt(&self) -> Result<OptimConfig> {
        Ok(OptimConfig::new(self.fw_opt.parse::<OptimKind>()?, self.fw_lr).with_decay(self.fw_decay))
    }

    pub fn feedback_opt(&self) -> Result<OptimConfig> {
        Ok(OptimConfig::new(self.fb_opt.parse::<OptimKind>()?, self.fb_lr).with_decay(self.fb_decay))
    }

    /// Forward schedule over `batches_per_epoch · epochs` steps.
    pub fn forward_schedule(&self, batches_per_epoch: usize) -> Result<Schedule> {
        match self.fw_schedule {
            ScheduleKind::Constant => Ok(Schedule::Constant { lr: self.fw_lr }),
            ScheduleKind::WarmupCosine => {
                let warmup = (self.fw_warmup * batches_per_epoch as f64).round() as u64;
                let total = (self.epochs * batches_per_epoch) as u64;
                Schedule::warmup_cosine(self.fw_lr, warmup.min(total), total.max(1), self.fw_min_lr)
            }
        }
    }

    pub fn trainer_config(&self, batches_per_epoch: usize) -> Result<TrainerConfig> {
        let mut tc = TrainerConfig::new(self.learner()?, self.forward_opt()?, self.forward_schedule(batches_per_epoch)?);
        if self.algorithm()?.trains_feedback() {
            tc = tc.with_feedback(self.feedback_opt()?, Schedule::exponential(self.fb_lr, self.fb_gamma)?);
        }
        tc.skip_pc_forward = self.skip_pc_forward;
        tc.freeze_feedback = self.freeze_feedback;
        tc.raw_phase1 = self.raw_phase1;
        Ok(tc)
    }

    /// Dataset directory, resolved against the config file.
    pub fn data_dir(&self) -> Option<PathBuf> {
        self.data_dir.as_ref().map(|d| if d.is_absolute() { d.clone() } else { self.base_dir.join(d) })
    }

    pub fn validate(&self) -> Result<()> {
        let algo = self.algorithm()?;
        self.dtype()?;
        self.activation()?;
        self.fw_init()?;
        self.learner()?.validate()?;
        self.forward_opt()?.validate()?;
        if algo.needs_feedback() {
            self.fb_init()?;
        }
        if algo.trains_feedback() && !self.freeze_feedback {
            self.feedback_opt()?.validate()?;
            if !(self.fb_gamma > 0.0 && self.fb_gamma <= 1.0) {
                return Err(Error::Config(format!("fb-gamma must lie in (0, 1], got {}", self.fb_gamma)));
            }
        }
        if self.i_mom != 0.0 {
            return Err(Error::Config("i-mom other than 0 is not supported".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch-size must be positive".into()));
        }
        if !(self.fw_warmup >= 0.0) || !(self.fw_min_lr >= 0.0) || self.fw_min_lr > self.fw_lr {
            return Err(Error::Config("fw-warmup must be ≥ 0 and fw-min-lr within [0, fw-lr]".into()));
        }
        if self.model == Model::Mlp && self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if self.normalize_mean.is_some() != self.normalize_std.is_some() {
            return Err(Error::Config("normalize-mean and normalize-std go together".into()));
        }
        if self.align_window == 0 {
            return Err(Error::Config("align-window must be positive".into()));
        }
        match self.dataset {
            DatasetKind::SynthLinear => {
                if self.synth_in == 0 || self.synth_out == 0 || self.synth_n == 0 {
                    return Err(Error::Config("synth-in, synth-out and synth-n must be positive".into()));
                }
            }
            _ => {
                let dir = self.data_dir().ok_or_else(|| Error::Config("data-dir is required for this dataset".into()))?;
                for f in self.data_files(&dir) {
                    if !f.exists() {
                        return Err(Error::Config(format!("missing data file {}", f.display())));
                    }
                }
            }
        }
        Ok(())
    }

    /// Files that must exist for the configured dataset. IDX files may be
    /// gzipped or plain.
    pub fn data_files(&self, dir: &Path) -> Vec<PathBuf> {
        match self.dataset {
            DatasetKind::Mnist | DatasetKind::FashionMnist => IDX_FILES.iter().map(|f| idx_path(dir, f)).collect(),
            DatasetKind::Cifar10Smoke => vec![dir.join("data_batch_1.bin"), dir.join("test_batch.bin")],
            DatasetKind::SynthLinear => Vec::new(),
        }
    }
}

pub const IDX_FILES: [&str; 4] =
    ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"];

/// `name.gz` if present, otherwise `name`.
pub fn idx_path(dir: &Path, name: &str) -> PathBuf {
    let gz = dir.join(format!("{name}.gz"));
    if gz.exists() {
        gz
    } else {
        dir.join(name)
    }
}
