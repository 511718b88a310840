//! The learning algorithms as gradient producers over a shared network.
//!
//! Every learner returns ∂objective/∂parameter directions averaged over the
//! batch; applying them (learning rates, decay, moments) is left to
//! [`crate::optim`]. A plain descent step on a feedback gradient therefore
//! moves Ψ_ℓ by −α·x_ℓ δ_Lᵀ.
//!
//! Layer indexing: block `l` maps activity φ_l to the prediction of
//! φ_{l+1}; φ_0 is the input and φ_L the output, L = `net.depth()`.

mod backprop;
mod dkppc;
mod gradients;
mod pc;
mod trainer;

use std::fmt;
use std::str::FromStr;

pub use backprop::{bp_step, dfa_step, dkp_step, output_error, squared_error};
pub use dkppc::{dkppc_step, DkpPcOutput, IdkpPcSession, Phase1};
pub use gradients::GradientSet;
pub use pc::{free_energy, ipc_step, pc_infer, pc_infer_from, pc_step, InferenceState, InferenceTrace, IpcSession};
pub use trainer::{StepReport, Trainer, TrainerConfig};

use crate::error::{config_err, Error, Result};
use crate::numkit::{FlopLedger, Phase};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Bp,
    Dfa,
    Dkp,
    Pc,
    Ipc,
    DkpPc,
    IdkpPc,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] =
        [Algorithm::Bp, Algorithm::Dfa, Algorithm::Dkp, Algorithm::Pc, Algorithm::Ipc, Algorithm::DkpPc, Algorithm::IdkpPc];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bp => "bp",
            Algorithm::Dfa => "dfa",
            Algorithm::Dkp => "dkp",
            Algorithm::Pc => "pc",
            Algorithm::Ipc => "ipc",
            Algorithm::DkpPc => "dkp-pc",
            Algorithm::IdkpPc => "idkp-pc",
        }
    }

    /// Runs an inference phase over activities.
    pub fn is_pc_family(self) -> bool {
        matches!(self, Algorithm::Pc | Algorithm::Ipc | Algorithm::DkpPc | Algorithm::IdkpPc)
    }

    /// Uses direct feedback matrices Ψ.
    pub fn needs_feedback(self) -> bool {
        matches!(self, Algorithm::Dfa | Algorithm::Dkp | Algorithm::DkpPc | Algorithm::IdkpPc)
    }

    /// Trains Ψ (Kolen-Pollack rule).
    pub fn trains_feedback(self) -> bool {
        matches!(self, Algorithm::Dkp | Algorithm::DkpPc | Algorithm::IdkpPc)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == key || a.name().replace('-', "") == key)
            .ok_or_else(|| config_err!("unknown algorithm {s:?}"))
    }
}

/// Order of hidden-layer updates inside one inference sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SweepOrder {
    /// All errors from the pre-sweep state, then all activities at once.
    #[default]
    Jacobi,
    /// Layers updated in place from the input side, each seeing the
    /// already-updated layer below.
    GaussSeidel,
}

impl FromStr for SweepOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jacobi" => Ok(SweepOrder::Jacobi),
            "gauss-seidel" | "gaussseidel" | "gauss_seidel" => Ok(SweepOrder::GaussSeidel),
            other => Err(config_err!("unknown sweep order {other:?}")),
        }
    }
}

impl fmt::Display for SweepOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepOrder::Jacobi => "jacobi",
            SweepOrder::GaussSeidel => "gauss-seidel",
        })
    }
}

/// What γ multiplies in an activity step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ActivityStep {
    /// Each sample's activities move by γ·(−∂F_n/∂φ_n).
    #[default]
    PerSample,
    /// γ applies to the gradient of the batch-mean energy, so each sample
    /// moves by γ/B. This is what autograd on a mean-reduced loss does.
    BatchMean,
}

impl FromStr for ActivityStep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sample" | "per-sample" => Ok(ActivityStep::PerSample),
            "batch-mean" | "mean" => Ok(ActivityStep::BatchMean),
            other => Err(config_err!("unknown activity step reduction {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    /// Activity learning rate γ.
    pub gamma: f64,
    /// Inference sweeps T.
    pub steps: usize,
    pub sweep: SweepOrder,
    pub activity_step: ActivityStep,
}

impl LearnerConfig {
    pub fn new(algorithm: Algorithm, gamma: f64, steps: usize) -> Self {
        Self { algorithm, gamma, steps, sweep: SweepOrder::Jacobi, activity_step: ActivityStep::PerSample }
    }

    /// Per-sample activity step for a batch of `batch` samples.
    pub fn activity_rate(&self, batch: usize) -> f64 {
        match self.activity_step {
            ActivityStep::PerSample => self.gamma,
            ActivityStep::BatchMean => self.gamma / batch.max(1) as f64,
        }
    }

    /// Configuration-level checks. The step functions themselves accept any
    /// finite γ ≥ 0 and T ≥ 0, which the frozen-activity checks rely on.
    pub fn validate(&self) -> Result<()> {
        if self.algorithm.is_pc_family() {
            if !(self.gamma > 0.0 && self.gamma < 1.0) {
                return Err(config_err!("activity learning rate must lie in (0, 1), got {}", self.gamma));
            }
            if self.steps == 0 {
                return Err(config_err!("{} needs at least one inference step", self.algorithm));
            }
        }
        Ok(())
    }
}

pub(crate) fn enter(ledger: Option<&FlopLedger>, phase: Phase) {
    if let Some(l) = ledger {
        l.enter(phase);
    }
}
