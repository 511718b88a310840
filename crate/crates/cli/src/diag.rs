//! `lll diag`: one diagnostic per invocation, written as CSV (and PGM for the
//! error-propagation matrix) into the output directory.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lll_core::dataio::BatchPlan;
use lll_core::diagnostics::{align_run, energy_trace, flop_report, record_error_prop, write_energy_csv, write_flops_csv};
use lll_core::learners::Trainer;
use lll_core::numkit::{DType, Scalar};
use lll_core::{Error, Result};

use crate::config::ExperimentConfig;
use crate::runner::{build_network, load_data};

/// Energy traces are recorded on this many leading batches at most.
const ENERGY_BATCHES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiagKind {
    ErrorProp,
    Align,
    Energy,
    Flops,
}

impl DiagKind {
    pub const ALL: [DiagKind; 4] = [DiagKind::ErrorProp, DiagKind::Align, DiagKind::Energy, DiagKind::Flops];

    pub fn name(self) -> &'static str {
        match self {
            DiagKind::ErrorProp => "errorprop",
            DiagKind::Align => "align",
            DiagKind::Energy => "energy",
            DiagKind::Flops => "flops",
        }
    }
}

impl fmt::Display for DiagKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DiagKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DiagKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown diagnostic {s:?}; expected errorprop, align, energy or flops")))
    }
}

/// Runs one diagnostic and returns the files it wrote.
pub fn run_diag(kind: DiagKind, cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    match cfg.dtype()? {
        DType::F32 => run_typed::<f32>(kind, cfg, out_dir),
        DType::F64 => run_typed::<f64>(kind, cfg, out_dir),
    }
}

fn run_typed<T: Scalar>(kind: DiagKind, cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let data = load_data::<T>(cfg)?;
    let net = build_network(cfg, &data)?;
    let mut learner = cfg.learner()?;
    let plan = BatchPlan::new(cfg.seed, cfg.batch_size, data.train.len())?;
    match kind {
        DiagKind::ErrorProp => {
            // long enough for the output error to reach the first layer
            learner.steps = cfg.errorprop_steps.unwrap_or(learner.steps.max(net.depth()));
            let (x, y) = data.train.batch(&plan.batches(0)[0])?;
            let m = record_error_prop(&net, &x, &y, &learner, cfg.fw_lr)?;
            let (csv, pgm) = (out_dir.join("errorprop.csv"), out_dir.join("errorprop.pgm"));
            m.write_csv(&csv)?;
            m.write_pgm(&pgm)?;
            Ok(vec![csv, pgm])
        }
        DiagKind::Align => {
            let mut trainer = Trainer::new(net, cfg.trainer_config(plan.batches_per_epoch())?)?;
            let batches = (0u64..)
                .flat_map(|epoch| plan.batches(epoch))
                .take(cfg.diag_batches)
                .map(|idx| data.train.batch(&idx));
            let trace = align_run(&mut trainer, batches, cfg.align_window)?;
            let csv = out_dir.join("align.csv");
            trace.write_csv(&csv)?;
            Ok(vec![csv])
        }
        DiagKind::Energy => {
            let traces = plan
                .batches(0)
                .iter()
                .take(cfg.diag_batches.min(ENERGY_BATCHES))
                .map(|idx| {
                    let (x, y) = data.train.batch(idx)?;
                    energy_trace(&net, &x, &y, &learner, cfg.fw_lr)
                })
                .collect::<Result<Vec<_>>>()?;
            let csv = out_dir.join("energy.csv");
            write_energy_csv(&traces, &csv)?;
            Ok(vec![csv])
        }
        DiagKind::Flops => {
            let csv = out_dir.join("flops.csv");
            write_flops_csv(&flop_report(&net, &learner)?, &csv)?;
            Ok(vec![csv])
        }
    }
}
