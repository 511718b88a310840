use std::io::Write;
use std::path::Path;

use super::report::csv_file;
use crate::error::Result;
use crate::learners::{LearnerConfig, Trainer, TrainerConfig};
use crate::netgraph::Network;
use crate::numkit::{streams, FlopLedger, Initializer, LedgerSummary, Phase, Rng, Scalar, Tensor};
use crate::optim::{OptimConfig, Schedule};

/// MACs of one complete parameter update on a single sample: forward pass
/// (or forward initialization), error transport, inference and every forward
/// and feedback weight update. Counts depend only on shapes, `cfg` and T.
///
/// Feedback matrices are attached to a copy of the network when the
/// learner needs them and `net` has none.
pub fn flop_report<T: Scalar>(net: &Network<T>, cfg: &LearnerConfig) -> Result<LedgerSummary> {
    let mut net = net.clone();
    let algo = cfg.algorithm;
    if algo.needs_feedback() && net.feedback().is_none() {
        net.attach_feedback(Initializer::XavierUniform, &mut Rng::seed(0).fork(streams::FEEDBACK_INIT))?;
    }
    let sgd = OptimConfig::sgd(0.01);
    let mut tc = TrainerConfig::new(*cfg, sgd, Schedule::Constant { lr: 0.01 });
    if algo.trains_feedback() {
        tc = tc.with_feedback(sgd, Schedule::Constant { lr: 0.01 });
    }
    let mut trainer = Trainer::new(net, tc)?;
    let mut shape = vec![1];
    shape.extend_from_slice(trainer.net().input_shape());
    let x = Tensor::filled(&shape, T::of(0.5))?;
    let mut y = Tensor::zeros(&[1, trainer.net().output_size()])?;
    y.data_mut()[0] = T::one();
    let ledger = FlopLedger::new();
    trainer.train_batch(&x, &y, Some(&ledger))?;
    Ok(ledger.snapshot())
}

/// Rows `phase,macs,flops` for every phase followed by a `total` row.
pub fn write_flops_csv(summary: &LedgerSummary, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv_file(path, "phase,macs,flops")?;
    for p in Phase::ALL {
        writeln!(w, "{},{},{}", p.name(), summary.macs(p), summary.flops(p))?;
    }
    writeln!(w, "total,{},{}", summary.total_macs(), summary.total_flops())?;
    w.flush()?;
    Ok(())
}
