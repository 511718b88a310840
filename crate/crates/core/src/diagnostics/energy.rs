use std::io::Write;
use std::path::Path;

use super::report::csv_file;
use crate::error::{config_err, Result};
use crate::learners::{pc_infer, Algorithm, IdkpPcSession, IpcSession, LearnerConfig, Phase1, dkppc_step};
use crate::netgraph::Network;
use crate::numkit::{Scalar, Tensor};
use crate::optim::{OptimConfig, Optimizer};

/// Free energy before inference and after each of the T sweeps on one
/// batch, computed on a copy of `net`. The incremental learners take an SGD
/// step of size `lr` after every sweep; the DKP-PC variants use `lr` for
/// their raw phase-1 step as well.
pub fn energy_trace<T: Scalar>(net: &Network<T>, x: &Tensor<T>, y: &Tensor<T>, cfg: &LearnerConfig, lr: f64) -> Result<Vec<f64>> {
    let mut net = net.clone();
    let mut opt = Optimizer::new(OptimConfig::sgd(0.5))?;
    let trace = match cfg.algorithm {
        Algorithm::Pc => pc_infer(&net, x, y, cfg, None)?.1,
        Algorithm::DkpPc => dkppc_step(&mut net, x, y, cfg, Phase1::Raw { alpha: lr }, None)?.trace,
        Algorithm::Ipc => {
            let mut s = IpcSession::new(&net, x, y, cfg, None)?;
            while let Some(g) = s.next_grad(&net, None)? {
                g.apply_forward(&mut net, &mut opt, lr)?;
            }
            s.trace
        }
        Algorithm::IdkpPc => {
            let mut s = IdkpPcSession::new(&mut net, x, y, cfg, Phase1::Raw { alpha: lr }, None)?;
            while let Some(g) = s.next_grad(&net, None)? {
                g.apply_forward(&mut net, &mut opt, lr)?;
            }
            s.trace().clone()
        }
        other => return Err(config_err!("{other} has no inference phase")),
    };
    Ok(trace.energy)
}

/// Rows `batch,t,free_energy`, one trace per batch.
pub fn write_energy_csv(traces: &[Vec<f64>], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv_file(path, "batch,t,free_energy")?;
    for (b, trace) in traces.iter().enumerate() {
        for (t, e) in trace.iter().enumerate() {
            writeln!(w, "{b},{t},{e:e}")?;
        }
    }
    w.flush()?;
    Ok(())
}
