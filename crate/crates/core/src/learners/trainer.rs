use super::backprop::{bp_from_trace, direct_from_trace, squared_error};
use super::dkppc::{dkppc_step, IdkpPcSession, Phase1};
use super::pc::{pc_step, IpcSession};
use super::{enter, Algorithm, GradientSet, LearnerConfig};
use crate::error::{config_err, Error, Result};
use crate::netgraph::Network;
use crate::numkit::{FlopLedger, Phase, Scalar, Tensor};
use crate::optim::{OptimConfig, Optimizer, Schedule};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainerConfig {
    pub learner: LearnerConfig,
    pub forward: OptimConfig,
    pub forward_schedule: Schedule,
    /// Required when the algorithm trains Ψ.
    pub feedback: Option<(OptimConfig, Schedule)>,
    /// Ablation: skip the inference-phase forward update of DKP-PC, keeping
    /// only the phase-1 step.
    pub skip_pc_forward: bool,
    /// Ablation: keep Ψ frozen even for algorithms that would train it.
    pub freeze_feedback: bool,
    /// DKP-PC family: take the phase-1 step as plain Θ ← Θ − α·g at the
    /// scheduled forward rate instead of through the forward optimizer.
    pub raw_phase1: bool,
}

impl TrainerConfig {
    pub fn new(learner: LearnerConfig, forward: OptimConfig, forward_schedule: Schedule) -> Self {
        Self { learner, forward, forward_schedule, feedback: None, skip_pc_forward: false, freeze_feedback: false, raw_phase1: false }
    }

    pub fn with_feedback(mut self, cfg: OptimConfig, schedule: Schedule) -> Self {
        self.feedback = Some((cfg, schedule));
        self
    }
}

#[derive(Clone, Debug)]
pub struct StepReport<T> {
    /// Batch-mean squared output error of the pre-step network.
    pub loss: f64,
    /// Free energy at the end of inference (0 for non-PC learners).
    pub energy: f64,
    /// Instantaneous forward gradients of the step, before any optimizer
    /// transformation. For DKP-PC this is the phase-1 plus phase-3 sum; for
    /// incremental learners, the sum over sweeps.
    pub forward_grads: GradientSet<T>,
}

/// Owns a network and its optimizers and advances them one batch at a time.
/// Schedules are indexed by the number of batches seen.
#[derive(Clone, Debug)]
pub struct Trainer<T> {
    net: Network<T>,
    cfg: TrainerConfig,
    fw_opt: Optimizer<T>,
    fb_opt: Option<(Optimizer<T>, Schedule)>,
    batches: u64,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(net: Network<T>, cfg: TrainerConfig) -> Result<Self> {
        let algo = cfg.learner.algorithm;
        cfg.learner.validate()?;
        cfg.forward_schedule.validate()?;
        if algo.needs_feedback() && net.depth() > 1 {
            net.require_feedback(algo.name())?;
        }
        let fb_opt = match (&cfg.feedback, algo.trains_feedback() && !cfg.freeze_feedback) {
            (Some((c, s)), true) => {
                s.validate()?;
                Some((Optimizer::new(*c)?, *s))
            }
            (None, true) => return Err(config_err!("{algo} trains feedback weights but no feedback optimizer was given")),
            (_, false) => None,
        };
        let fw_opt = Optimizer::new(cfg.forward)?;
        Ok(Self { net, cfg, fw_opt, fb_opt, batches: 0 })
    }

    pub fn net(&self) -> &Network<T> {
        &self.net
    }

    pub fn into_net(self) -> Network<T> {
        self.net
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.cfg
    }

    pub fn batches_seen(&self) -> u64 {
        self.batches
    }

    pub fn forward_lr(&self) -> f64 {
        self.cfg.forward_schedule.lr_at(self.batches)
    }

    fn apply_feedback(&mut self, g: &GradientSet<T>) -> Result<()> {
        if let Some((opt, sched)) = &mut self.fb_opt {
            let lr = sched.lr_at(self.batches);
            g.apply_feedback(&mut self.net, opt, lr)?;
        }
        Ok(())
    }

    pub fn train_batch(&mut self, x: &Tensor<T>, y: &Tensor<T>, ledger: Option<&FlopLedger>) -> Result<StepReport<T>> {
        let lr = self.forward_lr();
        let learner = self.cfg.learner;
        let report = match learner.algorithm {
            Algorithm::Bp | Algorithm::Dfa | Algorithm::Dkp => {
                enter(ledger, Phase::Forward);
                let trace = self.net.forward(x, ledger)?;
                let loss = squared_error(trace.output(), y)?;
                let g = match learner.algorithm {
                    Algorithm::Bp => bp_from_trace(&self.net, &trace, y, ledger)?,
                    algo => direct_from_trace(&self.net, &trace, y, algo == Algorithm::Dkp, ledger)?,
                };
                g.apply_forward(&mut self.net, &mut self.fw_opt, lr)?;
                self.apply_feedback(&g)?;
                StepReport { loss, energy: 0.0, forward_grads: GradientSet { feedback: None, ..g } }
            }
            Algorithm::Pc => {
                let (g, _, trace) = pc_step(&self.net, x, y, &learner, ledger)?;
                g.apply_forward(&mut self.net, &mut self.fw_opt, lr)?;
                StepReport { loss: trace.energy[0], energy: *trace.energy.last().expect("T+1 entries"), forward_grads: g }
            }
            Algorithm::Ipc => {
                let mut s = IpcSession::new(&self.net, x, y, &learner, ledger)?;
                let mut total: Option<GradientSet<T>> = None;
                while let Some(g) = s.next_grad(&self.net, ledger)? {
                    g.apply_forward(&mut self.net, &mut self.fw_opt, lr)?;
                    total = Some(match total {
                        Some(t) => t.add(&g)?,
                        None => g,
                    });
                }
                let g = total.ok_or_else(|| config_err!("ipc needs at least one inference step"))?;
                StepReport { loss: s.trace.energy[0], energy: *s.trace.energy.last().expect("T+1 entries"), forward_grads: g }
            }
            Algorithm::DkpPc => {
                let phase1 = if self.cfg.raw_phase1 { Phase1::Raw { alpha: lr } } else { Phase1::Optimizer { opt: &mut self.fw_opt, lr } };
                let out = dkppc_step(&mut self.net, x, y, &learner, phase1, ledger)?;
                if !self.cfg.skip_pc_forward {
                    out.grads.apply_forward(&mut self.net, &mut self.fw_opt, lr)?;
                }
                self.apply_feedback(&out.grads)?;
                let pc = GradientSet { feedback: None, ..out.grads };
                let sum = if self.cfg.skip_pc_forward { out.phase1 } else { out.phase1.add(&pc)? };
                StepReport { loss: out.loss, energy: *out.trace.energy.last().expect("T+1 entries"), forward_grads: sum }
            }
            Algorithm::IdkpPc => {
                let phase1 = if self.cfg.raw_phase1 { Phase1::Raw { alpha: lr } } else { Phase1::Optimizer { opt: &mut self.fw_opt, lr } };
                let mut s = IdkpPcSession::new(&mut self.net, x, y, &learner, phase1, ledger)?;
                let mut total = s.phase1.clone();
                while let Some(g) = s.next_grad(&self.net, ledger)? {
                    if !self.cfg.skip_pc_forward {
                        g.apply_forward(&mut self.net, &mut self.fw_opt, lr)?;
                    }
                    total = total.add(&g)?;
                }
                let fb = GradientSet { forward: Vec::new(), bias: None, feedback: Some(s.finish(&self.net, ledger)?) };
                self.apply_feedback(&fb)?;
                StepReport { loss: s.loss, energy: *s.trace().energy.last().expect("T+1 entries"), forward_grads: total }
            }
        };
        if !report.loss.is_finite() {
            return Err(Error::Numerics(format!("non-finite loss at batch {}", self.batches)));
        }
        self.batches += 1;
        Ok(report)
    }
}
