use std::f64::consts::PI;

use crate::error::{config_err, Result};

/// Learning rate as a function of the optimizer step (counted per batch).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Schedule {
    Constant { lr: f64 },
    /// Linear ramp 0 → lr over `warmup` steps, then half-cosine lr → min_lr
    /// reached at `total`; flat at min_lr afterwards. No restarts.
    WarmupCosine { lr: f64, warmup: u64, total: u64, min_lr: f64 },
    /// lr · gamma^step.
    Exponential { lr: f64, gamma: f64 },
}

impl Schedule {
    pub fn warmup_cosine(lr: f64, warmup: u64, total: u64, min_lr: f64) -> Result<Self> {
        let s = Schedule::WarmupCosine { lr, warmup, total, min_lr };
        s.validate()?;
        Ok(s)
    }

    pub fn exponential(lr: f64, gamma: f64) -> Result<Self> {
        let s = Schedule::Exponential { lr, gamma };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Schedule::Constant { lr } if lr >= 0.0 && lr.is_finite() => Ok(()),
            Schedule::WarmupCosine { lr, warmup, total, min_lr } => {
                if warmup > total {
                    return Err(config_err!("warmup steps {warmup} exceed total steps {total}"));
                }
                if !(min_lr >= 0.0 && min_lr <= lr) {
                    return Err(config_err!("min_lr {min_lr} must lie in [0, lr]"));
                }
                Ok(())
            }
            Schedule::Exponential { gamma, .. } if gamma > 0.0 && gamma <= 1.0 => Ok(()),
            Schedule::Exponential { gamma, .. } => Err(config_err!("fb-gamma must lie in (0, 1], got {gamma}")),
            Schedule::Constant { lr } => Err(config_err!("bad constant learning rate {lr}")),
        }
    }

    pub fn base_lr(&self) -> f64 {
        match *self {
            Schedule::Constant { lr } | Schedule::WarmupCosine { lr, .. } | Schedule::Exponential { lr, .. } => lr,
        }
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        match *self {
            Schedule::Constant { lr } => lr,
            Schedule::WarmupCosine { lr, warmup, total, min_lr } => {
                if step < warmup {
                    lr * step as f64 / warmup as f64
                } else if step >= total {
                    if total == warmup {
                        lr
                    } else {
                        min_lr
                    }
                } else {
                    let progress = (step - warmup) as f64 / (total - warmup) as f64;
                    min_lr + (lr - min_lr) * 0.5 * (1.0 + (PI * progress).cos())
                }
            }
            Schedule::Exponential { lr, gamma } => lr * gamma.powf(step as f64),
        }
    }
}
