use std::fmt;
use std::str::FromStr;

use crate::error::{config_err, dim_err, Error, Result};
use crate::numkit::{Scalar, Tensor};

/// Momentum decay rate of the Nesterov schedule in NAdam.
const NADAM_PSI: f64 = 0.004;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimKind {
    /// θ ← θ − α(g + λθ)
    Sgd,
    /// Adam with L2 decay folded into the gradient.
    Adam,
    /// Adam with decoupled decay θ ← (1 − αλ)θ applied before the moment step.
    AdamW,
    /// Nesterov Adam with momentum schedule μ_t = β1(1 − ½·0.96^{tψ}); L2 decay.
    Nadam,
}

impl OptimKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimKind::Sgd => "sgd",
            OptimKind::Adam => "adam",
            OptimKind::AdamW => "adamw",
            OptimKind::Nadam => "nadam",
        }
    }
}

impl fmt::Display for OptimKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimKind::Sgd),
            "adam" => Ok(OptimKind::Adam),
            "adamw" => Ok(OptimKind::AdamW),
            "nadam" => Ok(OptimKind::Nadam),
            other => Err(config_err!("unknown optimizer {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimConfig {
    pub kind: OptimKind,
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
}

impl OptimConfig {
    pub fn new(kind: OptimKind, lr: f64) -> Self {
        Self { kind, lr, betas: (0.9, 0.999), eps: 1e-8, weight_decay: 0.0 }
    }

    pub fn sgd(lr: f64) -> Self {
        Self::new(OptimKind::Sgd, lr)
    }

    pub fn with_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr < 1.0) {
            return Err(config_err!("learning rate must lie in (0, 1), got {}", self.lr));
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(config_err!("betas must lie in [0, 1), got {:?}", self.betas));
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(config_err!("eps must be positive and weight decay non-negative"));
        }
        Ok(())
    }
}

/// Moment buffers for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<T> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimState<T> {
    pub step: u64,
    pub moments: Vec<Moments<T>>,
    /// Running product Π μ_i of the NAdam momentum schedule.
    pub mu_product: f64,
}

/// One optimizer instance owns the state of one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer<T> {
    cfg: OptimConfig,
    state: OptimState<T>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(cfg: OptimConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, state: OptimState { step: 0, moments: Vec::new(), mu_product: 1.0 } })
    }

    pub fn config(&self) -> &OptimConfig {
        &self.cfg
    }

    pub fn state(&self) -> &OptimState<T> {
        &self.state
    }

    pub fn steps(&self) -> u64 {
        self.state.step
    }

    /// One update at the configured learning rate.
    pub fn step<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a mut Tensor<T>, &'a Tensor<T>)>) -> Result<()> {
        self.step_with_lr(pairs, self.cfg.lr)
    }

    /// One update with an explicit learning rate (as produced by a schedule).
    /// Fails before touching any parameter if shapes disagree or a gradient
    /// is not finite.
    pub fn step_with_lr<'a>(
        &mut self,
        pairs: impl IntoIterator<Item = (&'a mut Tensor<T>, &'a Tensor<T>)>,
        lr: f64,
    ) -> Result<()> {
        let mut pairs: Vec<(&mut Tensor<T>, &Tensor<T>)> = pairs.into_iter().collect();
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(config_err!("learning rate must be finite and non-negative, got {lr}"));
        }
        for (i, (p, g)) in pairs.iter().enumerate() {
            if p.shape() != g.shape() {
                return Err(dim_err!("parameter {i}: shape {:?} vs gradient {:?}", p.shape(), g.shape()));
            }
            if !g.is_finite() {
                return Err(Error::Numerics(format!("non-finite gradient for parameter {i}")));
            }
        }
        if self.cfg.kind != OptimKind::Sgd {
            if self.state.moments.is_empty() {
                self.state.moments =
                    pairs.iter().map(|(p, _)| Moments { m: p.zeros_like(), v: p.zeros_like() }).collect();
            } else if self.state.moments.len() != pairs.len()
                || self.state.moments.iter().zip(&pairs).any(|(m, (p, _))| m.m.shape() != p.shape())
            {
                return Err(dim_err!("parameter set changed shape between optimizer steps"));
            }
        }
        self.state.step += 1;
        let t = self.state.step;
        let OptimConfig { kind, betas: (b1, b2), eps, weight_decay: wd, .. } = self.cfg;
        match kind {
            OptimKind::Sgd => {
                // θ − lr·(g + wd·θ) written as a shrink so lr = wd = 1 lands on −g exactly
                let (a, shrink) = (T::of(lr), T::of(1.0 - lr * wd));
                for (p, g) in pairs.iter_mut() {
                    for (pv, &gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *pv = shrink * *pv - a * gv;
                    }
                }
            }
            OptimKind::Adam | OptimKind::AdamW => {
                let bc1 = 1.0 - b1.powi(t as i32);
                let bc2 = 1.0 - b2.powi(t as i32);
                let step_size = T::of(lr / bc1);
                let bc2_sqrt = T::of(bc2.sqrt());
                let (b1t, b2t, epst) = (T::of(b1), T::of(b2), T::of(eps));
                let decoupled = kind == OptimKind::AdamW;
                let shrink = T::of(1.0 - lr * wd);
                let l2 = if decoupled { T::zero() } else { T::of(wd) };
                for ((p, g), mom) in pairs.iter_mut().zip(self.state.moments.iter_mut()) {
                    let (m, v) = (mom.m.data_mut(), mom.v.data_mut());
                    for (i, (pv, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        if decoupled {
                            *pv *= shrink;
                        }
                        let gv = gv + l2 * *pv;
                        m[i] = b1t * m[i] + (T::one() - b1t) * gv;
                        v[i] = b2t * v[i] + (T::one() - b2t) * gv * gv;
                        let denom = v[i].sqrt() / bc2_sqrt + epst;
                        *pv -= step_size * m[i] / denom;
                    }
                }
            }
            OptimKind::Nadam => {
                let mu = b1 * (1.0 - 0.5 * 0.96f64.powf(t as f64 * NADAM_PSI));
                let mu_next = b1 * (1.0 - 0.5 * 0.96f64.powf((t + 1) as f64 * NADAM_PSI));
                self.state.mu_product *= mu;
                let mu_prod = self.state.mu_product;
                let bc2 = 1.0 - b2.powi(t as i32);
                let c_grad = T::of(lr * (1.0 - mu) / (1.0 - mu_prod));
                let c_mom = T::of(lr * mu_next / (1.0 - mu_prod * mu_next));
                let bc2_sqrt = T::of(bc2.sqrt());
                let (b1t, b2t, epst, l2) = (T::of(b1), T::of(b2), T::of(eps), T::of(wd));
                for ((p, g), mom) in pairs.iter_mut().zip(self.state.moments.iter_mut()) {
                    let (m, v) = (mom.m.data_mut(), mom.v.data_mut());
                    for (i, (pv, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        let gv = gv + l2 * *pv;
                        m[i] = b1t * m[i] + (T::one() - b1t) * gv;
                        v[i] = b2t * v[i] + (T::one() - b2t) * gv * gv;
                        let denom = v[i].sqrt() / bc2_sqrt + epst;
                        *pv -= c_grad * gv / denom + c_mom * m[i] / denom;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::from_vec(&[1], vec![v]).unwrap()
    }

    #[test]
    fn sgd_zero_grad_no_decay_is_identity() {
        let mut opt = Optimizer::<f64>::new(OptimConfig::sgd(0.1)).unwrap();
        let mut p = scalar(1.5);
        opt.step([(&mut p, &scalar(0.0))]).unwrap();
        assert_eq!(p.data(), &[1.5]);
    }

    #[test]
    fn nan_gradient_leaves_params_untouched() {
        let mut opt = Optimizer::<f64>::new(OptimConfig::new(OptimKind::Adam, 0.1)).unwrap();
        let (mut a, mut b) = (scalar(1.0), scalar(2.0));
        let (ga, gb) = (scalar(0.3), scalar(f64::NAN));
        let err = opt.step([(&mut a, &ga), (&mut b, &gb)]).unwrap_err();
        assert!(matches!(err, Error::Numerics(_)));
        assert_eq!((a.data()[0], b.data()[0]), (1.0, 2.0));
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn lr_outside_unit_interval_rejected() {
        assert!(Optimizer::<f64>::new(OptimConfig::sgd(0.0)).is_err());
        assert!(Optimizer::<f64>::new(OptimConfig::sgd(1.0)).is_err());
    }

    #[test]
    fn kind_names_parse() {
        for k in [OptimKind::Sgd, OptimKind::Adam, OptimKind::AdamW, OptimKind::Nadam] {
            assert_eq!(k.name().parse::<OptimKind>().unwrap(), k);
        }
    }
}
