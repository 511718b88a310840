use crate::error::{dim_err, Error, Result};
use crate::netgraph::Network;
use crate::numkit::{Scalar, Tensor};
use crate::optim::Optimizer;

/// Update directions produced by one learner step.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet<T> {
    /// One tensor per trainable layer, shaped like Θ_ℓ.
    pub forward: Vec<Tensor<T>>,
    /// Present only when the network carries biases.
    pub bias: Option<Vec<Tensor<T>>>,
    /// One tensor per Ψ_ℓ when the learner trains feedback.
    pub feedback: Option<Vec<Tensor<T>>>,
}

impl<T: Scalar> GradientSet<T> {
    pub fn new(forward: Vec<Tensor<T>>, bias: Option<Vec<Tensor<T>>>) -> Self {
        Self { forward, bias, feedback: None }
    }

    pub fn is_finite(&self) -> bool {
        self.forward.iter().chain(self.bias.iter().flatten()).chain(self.feedback.iter().flatten()).all(Tensor::is_finite)
    }

    /// Element-wise sum of two sets with identical structure.
    pub fn add(&self, other: &Self) -> Result<Self> {
        let sum = |a: &[Tensor<T>], b: &[Tensor<T>]| -> Result<Vec<Tensor<T>>> {
            if a.len() != b.len() {
                return Err(dim_err!("gradient sets differ in length"));
            }
            a.iter().zip(b).map(|(x, y)| x.add(y)).collect()
        };
        let opt = |a: &Option<Vec<Tensor<T>>>, b: &Option<Vec<Tensor<T>>>| -> Result<Option<Vec<Tensor<T>>>> {
            match (a, b) {
                (Some(a), Some(b)) => Ok(Some(sum(a, b)?)),
                (None, None) => Ok(None),
                (Some(a), None) | (None, Some(a)) => Ok(Some(a.clone())),
            }
        };
        Ok(Self { forward: sum(&self.forward, &other.forward)?, bias: opt(&self.bias, &other.bias)?, feedback: opt(&self.feedback, &other.feedback)? })
    }

    /// Applies forward (and bias) directions to the network.
    pub fn apply_forward(&self, net: &mut Network<T>, opt: &mut Optimizer<T>, lr: f64) -> Result<()> {
        let check = |g: &[Tensor<T>], n: usize| {
            if g.len() != n {
                return Err(dim_err!("{} gradients for {n} parameters", g.len()));
            }
            Ok(())
        };
        check(&self.forward, net.depth())?;
        if !self.forward.iter().chain(self.bias.iter().flatten()).all(Tensor::is_finite) {
            return Err(Error::Numerics("non-finite forward gradient".into()));
        }
        // weights and biases form one parameter set for the optimizer
        let mut params: Vec<&mut Tensor<T>> = Vec::new();
        let mut grads: Vec<&Tensor<T>> = self.forward.iter().collect();
        let (weights, biases) = net.params_mut();
        params.extend(weights.iter_mut());
        if let (Some(b), Some(gb)) = (biases, &self.bias) {
            check(gb, b.len())?;
            params.extend(b.iter_mut());
            grads.extend(gb.iter());
        }
        opt.step_with_lr(params.into_iter().zip(grads), lr)
    }

    /// Applies feedback directions to Ψ. A set without feedback is a no-op.
    pub fn apply_feedback(&self, net: &mut Network<T>, opt: &mut Optimizer<T>, lr: f64) -> Result<()> {
        let Some(g) = &self.feedback else { return Ok(()) };
        let psi = net.feedback_mut().ok_or_else(|| crate::error::config_err!("network has no feedback to update"))?;
        if g.len() != psi.len() {
            return Err(dim_err!("{} feedback gradients for {} matrices", g.len(), psi.len()));
        }
        opt.step_with_lr(psi.iter_mut().zip(g.iter()), lr)
    }
}
