use std::io::Write;
use std::path::Path;

use super::report::{csv_file, heatmap_pgm};
use crate::error::{config_err, Result};
use crate::learners::{dkppc_step, pc_infer, Algorithm, LearnerConfig, Phase1};
use crate::netgraph::Network;
use crate::numkit::{Scalar, Tensor};

/// ‖ε_ℓ(t)‖₂ over a whole batch for layers ℓ = 1..L (rows) and inference
/// steps t = 0..T (columns).
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorPropMatrix {
    /// `norms[ℓ − 1][t]`.
    pub norms: Vec<Vec<f64>>,
}

impl ErrorPropMatrix {
    /// Transposes per-step norms (`[t][ℓ − 1]`, as in an inference trace).
    pub fn from_steps(steps: &[Vec<f64>]) -> Self {
        let depth = steps.first().map_or(0, Vec::len);
        Self { norms: (0..depth).map(|l| steps.iter().map(|s| s[l]).collect()).collect() }
    }

    pub fn depth(&self) -> usize {
        self.norms.len()
    }

    /// Number of columns, T + 1.
    pub fn columns(&self) -> usize {
        self.norms.first().map_or(0, Vec::len)
    }

    /// Entry for layer ℓ ∈ 1..=L at step t.
    pub fn get(&self, layer: usize, t: usize) -> f64 {
        self.norms[layer - 1][t]
    }

    /// Largest entry strictly before each layer's arrival step t = L − ℓ.
    pub fn max_before_arrival(&self) -> f64 {
        let depth = self.depth();
        let mut worst = 0.0f64;
        for layer in 1..=depth {
            for t in 0..(depth - layer).min(self.columns()) {
                worst = worst.max(self.get(layer, t));
            }
        }
        worst
    }

    /// Smallest entry on the arrival anti-diagonal, over the layers whose
    /// arrival step lies inside the matrix. `None` if there is none.
    pub fn min_at_arrival(&self) -> Option<f64> {
        let depth = self.depth();
        (1..=depth).filter(|&l| depth - l < self.columns()).map(|l| self.get(l, depth - l)).reduce(f64::min)
    }

    /// PC delay pattern: zero (≤ `zero_tol`) before arrival, above
    /// `arrive_tol` at arrival.
    pub fn shows_delay(&self, zero_tol: f64, arrive_tol: f64) -> bool {
        self.max_before_arrival() <= zero_tol && self.min_at_arrival().is_some_and(|m| m > arrive_tol)
    }

    /// Every layer carries error at t = 0.
    pub fn first_column_positive(&self) -> bool {
        self.depth() > 0 && self.norms.iter().all(|row| row[0] > 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.norms.iter().flatten().all(|&v| v == 0.0)
    }

    /// Rows `layer,t,norm`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv_file(path, "layer,t,norm")?;
        for (l, row) in self.norms.iter().enumerate() {
            for (t, v) in row.iter().enumerate() {
                writeln!(w, "{},{t},{v:e}", l + 1)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Log-scaled heatmap with the output layer on top and t growing to the
    /// right; exact zeros are white.
    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows: Vec<Vec<f64>> = self.norms.iter().rev().cloned().collect();
        heatmap_pgm(path, &rows, 16)
    }
}

/// Runs a full inference phase on a copy of `net` and records every error
/// norm. PC starts from the forward-initialized state; DKP-PC first applies
/// a raw phase-1 step of size `alpha` to the copy.
pub fn record_error_prop<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    y: &Tensor<T>,
    cfg: &LearnerConfig,
    alpha: f64,
) -> Result<ErrorPropMatrix> {
    let trace = match cfg.algorithm {
        Algorithm::Pc | Algorithm::Ipc => pc_infer(net, x, y, cfg, None)?.1,
        Algorithm::DkpPc | Algorithm::IdkpPc => {
            let mut copy = net.clone();
            dkppc_step(&mut copy, x, y, cfg, Phase1::Raw { alpha }, None)?.trace
        }
        other => return Err(config_err!("error propagation is defined for PC learners, not {other}")),
    };
    Ok(ErrorPropMatrix::from_steps(&trace.eps_norms))
}
