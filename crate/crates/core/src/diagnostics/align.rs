use std::io::Write;
use std::path::Path;

use super::report::csv_file;
use crate::error::Result;
use crate::learners::{bp_step, Trainer};
use crate::numkit::{Scalar, Tensor};

/// uᵀv / (‖u‖‖v‖) in f64, clamped to [−1, 1]. `None` when either vector has
/// zero norm, so undefined points can be left out of averages.
pub fn cosine<T: Scalar>(u: &[T], v: &[T]) -> Option<f64> {
    assert_eq!(u.len(), v.len(), "cosine of vectors with different lengths");
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        let (a, b) = (a.f64(), b.f64());
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    // sqrt(nu·nv) rather than sqrt(nu)·sqrt(nv): identical inputs then give exactly 1
    (nu > 0.0 && nv > 0.0).then(|| (dot / (nu * nv).sqrt()).clamp(-1.0, 1.0))
}

/// Exponential moving average with coefficient 2 / (W + 1). Undefined
/// observations leave it unchanged; the first defined one seeds it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ema {
    pub alpha: f64,
    pub value: Option<f64>,
}

impl Ema {
    pub fn with_window(window: usize) -> Self {
        Self { alpha: 2.0 / (window as f64 + 1.0), value: None }
    }

    pub fn update(&mut self, x: Option<f64>) -> Option<f64> {
        if let Some(x) = x {
            self.value = Some(match self.value {
                Some(v) => v + self.alpha * (x - v),
                None => x,
            });
        }
        self.value
    }
}

/// Per-batch, per-layer cosine between a learner's instantaneous forward
/// gradient and the BP gradient of the same pre-step network and batch.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignTrace {
    pub window: usize,
    /// `raw[batch][layer]`.
    pub raw: Vec<Vec<Option<f64>>>,
    /// EMA of `raw` along the batch axis.
    pub ema: Vec<Vec<Option<f64>>>,
}

impl AlignTrace {
    pub fn new(window: usize) -> Self {
        Self { window, raw: Vec::new(), ema: Vec::new() }
    }

    pub fn batches(&self) -> usize {
        self.raw.len()
    }

    pub fn layers(&self) -> usize {
        self.raw.first().map_or(0, Vec::len)
    }

    pub fn push(&mut self, cosines: Vec<Option<f64>>) {
        let mut emas: Vec<Ema> = match self.ema.last() {
            Some(prev) => prev.iter().map(|&value| Ema { value, ..Ema::with_window(self.window) }).collect(),
            None => vec![Ema::with_window(self.window); cosines.len()],
        };
        let smoothed = emas.iter_mut().zip(&cosines).map(|(e, &c)| e.update(c)).collect();
        self.raw.push(cosines);
        self.ema.push(smoothed);
    }

    /// Mean of the defined EMA values of `layer` over batches `start..end`.
    pub fn window_mean(&self, layer: usize, start: usize, end: usize) -> Option<f64> {
        let vals: Vec<f64> = self.ema.get(start..end.min(self.ema.len()))?.iter().filter_map(|row| row[layer]).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Rows `batch,layer,cosine_raw,cosine_ema`; layers count from 1 and
    /// undefined values are left empty.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv_file(path, "batch,layer,cosine_raw,cosine_ema")?;
        let cell = |v: Option<f64>| v.map(|v| format!("{v}")).unwrap_or_default();
        for (b, (raw, ema)) in self.raw.iter().zip(&self.ema).enumerate() {
            for (l, (r, e)) in raw.iter().zip(ema).enumerate() {
                writeln!(w, "{b},{},{},{}", l + 1, cell(*r), cell(*e))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Trains with `trainer` over `batches`, recording at every step the
/// cosine between the trainer's forward gradient and BP's on the network as
/// it was before the step.
pub fn align_run<T: Scalar, I>(trainer: &mut Trainer<T>, batches: I, window: usize) -> Result<AlignTrace>
where
    I: IntoIterator<Item = Result<(Tensor<T>, Tensor<T>)>>,
{
    let mut trace = AlignTrace::new(window);
    for batch in batches {
        let (x, y) = batch?;
        let reference = bp_step(trainer.net(), &x, &y, None)?;
        let report = trainer.train_batch(&x, &y, None)?;
        let cosines = report.forward_grads.forward.iter().zip(&reference.forward).map(|(g, r)| cosine(g.data(), r.data())).collect();
        trace.push(cosines);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_cases() {
        let u = [0.3, -1.2, 2.0];
        assert_eq!(cosine(&u, &u), Some(1.0));
        assert_eq!(cosine(&u, &u.map(|v: f64| -v)), Some(-1.0));
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), Some(0.0));
        assert_eq!(cosine(&[0.0, 0.0], &[0.0, 1.0]), None);
    }

    #[test]
    fn ema_skips_undefined_and_seeds_on_first_value() {
        let mut e = Ema::with_window(3);
        assert_eq!(e.alpha, 0.5);
        assert_eq!(e.update(None), None);
        assert_eq!(e.update(Some(1.0)), Some(1.0));
        assert_eq!(e.update(Some(0.0)), Some(0.5));
        assert_eq!(e.update(None), Some(0.5));
    }

    #[test]
    fn window_mean_ignores_gaps() {
        let mut t = AlignTrace::new(1);
        t.push(vec![None]);
        t.push(vec![Some(0.2)]);
        t.push(vec![Some(0.4)]);
        // window 1 makes the EMA follow the raw values
        assert!((t.window_mean(0, 0, 3).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(t.window_mean(0, 0, 1), None);
    }
}
