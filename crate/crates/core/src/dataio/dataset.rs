use std::path::Path;

use crate::error::{dim_err, format_err, Error, Result};
use crate::netgraph::{Container, Record, RecordData};
use crate::numkit::{streams, Rng, Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub enum Targets<T> {
    /// Class ids in `[0, n_classes)`; batches carry one-hot rows.
    Classes { labels: Vec<usize>, n_classes: usize },
    /// Real-valued target rows `[N, d]`.
    Regression(Tensor<T>),
}

/// Inputs `[N, feature_shape…]` with one target per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    inputs: Tensor<T>,
    targets: Targets<T>,
}

/// `e_label` of length `n_classes`.
pub fn one_hot<T: Scalar>(label: usize, n_classes: usize) -> Result<Tensor<T>> {
    if label >= n_classes {
        return Err(Error::Range(format!("label {label} outside [0, {n_classes})")));
    }
    let mut v = vec![T::zero(); n_classes];
    v[label] = T::one();
    Tensor::from_vec(&[n_classes], v)
}

/// One-hot rows `[B, n_classes]`.
pub fn one_hot_batch<T: Scalar>(labels: &[usize], n_classes: usize) -> Result<Tensor<T>> {
    let mut v = vec![T::zero(); labels.len() * n_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return Err(Error::Range(format!("label {l} outside [0, {n_classes})")));
        }
        v[i * n_classes + l] = T::one();
    }
    Tensor::from_vec(&[labels.len(), n_classes], v)
}

impl<T: Scalar> Dataset<T> {
    pub fn new(inputs: Tensor<T>, targets: Targets<T>) -> Result<Self> {
        let n = inputs.shape()[0];
        match &targets {
            Targets::Classes { labels, n_classes } => {
                if labels.len() != n {
                    return Err(dim_err!("{n} inputs but {} labels", labels.len()));
                }
                if let Some(&bad) = labels.iter().find(|&&l| l >= *n_classes) {
                    return Err(Error::Range(format!("label {bad} outside [0, {n_classes})")));
                }
            }
            Targets::Regression(t) => {
                if t.shape()[0] != n {
                    return Err(dim_err!("{n} inputs but {} target rows", t.shape()[0]));
                }
            }
        }
        if !inputs.is_finite() {
            return Err(Error::Numerics("dataset inputs contain non-finite values".into()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs(&self) -> &Tensor<T> {
        &self.inputs
    }

    pub fn targets(&self) -> &Targets<T> {
        &self.targets
    }

    pub fn feature_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    pub fn feature_size(&self) -> usize {
        self.feature_shape().iter().product()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes { labels, .. } => Some(labels),
            Targets::Regression(_) => None,
        }
    }

    pub fn n_classes(&self) -> Option<usize> {
        match &self.targets {
            Targets::Classes { n_classes, .. } => Some(*n_classes),
            Targets::Regression(_) => None,
        }
    }

    /// Width of a target row.
    pub fn target_size(&self) -> usize {
        match &self.targets {
            Targets::Classes { n_classes, .. } => *n_classes,
            Targets::Regression(t) => t.len() / t.shape()[0],
        }
    }

    /// Overrides the class count (e.g. so train and test agree).
    pub fn with_classes(mut self, n: usize) -> Result<Self> {
        if let Targets::Classes { labels, .. } = &self.targets {
            let labels = labels.clone();
            self.targets = Targets::Classes { labels, n_classes: n };
        }
        let (inputs, targets) = (self.inputs, self.targets);
        Self::new(inputs, targets)
    }

    /// Inputs `[B, feature_shape…]` and target rows `[B, d]` for the indices.
    pub fn batch(&self, idx: &[usize]) -> Result<(Tensor<T>, Tensor<T>)> {
        let f = self.feature_size();
        let mut x = Vec::with_capacity(idx.len() * f);
        for &i in idx {
            if i >= self.len() {
                return Err(Error::Range(format!("sample {i} outside dataset of {}", self.len())));
            }
            x.extend_from_slice(&self.inputs.data()[i * f..(i + 1) * f]);
        }
        let mut shape = vec![idx.len()];
        shape.extend_from_slice(self.feature_shape());
        let x = Tensor::from_vec(&shape, x)?;
        let y = match &self.targets {
            Targets::Classes { labels, n_classes } => {
                let ls: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
                one_hot_batch(&ls, *n_classes)?
            }
            Targets::Regression(t) => {
                let d = self.target_size();
                let rows: Vec<T> = idx.iter().flat_map(|&i| t.data()[i * d..(i + 1) * d].iter().copied()).collect();
                Tensor::from_vec(&[idx.len(), d], rows)?
            }
        };
        Ok((x, y))
    }

    /// First `n` samples (all of them if `n` exceeds the size).
    pub fn head(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        let (x, _) = self.batch(&idx)?;
        let targets = match &self.targets {
            Targets::Classes { labels, n_classes } => Targets::Classes { labels: labels[..idx.len()].to_vec(), n_classes: *n_classes },
            Targets::Regression(_) => Targets::Regression(self.batch(&idx)?.1),
        };
        Self::new(x, targets)
    }

    /// (x − mean) / std applied to every input value.
    pub fn standardize(&mut self, mean: f64, std: f64) -> Result<()> {
        if !(std > 0.0) {
            return Err(crate::error::config_err!("standardization needs std > 0"));
        }
        let (m, s) = (T::of(mean), T::of(1.0 / std));
        self.inputs.map_inplace(|v| (v - m) * s);
        Ok(())
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        c.push(Record::tensor("inputs", &self.inputs));
        match &self.targets {
            Targets::Classes { labels, n_classes } => {
                c.push(Record {
                    name: "labels".into(),
                    shape: vec![labels.len()],
                    data: RecordData::I64(labels.iter().map(|&l| l as i64).collect()),
                });
                c.push(Record { name: "n_classes".into(), shape: vec![1], data: RecordData::I64(vec![*n_classes as i64]) });
            }
            Targets::Regression(t) => c.push(Record::tensor("targets", t)),
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let inputs = c.require("inputs")?.to_tensor()?;
        let targets = if let Some(t) = c.get("targets") {
            Targets::Regression(t.to_tensor()?)
        } else {
            let as_ints = |r: &Record| match &r.data {
                RecordData::I64(v) => Ok(v.clone()),
                _ => Err(format_err!("record {:?} must hold i64", r.name)),
            };
            let labels = as_ints(c.require("labels")?)?;
            let n = as_ints(c.require("n_classes")?)?;
            let n_classes = *n.first().ok_or_else(|| format_err!("empty n_classes record"))? as usize;
            let labels = labels
                .into_iter()
                .map(|l| usize::try_from(l).map_err(|_| Error::Range(format!("negative label {l}"))))
                .collect::<Result<Vec<_>>>()?;
            Targets::Classes { labels, n_classes }
        };
        Self::new(inputs, targets)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

/// Deterministic shuffled batching: epoch `e` visits a permutation that is a
/// pure function of (seed, e).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchPlan {
    pub seed: u64,
    pub batch_size: usize,
    pub n: usize,
}

impl BatchPlan {
    pub fn new(seed: u64, batch_size: usize, n: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(crate::error::config_err!("batch size must be positive"));
        }
        Ok(Self { seed, batch_size, n })
    }

    pub fn permutation(&self, epoch: u64) -> Vec<usize> {
        // golden-ratio stride keeps per-epoch seeds well separated
        let s = self.seed ^ epoch.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        Rng::seed(s).fork(streams::BATCHES).permutation(self.n)
    }

    /// Index lists of every batch in epoch order; the last may be short.
    pub fn batches(&self, epoch: u64) -> Vec<Vec<usize>> {
        self.permutation(epoch).chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.n.div_ceil(self.batch_size)
    }
}
