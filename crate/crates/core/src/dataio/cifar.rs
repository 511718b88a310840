//! CIFAR-10 binary batches: records of one label byte followed by
//! 3·32·32 channel-major pixel bytes.

use std::path::Path;

use super::dataset::{Dataset, Targets};
use crate::error::{format_err, Result};
use crate::numkit::{Scalar, Tensor};

const PIXELS: usize = 3 * 32 * 32;

pub fn parse_cifar<T: Scalar>(bytes: &[u8]) -> Result<Dataset<T>> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(PIXELS + 1) {
        return Err(format_err!("CIFAR batch of {} bytes is not a whole number of records", bytes.len()));
    }
    let n = bytes.len() / (PIXELS + 1);
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * PIXELS);
    for rec in bytes.chunks_exact(PIXELS + 1) {
        labels.push(rec[0] as usize);
        data.extend(rec[1..].iter().map(|&p| T::of(p as f64 / 255.0)));
    }
    Dataset::new(Tensor::from_vec(&[n, 3, 32, 32], data)?, Targets::Classes { labels, n_classes: 10 })
}

/// Concatenation of one or more binary batch files.
pub fn load_cifar10<T: Scalar>(paths: &[impl AsRef<Path>]) -> Result<Dataset<T>> {
    let mut bytes = Vec::new();
    for p in paths {
        bytes.extend(std::fs::read(p)?);
    }
    parse_cifar(&bytes)
}
