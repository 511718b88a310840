use super::dataset::{Dataset, Targets};
use crate::error::{config_err, Result};
use crate::numkit::{gemm, streams, Op, Rng, Scalar, Tensor};

/// `n` standard-normal inputs of width `d_in` with targets `A·x` for a
/// hidden Gaussian map `A ∈ R^{d_out × d_in}` (entries N(0, 1/d_in)).
/// Returns the dataset and `A`.
pub fn synth_linear<T: Scalar>(seed: u64, d_in: usize, d_out: usize, n: usize) -> Result<(Dataset<T>, Tensor<T>)> {
    if d_in == 0 || d_out == 0 || n == 0 {
        return Err(config_err!("synth_linear needs positive extents"));
    }
    let mut rng = Rng::seed(seed).fork(streams::SYNTH);
    let scale = 1.0 / (d_in as f64).sqrt();
    let map = Tensor::from_vec(&[d_out, d_in], (0..d_out * d_in).map(|_| T::of(scale * rng.normal())).collect())?;
    let x = Tensor::from_vec(&[n, d_in], (0..n * d_in).map(|_| T::of(rng.normal())).collect())?;
    let y = gemm(&x, Op::N, &map, Op::T, None)?;
    Ok((Dataset::new(x, Targets::Regression(y))?, map))
}
