use std::fmt;

use crate::error::{config_err, dim_err, Result};
use crate::numkit::Activation;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Dense { inputs: usize, outputs: usize },
    Conv2d { c_in: usize, c_out: usize, kernel: usize, stride: usize, pad: usize },
    MaxPool { window: usize, stride: usize },
    Flatten,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn dense(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self { kind: LayerKind::Dense { inputs, outputs }, activation }
    }

    pub fn conv(c_in: usize, c_out: usize, kernel: usize, stride: usize, pad: usize, activation: Activation) -> Self {
        Self { kind: LayerKind::Conv2d { c_in, c_out, kernel, stride, pad }, activation }
    }

    pub fn max_pool(window: usize, stride: usize) -> Self {
        Self { kind: LayerKind::MaxPool { window, stride }, activation: Activation::Identity }
    }

    pub fn flatten() -> Self {
        Self { kind: LayerKind::Flatten, activation: Activation::Identity }
    }

    pub fn is_trainable(&self) -> bool {
        matches!(self.kind, LayerKind::Dense { .. } | LayerKind::Conv2d { .. })
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LayerKind::Dense { inputs, outputs } => write!(f, "dense {inputs} {outputs} {}", self.activation),
            LayerKind::Conv2d { c_in, c_out, kernel, stride, pad } => {
                write!(f, "conv {c_in} {c_out} {kernel} {stride} {pad} {}", self.activation)
            }
            LayerKind::MaxPool { window, stride } => write!(f, "maxpool {window} {stride}"),
            LayerKind::Flatten => f.write_str("flatten"),
        }
    }
}

impl std::str::FromStr for LayerSpec {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let num = |i: usize| -> Result<usize> {
            parts.get(i).and_then(|p| p.parse().ok()).ok_or_else(|| config_err!("bad layer spec {s:?}"))
        };
        let act = |i: usize| -> Result<Activation> {
            parts.get(i).ok_or_else(|| config_err!("bad layer spec {s:?}"))?.parse()
        };
        match parts.first().copied() {
            Some("dense") => Ok(LayerSpec::dense(num(1)?, num(2)?, act(3)?)),
            Some("conv") => Ok(LayerSpec::conv(num(1)?, num(2)?, num(3)?, num(4)?, num(5)?, act(6)?)),
            Some("maxpool") => Ok(LayerSpec::max_pool(num(1)?, num(2)?)),
            Some("flatten") => Ok(LayerSpec::flatten()),
            _ => Err(config_err!("bad layer spec {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub h_in: usize,
    pub w_in: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeom {
    /// Rows of the unrolled patch matrix: c_in·k².
    pub fn patch_len(&self) -> usize {
        self.c_in * self.kernel * self.kernel
    }

    pub fn out_pixels(&self) -> usize {
        self.h_out * self.w_out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolGeom {
    pub channels: usize,
    pub h_in: usize,
    pub w_in: usize,
    pub window: usize,
    pub stride: usize,
    pub h_out: usize,
    pub w_out: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockOp {
    Dense { inputs: usize, outputs: usize },
    Conv(ConvGeom),
}

/// One trainable layer together with the non-trainable layers that follow
/// it. A block is a single predictive-coding layer: its map is
/// `pool(f(Θ·input))`, and its activity is the block output.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub op: BlockOp,
    pub activation: Activation,
    pub pool: Option<PoolGeom>,
    pub in_shape: Vec<usize>,
    /// Shape of the pre-activation z (and of f(z)).
    pub pre_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
}

impl Block {
    pub fn in_size(&self) -> usize {
        self.in_shape.iter().product()
    }

    pub fn pre_size(&self) -> usize {
        self.pre_shape.iter().product()
    }

    pub fn out_size(&self) -> usize {
        self.out_shape.iter().product()
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        match self.op {
            BlockOp::Dense { inputs, outputs } => vec![outputs, inputs],
            BlockOp::Conv(g) => vec![g.c_out, g.c_in, g.kernel, g.kernel],
        }
    }

    pub fn bias_len(&self) -> usize {
        match self.op {
            BlockOp::Dense { outputs, .. } => outputs,
            BlockOp::Conv(g) => g.c_out,
        }
    }

    /// MACs of the trainable op for one sample (same for forward,
    /// weight-gradient and input-gradient products).
    pub fn macs_per_sample(&self) -> u64 {
        match self.op {
            BlockOp::Dense { inputs, outputs } => (inputs * outputs) as u64,
            BlockOp::Conv(g) => (g.c_out * g.patch_len() * g.out_pixels()) as u64,
        }
    }
}

/// Groups a layer list into blocks and checks that extents compose.
pub(crate) fn compile(input_shape: &[usize], specs: &[LayerSpec]) -> Result<Vec<Block>> {
    let mut blocks: Vec<Block> = Vec::new();
    let mut shape = input_shape.to_vec();
    for (i, spec) in specs.iter().enumerate() {
        let numel: usize = shape.iter().product();
        match spec.kind {
            LayerKind::Dense { inputs, outputs } => {
                if inputs != numel {
                    return Err(dim_err!("layer {i}: dense expects {inputs} inputs, incoming shape {shape:?}"));
                }
                if outputs == 0 {
                    return Err(dim_err!("layer {i}: dense with zero outputs"));
                }
                blocks.push(Block {
                    op: BlockOp::Dense { inputs, outputs },
                    activation: spec.activation,
                    pool: None,
                    in_shape: shape.clone(),
                    pre_shape: vec![outputs],
                    out_shape: vec![outputs],
                });
                shape = vec![outputs];
            }
            LayerKind::Conv2d { c_in, c_out, kernel, stride, pad } => {
                if shape.len() != 3 || shape[0] != c_in {
                    return Err(dim_err!("layer {i}: conv expects [{c_in}, H, W], incoming shape {shape:?}"));
                }
                if kernel == 0 || stride == 0 || c_out == 0 {
                    return Err(dim_err!("layer {i}: degenerate conv"));
                }
                let (h, w) = (shape[1], shape[2]);
                if h + 2 * pad < kernel || w + 2 * pad < kernel {
                    return Err(dim_err!("layer {i}: kernel {kernel} larger than padded input {shape:?}"));
                }
                let h_out = (h + 2 * pad - kernel) / stride + 1;
                let w_out = (w + 2 * pad - kernel) / stride + 1;
                let geom = ConvGeom { c_in, c_out, h_in: h, w_in: w, kernel, stride, pad, h_out, w_out };
                blocks.push(Block {
                    op: BlockOp::Conv(geom),
                    activation: spec.activation,
                    pool: None,
                    in_shape: shape.clone(),
                    pre_shape: vec![c_out, h_out, w_out],
                    out_shape: vec![c_out, h_out, w_out],
                });
                shape = vec![c_out, h_out, w_out];
            }
            LayerKind::MaxPool { window, stride } => {
                let Some(block) = blocks.last_mut() else {
                    return Err(config_err!("layer {i}: pooling must follow a trainable layer"));
                };
                if block.pool.is_some() || block.out_shape != block.pre_shape || shape.len() != 3 {
                    return Err(config_err!("layer {i}: pooling must directly follow a conv layer"));
                }
                if window == 0 || stride == 0 {
                    return Err(dim_err!("layer {i}: degenerate pooling"));
                }
                let (c, h, w) = (shape[0], shape[1], shape[2]);
                if h < window || w < window || (h - window) % stride != 0 || (w - window) % stride != 0 {
                    return Err(dim_err!("layer {i}: pooling {window}/{stride} does not tile {h}×{w}"));
                }
                let h_out = (h - window) / stride + 1;
                let w_out = (w - window) / stride + 1;
                block.pool = Some(PoolGeom { channels: c, h_in: h, w_in: w, window, stride, h_out, w_out });
                block.out_shape = vec![c, h_out, w_out];
                shape = block.out_shape.clone();
            }
            LayerKind::Flatten => {
                if blocks.is_empty() {
                    return Err(config_err!("layer {i}: flatten must follow a trainable layer"));
                }
                // activities are stored row-major per sample, so flattening
                // changes only the nominal shape
                shape = vec![numel];
                blocks.last_mut().expect("checked").out_shape = shape.clone();
            }
        }
        if !matches!(spec.kind, LayerKind::Dense { .. } | LayerKind::Conv2d { .. }) && !spec.activation.is_identity() {
            return Err(config_err!("layer {i}: non-trainable layers carry no activation"));
        }
    }
    if blocks.is_empty() {
        return Err(config_err!("network needs at least one trainable layer"));
    }
    Ok(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cnn_blocks_fold_pool_and_flatten() {
        let specs = [
            LayerSpec::conv(1, 4, 3, 1, 1, Activation::Tanh),
            LayerSpec::max_pool(2, 2),
            LayerSpec::flatten(),
            LayerSpec::dense(4 * 14 * 14, 10, Activation::Identity),
        ];
        let blocks = compile(&[1, 28, 28], &specs).unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].pre_shape, vec![4, 28, 28]);
        assert_eq!(blocks[0].out_shape, vec![784]);
        assert_eq!(blocks[0].out_size(), 784);
        assert_eq!(blocks[1].weight_shape(), vec![10, 784]);
    }

    #[test]
    fn mismatched_dense_is_dimension_error() {
        let specs = [LayerSpec::dense(10, 5, Activation::Tanh), LayerSpec::dense(6, 2, Activation::Identity)];
        assert!(matches!(compile(&[10], &specs), Err(crate::Error::Dimension(_))));
    }

    #[test]
    fn spec_text_round_trip() {
        for s in ["dense 784 128 gelu", "conv 3 16 3 1 1 leaky:0.01", "maxpool 2 2", "flatten"] {
            let spec: LayerSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
    }
}
