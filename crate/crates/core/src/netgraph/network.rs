use super::conv::{col2im, im2col, max_pool, unpool};
use super::layer::{compile, Block, BlockOp, LayerSpec};
use crate::error::{config_err, dim_err, Result};
use crate::numkit::ledger::charge;
use crate::numkit::parallel::map_chunks;
use crate::numkit::{gemm, gemm_slices, init_tensor, FlopLedger, Initializer, Op, Rng, Scalar, Tensor};

/// Samples per parallel work unit in conv kernels. Fixed so the reduction
/// order never depends on the worker count.
const CONV_CHUNK: usize = 8;

/// Ordered blocks with forward weights Θ and optional direct feedback Ψ.
///
/// Activities carry the batch on axis 0: a block output is
/// `[B, out_shape…]`. Dense weights are `[out, in]`, conv weights
/// `[c_out, c_in, k, k]`, and feedback Ψ_ℓ is `[d_ℓ, d_L]` for every block
/// but the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    input_shape: Vec<usize>,
    specs: Vec<LayerSpec>,
    blocks: Vec<Block>,
    weights: Vec<Tensor<T>>,
    biases: Option<Vec<Tensor<T>>>,
    feedback: Option<Vec<Tensor<T>>>,
}

/// Values produced by one block for one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockTrace<T> {
    /// Pre-activation, `[B, pre_shape…]`.
    pub z: Tensor<T>,
    /// f(z) before pooling; `None` when the block does not pool (then it is `x`).
    pub a: Option<Tensor<T>>,
    /// Block output, `[B, out_shape…]`.
    pub x: Tensor<T>,
    /// Flat per-sample input index selected by each pooled output.
    pub argmax: Option<Vec<u32>>,
}

impl<T: Scalar> BlockTrace<T> {
    /// f(z_ℓ), the post-activation before any pooling.
    pub fn activation(&self) -> &Tensor<T> {
        self.a.as_ref().unwrap_or(&self.x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace<T> {
    pub input: Tensor<T>,
    pub layers: Vec<BlockTrace<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.layers.last().expect("networks have at least one block").x
    }

    /// Activity entering block `l` (the input for `l == 0`).
    pub fn block_input(&self, l: usize) -> &Tensor<T> {
        if l == 0 {
            &self.input
        } else {
            &self.layers[l - 1].x
        }
    }
}

impl<T: Scalar> Network<T> {
    pub fn new(input_shape: &[usize], specs: &[LayerSpec], init: Initializer, rng: &mut Rng, bias: bool) -> Result<Self> {
        let blocks = compile(input_shape, specs)?;
        let weights = blocks.iter().map(|b| init_tensor(init, &b.weight_shape(), rng)).collect::<Result<Vec<_>>>()?;
        let biases = if bias {
            Some(blocks.iter().map(|b| Tensor::zeros(&[b.bias_len()])).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        Ok(Self { input_shape: input_shape.to_vec(), specs: specs.to_vec(), blocks, weights, biases, feedback: None })
    }

    /// Assembles a network from explicit parameters, checking every shape.
    pub fn from_parts(
        input_shape: &[usize],
        specs: &[LayerSpec],
        weights: Vec<Tensor<T>>,
        biases: Option<Vec<Tensor<T>>>,
        feedback: Option<Vec<Tensor<T>>>,
    ) -> Result<Self> {
        let blocks = compile(input_shape, specs)?;
        let mut net = Self {
            input_shape: input_shape.to_vec(),
            specs: specs.to_vec(),
            blocks,
            weights: Vec::new(),
            biases: None,
            feedback: None,
        };
        if weights.len() != net.depth() {
            return Err(dim_err!("{} weight tensors for {} trainable layers", weights.len(), net.depth()));
        }
        for (l, w) in weights.iter().enumerate() {
            net.check_weight_shape(l, w)?;
        }
        net.weights = weights;
        if let Some(b) = biases {
            if b.len() != net.depth() {
                return Err(dim_err!("{} bias tensors for {} trainable layers", b.len(), net.depth()));
            }
            for (l, t) in b.iter().enumerate() {
                if t.shape() != [net.blocks[l].bias_len()] {
                    return Err(dim_err!("bias {l}: shape {:?}", t.shape()));
                }
            }
            net.biases = Some(b);
        }
        if let Some(f) = feedback {
            net.set_feedback(f)?;
        }
        Ok(net)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_size(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, l: usize) -> &Block {
        &self.blocks[l]
    }

    /// Number of trainable layers L.
    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    pub fn output_size(&self) -> usize {
        self.blocks.last().expect("non-empty").out_size()
    }

    pub fn weights(&self) -> &[Tensor<T>] {
        &self.weights
    }

    pub fn weight(&self, l: usize) -> &Tensor<T> {
        &self.weights[l]
    }

    pub fn weights_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.weights
    }

    pub fn set_weight(&mut self, l: usize, w: Tensor<T>) -> Result<()> {
        self.check_weight_shape(l, &w)?;
        self.weights[l] = w;
        Ok(())
    }

    fn check_weight_shape(&self, l: usize, w: &Tensor<T>) -> Result<()> {
        let want = self.blocks.get(l).ok_or_else(|| dim_err!("no trainable layer {l}"))?.weight_shape();
        if w.shape() != want.as_slice() {
            return Err(dim_err!("weight {l}: expected {want:?}, got {:?}", w.shape()));
        }
        Ok(())
    }

    pub fn biases(&self) -> Option<&[Tensor<T>]> {
        self.biases.as_deref()
    }

    pub fn biases_mut(&mut self) -> Option<&mut [Tensor<T>]> {
        self.biases.as_deref_mut()
    }

    /// Weights and biases borrowed together, for one optimizer step.
    pub fn params_mut(&mut self) -> (&mut [Tensor<T>], Option<&mut [Tensor<T>]>) {
        (&mut self.weights, self.biases.as_deref_mut())
    }

    pub fn has_bias(&self) -> bool {
        self.biases.is_some()
    }

    pub fn feedback(&self) -> Option<&[Tensor<T>]> {
        self.feedback.as_deref()
    }

    /// Feedback matrices, or a ConfigError naming the algorithm that needs them.
    pub fn require_feedback(&self, who: &str) -> Result<&[Tensor<T>]> {
        self.feedback.as_deref().ok_or_else(|| config_err!("{who} needs feedback matrices; attach them first"))
    }

    pub fn feedback_mut(&mut self) -> Option<&mut [Tensor<T>]> {
        self.feedback.as_deref_mut()
    }

    pub fn feedback_shape(&self, l: usize) -> [usize; 2] {
        [self.blocks[l].out_size(), self.output_size()]
    }

    pub fn set_feedback(&mut self, feedback: Vec<Tensor<T>>) -> Result<()> {
        if feedback.len() + 1 != self.depth() {
            return Err(dim_err!("{} feedback matrices for {} trainable layers", feedback.len(), self.depth()));
        }
        for (l, f) in feedback.iter().enumerate() {
            if f.shape() != self.feedback_shape(l) {
                return Err(dim_err!("feedback {l}: expected {:?}, got {:?}", self.feedback_shape(l), f.shape()));
            }
        }
        self.feedback = Some(feedback);
        Ok(())
    }

    pub fn clear_feedback(&mut self) {
        self.feedback = None;
    }

    /// Draws Ψ_ℓ ∈ R^{d_ℓ × d_L} for every block except the last.
    pub fn attach_feedback(&mut self, init: Initializer, rng: &mut Rng) -> Result<()> {
        let fb = (0..self.depth() - 1)
            .map(|l| init_tensor(init, &self.feedback_shape(l), rng))
            .collect::<Result<Vec<_>>>()?;
        self.feedback = Some(fb);
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let w: usize = self.weights.iter().map(Tensor::len).sum();
        let b: usize = self.biases.iter().flatten().map(Tensor::len).sum();
        w + b
    }

    /// Same network with every parameter converted to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            input_shape: self.input_shape.clone(),
            specs: self.specs.clone(),
            blocks: self.blocks.clone(),
            weights: self.weights.iter().map(Tensor::cast).collect(),
            biases: self.biases.as_ref().map(|b| b.iter().map(Tensor::cast).collect()),
            feedback: self.feedback.as_ref().map(|f| f.iter().map(Tensor::cast).collect()),
        }
    }

    /// Reshapes `x` to `[B, in_shape…]` for block `l`, accepting any layout
    /// with the right per-sample size.
    fn as_block_input(&self, l: usize, x: &Tensor<T>) -> Result<Tensor<T>> {
        let b = &self.blocks[l];
        let (rows, cols) = x.matrix_dims();
        if cols != b.in_size() {
            return Err(dim_err!("layer {l} expects {} features per sample, got shape {:?}", b.in_size(), x.shape()));
        }
        let mut shape = vec![rows];
        shape.extend_from_slice(&b.in_shape);
        x.clone().reshape(&shape)
    }

    pub fn forward(&self, x0: &Tensor<T>, ledger: Option<&FlopLedger>) -> Result<ForwardTrace<T>> {
        let input = self.as_block_input(0, x0)?;
        let mut layers: Vec<BlockTrace<T>> = Vec::with_capacity(self.depth());
        for l in 0..self.depth() {
            let prev = if l == 0 { &input } else { &layers[l - 1].x };
            let tr = self.block_forward(l, prev, ledger)?;
            layers.push(tr);
        }
        Ok(ForwardTrace { input, layers })
    }

    /// Network output only.
    pub fn predict(&self, x0: &Tensor<T>) -> Result<Tensor<T>> {
        let mut x = self.as_block_input(0, x0)?;
        for l in 0..self.depth() {
            x = self.block_forward(l, &x, None)?.x;
        }
        Ok(x)
    }

    /// Pre-activation of block `l`: Θ_ℓ applied to `input` (plus bias).
    pub fn block_preact(&self, l: usize, input: &Tensor<T>, ledger: Option<&FlopLedger>) -> Result<Tensor<T>> {
        let block = &self.blocks[l];
        let input = self.as_block_input(l, input)?;
        let batch = input.shape()[0];
        let w = &self.weights[l];
        let mut pre_shape = vec![batch];
        pre_shape.extend_from_slice(&block.pre_shape);
        let mut z = match block.op {
            BlockOp::Dense { .. } => gemm(&input, Op::N, w, Op::T, ledger)?.reshape(&pre_shape)?,
            BlockOp::Conv(g) => {
                let (ckk, hw, in_sz) = (g.patch_len(), g.out_pixels(), block.in_size());
                let per = g.c_out * hw;
                let parts = map_chunks(batch, CONV_CHUNK, |s, e| {
                    let mut cols = vec![T::zero(); ckk * hw];
                    let mut out = vec![T::zero(); (e - s) * per];
                    for i in s..e {
                        im2col(&g, &input.data()[i * in_sz..(i + 1) * in_sz], &mut cols);
                        let dst = &mut out[(i - s) * per..(i - s + 1) * per];
                        gemm_slices(g.c_out, ckk, hw, w.data(), ckk, Op::N, &cols, hw, Op::N, dst, false);
                    }
                    out
                });
                charge(ledger, block.macs_per_sample() * batch as u64);
                Tensor::from_vec(&pre_shape, parts.concat())?
            }
        };
        if let Some(b) = &self.biases {
            let bias = b[l].data();
            let per_channel = block.pre_size() / bias.len();
            for row in z.data_mut().chunks_mut(block.pre_size()) {
                for (c, plane) in row.chunks_mut(per_channel).enumerate() {
                    plane.iter_mut().for_each(|v| *v += bias[c]);
                }
            }
        }
        Ok(z)
    }

    /// Applies block `l` (op, activation, pooling) to `input`.
    pub fn block_forward(&self, l: usize, input: &Tensor<T>, ledger: Option<&FlopLedger>) -> Result<BlockTrace<T>> {
        let block = &self.blocks[l];
        let z = self.block_preact(l, input, ledger)?;
        let a = block.activation.apply(&z);
        let batch = z.shape()[0];
        let mut out_shape = vec![batch];
        out_shape.extend_from_slice(&block.out_shape);
        match block.pool {
            None => {
                let x = a.reshape(&out_shape)?;
                Ok(BlockTrace { z, a: None, x, argmax: None })
            }
            Some(p) => {
                let (pre, out) = (block.pre_size(), block.out_size());
                let mut y = vec![T::zero(); batch * out];
                let mut arg = vec![0u32; batch * out];
                for i in 0..batch {
                    let (ys, args) = (&mut y[i * out..(i + 1) * out], &mut arg[i * out..(i + 1) * out]);
                    max_pool(&p, &a.data()[i * pre..(i + 1) * pre], ys, args);
                }
                let x = Tensor::from_vec(&out_shape, y)?;
                Ok(BlockTrace { z, a: Some(a), x, argmax: Some(arg) })
            }
        }
    }

    /// δz_ℓ = f′(z_ℓ) ⊙ Pᵀ e, where P is the pooling selection of the trace
    /// (identity without pooling). `e` is a gradient w.r.t. the block output.
    pub fn block_delta(&self, l: usize, trace: &BlockTrace<T>, e: &Tensor<T>) -> Result<Tensor<T>> {
        let block = &self.blocks[l];
        let batch = trace.z.shape()[0];
        let (pre, out) = (block.pre_size(), block.out_size());
        if e.len() != batch * out {
            return Err(dim_err!("layer {l}: output gradient has {} values, expected {}", e.len(), batch * out));
        }
        let mut d = trace.z.zeros_like();
        match &trace.argmax {
            None => d.data_mut().copy_from_slice(e.data()),
            Some(arg) => {
                for i in 0..batch {
                    let dst = &mut d.data_mut()[i * pre..(i + 1) * pre];
                    unpool(&e.data()[i * out..(i + 1) * out], &arg[i * out..(i + 1) * out], dst);
                }
            }
        }
        if !block.activation.is_identity() {
            let act = block.activation;
            for (dv, &zv) in d.data_mut().iter_mut().zip(trace.z.data()) {
                *dv *= act.derivative(zv);
            }
        }
        Ok(d)
    }

    /// Batch-mean weight gradient (1/B) Σ_b δz_b · input_bᵀ, shaped like Θ_ℓ.
    pub fn block_weight_grad(
        &self,
        l: usize,
        delta: &Tensor<T>,
        input: &Tensor<T>,
        ledger: Option<&FlopLedger>,
    ) -> Result<Tensor<T>> {
        let block = &self.blocks[l];
        let input = self.as_block_input(l, input)?;
        let batch = input.shape()[0];
        if delta.len() != batch * block.pre_size() {
            return Err(dim_err!("layer {l}: delta has {} values, expected {}", delta.len(), batch * block.pre_size()));
        }
        let scale = T::one() / T::of(batch as f64);
        let mut g = match block.op {
            BlockOp::Dense { .. } => gemm(delta, Op::T, &input, Op::N, ledger)?,
            BlockOp::Conv(g) => {
                let (ckk, hw, in_sz) = (g.patch_len(), g.out_pixels(), block.in_size());
                let per = g.c_out * hw;
                let parts = map_chunks(batch, CONV_CHUNK, |s, e| {
                    let mut cols = vec![T::zero(); ckk * hw];
                    let mut acc = vec![T::zero(); g.c_out * ckk];
                    for i in s..e {
                        im2col(&g, &input.data()[i * in_sz..(i + 1) * in_sz], &mut cols);
                        let d = &delta.data()[i * per..(i + 1) * per];
                        gemm_slices(g.c_out, hw, ckk, d, hw, Op::N, &cols, hw, Op::T, &mut acc, true);
                    }
                    acc
                });
                charge(ledger, block.macs_per_sample() * batch as u64);
                let mut total = vec![T::zero(); g.c_out * ckk];
                for p in parts {
                    total.iter_mut().zip(p).for_each(|(t, v)| *t += v);
                }
                Tensor::from_vec(&[g.c_out, ckk], total)?
            }
        };
        g.map_inplace(|v| v * scale);
        g.reshape(&block.weight_shape())
    }

    /// Batch-mean bias gradient of block `l`.
    pub fn block_bias_grad(&self, l: usize, delta: &Tensor<T>) -> Tensor<T> {
        let block = &self.blocks[l];
        let n = block.bias_len();
        let per_channel = block.pre_size() / n;
        let batch = delta.len() / block.pre_size();
        let mut g = vec![T::zero(); n];
        for row in delta.data().chunks(block.pre_size()) {
            for (c, plane) in row.chunks(per_channel).enumerate() {
                g[c] += plane.iter().copied().sum::<T>();
            }
        }
        let scale = T::one() / T::of(batch as f64);
        Tensor::from_vec(&[n], g.into_iter().map(|v| v * scale).collect()).expect("bias length is positive")
    }

    /// Per-sample Θ_ℓᵀ δz: gradient w.r.t. the block input, `[B, in_shape…]`.
    pub fn block_input_grad(&self, l: usize, delta: &Tensor<T>, ledger: Option<&FlopLedger>) -> Result<Tensor<T>> {
        let block = &self.blocks[l];
        let (batch, rem) = (delta.len() / block.pre_size(), delta.len() % block.pre_size());
        if rem != 0 || batch == 0 {
            return Err(dim_err!("layer {l}: delta of {} values does not match pre-activation size", delta.len()));
        }
        let mut in_shape = vec![batch];
        in_shape.extend_from_slice(&block.in_shape);
        let w = &self.weights[l];
        match block.op {
            BlockOp::Dense { .. } => {
                let d = delta.clone().reshape(&[batch, block.pre_size()])?;
                gemm(&d, Op::N, w, Op::N, ledger)?.reshape(&in_shape)
            }
            BlockOp::Conv(g) => {
                let (ckk, hw, in_sz) = (g.patch_len(), g.out_pixels(), block.in_size());
                let per = g.c_out * hw;
                let parts = map_chunks(batch, CONV_CHUNK, |s, e| {
                    let mut dcols = vec![T::zero(); ckk * hw];
                    let mut out = vec![T::zero(); (e - s) * in_sz];
                    for i in s..e {
                        let d = &delta.data()[i * per..(i + 1) * per];
                        gemm_slices(ckk, g.c_out, hw, w.data(), ckk, Op::T, d, hw, Op::N, &mut dcols, false);
                        col2im(&g, &dcols, &mut out[(i - s) * in_sz..(i - s + 1) * in_sz]);
                    }
                    out
                });
                charge(ledger, block.macs_per_sample() * batch as u64);
                Tensor::from_vec(&in_shape, parts.concat())
            }
        }
    }

    /// Direct projection Ψ_ℓ δ_L per sample, reshaped to block `l`'s output.
    pub fn feedback_project(&self, l: usize, delta_out: &Tensor<T>, ledger: Option<&FlopLedger>) -> Result<Tensor<T>> {
        let psi = &self.require_feedback("feedback projection")?[l];
        let batch = delta_out.shape()[0];
        let mut shape = vec![batch];
        shape.extend_from_slice(&self.blocks[l].out_shape);
        gemm(delta_out, Op::N, psi, Op::T, ledger)?.reshape(&shape)
    }

    /// Batch mean of the outer products x_ℓ δ_Lᵀ, shaped like Ψ_ℓ.
    pub fn feedback_outer(&self, x: &Tensor<T>, delta_out: &Tensor<T>, ledger: Option<&FlopLedger>) -> Result<Tensor<T>> {
        let batch = x.shape()[0];
        let mut g = gemm(x, Op::T, delta_out, Op::N, ledger)?;
        let scale = T::one() / T::of(batch as f64);
        g.map_inplace(|v| v * scale);
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Activation;

    #[test]
    fn identity_dense_passes_input_through() {
        let specs = [LayerSpec::dense(3, 3, Activation::Identity)];
        let net = Network::from_parts(&[3], &specs, vec![Tensor::<f64>::eye(3).unwrap()], None, None).unwrap();
        let x = Tensor::from_rows(&[&[1.0, -2.0, 0.5]]).unwrap();
        assert_eq!(net.forward(&x, None).unwrap().output(), &x);
    }

    #[test]
    fn bias_shifts_preactivation() {
        let specs = [LayerSpec::dense(2, 2, Activation::Identity)];
        let b = Tensor::from_vec(&[2], vec![1.0, -1.0]).unwrap();
        let net = Network::from_parts(&[2], &specs, vec![Tensor::<f64>::eye(2).unwrap()], Some(vec![b]), None).unwrap();
        let x = Tensor::from_rows(&[&[3.0, 4.0]]).unwrap();
        assert_eq!(net.predict(&x).unwrap().data(), &[4.0, 3.0]);
    }

    #[test]
    fn wrong_input_size_is_dimension_error() {
        let specs = [LayerSpec::dense(4, 2, Activation::Tanh)];
        let net = Network::<f64>::new(&[4], &specs, Initializer::XavierUniform, &mut Rng::seed(0), false).unwrap();
        let x = Tensor::zeros(&[1, 5]).unwrap();
        assert!(matches!(net.forward(&x, None), Err(crate::Error::Dimension(_))));
    }
}
