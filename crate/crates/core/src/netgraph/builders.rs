use super::layer::LayerSpec;
use super::network::Network;
use crate::error::{config_err, Result};
use crate::numkit::{Activation, Initializer, Rng, Scalar};

/// Fully connected net `inputs → hidden… → n_classes`; the output layer is
/// linear.
pub fn build_mlp<T: Scalar>(
    inputs: usize,
    hidden: &[usize],
    n_classes: usize,
    activation: Activation,
    init: Initializer,
    rng: &mut Rng,
) -> Result<Network<T>> {
    if n_classes < 2 {
        return Err(config_err!("need at least 2 classes, got {n_classes}"));
    }
    let mut specs = Vec::with_capacity(hidden.len() + 1);
    let mut prev = inputs;
    for &h in hidden {
        specs.push(LayerSpec::dense(prev, h, activation));
        prev = h;
    }
    specs.push(LayerSpec::dense(prev, n_classes, Activation::Identity));
    Network::new(&[inputs], &specs, init, rng, false)
}

/// Two `conv3×3 → act → maxpool2` blocks (16 and 32 channels) followed by a
/// linear read-out. Spatial extents must be divisible by 4.
pub fn build_small_cnn<T: Scalar>(
    in_shape: &[usize],
    n_classes: usize,
    activation: Activation,
    init: Initializer,
    rng: &mut Rng,
) -> Result<Network<T>> {
    let &[c, h, w] = in_shape else {
        return Err(config_err!("small CNN expects a C×H×W input shape, got {in_shape:?}"));
    };
    if n_classes < 2 {
        return Err(config_err!("need at least 2 classes, got {n_classes}"));
    }
    let specs = [
        LayerSpec::conv(c, 16, 3, 1, 1, activation),
        LayerSpec::max_pool(2, 2),
        LayerSpec::conv(16, 32, 3, 1, 1, activation),
        LayerSpec::max_pool(2, 2),
        LayerSpec::flatten(),
        LayerSpec::dense(32 * (h / 4) * (w / 4), n_classes, Activation::Identity),
    ];
    Network::new(in_shape, &specs, init, rng, false)
}

/// Consuming form of [`Network::attach_feedback`].
pub fn attach_feedback<T: Scalar>(mut net: Network<T>, init: Initializer, rng: &mut Rng) -> Result<Network<T>> {
    net.attach_feedback(init, rng)?;
    Ok(net)
}
