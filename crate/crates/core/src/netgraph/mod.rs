//! Layers, networks, the forward pass, direct feedback matrices and the
//! checkpoint container.
//!
//! A network is compiled into blocks: each trainable layer plus the pooling
//! and flattening that follow it. Blocks are the layers that the learners
//! see, so a conv layer with its pooling is one predictive-coding layer.

mod builders;
pub mod checkpoint;
mod conv;
mod layer;
mod network;

pub use builders::{attach_feedback, build_mlp, build_small_cnn};
pub use checkpoint::{load_network, save_network, Container, Record, RecordData};
pub use layer::{Block, BlockOp, ConvGeom, LayerKind, LayerSpec, PoolGeom};
pub use network::{BlockTrace, ForwardTrace, Network};
