//! Dense tensors, activations, initializers, seeded randomness and MAC
//! accounting: the numerical floor the rest of the crate stands on.
//!
//! All operations are pure with respect to their inputs. Products use a fixed
//! summation order, so repeated calls give bit-identical results.

mod activation;
mod init;
pub mod ledger;
pub mod parallel;
mod rng;
mod scalar;
mod tensor;

pub use activation::Activation;
pub use init::{fans, init_matrix, init_tensor, orthogonality_residual, Initializer};
pub use ledger::{FlopLedger, LedgerSummary, Phase};
pub use rng::{streams, Rng};
pub use scalar::{DType, Scalar};
pub use tensor::{gemm, matmul, Op, Tensor, MAX_RANK};

pub(crate) use tensor::gemm_slices;
