//! Dense tensors, reverse-mode autodiff and seeded randomness.

mod float;
mod gradcheck;
mod graph;
mod rng;
mod tensor;

pub use float::{DType, Float};
pub use gradcheck::grad_check;
pub use graph::{ElemOp, Graph, ReduceOp, Var};
pub use rng::{gaussian_sample, Rng, Stream, RNG_ALGORITHM};
pub use tensor::Tensor;
