//! Minimal dense-matrix math with reverse-mode gradients.
//!
//! 64-bit floats throughout; no broadcasting beyond row-vector-against-matrix
//! (plus 1x1 scalars). Enough to train the toy distillation model and the
//! trainable compression-rate parameter, with finite differences as the
//! independent check.

pub mod fdcheck;
mod graph;
mod matrix;

pub use graph::{Graph, NodeId};
pub use matrix::{sigmoid, Matrix};
