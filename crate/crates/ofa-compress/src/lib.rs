//! Once-for-all sequence compression for sequence encoders.
//!
//! A single pre-trained encoder supports a continuous range of compression
//! rates at inference: a scalar lambda in [0, 2) rescales the per-frame
//! weights that drive continuous integrate-and-fire subsampling, trading
//! output length against fidelity. The crate provides the CIF segmentation
//! and pooling kernels, the lambda modification function, a toy
//! teacher-student distillation stack with once-for-all pre-training,
//! adaptive compression-rate learning, and an analytic MACs profiler, all on
//! a small reverse-mode gradient tape.

pub mod alphamod;
pub mod checkpoint;
pub mod cif;
pub mod data_io;
pub mod diffmath;
pub mod error;
pub mod model;
pub mod profile;
pub mod selftest;
pub mod training;

pub use error::{Error, Result};
