//! MSCFNet: a lightweight multi-scale context fusion network for semantic
//! segmentation, implemented from the ground up in f64 — dense tensor
//! kernels with reverse-mode autodiff, the EAR encoder blocks, dual
//! attention, static analyzers, and a desk-scale training harness.

pub mod analysis;
pub mod autodiff;
pub mod error;
pub mod io;
pub mod labels;
pub mod layers;
pub mod network;
pub mod params;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
