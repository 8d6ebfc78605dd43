//! Crisp edge detection toolkit: a small dense autodiff core, a fusion loss
//! built from reciprocal Dice overlap and cross-entropy, a bottom-up /
//! top-down edge network, synthetic scene generation with augmentation, and a
//! boundary benchmark (non-maximum suppression, tolerant matching, ODS/OIS).

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod grid;
pub mod layers;
pub mod loss;
pub mod model;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor4;
