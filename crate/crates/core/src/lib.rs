pub mod arch;
pub mod cli;
pub mod dsp;
pub mod error;
pub mod extractor;
pub mod model_store;
pub mod rng;
pub mod scalar;
pub mod tagger;
pub mod tensor;
pub mod trainer;
pub mod transfer;

pub use error::{Error, Result};
pub use scalar::{NumericMode, Scalar};
pub use arch::Model;
pub use tensor::{LayerParams, Tensor};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Model32 = Model<f32>;
pub type Model64 = Model<f64>;
