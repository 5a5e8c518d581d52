pub mod config;
pub mod data;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod modulation;
pub mod params;
pub mod tensor;
pub mod train;
pub mod transfer;

pub use error::{Error, Result};
pub use tensor::{Element, Tensor, TensorError};
