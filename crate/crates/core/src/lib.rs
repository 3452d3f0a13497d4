//! Audio watermarking schemes, surrogate training and overwriting attacks.

pub mod attacks;
pub mod audio;
pub mod autodiff;
pub mod error;
pub mod metrics;
pub mod neural;
pub mod rng;
pub mod schemes;
pub mod training;

pub use error::{Error, Result};
