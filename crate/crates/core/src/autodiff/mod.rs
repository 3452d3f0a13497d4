//! Reverse-mode automatic differentiation over 2-D tensors, Adam, and a
//! checkpoint format for parameter sets.

mod adam;
mod checkpoint;
mod dft;
mod graph;
pub mod gradcheck;

pub use adam::Adam;
pub use checkpoint::Checkpoint;
pub use dft::{dft_basis, DftBasis};
pub use graph::{sigmoid, Gradients, Graph, Var};

use ndarray::Array2;

pub type Mat = Array2<f64>;

/// Offset inside sqrt and log.
pub const EPS_NUM: f64 = 1e-8;

/// Named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub value: Mat,
    pub requires_grad: bool,
    pub grad: Option<Mat>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, value: Mat) -> Self {
        Self {
            name: name.into(),
            value,
            requires_grad: true,
            grad: None,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.dim()
    }
}

/// Round every element to the nearest `f32`, the storage precision of checkpoints.
pub fn round_f32(m: &mut Mat) {
    m.mapv_inplace(|v| v as f32 as f64);
}
