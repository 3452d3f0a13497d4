use ndarray::Array2;

use super::{round_f32, Mat, Tensor};
use crate::error::{Error, Result};

/// Adam with bias correction. Parameters and both moment buffers are kept at
/// `f32` precision after every step so checkpoints are lossless.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Mat>,
    pub v: Vec<Mat>,
}

impl Adam {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>, lr: f64) -> Self {
        let shapes: Vec<_> = params.into_iter().map(|p| p.value.dim()).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
        }
    }

    /// Apply one update and clear the gradients.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::InvalidParameter(format!(
                "optimizer tracks {} tensors, got {}",
                self.m.len(),
                params.len()
            )));
        }
        for (p, m) in params.iter().zip(&self.m) {
            if p.grad.is_none() {
                return Err(Error::InvalidParameter(format!("missing gradient for {}", p.name)));
            }
            if p.value.dim() != m.dim() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    detail: format!("{}: {:?} vs {:?}", p.name, p.value.dim(), m.dim()),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let g = p.grad.take().expect("checked above");
            ndarray::Zip::from(&mut p.value)
                .and(&mut *m)
                .and(&mut *v)
                .and(&g)
                .for_each(|w, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
            round_f32(&mut p.value);
            round_f32(m);
            round_f32(v);
        }
        Ok(())
    }
}
