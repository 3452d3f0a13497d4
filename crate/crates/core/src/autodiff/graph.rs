use std::sync::Arc;

use ndarray::{s, Array2, Axis};

use super::{Mat, EPS_NUM};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Sum(Var),
    Mean(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Sqrt(Var),
    Log(Var),
    Abs(Var),
    Clamp(Var, f64, f64),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    Reshape(Var),
    Gather(Var, Arc<Vec<usize>>),
}

struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

/// Computation graph recorded in creation order, which is also a valid
/// topological order for the backward sweep.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::ShapeMismatch {
        op,
        detail: format!("{a:?} vs {b:?}"),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, a: Var, value: Mat, op: Op) -> Var {
        let g = self.nodes[a.0].needs_grad;
        self.push(value, op, g)
    }

    fn binary(&mut self, a: Var, b: Var, value: Mat, op: Op) -> Var {
        let g = self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad;
        self.push(value, op, g)
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(Array2::from_elem((1, 1), v))
    }

    pub fn variable(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn item(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(mismatch(op, sa, sb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.value(a) + self.value(b);
        Ok(self.binary(a, b, v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a) - self.value(b);
        Ok(self.binary(a, b, v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a) * self.value(b);
        Ok(self.binary(a, b, v, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("div", a, b)?;
        let v = self.value(a) / self.value(b);
        Ok(self.binary(a, b, v, Op::Div(a, b)))
    }

    /// `a[i, j] + row[0, j]`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr.0 != 1 || sr.1 != sa.1 {
            return Err(mismatch("add_row", sa, sr));
        }
        let v = self.value(a) + self.value(row);
        Ok(self.binary(a, row, v, Op::AddRow(a, row)))
    }

    /// `a[i, j] * row[0, j]`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr.0 != 1 || sr.1 != sa.1 {
            return Err(mismatch("mul_row", sa, sr));
        }
        let v = self.value(a) * self.value(row);
        Ok(self.binary(a, row, v, Op::MulRow(a, row)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.unary(a, v, Op::Scale(a, k))
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) + k;
        self.unary(a, v, Op::AddScalar(a))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(mismatch("matmul", sa, sb));
        }
        let v = self.value(a).dot(self.value(b));
        Ok(self.binary(a, b, v, Op::MatMul(a, b)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        self.unary(a, v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let v = Array2::from_elem((1, 1), m.sum() / m.len() as f64);
        self.unary(a, v, Op::Mean(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.unary(a, v, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.unary(a, v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.unary(a, v, Op::Sigmoid(a))
    }

    /// `sqrt(a + EPS_NUM)`.
    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| (x + EPS_NUM).sqrt());
        self.unary(a, v, Op::Sqrt(a))
    }

    /// `ln(a + EPS_NUM)`.
    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| (x + EPS_NUM).ln());
        self.unary(a, v, Op::Log(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::abs);
        self.unary(a, v, Op::Abs(a))
    }

    /// Clamp into `[lo, hi]`; gradient is zero where clamping is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).mapv(|x| x.clamp(lo, hi));
        self.unary(a, v, Op::Clamp(a, lo, hi))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.0 != sb.0 {
            return Err(mismatch("concat_cols", sa, sb));
        }
        let v = ndarray::concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()])
            .expect("row counts checked");
        Ok(self.binary(a, b, v, Op::ConcatCols(a, b)))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let sa = self.shape(a);
        if start > end || end > sa.1 {
            return Err(mismatch("slice_cols", sa, (start, end)));
        }
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        Ok(self.unary(a, v, Op::SliceCols(a, start)))
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let sa = self.shape(a);
        if sa.0 * sa.1 != rows * cols {
            return Err(mismatch("reshape", sa, (rows, cols)));
        }
        let flat: Vec<f64> = self.value(a).iter().copied().collect();
        let v = Array2::from_shape_vec((rows, cols), flat).expect("sizes checked");
        Ok(self.unary(a, v, Op::Reshape(a)))
    }

    /// `out.flat[i] = a.flat[index[i]]` with output shape `(rows, cols)`.
    /// Backward scatters gradients, so repeated indices accumulate.
    pub fn gather(&mut self, a: Var, index: Arc<Vec<usize>>, rows: usize, cols: usize) -> Result<Var> {
        let sa = self.shape(a);
        let n = sa.0 * sa.1;
        if index.len() != rows * cols || index.iter().any(|&i| i >= n) {
            return Err(mismatch("gather", sa, (rows, cols)));
        }
        let src = self.value(a);
        let src = src.as_slice().expect("graph values are contiguous");
        let flat: Vec<f64> = index.iter().map(|&i| src[i]).collect();
        let v = Array2::from_shape_vec((rows, cols), flat).expect("sizes checked");
        Ok(self.unary(a, v, Op::Gather(a, index)))
    }

    /// Magnitude spectrum of each row through fixed DFT basis matrices:
    /// `sqrt(re^2 + im^2 + EPS_NUM)` with `bins = fft_size / 2 + 1` columns.
    pub fn dft_magnitude(&mut self, frames: Var, fft_size: usize) -> Result<Var> {
        let sf = self.shape(frames);
        if sf.1 != fft_size {
            return Err(mismatch("dft_magnitude", sf, (sf.0, fft_size)));
        }
        let basis = super::dft_basis(fft_size);
        let cos = self.constant(basis.cos.clone());
        let sin = self.constant(basis.sin.clone());
        let re = self.matmul(frames, cos)?;
        let im = self.matmul(frames, sin)?;
        let re2 = self.mul(re, re)?;
        let im2 = self.mul(im, im)?;
        let power = self.add(re2, im2)?;
        Ok(self.sqrt(power))
    }

    /// Reverse sweep from a 1x1 loss.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::ShapeMismatch {
                op: "backward",
                detail: format!("loss has shape {:?}", self.shape(loss)),
            });
        }
        let nodes = self.nodes;
        let mut grads: Vec<Option<Mat>> = vec![None; nodes.len()];
        grads[loss.0] = Some(Array2::ones((1, 1)));
        for idx in (0..=loss.0).rev() {
            let node = &nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let needs = |v: &Var| nodes[v.0].needs_grad;
            let val = |v: &Var| &nodes[v.0].value;
            let send = |grads: &mut Vec<Option<Mat>>, v: Var, d: Mat| {
                if !nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => *acc += &d,
                    slot => *slot = Some(d),
                }
            };
            match &node.op {
                Op::Leaf => unreachable!("leaves keep their gradients"),
                Op::Add(a, b) => {
                    if needs(a) {
                        send(&mut grads, *a, g.clone());
                    }
                    send(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    if needs(a) {
                        send(&mut grads, *a, g.clone());
                    }
                    if needs(b) {
                        send(&mut grads, *b, -&g);
                    }
                }
                Op::Mul(a, b) => {
                    if needs(a) {
                        send(&mut grads, *a, &g * val(b));
                    }
                    if needs(b) {
                        send(&mut grads, *b, &g * val(a));
                    }
                }
                Op::Div(a, b) => {
                    if needs(a) {
                        send(&mut grads, *a, &g / val(b));
                    }
                    if needs(b) {
                        let d = -(&g * &node.value) / val(b);
                        send(&mut grads, *b, d);
                    }
                }
                Op::AddRow(a, r) => {
                    if needs(r) {
                        send(&mut grads, *r, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    send(&mut grads, *a, g);
                }
                Op::MulRow(a, r) => {
                    if needs(r) {
                        let d = (&g * val(a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                        send(&mut grads, *r, d);
                    }
                    if needs(a) {
                        send(&mut grads, *a, &g * val(r));
                    }
                }
                Op::Scale(a, k) => send(&mut grads, *a, g * *k),
                Op::AddScalar(a) => send(&mut grads, *a, g),
                Op::MatMul(a, b) => {
                    if needs(a) {
                        send(&mut grads, *a, g.dot(&val(b).t()));
                    }
                    if needs(b) {
                        send(&mut grads, *b, val(a).t().dot(&g));
                    }
                }
                Op::Sum(a) => {
                    let d = Array2::from_elem(val(a).dim(), g[[0, 0]]);
                    send(&mut grads, *a, d);
                }
                Op::Mean(a) => {
                    let n = val(a).len() as f64;
                    let d = Array2::from_elem(val(a).dim(), g[[0, 0]] / n);
                    send(&mut grads, *a, d);
                }
                Op::Relu(a) => {
                    let mut d = g;
                    d.zip_mut_with(val(a), |d, &x| {
                        if x <= 0.0 {
                            *d = 0.0
                        }
                    });
                    send(&mut grads, *a, d);
                }
                Op::Tanh(a) => {
                    let mut d = g;
                    d.zip_mut_with(&node.value, |d, &y| *d *= 1.0 - y * y);
                    send(&mut grads, *a, d);
                }
                Op::Sigmoid(a) => {
                    let mut d = g;
                    d.zip_mut_with(&node.value, |d, &y| *d *= y * (1.0 - y));
                    send(&mut grads, *a, d);
                }
                Op::Sqrt(a) => {
                    let mut d = g;
                    d.zip_mut_with(&node.value, |d, &y| *d *= 0.5 / y);
                    send(&mut grads, *a, d);
                }
                Op::Log(a) => {
                    let mut d = g;
                    d.zip_mut_with(val(a), |d, &x| *d /= x + EPS_NUM);
                    send(&mut grads, *a, d);
                }
                Op::Abs(a) => {
                    let mut d = g;
                    d.zip_mut_with(val(a), |d, &x| {
                        *d *= if x > 0.0 {
                            1.0
                        } else if x < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    });
                    send(&mut grads, *a, d);
                }
                Op::Clamp(a, lo, hi) => {
                    let mut d = g;
                    d.zip_mut_with(val(a), |d, &x| {
                        if x < *lo || x > *hi {
                            *d = 0.0
                        }
                    });
                    send(&mut grads, *a, d);
                }
                Op::ConcatCols(a, b) => {
                    let ca = val(a).ncols();
                    if needs(a) {
                        send(&mut grads, *a, g.slice(s![.., ..ca]).to_owned());
                    }
                    if needs(b) {
                        send(&mut grads, *b, g.slice(s![.., ca..]).to_owned());
                    }
                }
                Op::SliceCols(a, start) => {
                    let mut d = Array2::zeros(val(a).dim());
                    let end = start + g.ncols();
                    d.slice_mut(s![.., *start..end]).assign(&g);
                    send(&mut grads, *a, d);
                }
                Op::Reshape(a) => {
                    let flat: Vec<f64> = g.iter().copied().collect();
                    let d = Array2::from_shape_vec(val(a).dim(), flat).expect("reshape sizes");
                    send(&mut grads, *a, d);
                }
                Op::Gather(a, index) => {
                    let mut d = Array2::<f64>::zeros(val(a).dim());
                    {
                        let dst = d.as_slice_mut().expect("fresh array is contiguous");
                        for (gv, &i) in g.iter().zip(index.iter()) {
                            dst[i] += gv;
                        }
                    }
                    send(&mut grads, *a, d);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    /// Gradient of a leaf variable; `None` when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Mat> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}
