//! Central finite-difference gradient checking.

use super::{Graph, Mat, Var};
use crate::error::Result;

/// Largest normwise relative error, over all inputs, between the analytic
/// gradient of `f` and a central difference with step `h`.
pub fn max_relative_error<F>(inputs: &[Mat], h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|m| g.variable(m.clone())).collect();
    let loss = f(&mut g, &vars)?;
    let grads = g.backward(loss)?;
    let analytic: Vec<Mat> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, m)| grads.get(v).cloned().unwrap_or_else(|| Mat::zeros(m.dim())))
        .collect();

    let eval = |values: &[Mat]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|m| g.constant(m.clone())).collect();
        let loss = f(&mut g, &vars)?;
        Ok(g.item(loss))
    };

    let mut worst = 0.0f64;
    let mut work: Vec<Mat> = inputs.to_vec();
    for (i, a) in analytic.iter().enumerate() {
        let mut numeric = Mat::zeros(a.dim());
        for idx in 0..a.len() {
            let (r, c) = (idx / a.ncols(), idx % a.ncols());
            let orig = work[i][[r, c]];
            work[i][[r, c]] = orig + h;
            let up = eval(&work)?;
            work[i][[r, c]] = orig - h;
            let down = eval(&work)?;
            work[i][[r, c]] = orig;
            numeric[[r, c]] = (up - down) / (2.0 * h);
        }
        let diff = a.iter().zip(numeric.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let scale = a
            .iter()
            .chain(numeric.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
            .max(1e-12);
        worst = worst.max(diff / scale);
    }
    Ok(worst)
}
