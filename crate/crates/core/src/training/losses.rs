//! Loss terms, each in a plain form on clips and a differentiable form on
//! graph batches.

use std::sync::Arc;

use ndarray::Array2;

use super::{LossWeights, StftResolutionSet};
use crate::audio::stft_internals::reflect_index;
use crate::audio::{hann_window, stft, AudioClip};
use crate::autodiff::{Graph, Mat, Var, EPS_NUM};
use crate::error::{Error, Result};
use crate::neural::SurrogateModel;
use crate::schemes::Message;

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { left: a, right: b });
    }
    Ok(())
}

/// Mean binary cross-entropy with scores clamped to `[EPS_NUM, 1 - EPS_NUM]`.
pub fn loss_watermark(m: &Message, soft_scores: &[f64]) -> Result<f64> {
    same_len(m.len(), soft_scores.len())?;
    let total: f64 = m
        .bits()
        .iter()
        .zip(soft_scores)
        .map(|(&b, &s)| {
            let s = s.clamp(EPS_NUM, 1.0 - EPS_NUM);
            if b == 1 {
                -s.ln()
            } else {
                -(1.0 - s).ln()
            }
        })
        .sum();
    Ok(total / m.len() as f64)
}

/// Mean squared sample difference.
pub fn loss_time(x: &AudioClip, xw: &AudioClip) -> Result<f64> {
    same_len(x.len(), xw.len())?;
    let s: f64 = x.samples().iter().zip(xw.samples()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / x.len() as f64)
}

/// Spectral-convergence and log-magnitude terms for each resolution.
/// Magnitudes are floored at `EPS_NUM`.
pub fn stft_loss_terms(x: &AudioClip, xw: &AudioClip, res: &StftResolutionSet) -> Result<Vec<(f64, f64)>> {
    same_len(x.len(), xw.len())?;
    res.entries()
        .iter()
        .map(|&(n, hop, wl)| {
            let sx = stft(x, n, hop, wl)?.magnitudes().mapv(|v| v.max(EPS_NUM));
            let sw = stft(xw, n, hop, wl)?.magnitudes().mapv(|v| v.max(EPS_NUM));
            let diff = (&sx - &sw).mapv(|v| v * v).sum().sqrt();
            let reference = sx.mapv(|v| v * v).sum().sqrt();
            let mag = sx
                .iter()
                .zip(sw.iter())
                .map(|(a, b)| (a.ln() - b.ln()).abs())
                .sum::<f64>()
                / sx.len() as f64;
            Ok((diff / reference, mag))
        })
        .collect()
}

/// Mean over resolutions of spectral convergence plus log-magnitude distance.
pub fn loss_stft_multi(x: &AudioClip, xw: &AudioClip, res: &StftResolutionSet) -> Result<f64> {
    let terms = stft_loss_terms(x, xw, res)?;
    Ok(terms.iter().map(|(sc, mag)| sc + mag).sum::<f64>() / terms.len() as f64)
}

/// `-ln sigmoid(l)` without overflow.
fn neg_log_sigmoid(l: f64) -> f64 {
    if l >= 0.0 {
        (-l).exp().ln_1p()
    } else {
        -l + l.exp().ln_1p()
    }
}

/// `-ln σ(D(x)) - ln(1 - σ(D(xw)))`.
pub fn loss_disc(model: &SurrogateModel, x: &AudioClip, xw: &AudioClip) -> Result<f64> {
    let (lx, lw) = (model.discriminate(x)?, model.discriminate(xw)?);
    Ok(neg_log_sigmoid(lx) + neg_log_sigmoid(-lw))
}

/// `-ln σ(D(xw))`.
pub fn loss_adv(model: &SurrogateModel, xw: &AudioClip) -> Result<f64> {
    Ok(neg_log_sigmoid(model.discriminate(xw)?))
}

/// The four generator loss components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossComponents {
    pub watermark: f64,
    pub time: f64,
    pub freq: f64,
    pub adv: f64,
}

pub fn total_loss(c: &LossComponents, w: &LossWeights) -> Result<f64> {
    let parts = [c.watermark, c.time, c.freq, c.adv];
    if parts.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite loss component".into()));
    }
    Ok(w.watermark * c.watermark + w.time * c.time + w.freq * c.freq + w.adv * c.adv)
}

/// Mean BCE between sigmoid of `logits` and 0/1 `bits` of the same shape.
pub fn graph_bce(g: &mut Graph, logits: Var, bits: &Mat) -> Result<Var> {
    let s = g.sigmoid(logits);
    let m = g.constant(bits.clone());
    let not_m = g.constant(bits.mapv(|b| 1.0 - b));
    let log_s = g.log(s);
    let neg = g.scale(s, -1.0);
    let one_minus = g.add_scalar(neg, 1.0);
    let log_not = g.log(one_minus);
    let a = g.mul(m, log_s)?;
    let b = g.mul(not_m, log_not)?;
    let t = g.add(a, b)?;
    let mean = g.mean(t);
    Ok(g.scale(mean, -1.0))
}

pub fn graph_mse(g: &mut Graph, x: Var, xw: Var) -> Result<Var> {
    let d = g.sub(xw, x)?;
    let sq = g.mul(d, d)?;
    Ok(g.mean(sq))
}

/// Reflect-padded Hann-windowed frames of every row, stacked row-major.
fn graph_stft_frames(g: &mut Graph, x: Var, fft_size: usize, hop: usize, window_length: usize) -> Result<Var> {
    let (b, n) = g.shape(x);
    let needed = window_length.max(fft_size / 2 + 1);
    if n < needed {
        return Err(Error::TooShort { needed, got: n });
    }
    let pad = (fft_size / 2) as isize;
    let t = (n + 2 * (fft_size / 2) - fft_size) / hop + 1;
    let mut index = Vec::with_capacity(b * t * fft_size);
    for r in 0..b {
        for f in 0..t {
            let start = (f * hop) as isize - pad;
            index.extend((0..fft_size).map(|j| r * n + reflect_index(start + j as isize, n)));
        }
    }
    let frames = g.gather(x, Arc::new(index), b * t, fft_size)?;
    let mut window = vec![0.0; fft_size];
    let off = (fft_size - window_length) / 2;
    window[off..off + window_length].copy_from_slice(&hann_window(window_length));
    let w = g.constant(Array2::from_shape_vec((1, fft_size), window).expect("window row"));
    g.mul_row(frames, w)
}

/// Differentiable multi-resolution STFT loss over a `[batch x samples]` pair,
/// with magnitudes from [`Graph::dft_magnitude`].
pub fn graph_stft_multi(g: &mut Graph, x: Var, xw: Var, res: &StftResolutionSet) -> Result<Var> {
    if g.shape(x) != g.shape(xw) {
        return Err(Error::ShapeMismatch {
            op: "graph_stft_multi",
            detail: format!("{:?} vs {:?}", g.shape(x), g.shape(xw)),
        });
    }
    let mut total: Option<Var> = None;
    for &(n, hop, wl) in res.entries() {
        let fx = graph_stft_frames(g, x, n, hop, wl)?;
        let fw = graph_stft_frames(g, xw, n, hop, wl)?;
        let mx = g.dft_magnitude(fx, n)?;
        let mw = g.dft_magnitude(fw, n)?;
        let d = g.sub(mx, mw)?;
        let d2 = g.mul(d, d)?;
        let num = g.sum(d2);
        let num = g.sqrt(num);
        let x2 = g.mul(mx, mx)?;
        let den = g.sum(x2);
        let den = g.sqrt(den);
        let sc = g.div(num, den)?;
        let lx = g.log(mx);
        let lw = g.log(mw);
        let ld = g.sub(lx, lw)?;
        let ld = g.abs(ld);
        let mag = g.mean(ld);
        let term = g.add(sc, mag)?;
        total = Some(match total {
            Some(t) => g.add(t, term)?,
            None => term,
        });
    }
    let total = total.expect("resolution set is non-empty");
    Ok(g.scale(total, 1.0 / res.entries().len() as f64))
}

/// Mean over the batch of `-ln σ(lx) - ln(1 - σ(lw))`.
pub fn graph_disc_loss(g: &mut Graph, logits_x: Var, logits_w: Var) -> Result<Var> {
    let sx = g.sigmoid(logits_x);
    let a = g.log(sx);
    let sw = g.sigmoid(logits_w);
    let neg = g.scale(sw, -1.0);
    let not_w = g.add_scalar(neg, 1.0);
    let b = g.log(not_w);
    let t = g.add(a, b)?;
    let m = g.mean(t);
    Ok(g.scale(m, -1.0))
}

/// Mean over the batch of `-ln σ(lw)`.
pub fn graph_adv_loss(g: &mut Graph, logits_w: Var) -> Var {
    let s = g.sigmoid(logits_w);
    let l = g.log(s);
    let m = g.mean(l);
    g.scale(m, -1.0)
}
