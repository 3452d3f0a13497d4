//! Dithered QIM on DFT magnitudes of non-overlapping rectangular blocks.
//! Every block carries all bits, one keyed mid-band bin per bit.

use rand::seq::index::sample;
use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{vote_scores, WatermarkKey};

pub(crate) const BLOCK: usize = 1024;
/// Usable bins, 1 to 4 kHz at 16 kHz.
const BIN_LO: usize = 64;
const BIN_HI: usize = 256;
const LAYOUT: u64 = 0x7169_6d62;

/// Keyed (bin, dither) for every bit of one block.
fn layout(key: &WatermarkKey, block: usize, bits: usize, delta: f64) -> Vec<(usize, f64)> {
    let mut rng = key.rng(LAYOUT, block as u64);
    let picks = sample(&mut rng, BIN_HI - BIN_LO, bits.min(BIN_HI - BIN_LO));
    picks
        .into_iter()
        .map(|p| (BIN_LO + p, rng.random_range(0.0..delta)))
        .collect()
}

/// Nearest lattice index `q >= 0` with parity `bit` to the continuous index `u`;
/// ties go to the lower point.
fn quantize(u: f64, bit: u8) -> f64 {
    let mut lower = u.floor();
    if (lower as i64).rem_euclid(2) as u8 != bit {
        lower -= 1.0;
    }
    let upper = lower + 2.0;
    if lower < 0.0 || u - lower > upper - u {
        upper
    } else {
        lower
    }
}

/// Round half to even, so boundary magnitudes decode as the even lattice.
fn classify(u: f64) -> u8 {
    let q = u.round_ties_even();
    if q <= 0.0 {
        0
    } else {
        (q as i64 % 2) as u8
    }
}

fn spectrum(block: &[f64], fft: &dyn rustfft::Fft<f64>) -> Vec<Complex64> {
    let scale = 1.0 / (BLOCK as f64).sqrt();
    let mut buf: Vec<Complex64> = block.iter().map(|&s| Complex64::new(s * scale, 0.0)).collect();
    fft.process(&mut buf);
    buf
}

pub(super) fn embed(key: &WatermarkKey, delta: f64, x: &[f64], carrier: &[u8]) -> Vec<f64> {
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(BLOCK);
    let inv = planner.plan_fft_inverse(BLOCK);
    let scale = 1.0 / (BLOCK as f64).sqrt();
    let mut y = x.to_vec();
    for (b, block) in y.chunks_exact_mut(BLOCK).enumerate() {
        let mut spec = spectrum(block, fwd.as_ref());
        for (i, (bin, dither)) in layout(key, b, carrier.len(), delta).into_iter().enumerate() {
            let c = spec[bin];
            let u = (c.norm() - dither) / delta;
            let mag = quantize(u, carrier[i]) * delta + dither;
            let phase = if c.norm() > 0.0 { c.arg() } else { 0.0 };
            spec[bin] = Complex64::from_polar(mag, phase);
            spec[BLOCK - bin] = spec[bin].conj();
        }
        inv.process(&mut spec);
        for (s, c) in block.iter_mut().zip(&spec) {
            *s = c.re * scale;
        }
    }
    y
}

pub(super) fn detect(key: &WatermarkKey, delta: f64, x: &[f64], bits: usize) -> Vec<f64> {
    let fwd = FftPlanner::new().plan_fft_forward(BLOCK);
    let mut ones = vec![0; bits];
    let mut totals = vec![0; bits];
    for (b, block) in x.chunks_exact(BLOCK).enumerate() {
        let spec = spectrum(block, fwd.as_ref());
        for (i, (bin, dither)) in layout(key, b, bits, delta).into_iter().enumerate() {
            ones[i] += classify((spec[bin].norm() - dither) / delta) as usize;
            totals[i] += 1;
        }
    }
    vote_scores(&ones, &totals)
}
