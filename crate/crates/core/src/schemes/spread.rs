//! Block spread spectrum with bounded host rejection: each block of
//! `BLOCK` samples carries one bit on a keyed ±1 chip sequence, and the host's
//! own projection onto the chips (clipped to `REJECT · α`) is removed before
//! the bit is added.

use super::WatermarkKey;

pub(crate) const BLOCK: usize = 1024;
const REJECT: f64 = 4.0;
const CHIP: u64 = 0x7373_6368;
const ORDER: u64 = 0x7373_6f72;

pub(super) fn min_len(bits: usize) -> usize {
    bits * BLOCK
}

fn chip(key: &WatermarkKey, sample: usize) -> f64 {
    if key.hash(CHIP, sample as u64) & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

fn bit_of_block(key: &WatermarkKey, block: usize, bits: usize) -> usize {
    (block + (key.hash(ORDER, 0) % bits as u64) as usize) % bits
}

pub(super) fn embed(key: &WatermarkKey, alpha: f64, x: &[f64], carrier: &[u8]) -> Vec<f64> {
    let mut y = x.to_vec();
    for (b, block) in y.chunks_exact_mut(BLOCK).enumerate() {
        let chips: Vec<f64> = (0..BLOCK).map(|j| chip(key, b * BLOCK + j)).collect();
        let rho = block.iter().zip(&chips).map(|(s, c)| s * c).sum::<f64>() / BLOCK as f64;
        let sign = 2.0 * carrier[bit_of_block(key, b, carrier.len())] as f64 - 1.0;
        let shift = alpha * sign - rho.clamp(-REJECT * alpha, REJECT * alpha);
        for (s, c) in block.iter_mut().zip(&chips) {
            *s += shift * c;
        }
    }
    y
}

/// Per-bit score `(1 + mean normalized correlation) / 2` over the bit's blocks.
pub(super) fn detect(key: &WatermarkKey, x: &[f64], bits: usize) -> Vec<f64> {
    let mut sums = vec![0.0; bits];
    let mut counts = vec![0usize; bits];
    for (b, block) in x.chunks_exact(BLOCK).enumerate() {
        let mut dot = 0.0;
        let mut energy = 0.0;
        for (j, s) in block.iter().enumerate() {
            dot += s * chip(key, b * BLOCK + j);
            energy += s * s;
        }
        let norm = (energy * BLOCK as f64).sqrt();
        let i = bit_of_block(key, b, bits);
        sums[i] += if norm > 0.0 { dot / norm } else { 0.0 };
        counts[i] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { 0.5 } else { (0.5 + 0.5 * s / c as f64).clamp(0.0, 1.0) })
        .collect()
}
