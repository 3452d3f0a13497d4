//! Payload bits in the least significant bit of 16-bit samples, whitened by
//! a keyed bit stream and repeated cyclically.

use super::{vote_scores, WatermarkKey};
use crate::audio::quantize_i16;

const WHITEN: u64 = 0x6c73_6277;
const OFFSET: u64 = 0x6c73_626f;

fn layout(key: &WatermarkKey, bits: usize) -> impl Fn(usize) -> (usize, u8) + '_ {
    let offset = (key.hash(OFFSET, 0) % bits as u64) as usize;
    move |j| ((j + offset) % bits, (key.hash(WHITEN, j as u64) & 1) as u8)
}

pub(super) fn embed(key: &WatermarkKey, x: &[f64], carrier: &[u8]) -> Vec<f64> {
    let at = layout(key, carrier.len());
    x.iter()
        .enumerate()
        .map(|(j, &s)| {
            let (bit, mask) = at(j);
            let q = quantize_i16(s) as i32;
            let q = (q & !1) | (carrier[bit] ^ mask) as i32;
            q as f64 / 32768.0
        })
        .collect()
}

pub(super) fn detect(key: &WatermarkKey, x: &[f64], bits: usize) -> Vec<f64> {
    let at = layout(key, bits);
    let mut ones = vec![0; bits];
    let mut totals = vec![0; bits];
    for (j, &s) in x.iter().enumerate() {
        let (bit, mask) = at(j);
        totals[bit] += 1;
        ones[bit] += (((quantize_i16(s) as i32) & 1) as u8 ^ mask) as usize;
    }
    vote_scores(&ones, &totals)
}
