use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::AudioClip;
use crate::rng::stream_rng;

const PEAK: f64 = 0.9;

/// Deterministic corpus of sinusoid mixtures with amplitude modulation and
/// lowpass-filtered noise, each clip peak-normalized to 0.9.
pub fn synth_corpus(seed: u64, count: usize, duration_s: f64, sample_rate: u32) -> Vec<AudioClip> {
    let n = ((duration_s * sample_rate as f64).round() as usize).max(1);
    (0..count)
        .into_par_iter()
        .map(|i| synth_clip(seed, i as u64, n, sample_rate))
        .collect()
}

fn synth_clip(seed: u64, index: u64, n: usize, sr: u32) -> AudioClip {
    let mut rng = stream_rng(seed, index);
    let sr_f = sr as f64;
    let f_max = 4000.0f64.min(0.45 * sr_f);
    let mut x = vec![0.0; n];
    let partials = rng.random_range(3..=8);
    for _ in 0..partials {
        let f = rng.random_range(80.0f64.ln()..f_max.ln()).exp();
        let amp = rng.random_range(0.2..1.0);
        let phase = rng.random_range(0.0..2.0 * PI);
        let f_am = rng.random_range(0.5..4.0);
        let phase_am = rng.random_range(0.0..2.0 * PI);
        for (i, v) in x.iter_mut().enumerate() {
            let t = i as f64 / sr_f;
            *v += amp
                * (1.0 + 0.5 * (2.0 * PI * f_am * t + phase_am).sin())
                * (2.0 * PI * f * t + phase).sin();
        }
    }

    let cutoff = rng.random_range(300.0f64..3000.0f64.min(0.45 * sr_f));
    let a = 1.0 - (-2.0 * PI * cutoff / sr_f).exp();
    let (mut s1, mut s2) = (0.0, 0.0);
    let mut noise = Vec::with_capacity(n);
    for _ in 0..n {
        let w: f64 = rng.sample(StandardNormal);
        s1 += a * (w - s1);
        s2 += a * (s1 - s2);
        noise.push(s2);
    }
    let level = rng.random_range(0.05..0.3);
    let (sx, sy) = (std_dev(&x), std_dev(&noise));
    if sy > 0.0 {
        let g = level * sx / sy;
        for (v, e) in x.iter_mut().zip(&noise) {
            *v += g * e;
        }
    }

    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        for v in &mut x {
            *v *= PEAK / peak;
        }
    }
    AudioClip::new(x, sr).expect("synthetic samples are finite")
}

fn std_dev(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}
