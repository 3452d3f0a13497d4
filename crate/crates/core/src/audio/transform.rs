use std::f64::consts::PI;

use rand_distr::{Distribution, Normal};

use super::AudioClip;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Benign signal processing applied between embedding and detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Resample { target_rate: u32 },
    AdditiveNoise { rms: f64, seed: u64 },
    Lowpass { cutoff_hz: f64 },
    AmplitudeScale { gain: f64 },
}

/// Input samples consulted per output sample when resampling.
const RESAMPLE_TAPS: usize = 16;
const LOWPASS_TAPS: usize = 101;

impl Transform {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        let ok = match *self {
            Transform::Resample { target_rate } => target_rate > 0,
            Transform::AdditiveNoise { rms, .. } => rms.is_finite() && rms >= 0.0,
            Transform::Lowpass { cutoff_hz } => cutoff_hz > 0.0 && cutoff_hz < nyquist,
            Transform::AmplitudeScale { gain } => gain.is_finite() && gain > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "{self:?} out of range at {sample_rate} Hz"
            )))
        }
    }
}

fn blackman(pos: f64, half_width: f64) -> f64 {
    if pos.abs() >= half_width {
        return 0.0;
    }
    let u = (pos + half_width) / (2.0 * half_width);
    0.42 - 0.5 * (2.0 * PI * u).cos() + 0.08 * (4.0 * PI * u).cos()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn resample(x: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to {
        return x.to_vec();
    }
    let ratio = to as f64 / from as f64;
    let out_len = ((x.len() as f64 * ratio).round() as usize).max(1);
    // Cutoff relative to the input Nyquist frequency, with a guard band.
    let fc = 0.9 * ratio.min(1.0);
    let half = (RESAMPLE_TAPS / 2) as f64;
    (0..out_len)
        .map(|n| {
            let t = n as f64 / ratio;
            let base = t.floor() as isize;
            let mut acc = 0.0;
            for k in (base - RESAMPLE_TAPS as isize / 2 + 1)..=(base + RESAMPLE_TAPS as isize / 2) {
                if k < 0 || k as usize >= x.len() {
                    continue;
                }
                let d = t - k as f64;
                acc += x[k as usize] * fc * sinc(fc * d) * blackman(d, half);
            }
            acc
        })
        .collect()
}

fn lowpass(x: &[f64], cutoff_hz: f64, sample_rate: u32) -> Vec<f64> {
    let fc = 2.0 * cutoff_hz / sample_rate as f64;
    let half = (LOWPASS_TAPS / 2) as isize;
    let taps: Vec<f64> = (-half..=half)
        .map(|k| fc * sinc(fc * k as f64) * blackman(k as f64, half as f64 + 1.0))
        .collect();
    let norm: f64 = taps.iter().sum();
    (0..x.len() as isize)
        .map(|n| {
            let mut acc = 0.0;
            for (j, h) in taps.iter().enumerate() {
                let k = n + j as isize - half;
                if k >= 0 && (k as usize) < x.len() {
                    acc += h * x[k as usize];
                }
            }
            acc / norm
        })
        .collect()
}

pub fn apply_transform(clip: &AudioClip, t: &Transform) -> Result<AudioClip> {
    t.validate(clip.sample_rate())?;
    let x = clip.samples();
    match *t {
        Transform::Resample { target_rate } => {
            AudioClip::new(resample(x, clip.sample_rate(), target_rate), target_rate)
        }
        Transform::AdditiveNoise { rms, seed } => {
            if rms == 0.0 {
                return Ok(clip.clone());
            }
            let mut rng = stream_rng(seed, 0x6e6f_6973_65);
            let dist = Normal::new(0.0, rms).expect("rms validated");
            clip.with_samples(x.iter().map(|v| v + dist.sample(&mut rng)).collect())
        }
        Transform::Lowpass { cutoff_hz } => {
            clip.with_samples(lowpass(x, cutoff_hz, clip.sample_rate()))
        }
        Transform::AmplitudeScale { gain } => {
            clip.with_samples(x.iter().map(|v| v * gain).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::synth_corpus;
    use rand::SeedableRng;
    use rustfft::{num_complex::Complex64, FftPlanner};

    fn band_energy_fraction(x: &[f64], sr: f64, above_hz: f64) -> f64 {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
        let n = buf.len();
        let (mut hi, mut total) = (0.0, 0.0);
        for (k, c) in buf.iter().enumerate().take(n / 2 + 1) {
            let e = c.norm_sqr();
            total += e;
            if k as f64 * sr / n as f64 > above_hz {
                hi += e;
            }
        }
        hi / total
    }

    #[test]
    fn unit_gain_is_identity() {
        let c = synth_corpus(1, 1, 0.25, 16000).remove(0);
        assert_eq!(apply_transform(&c, &Transform::AmplitudeScale { gain: 1.0 }).unwrap(), c);
        assert_eq!(
            apply_transform(&c, &Transform::AdditiveNoise { rms: 0.0, seed: 4 }).unwrap(),
            c
        );
        assert_eq!(
            apply_transform(&c, &Transform::Resample { target_rate: 16000 }).unwrap(),
            c
        );
    }

    #[test]
    fn noise_snr_matches_rms() {
        let square: Vec<f64> = (0..64000).map(|i| if (i / 40) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let c = AudioClip::new(square, 16000).unwrap();
        for r in [0.01, 0.1, 0.3] {
            let y = apply_transform(&c, &Transform::AdditiveNoise { rms: r, seed: 8 }).unwrap();
            let noise: f64 = c.samples().iter().zip(y.samples()).map(|(a, b)| (a - b).powi(2)).sum();
            let snr = 10.0 * (c.energy() / noise).log10();
            assert!((snr + 20.0 * r.log10()).abs() <= 0.5, "r {r} snr {snr}");
        }
    }

    #[test]
    fn resample_round_trip_halves_bandwidth() {
        use rand_distr::StandardNormal;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let x: Vec<f64> = (0..32000).map(|_| 0.2 * rand::Rng::sample::<f64, _>(&mut rng, StandardNormal)).collect();
        let c = AudioClip::new(x, 16000).unwrap();
        let down = apply_transform(&c, &Transform::Resample { target_rate: 8000 }).unwrap();
        assert_eq!(down.len(), 16000);
        let up = apply_transform(&down, &Transform::Resample { target_rate: 16000 }).unwrap();
        assert_eq!(up.len(), 32000);
        assert!(band_energy_fraction(up.samples(), 16000.0, 4000.0) <= 0.01);
    }

    #[test]
    fn lowpass_removes_high_band() {
        let c = synth_corpus(3, 1, 1.0, 16000).remove(0);
        let hf = apply_transform(&c, &Transform::AdditiveNoise { rms: 0.05, seed: 1 }).unwrap();
        let y = apply_transform(&hf, &Transform::Lowpass { cutoff_hz: 2000.0 }).unwrap();
        assert_eq!(y.len(), c.len());
        assert!(band_energy_fraction(y.samples(), 16000.0, 3000.0) < 1e-3);
    }

    #[test]
    fn out_of_range_parameters_rejected() {
        let c = AudioClip::new(vec![0.0; 10], 16000).unwrap();
        assert!(apply_transform(&c, &Transform::Lowpass { cutoff_hz: 8000.0 }).is_err());
        assert!(apply_transform(&c, &Transform::AmplitudeScale { gain: 0.0 }).is_err());
        assert!(apply_transform(&c, &Transform::Resample { target_rate: 0 }).is_err());
    }
}
