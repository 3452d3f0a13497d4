use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::AudioClip;
use crate::error::{Error, Result};

/// Complex short-time spectrum, rows are frames and columns are bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: Array2<Complex64>,
    pub fft_size: usize,
    pub hop: usize,
    pub window_length: usize,
    /// Length of the analysed signal, needed to undo the edge padding.
    pub signal_len: usize,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn magnitudes(&self) -> Array2<f64> {
        self.frames.mapv(|c| c.norm())
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.frames.mapv_inplace(|c| c * a);
        out
    }
}

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Hann window of `window_length` centered inside an `fft_size` buffer.
pub(crate) fn padded_window(fft_size: usize, window_length: usize) -> Vec<f64> {
    let mut w = vec![0.0; fft_size];
    let off = (fft_size - window_length) / 2;
    w[off..off + window_length].copy_from_slice(&hann_window(window_length));
    w
}

/// Geometry check plus the constant-overlap-add condition of a periodic Hann
/// window: the hop must divide the window into at least two parts.
pub(crate) fn check_cola(fft_size: usize, hop: usize, window_length: usize) -> Result<()> {
    check_geometry(fft_size, hop, window_length)?;
    if window_length % hop != 0 || window_length / hop < 2 {
        return Err(Error::Geometry(format!(
            "hop {hop} does not give constant overlap-add for window {window_length}"
        )));
    }
    Ok(())
}

pub(crate) fn check_geometry(fft_size: usize, hop: usize, window_length: usize) -> Result<()> {
    if fft_size < 2 || fft_size % 2 != 0 {
        return Err(Error::Geometry(format!("fft size {fft_size} must be even and >= 2")));
    }
    if hop == 0 || hop > window_length || window_length > fft_size {
        return Err(Error::Geometry(format!(
            "need 0 < hop <= window_length <= fft_size, got hop {hop}, window {window_length}, fft {fft_size}"
        )));
    }
    Ok(())
}

/// Index into a signal of length `len` mirrored at both ends without
/// repeating the edge sample.
pub(crate) fn reflect_index(i: isize, len: usize) -> usize {
    let n = len as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - j;
    }
    j as usize
}

/// Frame count after padding `fft_size / 2` samples at each edge.
pub(crate) fn frame_count(len: usize, fft_size: usize, hop: usize) -> usize {
    (len + 2 * (fft_size / 2) - fft_size) / hop + 1
}

pub(crate) fn min_stft_len(fft_size: usize, window_length: usize) -> usize {
    window_length.max(fft_size / 2 + 1)
}

pub fn stft(clip: &AudioClip, fft_size: usize, hop: usize, window_length: usize) -> Result<Spectrogram> {
    check_geometry(fft_size, hop, window_length)?;
    let x = clip.samples();
    let needed = min_stft_len(fft_size, window_length);
    if x.len() < needed {
        return Err(Error::TooShort {
            needed,
            got: x.len(),
        });
    }
    let pad = (fft_size / 2) as isize;
    let window = padded_window(fft_size, window_length);
    let n_frames = frame_count(x.len(), fft_size, hop);
    let bins = fft_size / 2 + 1;
    let fft = FftPlanner::new().plan_fft_forward(fft_size);
    let mut frames = Array2::zeros((n_frames, bins));
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_size];
    for t in 0..n_frames {
        let start = (t * hop) as isize - pad;
        for (j, b) in buf.iter_mut().enumerate() {
            let s = x[reflect_index(start + j as isize, x.len())];
            *b = Complex64::new(s * window[j], 0.0);
        }
        fft.process(&mut buf);
        for k in 0..bins {
            frames[[t, k]] = buf[k];
        }
    }
    Ok(Spectrogram {
        frames,
        fft_size,
        hop,
        window_length,
        signal_len: x.len(),
        sample_rate: clip.sample_rate(),
    })
}

/// Weighted overlap-add inverse of [`stft`].
pub fn istft(spec: &Spectrogram) -> Result<AudioClip> {
    let (fft_size, hop) = (spec.fft_size, spec.hop);
    check_geometry(fft_size, hop, spec.window_length)?;
    if spec.frames.ncols() != spec.bins() {
        return Err(Error::Geometry(format!(
            "{} bins, expected {}",
            spec.frames.ncols(),
            spec.bins()
        )));
    }
    if spec.signal_len < min_stft_len(fft_size, spec.window_length)
        || spec.n_frames() != frame_count(spec.signal_len, fft_size, hop)
    {
        return Err(Error::Geometry(format!(
            "{} frames do not match signal length {}",
            spec.n_frames(),
            spec.signal_len
        )));
    }
    let pad = fft_size / 2;
    let window = padded_window(fft_size, spec.window_length);
    let total = spec.signal_len + 2 * pad;
    let mut acc = vec![0.0; total];
    let mut env = vec![0.0; total];
    let ifft = FftPlanner::new().plan_fft_inverse(fft_size);
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_size];
    let half = fft_size / 2;
    for t in 0..spec.n_frames() {
        let row = spec.frames.row(t);
        buf[0] = Complex64::new(row[0].re, 0.0);
        buf[half] = Complex64::new(row[half].re, 0.0);
        for k in 1..half {
            buf[k] = row[k];
            buf[fft_size - k] = row[k].conj();
        }
        ifft.process(&mut buf);
        let start = t * hop;
        for j in 0..fft_size {
            let w = window[j];
            acc[start + j] += buf[j].re / fft_size as f64 * w;
            env[start + j] += w * w;
        }
    }
    let out = (pad..pad + spec.signal_len)
        .map(|i| if env[i] > 1e-11 { acc[i] / env[i] } else { 0.0 })
        .collect();
    AudioClip::new(out, spec.sample_rate)
}

/// Magnitude export, one row per frame.
pub fn write_spectrogram_csv(spec: &Spectrogram, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for row in spec.magnitudes().rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(f, "{}", line.join(","))?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_clip(seed: u64, n: usize) -> AudioClip {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        AudioClip::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), 16000).unwrap()
    }

    fn rms_diff(a: &[f64], b: &[f64]) -> f64 {
        (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
    }

    #[test]
    fn reflect_mirrors_without_edge_repeat() {
        let idx: Vec<usize> = (-3..8).map(|i| reflect_index(i, 5)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
    }

    #[test]
    fn frame_count_uses_padded_length() {
        let c = random_clip(1, 1000);
        let s = stft(&c, 64, 16, 64).unwrap();
        assert_eq!(s.n_frames(), (1000 + 64 - 64) / 16 + 1);
        assert_eq!(s.bins(), 33);
    }

    #[test]
    fn sine_on_bin_concentrates_energy() {
        let n = 256;
        let k = 20usize;
        let x: Vec<f64> = (0..4096)
            .map(|i| (2.0 * std::f64::consts::PI * k as f64 * i as f64 / n as f64).sin())
            .collect();
        let s = stft(&AudioClip::new(x, 16000).unwrap(), n, 64, n).unwrap();
        let mags = s.magnitudes();
        for t in 4..s.n_frames() - 4 {
            let row = mags.row(t);
            let total: f64 = row.iter().map(|m| m * m).sum();
            let near: f64 = (k - 1..=k + 1).map(|j| row[j] * row[j]).sum();
            assert!(near >= 0.95 * total);
        }
    }

    #[test]
    fn zero_signal_gives_zero_spectrum() {
        let c = AudioClip::new(vec![0.0; 500], 16000).unwrap();
        let s = stft(&c, 128, 32, 128).unwrap();
        assert!(s.frames.iter().all(|c| c.norm() == 0.0));
        assert!(istft(&s).unwrap().samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parseval_per_frame() {
        let c = random_clip(2, 2048);
        let (n, hop) = (128, 32);
        let s = stft(&c, n, hop, n).unwrap();
        let w = hann_window(n);
        let x = c.samples();
        for t in 0..s.n_frames() {
            let time_energy: f64 = (0..n)
                .map(|j| {
                    let v = x[reflect_index((t * hop + j) as isize - (n / 2) as isize, x.len())] * w[j];
                    v * v
                })
                .sum();
            let row = s.frames.row(t);
            let mut spec_energy = row[0].norm_sqr() + row[n / 2].norm_sqr();
            for k in 1..n / 2 {
                spec_energy += 2.0 * row[k].norm_sqr();
            }
            spec_energy /= n as f64;
            assert!((time_energy - spec_energy).abs() <= 1e-6 * time_energy);
        }
    }

    #[test]
    fn round_trip_default_resolutions() {
        for (seed, (n, hop, wl)) in [(64, 16, 64), (128, 32, 128), (256, 64, 256), (256, 32, 128)]
            .into_iter()
            .enumerate()
        {
            let c = random_clip(seed as u64, 3001);
            let back = istft(&stft(&c, n, hop, wl).unwrap()).unwrap();
            assert_eq!(back.len(), c.len());
            assert!(rms_diff(c.samples(), back.samples()) <= 1e-6);
        }
    }

    #[test]
    fn istft_is_linear() {
        let c = random_clip(9, 1500);
        let s = stft(&c, 128, 32, 128).unwrap();
        let a = -2.5;
        let lhs = istft(&s.scaled(a)).unwrap();
        let rhs = istft(&s).unwrap();
        for (l, r) in lhs.samples().iter().zip(rhs.samples()) {
            assert!((l - a * r).abs() <= 1e-9);
        }
    }

    #[test]
    fn geometry_errors() {
        let c = random_clip(1, 100);
        assert!(matches!(stft(&c, 128, 32, 128), Err(Error::TooShort { .. })));
        assert!(stft(&c, 64, 0, 64).is_err());
        assert!(stft(&c, 64, 16, 80).is_err());
        let mut s = stft(&c, 64, 16, 64).unwrap();
        s.signal_len = 400;
        assert!(matches!(istft(&s), Err(Error::Geometry(_))));
    }
}
