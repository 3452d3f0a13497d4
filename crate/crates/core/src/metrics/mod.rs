//! Bit error rate, attack success rate, recovery accuracy, SNR and the
//! aggregate records and files built from them.

mod record;

pub use record::{read_samples_csv, write_samples_csv, MetricsRecord, SampleRecord};

use std::path::Path;

use rayon::prelude::*;

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::schemes::{Message, WatermarkScheme};

/// Fraction of positions where the two messages differ.
pub fn ber(m: &Message, decoded: &Message) -> Result<f64> {
    if m.len() != decoded.len() {
        return Err(Error::LengthMismatch {
            left: m.len(),
            right: decoded.len(),
        });
    }
    let wrong = m.bits().iter().zip(decoded.bits()).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / m.len() as f64)
}

fn nonempty<T>(items: &[T]) -> Result<()> {
    if items.is_empty() {
        return Err(Error::InvalidParameter("no outcomes to aggregate".into()));
    }
    Ok(())
}

/// Fraction of outcomes whose decoded message differs from the reference;
/// a failed detection counts as different.
pub fn asr(outcomes: &[(Option<Message>, Message)]) -> Result<f64> {
    nonempty(outcomes)?;
    let hits = outcomes.iter().filter(|(d, m)| d.as_ref() != Some(m)).count();
    Ok(hits as f64 / outcomes.len() as f64)
}

/// Fraction of outcomes decoded exactly; a failed detection is a miss.
pub fn acc(outcomes: &[(Option<Message>, Message)]) -> Result<f64> {
    nonempty(outcomes)?;
    let hits = outcomes.iter().filter(|(d, m)| d.as_ref() == Some(m)).count();
    Ok(hits as f64 / outcomes.len() as f64)
}

/// `10 log10(|x|^2 / |x - y|^2)` in dB; identical inputs give `+inf`.
pub fn snr(reference: &AudioClip, other: &AudioClip) -> Result<f64> {
    if reference.len() != other.len() {
        return Err(Error::LengthMismatch {
            left: reference.len(),
            right: other.len(),
        });
    }
    let signal = reference.energy();
    if signal == 0.0 {
        return Err(Error::InvalidClip("SNR reference is silent".into()));
    }
    let noise: f64 = reference
        .samples()
        .iter()
        .zip(other.samples())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

/// Equal-width histogram over [0, 1] with the mean and population standard
/// deviation of the values.
#[derive(Debug, Clone, PartialEq)]
pub struct BerHistogram {
    pub counts: Vec<usize>,
    pub mean: f64,
    pub std: f64,
}

impl BerHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn ber_histogram(values: &[f64], bins: usize) -> Result<BerHistogram> {
    if bins < 1 {
        return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidParameter(format!("value {v} outside [0, 1]")));
    }
    let mut counts = vec![0; bins];
    for &v in values {
        counts[((v * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let (mean, std) = mean_std(values);
    Ok(BerHistogram { counts, mean, std })
}

/// Mean and population standard deviation; NaN for an empty slice.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean owner BER for every (owner, overwriter) pair of schemes.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossMatrix {
    pub labels: Vec<String>,
    /// `values[i][j]`: scheme `j` overwrites the mark of scheme `i`.
    /// NaN when every owner detection failed.
    pub values: Vec<Vec<f64>>,
}

/// Clip `k` is marked by the owner with `owner_messages[k]` and then
/// overwritten with `adversary_messages[k]`. Detection failures are left out
/// of the mean.
pub fn cross_matrix(
    schemes: &[WatermarkScheme],
    corpus: &[AudioClip],
    owner_messages: &[Message],
    adversary_messages: &[Message],
) -> Result<CrossMatrix> {
    if schemes.len() < 2 {
        return Err(Error::InvalidParameter("cross matrix needs at least two schemes".into()));
    }
    nonempty(corpus)?;
    if owner_messages.len() != corpus.len() || adversary_messages.len() != corpus.len() {
        return Err(Error::InvalidParameter("one owner and one adversary message per clip".into()));
    }
    let mut values = Vec::with_capacity(schemes.len());
    for owner in schemes {
        let marked: Vec<AudioClip> = corpus
            .par_iter()
            .zip(owner_messages)
            .map(|(c, m)| owner.embed(c, m))
            .collect::<Result<_>>()?;
        let mut row = Vec::with_capacity(schemes.len());
        for attacker in schemes {
            let bers: Vec<Option<f64>> = marked
                .par_iter()
                .zip(owner_messages.par_iter().zip(adversary_messages))
                .map(|(xw, (m, adv))| {
                    let forged = attacker.embed(xw, adv)?;
                    match owner.detect(&forged)?.decoded {
                        Some(d) => ber(m, &d).map(Some),
                        None => Ok(None),
                    }
                })
                .collect::<Result<_>>()?;
            let kept: Vec<f64> = bers.into_iter().flatten().collect();
            row.push(mean_std(&kept).0);
        }
        values.push(row);
    }
    Ok(CrossMatrix {
        labels: schemes.iter().map(|s| s.label()).collect(),
        values,
    })
}

pub(crate) fn format_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

impl CrossMatrix {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["owner".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in self.labels.iter().zip(&self.values) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|&v| format_value(v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
