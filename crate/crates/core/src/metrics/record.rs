use std::fmt::Write as _;
use std::path::Path;

use super::{ber_histogram, format_value, mean_std, BerHistogram};
use crate::error::{Error, Result};

/// Outcome of one attacked clip.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub clip_id: String,
    /// Owner-message BER; `None` when the owner detector reported no mark.
    pub owner_ber: Option<f64>,
    /// Adversary-message BER under the adversary's detector; `None` on failure.
    pub adversary_ber: Option<f64>,
    pub snr_db: f64,
    pub detect_fail: bool,
}

impl SampleRecord {
    /// Owner message not recovered exactly.
    pub fn owner_corrupted(&self) -> bool {
        self.detect_fail || self.owner_ber.is_none_or(|b| b > 0.0)
    }

    pub fn adversary_exact(&self) -> bool {
        self.adversary_ber == Some(0.0)
    }
}

/// Per-sample records with the aggregates derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub samples: Vec<SampleRecord>,
    pub asr: f64,
    pub acc: f64,
    pub ber_mean: f64,
    pub ber_std: f64,
    pub histogram: BerHistogram,
    pub snr_mean_db: f64,
    pub detect_fail_rate: f64,
}

impl MetricsRecord {
    /// Failed detections count toward ASR and are left out of the BER statistics.
    pub fn from_samples(samples: Vec<SampleRecord>, bins: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter("no samples".into()));
        }
        let n = samples.len() as f64;
        let bers: Vec<f64> = samples.iter().filter_map(|s| s.owner_ber).collect();
        let histogram = ber_histogram(&bers, bins)?;
        let (ber_mean, ber_std) = mean_std(&bers);
        let snrs: Vec<f64> = samples.iter().map(|s| s.snr_db).collect();
        Ok(Self {
            asr: samples.iter().filter(|s| s.owner_corrupted()).count() as f64 / n,
            acc: samples.iter().filter(|s| s.adversary_exact()).count() as f64 / n,
            ber_mean,
            ber_std,
            histogram,
            snr_mean_db: snrs.iter().sum::<f64>() / n,
            detect_fail_rate: samples.iter().filter(|s| s.detect_fail).count() as f64 / n,
            samples,
        })
    }

    /// Key-value text report; numbers at fixed precision.
    pub fn report(&self) -> String {
        let f = |v: f64| {
            if v.is_finite() {
                format!("{v:.6}")
            } else {
                format_value(v)
            }
        };
        let mut s = String::new();
        let _ = writeln!(s, "samples = {}", self.samples.len());
        let _ = writeln!(s, "asr = {}", f(self.asr));
        let _ = writeln!(s, "acc = {}", f(self.acc));
        let _ = writeln!(s, "owner_ber_mean = {}", f(self.ber_mean));
        let _ = writeln!(s, "owner_ber_std = {}", f(self.ber_std));
        let _ = writeln!(s, "snr_mean_db = {}", f(self.snr_mean_db));
        let _ = writeln!(s, "detect_fail_rate = {}", f(self.detect_fail_rate));
        let counts: Vec<String> = self.histogram.counts.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(s, "ber_histogram = {}", counts.join(" "));
        s
    }

    pub fn write_report(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.report())?;
        Ok(())
    }
}

const HEADER: [&str; 5] = ["clip_id", "owner_ber", "adv_ber", "snr_db", "detect_fail"];

/// One row per sample; missing BERs are empty fields and `+inf` SNR is `inf`.
pub fn write_samples_csv(samples: &[SampleRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HEADER)?;
    let opt = |v: Option<f64>| v.map(format_value).unwrap_or_default();
    for s in samples {
        w.write_record([
            s.clip_id.clone(),
            opt(s.owner_ber),
            opt(s.adversary_ber),
            format_value(s.snr_db),
            (s.detect_fail as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(HEADER) {
        return Err(Error::InvalidParameter("unexpected per-sample CSV header".into()));
    }
    let bad = |field: &str| Error::InvalidParameter(format!("bad CSV field {field:?}"));
    let num = |s: &str| -> Result<f64> {
        match s {
            "inf" => Ok(f64::INFINITY),
            _ => s.parse().map_err(|_| bad(s)),
        }
    };
    let opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            num(s).map(Some)
        }
    };
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(SampleRecord {
                clip_id: rec[0].to_string(),
                owner_ber: opt(&rec[1])?,
                adversary_ber: opt(&rec[2])?,
                snr_db: num(&rec[3])?,
                detect_fail: match &rec[4] {
                    "0" => false,
                    "1" => true,
                    other => return Err(bad(other)),
                },
            })
        })
        .collect()
}
