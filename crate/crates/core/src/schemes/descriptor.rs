use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{Family, WatermarkKey, WatermarkScheme, DEFAULT_ALPHA, DEFAULT_DELTA, DEFAULT_MESSAGE_BITS};
use crate::error::{Error, Result};
use crate::neural::SurrogateModel;

/// Key-value text record naming a scheme:
///
/// ```text
/// family = qim-freq
/// seed = 11
/// strength = 0.1
/// message_bits = 16
/// pattern_bits = 0
/// ```
///
/// Neural descriptors add `checkpoint = <path>`, resolved relative to the
/// descriptor's directory; their seed comes from the checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeDescriptor {
    pub family: Family,
    pub seed: u64,
    pub strength: Option<f64>,
    pub message_bits: usize,
    pub pattern_bits: usize,
    pub checkpoint: Option<PathBuf>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Descriptor(msg.into())
}

fn value<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| bad(format!("bad value for {k}: {v:?}")))
}

impl SchemeDescriptor {
    pub fn new(family: Family, seed: u64) -> Self {
        Self {
            family,
            seed,
            strength: None,
            message_bits: DEFAULT_MESSAGE_BITS,
            pattern_bits: 0,
            checkpoint: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut family = None;
        let mut d = Self::new(Family::Lsb, 0);
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key = value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "family" => family = Some(v.parse::<Family>()?),
                "seed" => d.seed = value(k, v)?,
                "strength" => d.strength = Some(value(k, v)?),
                "message_bits" => d.message_bits = value(k, v)?,
                "pattern_bits" => d.pattern_bits = value(k, v)?,
                "checkpoint" => d.checkpoint = Some(PathBuf::from(v)),
                _ => return Err(bad(format!("unknown key {k:?}"))),
            }
        }
        d.family = family.ok_or_else(|| bad("missing family"))?;
        if d.family == Family::Neural && d.checkpoint.is_none() {
            return Err(bad("neural descriptor needs a checkpoint"));
        }
        Ok(d)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "family = {}", self.family);
        let _ = writeln!(s, "seed = {}", self.seed);
        if let Some(v) = self.strength {
            let _ = writeln!(s, "strength = {v}");
        }
        let _ = writeln!(s, "message_bits = {}", self.message_bits);
        let _ = writeln!(s, "pattern_bits = {}", self.pattern_bits);
        if let Some(p) = &self.checkpoint {
            let _ = writeln!(s, "checkpoint = {}", p.display());
        }
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Instantiate the scheme; relative checkpoint paths resolve against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<WatermarkScheme> {
        let key = WatermarkKey::new(self.seed);
        let scheme = match self.family {
            Family::Lsb => WatermarkScheme::lsb(key),
            Family::SpreadSpectrum => {
                WatermarkScheme::spread_spectrum(key, self.strength.unwrap_or(DEFAULT_ALPHA))?
            }
            Family::QimFreq => WatermarkScheme::qim_freq(key, self.strength.unwrap_or(DEFAULT_DELTA))?,
            Family::Neural => {
                let rel = self.checkpoint.as_ref().ok_or_else(|| bad("missing checkpoint"))?;
                let model = SurrogateModel::load(base_dir.join(rel))?;
                if model.message_bits != self.message_bits {
                    return Err(bad(format!(
                        "checkpoint carries {} bits, descriptor says {}",
                        model.message_bits, self.message_bits
                    )));
                }
                let scheme = WatermarkScheme::neural_with_gain(Arc::new(model), self.strength.unwrap_or(1.0))?;
                return scheme.with_pattern_bits(self.pattern_bits);
            }
        };
        scheme.with_message_bits(self.message_bits)?.with_pattern_bits(self.pattern_bits)
    }
}
