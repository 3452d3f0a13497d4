//! Keyed embedder/detector pairs.

mod descriptor;
mod lsb;
mod qim;
mod spread;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use descriptor::SchemeDescriptor;

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::neural::SurrogateModel;
use crate::rng::{mix64, stream_rng};

pub const DEFAULT_MESSAGE_BITS: usize = 16;
pub const DEFAULT_PATTERN_BITS: usize = 4;
pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_DELTA: f64 = 0.1;

/// Fixed-length bit vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Message {
    bits: Vec<u8>,
}

impl Message {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::InvalidParameter("message must have at least one bit".into()));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidParameter("message bits must be 0 or 1".into()));
        }
        Ok(Self { bits })
    }

    pub fn from_bools(bits: &[bool]) -> Result<Self> {
        Self::new(bits.iter().map(|&b| b as u8).collect())
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(vec![0; len])
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Self {
        Self {
            bits: (0..len.max(1)).map(|_| rng.random_range(0..2u8)).collect(),
        }
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Bits mapped to ±1.
    pub fn signs(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| 2.0 * b as f64 - 1.0).collect()
    }

    pub fn complement(&self) -> Self {
        Self {
            bits: self.bits.iter().map(|b| 1 - b).collect(),
        }
    }

    pub fn concat(&self, tail: &Message) -> Self {
        let mut bits = self.bits.clone();
        bits.extend_from_slice(&tail.bits);
        Self { bits }
    }

    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        Self::new(self.bits.get(start..end).unwrap_or_default().to_vec())
    }

    /// Bits packed into nibbles, most significant first, zero-padded at the end.
    pub fn to_hex(&self) -> String {
        self.bits
            .chunks(4)
            .map(|c| {
                let v = c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | (b << (3 - i)));
                char::from_digit(v as u32, 16).expect("nibble")
            })
            .collect()
    }

    pub fn from_hex(hex: &str, len: usize) -> Result<Self> {
        if hex.len() != len.div_ceil(4) {
            return Err(Error::InvalidParameter(format!(
                "hex {hex:?} does not encode {len} bits"
            )));
        }
        let mut bits = Vec::with_capacity(len);
        for ch in hex.chars() {
            let v = ch
                .to_digit(16)
                .ok_or_else(|| Error::InvalidParameter(format!("bad hex digit {ch:?}")))?;
            for i in 0..4 {
                bits.push(((v >> (3 - i)) & 1) as u8);
            }
        }
        if bits[len..].iter().any(|&b| b != 0) {
            return Err(Error::InvalidParameter("nonzero padding bits".into()));
        }
        bits.truncate(len);
        Self::new(bits)
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl FromStr for Message {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::InvalidParameter(format!("bad bit character {c:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(bits)
    }
}

/// Secret seed from which each family derives its chips, bins and dithers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WatermarkKey {
    pub seed: u64,
}

impl WatermarkKey {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn rng(&self, purpose: u64, index: u64) -> ChaCha8Rng {
        stream_rng(mix64(self.seed ^ mix64(purpose)), index)
    }

    pub fn hash(&self, purpose: u64, index: u64) -> u64 {
        mix64(mix64(self.seed ^ mix64(purpose)) ^ index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub decoded: Option<Message>,
    pub soft_scores: Vec<f64>,
    pub detected: bool,
}

impl DetectionResult {
    /// Successful detection with bit i set iff its score exceeds one half.
    pub fn from_scores(soft_scores: Vec<f64>) -> Self {
        let decoded = Message::new(soft_scores.iter().map(|&s| (s > 0.5) as u8).collect()).ok();
        Self {
            detected: decoded.is_some(),
            decoded,
            soft_scores,
        }
    }

    pub fn failure(soft_scores: Vec<f64>) -> Self {
        Self {
            decoded: None,
            soft_scores,
            detected: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Lsb,
    SpreadSpectrum,
    QimFreq,
    Neural,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Lsb, Family::SpreadSpectrum, Family::QimFreq, Family::Neural];

    pub fn name(&self) -> &'static str {
        match self {
            Family::Lsb => "lsb",
            Family::SpreadSpectrum => "spread-spectrum",
            Family::QimFreq => "qim-freq",
            Family::Neural => "neural",
        }
    }

    /// Nominal embedding SNR floor in dB on canonical-level material.
    pub fn snr_floor_db(&self) -> f64 {
        match self {
            Family::Lsb => 60.0,
            Family::SpreadSpectrum | Family::QimFreq => 20.0,
            Family::Neural => 15.0,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Descriptor(format!("unknown family {s:?}")))
    }
}

/// Keyed embedder/detector pair from one family, optionally guarded by a
/// fixed pattern prefix whose mismatch makes detection fail.
#[derive(Debug, Clone)]
pub struct WatermarkScheme {
    family: Family,
    key: WatermarkKey,
    strength: f64,
    message_bits: usize,
    pattern: Option<Message>,
    model: Option<Arc<SurrogateModel>>,
}

const PATTERN_PURPOSE: u64 = 0x7061_7474;

impl WatermarkScheme {
    fn build(family: Family, key: WatermarkKey, strength: f64) -> Result<Self> {
        let ok = match family {
            Family::SpreadSpectrum => strength.is_finite() && strength >= 0.0,
            _ => strength.is_finite() && strength > 0.0,
        };
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "{family} strength {strength} out of range"
            )));
        }
        Ok(Self {
            family,
            key,
            strength,
            message_bits: DEFAULT_MESSAGE_BITS,
            pattern: None,
            model: None,
        })
    }

    pub fn lsb(key: WatermarkKey) -> Self {
        Self::build(Family::Lsb, key, 1.0).expect("unit strength")
    }

    /// `alpha = 0` is accepted and yields the identity embedder.
    pub fn spread_spectrum(key: WatermarkKey, alpha: f64) -> Result<Self> {
        Self::build(Family::SpreadSpectrum, key, alpha)
    }

    pub fn qim_freq(key: WatermarkKey, delta: f64) -> Result<Self> {
        Self::build(Family::QimFreq, key, delta)
    }

    /// Neural family backed by trained parameters; the key is the training seed.
    pub fn neural(model: Arc<SurrogateModel>) -> Self {
        let mut s = Self::build(Family::Neural, WatermarkKey::new(model.seed), 1.0).expect("unit gain");
        s.message_bits = model.message_bits;
        s.model = Some(model);
        s
    }

    /// Neural family with the residual scaled by `gain`.
    pub fn neural_with_gain(model: Arc<SurrogateModel>, gain: f64) -> Result<Self> {
        let mut s = Self::neural(model);
        if !(gain.is_finite() && gain > 0.0) {
            return Err(Error::InvalidParameter(format!("neural gain {gain} must be positive")));
        }
        s.strength = gain;
        Ok(s)
    }

    pub fn with_message_bits(mut self, bits: usize) -> Result<Self> {
        if self.family == Family::Neural {
            return Err(Error::InvalidParameter(
                "neural message length is fixed by its parameters".into(),
            ));
        }
        if bits == 0 || self.pattern.as_ref().is_some_and(|p| p.len() >= bits) {
            return Err(Error::InvalidParameter(format!("invalid message length {bits}")));
        }
        self.message_bits = bits;
        Ok(self)
    }

    /// Reserve the first `p` carrier bits for a key-derived pattern.
    pub fn with_pattern_bits(mut self, p: usize) -> Result<Self> {
        if p == 0 {
            self.pattern = None;
            return Ok(self);
        }
        if p >= self.message_bits {
            return Err(Error::InvalidParameter(format!(
                "pattern length {p} must be below message length {}",
                self.message_bits
            )));
        }
        let bits = (0..p as u64).map(|i| (self.key.hash(PATTERN_PURPOSE, i) & 1) as u8).collect();
        self.pattern = Some(Message::new(bits)?);
        Ok(self)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn key(&self) -> WatermarkKey {
        self.key
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn model(&self) -> Option<&Arc<SurrogateModel>> {
        self.model.as_ref()
    }

    pub fn pattern(&self) -> Option<&Message> {
        self.pattern.as_ref()
    }

    /// Carrier length L, pattern included.
    pub fn carrier_bits(&self) -> usize {
        self.message_bits
    }

    /// Length of the user message accepted by [`embed`](Self::embed).
    pub fn payload_bits(&self) -> usize {
        self.message_bits - self.pattern.as_ref().map_or(0, |p| p.len())
    }

    pub fn min_len(&self) -> usize {
        match self.family {
            Family::Lsb => self.message_bits,
            Family::SpreadSpectrum => spread::min_len(self.message_bits),
            Family::QimFreq => qim::BLOCK,
            Family::Neural => crate::neural::FRAME,
        }
    }

    pub fn label(&self) -> String {
        let mut s = format!("{}#{}", self.family, self.key.seed);
        if let Some(p) = &self.pattern {
            s.push_str(&format!("+p{}", p.len()));
        }
        s
    }

    fn check_len(&self, clip: &AudioClip) -> Result<()> {
        if clip.len() < self.min_len() {
            return Err(Error::TooShort {
                needed: self.min_len(),
                got: clip.len(),
            });
        }
        Ok(())
    }

    pub fn embed(&self, clip: &AudioClip, m: &Message) -> Result<AudioClip> {
        self.check_len(clip)?;
        if m.len() != self.payload_bits() {
            return Err(Error::LengthMismatch {
                left: m.len(),
                right: self.payload_bits(),
            });
        }
        let carrier = match &self.pattern {
            Some(p) => p.concat(m),
            None => m.clone(),
        };
        let x = clip.samples();
        let y = match self.family {
            Family::Lsb => lsb::embed(&self.key, x, carrier.bits()),
            Family::SpreadSpectrum => spread::embed(&self.key, self.strength, x, carrier.bits()),
            Family::QimFreq => qim::embed(&self.key, self.strength, x, carrier.bits()),
            Family::Neural => {
                let model = self.model.as_ref().expect("neural scheme holds a model");
                return model.embed_with_gain(clip, &carrier, self.strength);
            }
        };
        clip.with_samples(y).map(AudioClip::clamped)
    }

    pub fn detect(&self, clip: &AudioClip) -> Result<DetectionResult> {
        self.check_len(clip)?;
        let x = clip.samples();
        let scores = match self.family {
            Family::Lsb => lsb::detect(&self.key, x, self.message_bits),
            Family::SpreadSpectrum => spread::detect(&self.key, x, self.message_bits),
            Family::QimFreq => qim::detect(&self.key, self.strength, x, self.message_bits),
            Family::Neural => {
                let model = self.model.as_ref().expect("neural scheme holds a model");
                model.detect(clip)?.soft_scores
            }
        };
        let Some(pattern) = &self.pattern else {
            return Ok(DetectionResult::from_scores(scores));
        };
        let p = pattern.len();
        let prefix_ok = scores[..p]
            .iter()
            .zip(pattern.bits())
            .all(|(&s, &b)| (s > 0.5) as u8 == b);
        let payload = scores[p..].to_vec();
        Ok(if prefix_ok {
            DetectionResult::from_scores(payload)
        } else {
            DetectionResult::failure(payload)
        })
    }
}

/// Majority-vote score per bit: fraction of votes for one, or one half with no votes.
pub(crate) fn vote_scores(ones: &[usize], totals: &[usize]) -> Vec<f64> {
    ones.iter()
        .zip(totals)
        .map(|(&o, &t)| if t == 0 { 0.5 } else { o as f64 / t as f64 })
        .collect()
}

#[cfg(test)]
mod tests;
