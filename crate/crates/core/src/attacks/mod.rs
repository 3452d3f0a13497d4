//! Overwriting attacks at each knowledge tier, success verification and the
//! query-limited detector oracle.

mod oracle;
pub mod protocol;
mod query;

pub use oracle::{DetectorOracle, OracleMode, OracleResponse, QueryRecord};
pub use query::{query_attack, QuerySettings};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::metrics::{ber, snr, MetricsRecord, SampleRecord};
use crate::schemes::{Family, Message, WatermarkScheme};
use crate::training::TrainConfig;

/// Residual gain the adversary applies with a surrogate embedder.
pub const ATTACKER_GAIN: f64 = 1.5;
/// Default SNR threshold for the imperceptibility condition.
pub const DEFAULT_SNR_FLOOR_DB: f64 = 20.0;
/// Threshold used for neural-family attacks.
pub const NEURAL_SNR_FLOOR_DB: f64 = 15.0;

/// Imperceptibility threshold for attacks on a given owner family.
pub fn snr_floor_for(family: Family) -> f64 {
    match family {
        Family::Neural => NEURAL_SNR_FLOOR_DB,
        _ => DEFAULT_SNR_FLOOR_DB,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tier {
    WhiteBox,
    GrayBox,
    BlackBoxZeroQuery,
    BlackBoxQuery,
}

impl Tier {
    pub const ALL: [Tier; 4] = [Tier::WhiteBox, Tier::GrayBox, Tier::BlackBoxZeroQuery, Tier::BlackBoxQuery];

    pub fn name(&self) -> &'static str {
        match self {
            Tier::WhiteBox => "white-box",
            Tier::GrayBox => "gray-box",
            Tier::BlackBoxZeroQuery => "black-box-zero-query",
            Tier::BlackBoxQuery => "black-box-query",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Tier::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown tier {s:?}")))
    }
}

/// What the adversary brings to an attack.
#[derive(Debug, Clone)]
pub struct AttackSpec {
    pub tier: Tier,
    pub adversary_message: Message,
    /// Embedders applied in order (white-box, gray-box, zero-query).
    pub candidates: Vec<WatermarkScheme>,
    /// Surrogates to train while querying (query-based tier).
    pub candidate_configs: Vec<TrainConfig>,
    pub budget: usize,
    pub snr_floor_db: f64,
}

impl AttackSpec {
    pub fn new(
        tier: Tier,
        adversary_message: Message,
        candidates: Vec<WatermarkScheme>,
        candidate_configs: Vec<TrainConfig>,
        budget: usize,
        snr_floor_db: f64,
    ) -> Result<Self> {
        let missing = match tier {
            Tier::BlackBoxQuery => candidate_configs.is_empty(),
            _ => candidates.is_empty(),
        };
        if missing {
            return Err(Error::InvalidParameter(format!("{tier} attack needs at least one candidate")));
        }
        if !snr_floor_db.is_finite() {
            return Err(Error::InvalidParameter("SNR floor must be finite".into()));
        }
        Ok(Self {
            tier,
            adversary_message,
            candidates,
            candidate_configs,
            budget,
            snr_floor_db,
        })
    }
}

/// The three threat-model conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SuccessFlags {
    /// The owner message is no longer recovered.
    pub owner_removed: bool,
    /// The adversary's detector recovers the adversary message.
    pub adversary_verified: bool,
    /// SNR between marked and forged audio meets the floor.
    pub imperceptible: bool,
}

impl SuccessFlags {
    pub fn all(&self) -> bool {
        self.owner_removed && self.adversary_verified && self.imperceptible
    }
}

/// Single forged clip and how it was obtained.
#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub forged: AudioClip,
    pub queries_used: usize,
    /// Labels of the embedders applied, innermost first.
    pub embedders: Vec<String>,
    pub flags: SuccessFlags,
    pub snr_db: f64,
    /// Surrogate produced by a query-based attack.
    pub surrogate: Option<crate::neural::SurrogateModel>,
    pub training_iterations: usize,
}

impl AttackOutcome {
    pub fn success(&self) -> bool {
        self.flags.all()
    }
}

/// Anything that can tell whether the owner's message survived in a clip.
pub trait OwnerCheck {
    fn owner_corrupted(&mut self, clip: &AudioClip, m_owner: &Message) -> Result<bool>;
}

impl OwnerCheck for WatermarkScheme {
    fn owner_corrupted(&mut self, clip: &AudioClip, m_owner: &Message) -> Result<bool> {
        Ok(self.detect(clip)?.decoded.as_ref() != Some(m_owner))
    }
}

impl OwnerCheck for DetectorOracle {
    fn owner_corrupted(&mut self, clip: &AudioClip, m_owner: &Message) -> Result<bool> {
        Ok(self.query(clip, m_owner)?.corrupted)
    }
}

/// Embed the adversary message with the given embedder.
pub fn overwrite(embedder: &WatermarkScheme, x_w: &AudioClip, m_adv: &Message) -> Result<AudioClip> {
    embedder.embed(x_w, m_adv)
}

/// Result of applying several embedders in sequence.
#[derive(Debug, Clone)]
pub struct StackedClip {
    pub clip: AudioClip,
    /// SNR against the input after each embedder.
    pub snrs: Vec<f64>,
}

/// Apply `embedders` in order, the first one innermost.
pub fn stack_overwrite(embedders: &[WatermarkScheme], x_w: &AudioClip, m_adv: &Message) -> Result<StackedClip> {
    if embedders.is_empty() {
        return Err(Error::InvalidParameter("no embedders to stack".into()));
    }
    let mut clip = x_w.clone();
    let mut snrs = Vec::with_capacity(embedders.len());
    for e in embedders {
        clip = overwrite(e, &clip, m_adv)?;
        snrs.push(snr(x_w, &clip)?);
    }
    Ok(StackedClip { clip, snrs })
}

/// Evaluate the three conditions for one forged clip.
pub fn verify_attack<O: OwnerCheck + ?Sized>(
    owner: &mut O,
    adversary_detector: &WatermarkScheme,
    x_w: &AudioClip,
    forged: &AudioClip,
    m_owner: &Message,
    m_adv: &Message,
    snr_floor_db: f64,
) -> Result<SuccessFlags> {
    Ok(SuccessFlags {
        owner_removed: owner.owner_corrupted(forged, m_owner)?,
        adversary_verified: adversary_detector.detect(forged)?.decoded.as_ref() == Some(m_adv),
        imperceptible: snr(x_w, forged)? >= snr_floor_db,
    })
}

/// Per-clip results of an attack over a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub samples: Vec<SampleRecord>,
    pub flags: Vec<SuccessFlags>,
}

impl SuiteResult {
    pub fn metrics(&self, bins: usize) -> Result<MetricsRecord> {
        MetricsRecord::from_samples(self.samples.clone(), bins)
    }

    /// Fraction of clips meeting all three conditions.
    pub fn success_rate(&self) -> f64 {
        self.flags.iter().filter(|f| f.all()).count() as f64 / self.flags.len().max(1) as f64
    }
}

/// Mark clip `k` with `owner_messages[k]`, forge it with `attack`, and
/// score the result against the owner and the adversary detector.
pub fn run_suite<F>(
    owner: &WatermarkScheme,
    adversary_detector: &WatermarkScheme,
    corpus: &[AudioClip],
    owner_messages: &[Message],
    m_adv: &Message,
    snr_floor_db: f64,
    attack: F,
) -> Result<SuiteResult>
where
    F: Fn(&AudioClip) -> Result<AudioClip> + Sync,
{
    if owner_messages.len() != corpus.len() {
        return Err(Error::LengthMismatch {
            left: corpus.len(),
            right: owner_messages.len(),
        });
    }
    let rows: Vec<(SampleRecord, SuccessFlags)> = corpus
        .par_iter()
        .zip(owner_messages)
        .enumerate()
        .map(|(k, (clip, m))| {
            let x_w = owner.embed(clip, m)?;
            let forged = attack(&x_w)?;
            let owner_det = owner.detect(&forged)?;
            let adv_det = adversary_detector.detect(&forged)?;
            let snr_db = snr(&x_w, &forged)?;
            let flags = SuccessFlags {
                owner_removed: owner_det.decoded.as_ref() != Some(m),
                adversary_verified: adv_det.decoded.as_ref() == Some(m_adv),
                imperceptible: snr_db >= snr_floor_db,
            };
            let record = SampleRecord {
                clip_id: format!("clip{k:04}"),
                owner_ber: owner_det.decoded.as_ref().map(|d| ber(m, d)).transpose()?,
                adversary_ber: adv_det.decoded.as_ref().map(|d| ber(m_adv, d)).transpose()?,
                snr_db,
                detect_fail: !owner_det.detected,
            };
            Ok((record, flags))
        })
        .collect::<Result<_>>()?;
    let (samples, flags) = rows.into_iter().unzip();
    Ok(SuiteResult { samples, flags })
}

#[cfg(test)]
mod tests;
