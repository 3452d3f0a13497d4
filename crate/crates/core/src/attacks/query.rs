use std::sync::Arc;

use super::{overwrite, snr, verify_attack, AttackOutcome, DetectorOracle, SuccessFlags, ATTACKER_GAIN};
use crate::audio::AudioClip;
use crate::error::Result;
use crate::neural::SurrogateModel;
use crate::rng::stream_rng;
use crate::schemes::{Message, WatermarkScheme};
use crate::training::{partial_train, resume, TrainConfig, TrainState};

const RELIABILITY_STREAM: u64 = 0x7265_6c69;

#[derive(Debug, Clone, PartialEq)]
pub struct QuerySettings {
    /// Iterations per partial-training round.
    pub step_iterations: usize,
    /// Oracle queries spent confirming a refined candidate.
    pub max_verification_queries: usize,
    /// Training cap for the refined candidate.
    pub max_refine_iterations: usize,
    /// Adversary clips used to judge the surrogate before spending a query.
    pub reliability_clips: usize,
    /// Fraction of those clips on which an overwrite must verify.
    pub reliability_threshold: f64,
    pub gain: f64,
    pub snr_floor_db: f64,
}

impl Default for QuerySettings {
    fn default() -> Self {
        Self {
            step_iterations: 250,
            max_verification_queries: 5,
            max_refine_iterations: 4000,
            reliability_clips: 16,
            reliability_threshold: 0.95,
            gain: ATTACKER_GAIN,
            snr_floor_db: super::NEURAL_SNR_FLOOR_DB,
        }
    }
}

struct Forgery {
    scheme: WatermarkScheme,
    clip: AudioClip,
}

fn forge(model: &SurrogateModel, gain: f64, x_w: &AudioClip, m_adv: &Message) -> Result<Forgery> {
    let scheme = WatermarkScheme::neural_with_gain(Arc::new(model.clone()), gain)?;
    let clip = overwrite(&scheme, x_w, m_adv)?;
    Ok(Forgery { scheme, clip })
}

/// Fraction of the adversary's own clips where overwriting a mark made by
/// the surrogate itself yields the adversary message.
fn self_overwrite_rate(model: &SurrogateModel, corpus: &[AudioClip], m_adv: &Message, s: &QuerySettings) -> Result<f64> {
    let scheme = WatermarkScheme::neural_with_gain(Arc::new(model.clone()), s.gain)?;
    let n = s.reliability_clips.min(corpus.len()).max(1);
    let mut ok = 0;
    for (k, clip) in corpus.iter().take(n).enumerate() {
        let prior = Message::random(&mut stream_rng(model.seed ^ RELIABILITY_STREAM, k as u64), m_adv.len());
        let marked = model.embed(clip, &prior)?;
        let forged = scheme.embed(&marked, m_adv)?;
        ok += (scheme.detect(&forged)?.decoded.as_ref() == Some(m_adv)) as usize;
    }
    Ok(ok as f64 / n as f64)
}

struct Tracker<'a> {
    x_w: &'a AudioClip,
    queries_start: usize,
    iterations: usize,
    embedders: Vec<String>,
}

impl Tracker<'_> {
    fn finish(
        &self,
        oracle: &DetectorOracle,
        forged: AudioClip,
        flags: SuccessFlags,
        surrogate: Option<SurrogateModel>,
    ) -> Result<AttackOutcome> {
        Ok(AttackOutcome {
            snr_db: snr(self.x_w, &forged)?,
            forged,
            queries_used: oracle.used() - self.queries_start,
            embedders: self.embedders.clone(),
            flags,
            surrogate,
            training_iterations: self.iterations,
        })
    }
}

/// Screen candidates by partial training and one oracle query each; refine
/// the first one whose overwrite corrupts the owner mark until it verifies.
/// Running out of budget yields an unsuccessful outcome.
pub fn query_attack(
    candidates: &[TrainConfig],
    corpus: &[AudioClip],
    oracle: &mut DetectorOracle,
    x_w: &AudioClip,
    m_owner_probe: &Message,
    m_adv: &Message,
    settings: &QuerySettings,
) -> Result<AttackOutcome> {
    let mut t = Tracker {
        x_w,
        queries_start: oracle.used(),
        iterations: 0,
        embedders: Vec::new(),
    };
    if oracle.remaining() == 0 {
        return t.finish(oracle, x_w.clone(), SuccessFlags::default(), None);
    }
    let mut last = x_w.clone();
    for cfg in candidates {
        let step = settings.step_iterations.min(cfg.total_iterations().max(1));
        let mut state: TrainState = partial_train(cfg, corpus, step)?;
        t.iterations += step;
        let mut f = forge(&state.model, settings.gain, x_w, m_adv)?;
        t.embedders = vec![f.scheme.label()];
        if oracle.remaining() == 0 {
            return t.finish(oracle, f.clip, SuccessFlags::default(), Some(state.model));
        }
        if !oracle.query(&f.clip, m_owner_probe)?.corrupted {
            last = f.clip;
            continue;
        }
        let mut verifications = 0;
        let mut flags = SuccessFlags::default();
        loop {
            let local_ok = f.scheme.detect(&f.clip)?.decoded.as_ref() == Some(m_adv)
                && snr(x_w, &f.clip)? >= settings.snr_floor_db
                && self_overwrite_rate(&state.model, corpus, m_adv, settings)? >= settings.reliability_threshold;
            if local_ok {
                if verifications == settings.max_verification_queries || oracle.remaining() == 0 {
                    return t.finish(oracle, f.clip, flags, Some(state.model));
                }
                flags = verify_attack(oracle, &f.scheme, x_w, &f.clip, m_owner_probe, m_adv, settings.snr_floor_db)?;
                verifications += 1;
                if flags.all() {
                    return t.finish(oracle, f.clip, flags, Some(state.model));
                }
            }
            if state.iteration >= settings.max_refine_iterations {
                return t.finish(oracle, f.clip, flags, Some(state.model));
            }
            let target = (state.iteration + settings.step_iterations).min(settings.max_refine_iterations);
            t.iterations += target - state.iteration;
            resume(&mut state, cfg, corpus, target)?;
            f = forge(&state.model, settings.gain, x_w, m_adv)?;
        }
    }
    t.finish(oracle, last, SuccessFlags::default(), None)
}
