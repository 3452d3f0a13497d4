use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wmlab::attacks::{snr_floor_for, Tier, ATTACKER_GAIN};
use wmlab::schemes::{Family, DEFAULT_MESSAGE_BITS};
use wmlab::training::TrainConfig;

/// One experiment: where the audio comes from, which scheme marks it, how it
/// is attacked and scored, and the seed every randomized step derives from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Where results go; not part of the experiment's identity.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub owner: OwnerConfig,
    #[serde(default)]
    pub attack: AttackConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub detect: DetectConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CorpusConfig {
    Synthetic {
        #[serde(default = "default_clips")]
        count: usize,
        #[serde(default = "default_duration")]
        duration_s: f64,
        /// Defaults to a value derived from the global seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Wav {
        dir: PathBuf,
    },
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig::Synthetic {
            count: default_clips(),
            duration_s: default_duration(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OwnerConfig {
    pub family: String,
    #[serde(default = "default_key")]
    pub key: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<f64>,
    #[serde(default = "default_bits")]
    pub message_bits: usize,
    #[serde(default)]
    pub pattern_bits: usize,
    /// Neural owners: trained checkpoint. Without one, a model is trained
    /// with `key` as its seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

impl Default for OwnerConfig {
    fn default() -> Self {
        Self {
            family: "qim-freq".into(),
            key: default_key(),
            strength: None,
            message_bits: default_bits(),
            pattern_bits: 0,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    #[serde(default = "default_tier")]
    pub tier: String,
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// Residual gain for adversary-trained surrogates.
    #[serde(default = "default_gain")]
    pub gain: f64,
    /// Defaults to the owner family's floor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_floor_db: Option<f64>,
    #[serde(default = "default_surrogate_seeds")]
    pub surrogate_seeds: Vec<u64>,
    #[serde(default = "default_candidate_seeds")]
    pub candidate_seeds: Vec<u64>,
    #[serde(default = "default_candidate_bands")]
    pub candidate_bands: Vec<[usize; 2]>,
    /// "one-bit" or "full-message".
    #[serde(default = "default_oracle_mode")]
    pub oracle_mode: String,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            tier: default_tier(),
            budget: default_budget(),
            gain: default_gain(),
            snr_floor_db: None,
            surrogate_seeds: default_surrogate_seeds(),
            candidate_seeds: default_candidate_seeds(),
            candidate_bands: default_candidate_bands(),
            oracle_mode: default_oracle_mode(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_half_life")]
    pub lr_half_life: usize,
    #[serde(default = "default_reembed")]
    pub reembed_prob: f64,
    /// Synthetic clips per training corpus.
    #[serde(default = "default_train_clips")]
    pub corpus_clips: usize,
    #[serde(default = "default_duration")]
    pub corpus_duration_s: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            iterations: default_iterations(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            lr_half_life: default_half_life(),
            reembed_prob: default_reembed(),
            corpus_clips: default_train_clips(),
            corpus_duration_s: default_duration(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_matrix_families")]
    pub matrix_families: Vec<String>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            bins: default_bins(),
            matrix_families: default_matrix_families(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectConfig {
    /// WAV directory to scan; defaults to the corpus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// `clip_id,message` CSV written by `embed`, for BER columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub messages: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Per-clip CSV written by `attack`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<PathBuf>,
}

fn default_clips() -> usize {
    200
}
fn default_duration() -> f64 {
    3.0
}
fn default_key() -> u64 {
    1
}
fn default_bits() -> usize {
    DEFAULT_MESSAGE_BITS
}
fn default_tier() -> String {
    Tier::WhiteBox.name().into()
}
fn default_budget() -> usize {
    10
}
fn default_gain() -> f64 {
    ATTACKER_GAIN
}
fn default_surrogate_seeds() -> Vec<u64> {
    vec![42, 99, 2025]
}
fn default_candidate_seeds() -> Vec<u64> {
    vec![11, 12, 13]
}
fn default_candidate_bands() -> Vec<[usize; 2]> {
    vec![[32, 44], [56, 64], [44, 56]]
}
fn default_oracle_mode() -> String {
    "one-bit".into()
}
fn default_iterations() -> usize {
    2000
}
fn default_batch() -> usize {
    8
}
fn default_lr() -> f64 {
    1e-3
}
fn default_half_life() -> usize {
    TrainConfig::default().lr_half_life
}
fn default_reembed() -> f64 {
    TrainConfig::default().reembed_prob
}
fn default_train_clips() -> usize {
    40
}
fn default_bins() -> usize {
    10
}
fn default_matrix_families() -> Vec<String> {
    Family::ALL.iter().map(|f| f.name().to_string()).collect()
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tier: Option<String>,
    pub budget: Option<usize>,
}

impl ExperimentConfig {
    /// Parse, apply overrides, resolve relative paths against the config
    /// file's directory and validate.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        if let Some(out) = &overrides.out {
            cfg.out = Some(out.clone());
        }
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(tier) = &overrides.tier {
            cfg.attack.tier = tier.clone();
        }
        if let Some(budget) = overrides.budget {
            cfg.attack.budget = budget;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let CorpusConfig::Wav { dir } = &mut self.corpus {
            fix(dir);
        }
        for p in [
            self.out.as_mut(),
            self.owner.checkpoint.as_mut(),
            self.detect.input.as_mut(),
            self.detect.messages.as_mut(),
            self.report.samples.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.out.is_none() {
            bail!("no output directory: set `out` in the config or pass --out");
        }
        match &self.corpus {
            CorpusConfig::Synthetic { count, duration_s, .. } => {
                if *count == 0 || !(duration_s.is_finite() && *duration_s > 0.0) {
                    bail!("synthetic corpus needs a positive clip count and duration");
                }
            }
            CorpusConfig::Wav { dir } => {
                if !dir.is_dir() {
                    bail!("corpus directory {} does not exist", dir.display());
                }
            }
        }
        let family = self.owner_family()?;
        if let Some(ck) = &self.owner.checkpoint {
            if family != Family::Neural {
                bail!("checkpoint given for a {family} owner");
            }
            if !ck.is_file() {
                bail!("checkpoint {} does not exist", ck.display());
            }
        }
        for p in [&self.detect.input, &self.detect.messages, &self.report.samples].into_iter().flatten() {
            if !p.exists() {
                bail!("{} does not exist", p.display());
            }
        }
        self.tier()?;
        self.oracle_mode()?;
        if !(self.attack.gain.is_finite() && self.attack.gain > 0.0) {
            bail!("attack gain must be positive");
        }
        if self.attack.candidate_seeds.len() != self.attack.candidate_bands.len() {
            bail!("candidate_seeds and candidate_bands differ in length");
        }
        if self.attack.candidate_seeds.is_empty() || self.attack.surrogate_seeds.is_empty() {
            bail!("attack needs at least one surrogate and one candidate");
        }
        if self.metrics.bins == 0 {
            bail!("metrics.bins must be positive");
        }
        for f in &self.metrics.matrix_families {
            f.parse::<Family>()?;
        }
        if self.training.corpus_clips == 0 {
            bail!("training.corpus_clips must be positive");
        }
        self.train_config(0, None)?.validate()?;
        Ok(())
    }

    pub fn out_dir(&self) -> &Path {
        self.out.as_deref().expect("validated config has an output directory")
    }

    pub fn owner_family(&self) -> Result<Family> {
        Ok(self.owner.family.parse::<Family>()?)
    }

    pub fn tier(&self) -> Result<Tier> {
        Ok(self.attack.tier.parse::<Tier>()?)
    }

    pub fn oracle_mode(&self) -> Result<wmlab::attacks::OracleMode> {
        use wmlab::attacks::OracleMode;
        match self.attack.oracle_mode.as_str() {
            "one-bit" => Ok(OracleMode::OneBit),
            "full-message" => Ok(OracleMode::FullMessage),
            other => bail!("unknown oracle mode {other:?}"),
        }
    }

    pub fn snr_floor_db(&self) -> Result<f64> {
        Ok(self.attack.snr_floor_db.unwrap_or(snr_floor_for(self.owner_family()?)))
    }

    /// Training settings for one model.
    pub fn train_config(&self, seed: u64, band: Option<(usize, usize)>) -> Result<TrainConfig> {
        let t = &self.training;
        let mut cfg = TrainConfig {
            seed,
            iterations_per_epoch: t.iterations,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            lr_half_life: t.lr_half_life,
            reembed_prob: t.reembed_prob,
            message_bits: self.owner.message_bits,
            ..TrainConfig::default()
        };
        if let Some(b) = band {
            cfg.band = b;
        }
        Ok(cfg)
    }

    /// Canonical TOML of the effective configuration.
    pub fn canonical(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.canonical()?.as_bytes())))
    }
}
