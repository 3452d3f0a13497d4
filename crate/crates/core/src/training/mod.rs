//! Joint watermark/imperceptibility/adversarial objective and the
//! alternating surrogate training loop.

mod losses;
mod train;

pub use losses::{
    graph_adv_loss, graph_bce, graph_disc_loss, graph_mse, graph_stft_multi, loss_adv, loss_disc,
    loss_stft_multi, loss_time, loss_watermark, stft_loss_terms, total_loss, LossComponents,
};
pub use train::{partial_train, resume, train_surrogate, write_loss_log, LossRecord, TrainState};

use crate::audio::stft_internals::check_cola;
use crate::error::{Error, Result};
use crate::neural::{DEFAULT_BAND, DEFAULT_GAMMA};
use crate::schemes::DEFAULT_MESSAGE_BITS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub watermark: f64,
    pub time: f64,
    pub freq: f64,
    pub adv: f64,
}

impl LossWeights {
    pub fn new(watermark: f64, time: f64, freq: f64, adv: f64) -> Result<Self> {
        let w = Self {
            watermark,
            time,
            freq,
            adv,
        };
        let all = [watermark, time, freq, adv];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) || watermark <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "loss weights {all:?} must be nonnegative with a positive watermark weight"
            )));
        }
        Ok(w)
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            watermark: 1.0,
            time: 10.0,
            freq: 1.0,
            adv: 0.1,
        }
    }
}

/// Ordered `(fft_size, hop, window_length)` triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StftResolutionSet {
    entries: Vec<(usize, usize, usize)>,
}

impl StftResolutionSet {
    pub fn new(entries: Vec<(usize, usize, usize)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParameter("resolution set is empty".into()));
        }
        for &(n, hop, wl) in &entries {
            check_cola(n, hop, wl)?;
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(usize, usize, usize)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Shortest signal every resolution can analyse.
    pub fn min_len(&self) -> usize {
        self.entries.iter().map(|&(n, _, wl)| wl.max(n / 2 + 1)).max().unwrap_or(1)
    }
}

impl Default for StftResolutionSet {
    fn default() -> Self {
        Self {
            entries: vec![(64, 16, 64), (128, 32, 128), (256, 64, 256)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub iterations_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Iterations over which the learning rate halves; 0 keeps it constant.
    pub lr_half_life: usize,
    pub weights: LossWeights,
    pub resolutions: StftResolutionSet,
    /// Samples per training crop.
    pub crop_len: usize,
    /// Probability that a crop is first watermarked by the current model
    /// with an unrelated message, so the embedder learns to overwrite.
    pub reembed_prob: f64,
    pub gamma: f64,
    pub band: (usize, usize),
    pub message_bits: usize,
    /// Free-form label of the training corpus.
    pub dataset: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 1,
            iterations_per_epoch: 2000,
            batch_size: 8,
            learning_rate: 1e-3,
            lr_half_life: 1000,
            weights: LossWeights::default(),
            resolutions: StftResolutionSet::default(),
            crop_len: 2048,
            reembed_prob: 0.5,
            gamma: DEFAULT_GAMMA,
            band: DEFAULT_BAND,
            message_bits: DEFAULT_MESSAGE_BITS,
            dataset: "synthetic".into(),
        }
    }
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn total_iterations(&self) -> usize {
        self.epochs * self.iterations_per_epoch
    }

    /// Learning rate used at a given iteration.
    pub fn learning_rate_at(&self, iteration: usize) -> f64 {
        if self.lr_half_life == 0 {
            self.learning_rate
        } else {
            self.learning_rate * 0.5f64.powf(iteration as f64 / self.lr_half_life as f64)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [self.epochs, self.iterations_per_epoch, self.batch_size, self.crop_len];
        if counts.contains(&0) {
            return Err(Error::InvalidParameter("training counts must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter("learning rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.reembed_prob) {
            return Err(Error::InvalidParameter("re-embedding probability must lie in [0, 1]".into()));
        }
        if self.crop_len < crate::neural::FRAME.max(self.resolutions.min_len()) {
            return Err(Error::InvalidParameter(format!("crop length {} too short", self.crop_len)));
        }
        LossWeights::new(self.weights.watermark, self.weights.time, self.weights.freq, self.weights.adv)?;
        Ok(())
    }
}
