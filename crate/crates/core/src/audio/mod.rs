//! Sample buffers, WAV I/O, synthetic corpora, STFT and benign transforms.

mod clip;
mod corpus;
mod stft;
mod transform;
mod wav;

pub use clip::{AudioClip, CANONICAL_RATE};
pub use corpus::synth_corpus;
pub use stft::{hann_window, istft, stft, write_spectrogram_csv, Spectrogram};

/// Framing helpers shared with the differentiable spectral loss.
pub(crate) mod stft_internals {
    pub(crate) use super::stft::{check_cola, reflect_index};
}
pub use transform::{apply_transform, Transform};
pub use wav::{load_wav, quantize_i16, save_wav};
