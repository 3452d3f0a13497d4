//! Frame-wise embedder, detector and discriminator networks.
//!
//! Audio is cut into non-overlapping frames of [`FRAME`] samples. The embedder
//! and detector see each frame through a band projector (orthonormal DFT
//! cos/sin basis of a bin range) scaled by [`INPUT_GAIN`], and the embedder's
//! residual is projected back onto the same band. The discriminator sees raw
//! frames. Detector and discriminator logits are averaged over frames.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use rand::Rng;

use crate::audio::AudioClip;
use crate::autodiff::{round_f32, Checkpoint, Graph, Mat, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::schemes::{DetectionResult, Message, DEFAULT_MESSAGE_BITS};

pub const FRAME: usize = 128;
pub const HIDDEN: usize = 256;
pub const DISC_HIDDEN: usize = 128;
pub const DEFAULT_GAMMA: f64 = 0.02;
/// DFT bins of a frame used by the embedder and detector (5.5 to 7 kHz at 16 kHz).
pub const DEFAULT_BAND: (usize, usize) = (44, 56);
pub const INPUT_GAIN: f64 = 50.0;
pub const LOGIT_CLAMP: f64 = 15.0;

const INIT_STREAM: u64 = 0x696e_6974;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Fully connected stack with tanh between layers (and optionally on the output).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub tanh_output: bool,
}

impl Mlp {
    /// Xavier-uniform weights and zero biases.
    pub fn xavier<R: Rng + ?Sized>(prefix: &str, dims: &[usize], tanh_output: bool, rng: &mut R) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| {
                let a = (6.0 / (d[0] + d[1]) as f64).sqrt();
                let mut w = Array2::from_shape_fn((d[0], d[1]), |_| rng.random_range(-a..a));
                round_f32(&mut w);
                Dense {
                    weight: Tensor::new(format!("{prefix}.{i}.weight"), w),
                    bias: Tensor::new(format!("{prefix}.{i}.bias"), Array2::zeros((1, d[1]))),
                }
            })
            .collect();
        Self { layers, tanh_output }
    }

    pub fn zeros(prefix: &str, dims: &[usize], tanh_output: bool) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| Dense {
                weight: Tensor::new(format!("{prefix}.{i}.weight"), Array2::zeros((d[0], d[1]))),
                bias: Tensor::new(format!("{prefix}.{i}.bias"), Array2::zeros((1, d[1]))),
            })
            .collect();
        Self { layers, tanh_output }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.value.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").weight.value.ncols()
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        let n = self.layers.len();
        let mut h = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            h = h.dot(&l.weight.value) + &l.bias.value;
            if i + 1 < n || self.tanh_output {
                h.mapv_inplace(f64::tanh);
            }
        }
        h
    }

    /// Insert the parameters into a graph, as variables or constants.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.tensors()
            .map(|t| {
                if trainable {
                    g.variable(t.value.clone())
                } else {
                    g.constant(t.value.clone())
                }
            })
            .collect()
    }

    pub fn forward_graph(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        let n = self.layers.len();
        let mut h = x;
        for i in 0..n {
            h = g.matmul(h, vars[2 * i])?;
            h = g.add_row(h, vars[2 * i + 1])?;
            if i + 1 < n || self.tanh_output {
                h = g.tanh(h);
            }
        }
        Ok(h)
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }
}

/// Projector onto the span of DFT bins `lo..hi` of a length-`n` frame.
pub fn band_projector(n: usize, band: (usize, usize)) -> Mat {
    let mut basis = Array2::zeros((n, 2 * (band.1 - band.0)));
    for (c, k) in (band.0..band.1).enumerate() {
        let mut cos: Vec<f64> = (0..n).map(|j| (2.0 * PI * (k * j % n) as f64 / n as f64).cos()).collect();
        let mut sin: Vec<f64> = (0..n).map(|j| (2.0 * PI * (k * j % n) as f64 / n as f64).sin()).collect();
        for v in [&mut cos, &mut sin] {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
        }
        for j in 0..n {
            basis[[j, 2 * c]] = cos[j];
            basis[[j, 2 * c + 1]] = sin[j];
        }
    }
    basis.dot(&basis.t())
}

/// Graph handles for one bound model.
pub struct BoundModel {
    pub embedder: Vec<Var>,
    pub detector: Vec<Var>,
    pub discriminator: Vec<Var>,
    projector: Var,
}

/// Trainable embedder, detector and discriminator.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub embedder: Mlp,
    pub detector: Mlp,
    pub discriminator: Mlp,
    pub gamma: f64,
    pub seed: u64,
    pub message_bits: usize,
    band: (usize, usize),
    projector: Arc<Mat>,
}

fn check_band(band: (usize, usize)) -> Result<()> {
    if band.0 == 0 || band.0 >= band.1 || band.1 > FRAME / 2 {
        return Err(Error::InvalidParameter(format!(
            "band {band:?} must satisfy 0 < lo < hi <= {}",
            FRAME / 2
        )));
    }
    Ok(())
}

impl SurrogateModel {
    pub fn new(seed: u64, gamma: f64, band: (usize, usize), message_bits: usize) -> Result<Self> {
        check_band(band)?;
        if !(gamma.is_finite() && gamma >= 0.0) || message_bits == 0 {
            return Err(Error::InvalidParameter(format!(
                "gamma {gamma} and message length {message_bits} must be valid"
            )));
        }
        let mut rng = stream_rng(seed, INIT_STREAM);
        let embedder = Mlp::xavier("embedder", &[FRAME + message_bits, HIDDEN, HIDDEN, FRAME], true, &mut rng);
        let detector = Mlp::xavier("detector", &[FRAME, HIDDEN, HIDDEN, message_bits], false, &mut rng);
        let discriminator = Mlp::xavier("discriminator", &[FRAME, DISC_HIDDEN, 1], false, &mut rng);
        Ok(Self {
            embedder,
            detector,
            discriminator,
            gamma,
            seed,
            message_bits,
            band,
            projector: Arc::new(band_projector(FRAME, band)),
        })
    }

    pub fn with_defaults(seed: u64) -> Self {
        Self::new(seed, DEFAULT_GAMMA, DEFAULT_BAND, DEFAULT_MESSAGE_BITS).expect("defaults are valid")
    }

    /// All parameters zero.
    pub fn zeroed(gamma: f64, band: (usize, usize), message_bits: usize) -> Result<Self> {
        let mut m = Self::new(0, gamma, band, message_bits)?;
        m.embedder = Mlp::zeros("embedder", &[FRAME + message_bits, HIDDEN, HIDDEN, FRAME], true);
        m.detector = Mlp::zeros("detector", &[FRAME, HIDDEN, HIDDEN, message_bits], false);
        m.discriminator = Mlp::zeros("discriminator", &[FRAME, DISC_HIDDEN, 1], false);
        Ok(m)
    }

    pub fn band(&self) -> (usize, usize) {
        self.band
    }

    pub fn projector(&self) -> &Mat {
        &self.projector
    }

    fn check_clip(&self, clip: &AudioClip) -> Result<()> {
        if clip.len() < FRAME {
            return Err(Error::TooShort {
                needed: FRAME,
                got: clip.len(),
            });
        }
        Ok(())
    }

    fn check_message(&self, m: &Message) -> Result<()> {
        if m.len() != self.message_bits {
            return Err(Error::LengthMismatch {
                left: m.len(),
                right: self.message_bits,
            });
        }
        Ok(())
    }

    /// Whole frames of a signal as rows.
    pub fn frames(x: &[f64]) -> Mat {
        let t = x.len() / FRAME;
        Array2::from_shape_vec((t, FRAME), x[..t * FRAME].to_vec()).expect("frame count")
    }

    /// Band-limited residual for each frame row given ±1 bit rows.
    pub fn residual(&self, frames: &Mat, signs: &Mat, gain: f64) -> Mat {
        let band = frames.dot(&*self.projector) * INPUT_GAIN;
        let input = ndarray::concatenate(Axis(1), &[band.view(), signs.view()]).expect("row counts");
        (self.embedder.forward(&input) * (self.gamma * gain)).dot(&*self.projector)
    }

    pub fn embed(&self, clip: &AudioClip, m: &Message) -> Result<AudioClip> {
        self.embed_with_gain(clip, m, 1.0)
    }

    /// Embed with the residual scaled by `gain`; the trailing partial frame is
    /// copied and the output clamped to [-1, 1].
    pub fn embed_with_gain(&self, clip: &AudioClip, m: &Message, gain: f64) -> Result<AudioClip> {
        self.check_clip(clip)?;
        self.check_message(m)?;
        let x = clip.samples();
        let frames = Self::frames(x);
        let signs = Array2::from_shape_fn((frames.nrows(), self.message_bits), |(_, j)| m.signs()[j]);
        let out = frames.clone() + self.residual(&frames, &signs, gain);
        let mut y: Vec<f64> = out.iter().copied().collect();
        y.extend_from_slice(&x[y.len()..]);
        clip.with_samples(y).map(AudioClip::clamped)
    }

    /// Per-frame bit logits.
    pub fn frame_logits(&self, frames: &Mat) -> Mat {
        self.detector.forward(&(frames.dot(&*self.projector) * INPUT_GAIN))
    }

    /// Frame-averaged bit logits.
    pub fn logits(&self, clip: &AudioClip) -> Result<Vec<f64>> {
        self.check_clip(clip)?;
        let l = self.frame_logits(&Self::frames(clip.samples()));
        Ok(l.mean_axis(Axis(0)).expect("at least one frame").to_vec())
    }

    /// Sigmoid of the averaged logits; the neural family always reports detection.
    pub fn detect(&self, clip: &AudioClip) -> Result<DetectionResult> {
        let scores = self.logits(clip)?.into_iter().map(crate::autodiff::sigmoid).collect();
        Ok(DetectionResult::from_scores(scores))
    }

    /// Frame-averaged discriminator logit clamped to ±[`LOGIT_CLAMP`].
    pub fn discriminate(&self, clip: &AudioClip) -> Result<f64> {
        self.check_clip(clip)?;
        let l = self.discriminator.forward(&Self::frames(clip.samples()));
        Ok(l.mean().expect("at least one frame").clamp(-LOGIT_CLAMP, LOGIT_CLAMP))
    }

    /// Embed every row of an equal-length batch; rows of `bits` are 0/1.
    pub fn embed_batch(&self, x: &Mat, bits: &Mat) -> Mat {
        let (b, n) = x.dim();
        let t = n / FRAME;
        let mut out = x.clone();
        for r in 0..b {
            let frames = Array2::from_shape_fn((t, FRAME), |(i, j)| x[[r, i * FRAME + j]]);
            let signs = Array2::from_shape_fn((t, self.message_bits), |(_, j)| 2.0 * bits[[r, j]] - 1.0);
            let y = frames.clone() + self.residual(&frames, &signs, 1.0);
            for (k, v) in y.iter().enumerate() {
                out[[r, k]] = v.clamp(-1.0, 1.0);
            }
        }
        out
    }

    pub fn bind(&self, g: &mut Graph, generator_trainable: bool, discriminator_trainable: bool) -> BoundModel {
        BoundModel {
            embedder: self.embedder.bind(g, generator_trainable),
            detector: self.detector.bind(g, generator_trainable),
            discriminator: self.discriminator.bind(g, discriminator_trainable),
            projector: g.constant((*self.projector).clone()),
        }
    }

    fn graph_frames(g: &mut Graph, x: Var) -> Result<(Var, usize, usize)> {
        let (b, n) = g.shape(x);
        let t = n / FRAME;
        if t == 0 {
            return Err(Error::TooShort { needed: FRAME, got: n });
        }
        let body = if n == t * FRAME { x } else { g.slice_cols(x, 0, t * FRAME)? };
        Ok((g.reshape(body, b * t, FRAME)?, b, t))
    }

    fn averaging(g: &mut Graph, b: usize, t: usize) -> Var {
        g.constant(Array2::from_shape_fn((b, b * t), |(r, c)| if c / t == r { 1.0 / t as f64 } else { 0.0 }))
    }

    /// Differentiable embedding of a `[batch x samples]` signal; `bits` is `[batch x L]` of 0/1.
    pub fn graph_embed(&self, g: &mut Graph, bound: &BoundModel, x: Var, bits: &Mat) -> Result<Var> {
        let (frames, b, t) = Self::graph_frames(g, x)?;
        if bits.dim() != (b, self.message_bits) {
            return Err(Error::ShapeMismatch {
                op: "graph_embed",
                detail: format!("bits {:?} for batch {b}", bits.dim()),
            });
        }
        let signs = g.constant(Array2::from_shape_fn((b * t, self.message_bits), |(r, j)| {
            2.0 * bits[[r / t, j]] - 1.0
        }));
        let band = g.matmul(frames, bound.projector)?;
        let band = g.scale(band, INPUT_GAIN);
        let input = g.concat_cols(band, signs)?;
        let h = self.embedder.forward_graph(g, &bound.embedder, input)?;
        let h = g.scale(h, self.gamma);
        let r = g.matmul(h, bound.projector)?;
        let y = g.add(frames, r)?;
        let n = g.shape(x).1;
        let y = g.reshape(y, b, t * FRAME)?;
        if n == t * FRAME {
            Ok(y)
        } else {
            let tail = g.slice_cols(x, t * FRAME, n)?;
            g.concat_cols(y, tail)
        }
    }

    /// Frame-averaged bit logits, `[batch x L]`.
    pub fn graph_logits(&self, g: &mut Graph, bound: &BoundModel, x: Var) -> Result<Var> {
        let (frames, b, t) = Self::graph_frames(g, x)?;
        let band = g.matmul(frames, bound.projector)?;
        let band = g.scale(band, INPUT_GAIN);
        let l = self.detector.forward_graph(g, &bound.detector, band)?;
        let avg = Self::averaging(g, b, t);
        g.matmul(avg, l)
    }

    /// Clamped frame-averaged discriminator logits, `[batch x 1]`.
    pub fn graph_discriminate(&self, g: &mut Graph, bound: &BoundModel, x: Var) -> Result<Var> {
        let (frames, b, t) = Self::graph_frames(g, x)?;
        let l = self.discriminator.forward_graph(g, &bound.discriminator, frames)?;
        let avg = Self::averaging(g, b, t);
        let l = g.matmul(avg, l)?;
        Ok(g.clamp(l, -LOGIT_CLAMP, LOGIT_CLAMP))
    }

    /// Embedder then detector parameters, in binding order.
    pub fn generator_tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.embedder.tensors().chain(self.detector.tensors())
    }

    pub fn generator_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.embedder.tensors_mut().chain(self.detector.tensors_mut()).collect()
    }

    pub fn discriminator_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.discriminator.tensors_mut().collect()
    }

    pub fn all_tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.generator_tensors().chain(self.discriminator.tensors())
    }

    /// Euclidean distance between two parameter sets of the same architecture.
    pub fn param_distance(&self, other: &Self) -> f64 {
        self.all_tensors()
            .zip(other.all_tensors())
            .map(|(a, b)| (&a.value - &b.value).mapv(|d| d * d).sum())
            .sum::<f64>()
            .sqrt()
    }

    pub fn write_checkpoint(&self, ck: &mut Checkpoint) {
        ck.push_meta("kind", "surrogate");
        ck.push_meta("seed", self.seed);
        ck.push_meta("gamma", self.gamma);
        ck.push_meta("band", format!("{} {}", self.band.0, self.band.1));
        ck.push_meta("message_bits", self.message_bits);
        ck.push_meta("frame", FRAME);
        for t in self.all_tensors() {
            ck.push_tensor(&t.name, &t.value);
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta("kind")? != "surrogate" {
            return Err(Error::Checkpoint("not a surrogate checkpoint".into()));
        }
        if ck.meta_parse::<usize>("frame")? != FRAME {
            return Err(Error::Checkpoint("frame size differs from this build".into()));
        }
        let band: Vec<usize> = ck
            .meta("band")?
            .split(' ')
            .map(|v| v.parse().map_err(|_| Error::Checkpoint("bad band".into())))
            .collect::<Result<_>>()?;
        if band.len() != 2 {
            return Err(Error::Checkpoint("bad band".into()));
        }
        let mut m = Self::zeroed(ck.meta_parse("gamma")?, (band[0], band[1]), ck.meta_parse("message_bits")?)?;
        m.seed = ck.meta_parse("seed")?;
        for net in [&mut m.embedder, &mut m.detector, &mut m.discriminator] {
            for t in net.tensors_mut() {
                let v = ck.tensor(&t.name)?;
                if v.dim() != t.value.dim() {
                    return Err(Error::Checkpoint(format!("tensor {} has shape {:?}", t.name, v.dim())));
                }
                t.value = v.clone();
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut ck = Checkpoint::default();
        self.write_checkpoint(&mut ck);
        ck.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Embed through a surrogate at unit gain.
pub fn neural_embed(model: &SurrogateModel, clip: &AudioClip, m: &Message) -> Result<AudioClip> {
    model.embed(clip, m)
}

pub fn neural_detect(model: &SurrogateModel, clip: &AudioClip) -> Result<DetectionResult> {
    model.detect(clip)
}

pub fn discriminate(model: &SurrogateModel, clip: &AudioClip) -> Result<f64> {
    model.discriminate(clip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::synth_corpus;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn snr_db(x: &[f64], y: &[f64]) -> f64 {
        let p: f64 = x.iter().map(|v| v * v).sum();
        let e: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
        10.0 * (p / e).log10()
    }

    #[test]
    fn projector_is_symmetric_idempotent() {
        let p = band_projector(FRAME, DEFAULT_BAND);
        let pp = p.dot(&p);
        assert!((&pp - &p).iter().all(|d| d.abs() < 1e-12));
        assert!((&p - &p.t()).iter().all(|d| d.abs() < 1e-12));
        let trace: f64 = p.diag().sum();
        assert!((trace - 2.0 * (DEFAULT_BAND.1 - DEFAULT_BAND.0) as f64).abs() < 1e-9);
    }

    #[test]
    fn zero_gamma_is_identity() {
        let clip = synth_corpus(1, 1, 0.2, 16000).remove(0);
        let m = SurrogateModel::new(3, 0.0, DEFAULT_BAND, 16).unwrap();
        let msg = Message::random(&mut rand_chacha::ChaCha8Rng::seed_from_u64(1), 16);
        assert_eq!(m.embed(&clip, &msg).unwrap(), clip);
    }

    #[test]
    fn fresh_model_keeps_snr_above_ten_db() {
        let model = SurrogateModel::with_defaults(5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for clip in synth_corpus(4, 10, 1.0, 16000) {
            let y = model.embed(&clip, &Message::random(&mut rng, 16)).unwrap();
            assert!(snr_db(clip.samples(), y.samples()) >= 10.0);
        }
    }

    #[test]
    fn zero_model_scores_one_half() {
        let m = SurrogateModel::zeroed(DEFAULT_GAMMA, DEFAULT_BAND, 16).unwrap();
        let clip = AudioClip::new(vec![0.0; 1000], 16000).unwrap();
        let d = m.detect(&clip).unwrap();
        assert!(d.detected);
        assert!(d.soft_scores.iter().all(|&s| s == 0.5));
        assert_eq!(m.discriminate(&clip).unwrap(), 0.0);
    }

    #[test]
    fn trailing_partial_frame_is_ignored_by_detection() {
        let m = SurrogateModel::with_defaults(8);
        let clip = synth_corpus(2, 1, 0.128, 16000).remove(0);
        assert_eq!(clip.len() % FRAME, 0);
        let mut longer = clip.samples().to_vec();
        longer.extend_from_slice(&[0.3; 50]);
        let longer = AudioClip::new(longer, 16000).unwrap();
        assert_eq!(m.detect(&clip).unwrap(), m.detect(&longer).unwrap());
        let msg = Message::zeros(16).unwrap();
        let y = m.embed(&longer, &msg).unwrap();
        assert_eq!(&y.samples()[clip.len()..], &[0.3; 50]);
    }

    #[test]
    fn discriminator_is_pure() {
        let m = SurrogateModel::with_defaults(1);
        let clip = synth_corpus(3, 1, 0.1, 16000).remove(0);
        assert_eq!(m.discriminate(&clip).unwrap(), m.discriminate(&clip).unwrap());
    }

    #[test]
    fn short_clip_is_rejected() {
        let m = SurrogateModel::with_defaults(1);
        let clip = AudioClip::new(vec![0.0; FRAME - 1], 16000).unwrap();
        assert!(matches!(m.detect(&clip), Err(Error::TooShort { .. })));
        assert!(m.discriminate(&clip).is_err());
        assert!(m.embed(&clip, &Message::zeros(16).unwrap()).is_err());
    }

    #[test]
    fn graph_path_matches_inference() {
        let m = SurrogateModel::with_defaults(21);
        let clips = synth_corpus(6, 2, 0.05, 16000);
        let n = clips[0].len();
        let x = Array2::from_shape_fn((2, n), |(r, c)| clips[r].samples()[c]);
        let bits = Array2::from_shape_fn((2, 16), |(r, j)| ((r + j) % 2) as f64);
        let mut g = Graph::new();
        let bound = m.bind(&mut g, false, false);
        let xv = g.constant(x.clone());
        let y = m.graph_embed(&mut g, &bound, xv, &bits).unwrap();
        let l = m.graph_logits(&mut g, &bound, y).unwrap();
        let d = m.graph_discriminate(&mut g, &bound, xv).unwrap();
        for r in 0..2 {
            let msg = Message::new((0..16).map(|j| ((r + j) % 2) as u8).collect()).unwrap();
            let e = m.embed(&clips[r], &msg).unwrap();
            let gy = g.value(y).row(r).to_vec();
            assert!(gy.iter().zip(e.samples()).all(|(a, b)| (a - b).abs() < 1e-12));
            let logits = m.logits(&e).unwrap();
            assert!(logits.iter().zip(g.value(l).row(r)).all(|(a, b)| (a - b).abs() < 1e-9));
            assert!((m.discriminate(&clips[r]).unwrap() - g.value(d)[[r, 0]]).abs() < 1e-12);
        }
        let batch = m.embed_batch(&x, &bits);
        assert!((&batch - g.value(y)).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let m = SurrogateModel::new(77, 0.03, (20, 32), 12).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        m.save(&p).unwrap();
        let back = SurrogateModel::load(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.param_distance(&m), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn embed_preserves_length_and_range(len in FRAME..3000usize, seed in 0u64..1000, amp in 0.1f64..1.0) {
            let model = SurrogateModel::new(seed, 0.2, DEFAULT_BAND, 16).unwrap();
            let x: Vec<f64> = (0..len).map(|i| amp * ((i as f64) * 0.37 + seed as f64).sin()).collect();
            let clip = AudioClip::new(x, 16000).unwrap();
            let msg = Message::random(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed), 16);
            let y = model.embed(&clip, &msg).unwrap();
            prop_assert_eq!(y.len(), clip.len());
            prop_assert!(y.peak() <= 1.0);
        }
    }
}
