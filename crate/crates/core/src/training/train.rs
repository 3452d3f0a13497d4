use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;

use super::losses::{graph_adv_loss, graph_bce, graph_disc_loss, graph_mse, graph_stft_multi};
use super::TrainConfig;
use crate::audio::AudioClip;
use crate::autodiff::{Adam, Checkpoint, Graph, Mat, Tensor, Var};
use crate::error::{Error, Result};
use crate::neural::SurrogateModel;
use crate::rng::stream_rng;

/// Losses of one iteration; `total` is the weighted generator objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub watermark: f64,
    pub time: f64,
    pub freq: f64,
    pub adv: f64,
    pub total: f64,
    pub disc: f64,
}

impl LossRecord {
    fn to_line(self) -> String {
        format!(
            "{} {} {} {} {} {} {}",
            self.iteration, self.watermark, self.time, self.freq, self.adv, self.total, self.disc
        )
    }

    fn from_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(' ').collect();
        let bad = || Error::Checkpoint(format!("bad log line {line:?}"));
        if f.len() != 7 {
            return Err(bad());
        }
        let v = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
        Ok(Self {
            iteration: f[0].parse().map_err(|_| bad())?,
            watermark: v(1)?,
            time: v(2)?,
            freq: v(3)?,
            adv: v(4)?,
            total: v(5)?,
            disc: v(6)?,
        })
    }
}

/// Model, both optimizers and the loss log; everything needed to resume.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: SurrogateModel,
    pub generator_opt: Adam,
    pub discriminator_opt: Adam,
    pub iteration: usize,
    pub log: Vec<LossRecord>,
}

impl TrainState {
    /// Freshly initialized model, no iterations run.
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let model = SurrogateModel::new(cfg.seed, cfg.gamma, cfg.band, cfg.message_bits)?;
        let generator_opt = Adam::new(model.generator_tensors(), cfg.learning_rate);
        let discriminator_opt = Adam::new(model.discriminator.tensors(), cfg.learning_rate);
        Ok(Self {
            model,
            generator_opt,
            discriminator_opt,
            iteration: 0,
            log: Vec::new(),
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        self.model.write_checkpoint(&mut ck);
        ck.push_meta("iteration", self.iteration);
        for (tag, opt) in [("generator", &self.generator_opt), ("discriminator", &self.discriminator_opt)] {
            ck.push_meta(&format!("adam.{tag}"), format!("{} {} {} {} {}", opt.lr, opt.beta1, opt.beta2, opt.eps, opt.step));
            for (i, (m, v)) in opt.m.iter().zip(&opt.v).enumerate() {
                ck.push_tensor(&format!("adam.{tag}.m.{i}"), m);
                ck.push_tensor(&format!("adam.{tag}.v.{i}"), v);
            }
        }
        for r in &self.log {
            ck.push_meta("log", r.to_line());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let model = SurrogateModel::from_checkpoint(ck)?;
        let mut opts = Vec::new();
        for (tag, count) in [
            ("generator", model.generator_tensors().count()),
            ("discriminator", model.discriminator.tensors().count()),
        ] {
            let h: Vec<&str> = ck.meta(&format!("adam.{tag}"))?.split(' ').collect();
            let bad = || Error::Checkpoint(format!("bad optimizer header for {tag}"));
            if h.len() != 5 {
                return Err(bad());
            }
            let f = |i: usize| h[i].parse::<f64>().map_err(|_| bad());
            let mut m = Vec::with_capacity(count);
            let mut v = Vec::with_capacity(count);
            for i in 0..count {
                m.push(ck.tensor(&format!("adam.{tag}.m.{i}"))?.clone());
                v.push(ck.tensor(&format!("adam.{tag}.v.{i}"))?.clone());
            }
            opts.push(Adam {
                lr: f(0)?,
                beta1: f(1)?,
                beta2: f(2)?,
                eps: f(3)?,
                step: h[4].parse().map_err(|_| bad())?,
                m,
                v,
            });
        }
        let discriminator_opt = opts.pop().expect("two optimizers");
        let generator_opt = opts.pop().expect("two optimizers");
        let log = ck.meta_all("log").map(LossRecord::from_line).collect::<Result<_>>()?;
        Ok(Self {
            model,
            generator_opt,
            discriminator_opt,
            iteration: ck.meta_parse("iteration")?,
            log,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

struct Batch {
    x: Mat,
    bits: Mat,
}

/// Batch for one iteration, drawn from a generator keyed by (seed, iteration)
/// so resuming never depends on generator state.
fn sample_batch(cfg: &TrainConfig, corpus: &[AudioClip], model: &SurrogateModel, iteration: usize) -> Batch {
    let mut rng = stream_rng(cfg.seed, 1 + iteration as u64);
    let (b, c, l) = (cfg.batch_size, cfg.crop_len, cfg.message_bits);
    let mut x = Array2::zeros((b, c));
    for r in 0..b {
        let clip = &corpus[rng.random_range(0..corpus.len())];
        let start = rng.random_range(0..=clip.len() - c);
        for (j, v) in clip.samples()[start..start + c].iter().enumerate() {
            x[[r, j]] = *v;
        }
    }
    let bits = Array2::from_shape_fn((b, l), |_| rng.random_range(0..2u8) as f64);
    if cfg.reembed_prob > 0.0 {
        let prior = Array2::from_shape_fn((b, l), |_| rng.random_range(0..2u8) as f64);
        let mask: Vec<bool> = (0..b).map(|_| rng.random::<f64>() < cfg.reembed_prob).collect();
        if mask.iter().any(|&m| m) {
            let marked = model.embed_batch(&x, &prior);
            for (r, &m) in mask.iter().enumerate() {
                if m {
                    x.row_mut(r).assign(&marked.row(r));
                }
            }
        }
    }
    Batch { x, bits }
}

fn move_grads(grads: &mut crate::autodiff::Gradients, vars: &[Var], tensors: &mut [&mut Tensor]) {
    for (v, t) in vars.iter().zip(tensors.iter_mut()) {
        t.grad = Some(grads.take(*v).unwrap_or_else(|| Mat::zeros(t.value.dim())));
    }
}

fn diverged(iteration: usize, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged { iteration })
    }
}

/// One discriminator step followed by one embedder+detector step.
fn step(state: &mut TrainState, cfg: &TrainConfig, corpus: &[AudioClip]) -> Result<LossRecord> {
    let it = state.iteration;
    let lr = cfg.learning_rate_at(it);
    state.generator_opt.lr = lr;
    state.discriminator_opt.lr = lr;
    let batch = sample_batch(cfg, corpus, &state.model, it);
    let model = &mut state.model;

    let marked = model.embed_batch(&batch.x, &batch.bits);
    let mut g = Graph::new();
    let bound = model.bind(&mut g, false, true);
    let xv = g.constant(batch.x.clone());
    let wv = g.constant(marked);
    let lx = model.graph_discriminate(&mut g, &bound, xv)?;
    let lw = model.graph_discriminate(&mut g, &bound, wv)?;
    let ld = graph_disc_loss(&mut g, lx, lw)?;
    let disc = g.item(ld);
    diverged(it, &[disc])?;
    let disc_vars = bound.discriminator.clone();
    let mut grads = g.backward(ld)?;
    let mut tensors = model.discriminator_tensors_mut();
    move_grads(&mut grads, &disc_vars, &mut tensors);
    state.discriminator_opt.step(&mut tensors)?;

    let w = cfg.weights;
    let mut g = Graph::new();
    let bound = model.bind(&mut g, true, false);
    let xv = g.constant(batch.x);
    let xw = model.graph_embed(&mut g, &bound, xv, &batch.bits)?;
    let logits = model.graph_logits(&mut g, &bound, xw)?;
    let l_w = graph_bce(&mut g, logits, &batch.bits)?;
    let l_t = graph_mse(&mut g, xv, xw)?;
    let l_f = graph_stft_multi(&mut g, xv, xw, &cfg.resolutions)?;
    let d = model.graph_discriminate(&mut g, &bound, xw)?;
    let l_a = graph_adv_loss(&mut g, d);
    let mut total = g.scale(l_w, w.watermark);
    for (term, weight) in [(l_t, w.time), (l_f, w.freq), (l_a, w.adv)] {
        let scaled = g.scale(term, weight);
        total = g.add(total, scaled)?;
    }
    let record = LossRecord {
        iteration: it,
        watermark: g.item(l_w),
        time: g.item(l_t),
        freq: g.item(l_f),
        adv: g.item(l_a),
        total: g.item(total),
        disc,
    };
    diverged(it, &[record.watermark, record.time, record.freq, record.adv, record.total])?;
    let gen_vars: Vec<Var> = bound.embedder.iter().chain(&bound.detector).copied().collect();
    let mut grads = g.backward(total)?;
    let mut tensors = model.generator_tensors_mut();
    move_grads(&mut grads, &gen_vars, &mut tensors);
    state.generator_opt.step(&mut tensors)?;
    state.iteration += 1;
    Ok(record)
}

fn check_corpus(cfg: &TrainConfig, corpus: &[AudioClip]) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::InvalidParameter("training corpus is empty".into()));
    }
    if let Some(c) = corpus.iter().find(|c| c.len() < cfg.crop_len) {
        return Err(Error::TooShort {
            needed: cfg.crop_len,
            got: c.len(),
        });
    }
    Ok(())
}

/// Continue training until `until` iterations have run in total.
pub fn resume(state: &mut TrainState, cfg: &TrainConfig, corpus: &[AudioClip], until: usize) -> Result<()> {
    cfg.validate()?;
    check_corpus(cfg, corpus)?;
    while state.iteration < until {
        let rec = step(state, cfg, corpus)?;
        state.log.push(rec);
    }
    Ok(())
}

/// Train from initialization for `iterations` steps.
pub fn partial_train(cfg: &TrainConfig, corpus: &[AudioClip], iterations: usize) -> Result<TrainState> {
    let mut state = TrainState::new(cfg)?;
    resume(&mut state, cfg, corpus, iterations)?;
    Ok(state)
}

/// Full schedule of `epochs × iterations_per_epoch` steps.
pub fn train_surrogate(cfg: &TrainConfig, corpus: &[AudioClip]) -> Result<TrainState> {
    partial_train(cfg, corpus, cfg.total_iterations())
}

/// CSV with one row per iteration.
pub fn write_loss_log(log: &[LossRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "iteration,L_w,L_t,L_f,L_adv,total,L_d")?;
    for r in log {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            r.iteration, r.watermark, r.time, r.freq, r.adv, r.total, r.disc
        )?;
    }
    f.flush()?;
    Ok(())
}
