use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use wmlab::attacks::{
    overwrite, protocol, query_attack, run_suite, stack_overwrite, DetectorOracle, QuerySettings, SuiteResult, Tier,
};
use wmlab::audio::{load_wav, save_wav, synth_corpus, AudioClip, CANONICAL_RATE};
use wmlab::metrics::{ber, cross_matrix, read_samples_csv, snr, write_samples_csv, MetricsRecord};
use wmlab::neural::SurrogateModel;
use wmlab::rng::{mix64, stream_rng};
use wmlab::schemes::{Family, Message, SchemeDescriptor, WatermarkKey, WatermarkScheme};
use wmlab::training::{train_surrogate, write_loss_log};

use crate::config::{CorpusConfig, ExperimentConfig};
use crate::output::Staging;

// Tags separating the generator streams derived from the global seed.
const CORPUS: u64 = 1;
const OWNER_MESSAGES: u64 = 2;
const ADVERSARY_MESSAGES: u64 = 3;
const OWNER_TRAINING: u64 = 4;
const ADVERSARY_TRAINING: u64 = 5;
const SURROGATE_TRAINING: u64 = 16;
const MATRIX_KEYS: u64 = 32;

fn derive(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag))
}

pub struct Corpus {
    pub ids: Vec<String>,
    pub clips: Vec<AudioClip>,
}

pub fn load_corpus(cfg: &ExperimentConfig) -> Result<Corpus> {
    match &cfg.corpus {
        CorpusConfig::Synthetic { count, duration_s, seed } => {
            let seed = seed.unwrap_or_else(|| derive(cfg.seed, CORPUS));
            let clips = synth_corpus(seed, *count, *duration_s, CANONICAL_RATE);
            let ids = (0..clips.len()).map(|k| format!("clip{k:04}")).collect();
            Ok(Corpus { ids, clips })
        }
        CorpusConfig::Wav { dir } => load_wav_dir(dir),
    }
}

/// Every `.wav` in `dir`, sorted by file name.
fn load_wav_dir(dir: &Path) -> Result<Corpus> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")));
    paths.sort();
    if paths.is_empty() {
        bail!("no .wav files in {}", dir.display());
    }
    let clips = paths.par_iter().map(load_wav).collect::<wmlab::Result<Vec<_>>>()?;
    let ids = paths
        .iter()
        .map(|p| p.file_stem().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    Ok(Corpus { ids, clips })
}

fn messages(seed: u64, tag: u64, n: usize, bits: usize) -> Vec<Message> {
    let s = derive(seed, tag);
    (0..n).map(|k| Message::random(&mut stream_rng(s, k as u64), bits)).collect()
}

fn adversary_message(cfg: &ExperimentConfig, bits: usize) -> Message {
    Message::random(&mut stream_rng(derive(cfg.seed, ADVERSARY_MESSAGES), 0), bits)
}

fn training_corpus(cfg: &ExperimentConfig, tag: u64) -> Vec<AudioClip> {
    let t = &cfg.training;
    synth_corpus(derive(cfg.seed, tag), t.corpus_clips, t.corpus_duration_s, CANONICAL_RATE)
}

/// The owner's scheme; a neural owner without a checkpoint is trained here
/// and saved as `owner.ckpt`.
fn owner_scheme(cfg: &ExperimentConfig, staging: &Staging) -> Result<WatermarkScheme> {
    let o = &cfg.owner;
    let family = cfg.owner_family()?;
    if family == Family::Neural && o.checkpoint.is_none() {
        let state = train_surrogate(&cfg.train_config(o.key, None)?, &training_corpus(cfg, OWNER_TRAINING))?;
        state.model.save(staging.path("owner.ckpt"))?;
        let scheme = WatermarkScheme::neural_with_gain(Arc::new(state.model), o.strength.unwrap_or(1.0))?;
        return Ok(scheme.with_pattern_bits(o.pattern_bits)?);
    }
    let d = SchemeDescriptor {
        family,
        seed: o.key,
        strength: o.strength,
        message_bits: o.message_bits,
        pattern_bits: o.pattern_bits,
        checkpoint: o.checkpoint.clone(),
    };
    Ok(d.build(Path::new("."))?)
}

fn write_messages(path: &Path, ids: &[String], msgs: &[Message]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["clip_id", "message"])?;
    for (id, m) in ids.iter().zip(msgs) {
        w.write_record([id.as_str(), &m.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn read_messages(path: &Path) -> Result<BTreeMap<String, Message>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 2 {
            bail!("{}: expected clip_id,message rows", path.display());
        }
        out.insert(rec[0].to_string(), rec[1].parse::<Message>()?);
    }
    Ok(out)
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

const REPORT_HEADER: &str = "tier,model,samples,asr,acc,owner_ber_mean,owner_ber_std,snr_mean_db,detect_fail_rate,success_rate";

fn report_row(tier: &str, model: &str, m: &MetricsRecord, success_rate: Option<f64>) -> String {
    format!(
        "{tier},{model},{},{},{},{},{},{},{},{}",
        m.samples.len(),
        fmt_num(m.asr),
        fmt_num(m.acc),
        fmt_num(m.ber_mean),
        fmt_num(m.ber_std),
        fmt_num(m.snr_mean_db),
        fmt_num(m.detect_fail_rate),
        success_rate.map(fmt_num).unwrap_or_default()
    )
}

fn write_histogram(path: &Path, m: &MetricsRecord) -> Result<()> {
    let bins = m.histogram.counts.len();
    let mut s = String::from("bin_low,bin_high,count\n");
    for (i, c) in m.histogram.counts.iter().enumerate() {
        let _ = writeln!(s, "{},{},{c}", fmt_num(i as f64 / bins as f64), fmt_num((i + 1) as f64 / bins as f64));
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Samples CSV, key-value report and histogram for one suite, with
/// `suffix` distinguishing several suites in one run.
fn write_suite(staging: &Staging, cfg: &ExperimentConfig, suite: &SuiteResult, suffix: &str) -> Result<MetricsRecord> {
    let m = suite.metrics(cfg.metrics.bins)?;
    write_samples_csv(&suite.samples, staging.path(&format!("samples{suffix}.csv")))?;
    let mut report = m.report();
    let _ = writeln!(report, "success_rate = {}", fmt_num(suite.success_rate()));
    std::fs::write(staging.path(&format!("report{suffix}.txt")), report)?;
    write_histogram(&staging.path(&format!("histogram{suffix}.csv")), &m)?;
    Ok(m)
}

pub fn gen_corpus(cfg: &ExperimentConfig, staging: &Staging) -> Result<String> {
    let corpus = load_corpus(cfg)?;
    let dir = staging.subdir("corpus")?;
    corpus
        .ids
        .par_iter()
        .zip(&corpus.clips)
        .try_for_each(|(id, c)| save_wav(c, dir.join(format!("{id}.wav"))))?;
    let mut s = String::from("clip_id,samples,sample_rate\n");
    for (id, c) in corpus.ids.iter().zip(&corpus.clips) {
        let _ = writeln!(s, "{id},{},{}", c.len(), c.sample_rate());
    }
    std::fs::write(staging.path("corpus.csv"), s)?;
    Ok(format!("{} clips", corpus.clips.len()))
}

pub fn embed(cfg: &ExperimentConfig, staging: &Staging) -> Result<String> {
    let corpus = load_corpus(cfg)?;
    let owner = owner_scheme(cfg, staging)?;
    let msgs = messages(cfg.seed, OWNER_MESSAGES, corpus.clips.len(), owner.payload_bits());
    let dir = staging.subdir("marked")?;
    let snrs: Vec<f64> = corpus
        .ids
        .par_iter()
        .zip(corpus.clips.par_iter().zip(&msgs))
        .map(|(id, (c, m))| {
            let marked = owner.embed(c, m)?;
            save_wav(&marked, dir.join(format!("{id}.wav")))?;
            snr(c, &marked)
        })
        .collect::<wmlab::Result<_>>()?;
    write_messages(&staging.path("messages.csv"), &corpus.ids, &msgs)?;
    let mut s = String::from("clip_id,snr_db\n");
    for (id, v) in corpus.ids.iter().zip(&snrs) {
        let _ = writeln!(s, "{id},{}", fmt_num(*v));
    }
    std::fs::write(staging.path("embed.csv"), s)?;
    let mean = snrs.iter().sum::<f64>() / snrs.len() as f64;
    Ok(format!("{} clips marked by {}, mean SNR {mean:.2} dB", snrs.len(), owner.label()))
}

pub fn detect(cfg: &ExperimentConfig, staging: &Staging) -> Result<String> {
    let corpus = match &cfg.detect.input {
        Some(dir) => load_wav_dir(dir)?,
        None => load_corpus(cfg)?,
    };
    let known = cfg.detect.messages.as_deref().map(read_messages).transpose()?;
    let owner = owner_scheme(cfg, staging)?;
    let rows: Vec<String> = corpus
        .ids
        .par_iter()
        .zip(&corpus.clips)
        .map(|(id, c)| -> Result<String> {
            let d = owner.detect(c)?;
            let decoded = d.decoded.as_ref().map(|m| m.to_string()).unwrap_or_default();
            let b = match (known.as_ref().and_then(|k| k.get(id)), &d.decoded) {
                (Some(m), Some(got)) => fmt_num(ber(m, got)?),
                _ => String::new(),
            };
            Ok(format!("{id},{},{decoded},{b}", d.detected))
        })
        .collect::<Result<_>>()?;
    let mut s = String::from("clip_id,detected,decoded,ber\n");
    for r in &rows {
        s.push_str(r);
        s.push('\n');
    }
    std::fs::write(staging.path("detections.csv"), s)?;
    Ok(format!("{} clips scanned with {}", rows.len(), owner.label()))
}

pub fn train(cfg: &ExperimentConfig, staging: &Staging) -> Result<String> {
    let tc = cfg.train_config(cfg.seed, None)?;
    let state = train_surrogate(&tc, &training_corpus(cfg, OWNER_TRAINING))?;
    state.model.save(staging.path("model.ckpt"))?;
    state.save(staging.path("state.ckpt"))?;
    write_loss_log(&state.log, staging.path("loss_log.csv"))?;
    let mut d = SchemeDescriptor::new(Family::Neural, cfg.seed);
    d.message_bits = tc.message_bits;
    d.checkpoint = Some(PathBuf::from("model.ckpt"));
    std::fs::write(staging.path("scheme.txt"), d.to_text())?;
    let last = state.log.last().map(|r| r.total).unwrap_or(f64::NAN);
    Ok(format!("{} iterations, final loss {last:.4}", state.iteration))
}

fn neural_surrogate(cfg: &ExperimentConfig, seed: u64, band: Option<(usize, usize)>, tag: u64) -> Result<SurrogateModel> {
    Ok(train_surrogate(&cfg.train_config(seed, band)?, &training_corpus(cfg, tag))?.model)
}

pub fn attack(cfg: &ExperimentConfig, staging: &Staging) -> Result<String> {
    let tier = cfg.tier()?;
    let corpus = load_corpus(cfg)?;
    let owner = owner_scheme(cfg, staging)?;
    let bits = owner.payload_bits();
    let msgs = messages(cfg.seed, OWNER_MESSAGES, corpus.clips.len(), bits);
    let m_adv = adversary_message(cfg, bits);
    let floor = cfg.snr_floor_db()?;
    let gain = cfg.attack.gain;
    let clips = &corpus.clips;
    let mut table = vec![REPORT_HEADER.to_string()];
    let summary;
    match tier {
        Tier::WhiteBox => {
            let suite = run_suite(&owner, &owner, clips, &msgs, &m_adv, floor, |x| overwrite(&owner, x, &m_adv))?;
            let m = write_suite(staging, cfg, &suite, "")?;
            table.push(report_row(tier.name(), &owner.label(), &m, Some(suite.success_rate())));
            summary = format!("ASR {:.3}, ACC {:.3}, SNR {:.2} dB", m.asr, m.acc, m.snr_mean_db);
        }
        Tier::GrayBox => {
            let mut parts = Vec::new();
            for (i, &seed) in cfg.attack.surrogate_seeds.iter().enumerate() {
                let adversary = if owner.family() == Family::Neural {
                    let band = owner.model().map(|m| m.band());
                    let model = neural_surrogate(cfg, seed, band, SURROGATE_TRAINING + i as u64)?;
                    model.save(staging.path(&format!("surrogate_{seed}.ckpt")))?;
                    WatermarkScheme::neural_with_gain(Arc::new(model), gain)?
                } else {
                    same_family(&owner, cfg, seed)?
                };
                let suite = run_suite(&owner, &adversary, clips, &msgs, &m_adv, floor, |x| {
                    overwrite(&adversary, x, &m_adv)
                })?;
                let m = write_suite(staging, cfg, &suite, &format!("_{seed}"))?;
                table.push(report_row(tier.name(), &adversary.label(), &m, Some(suite.success_rate())));
                parts.push(format!("seed {seed}: ASR {:.3} mu {:.3}", m.asr, m.ber_mean));
            }
            summary = parts.join("; ");
        }
        Tier::BlackBoxZeroQuery => {
            let candidates = candidate_schemes(cfg, staging)?;
            let mut stack_csv = String::from("n,asr,acc,owner_ber_mean,snr_mean_db\n");
            let mut last = None;
            for n in 1..=candidates.len() {
                let stack = &candidates[..n];
                let verifier = &stack[n - 1];
                let suite = run_suite(&owner, verifier, clips, &msgs, &m_adv, floor, |x| {
                    Ok(stack_overwrite(stack, x, &m_adv)?.clip)
                })?;
                let m = suite.metrics(cfg.metrics.bins)?;
                let _ = writeln!(
                    stack_csv,
                    "{n},{},{},{},{}",
                    fmt_num(m.asr),
                    fmt_num(m.acc),
                    fmt_num(m.ber_mean),
                    fmt_num(m.snr_mean_db)
                );
                last = Some(suite);
            }
            std::fs::write(staging.path("stack.csv"), stack_csv)?;
            let suite = last.expect("at least one candidate");
            let m = write_suite(staging, cfg, &suite, "")?;
            let label = candidates.iter().map(|c| c.label()).collect::<Vec<_>>().join("+");
            table.push(report_row(tier.name(), &label, &m, Some(suite.success_rate())));
            summary = format!("{} stacked: ASR {:.3}, SNR {:.2} dB", candidates.len(), m.asr, m.snr_mean_db);
        }
        Tier::BlackBoxQuery => {
            let configs = candidate_configs(cfg)?;
            let adv_corpus = training_corpus(cfg, ADVERSARY_TRAINING);
            let mut oracle = DetectorOracle::new(owner.clone(), cfg.attack.budget, cfg.oracle_mode()?);
            let x_w = owner.embed(&clips[0], &msgs[0])?;
            let settings = QuerySettings {
                gain,
                snr_floor_db: floor,
                ..QuerySettings::default()
            };
            let out = query_attack(&configs, &adv_corpus, &mut oracle, &x_w, &msgs[0], &m_adv, &settings)?;
            write_query_log(&staging.path("queries.csv"), &oracle)?;
            save_wav(&out.forged, staging.path("forged.wav"))?;
            let mut q = String::new();
            let _ = writeln!(q, "success = {}", out.success());
            let _ = writeln!(q, "queries_used = {}", out.queries_used);
            let _ = writeln!(q, "training_iterations = {}", out.training_iterations);
            let _ = writeln!(q, "snr_db = {}", fmt_num(out.snr_db));
            let _ = writeln!(q, "embedders = {}", out.embedders.join(" "));
            std::fs::write(staging.path("query.txt"), q)?;
            summary = format!(
                "success {} with {} queries, {} training iterations",
                out.success(),
                out.queries_used,
                out.training_iterations
            );
            if let Some(model) = out.surrogate {
                model.save(staging.path("surrogate.ckpt"))?;
                let s = WatermarkScheme::neural_with_gain(Arc::new(model), gain)?;
                let suite = run_suite(&owner, &s, clips, &msgs, &m_adv, floor, |x| overwrite(&s, x, &m_adv))?;
                let m = write_suite(staging, cfg, &suite, "")?;
                table.push(report_row(tier.name(), &s.label(), &m, Some(suite.success_rate())));
            }
        }
    }
    std::fs::write(staging.path("report.csv"), table.join("\n") + "\n")?;
    Ok(format!("{tier}: {summary}"))
}

/// Same algorithm as the owner under a different key.
fn same_family(owner: &WatermarkScheme, cfg: &ExperimentConfig, key: u64) -> Result<WatermarkScheme> {
    let o = &cfg.owner;
    let d = SchemeDescriptor {
        family: owner.family(),
        seed: key,
        strength: o.strength,
        message_bits: o.message_bits,
        pattern_bits: o.pattern_bits,
        checkpoint: None,
    };
    Ok(d.build(Path::new("."))?)
}

fn candidate_configs(cfg: &ExperimentConfig) -> Result<Vec<wmlab::training::TrainConfig>> {
    cfg.attack
        .candidate_seeds
        .iter()
        .zip(&cfg.attack.candidate_bands)
        .map(|(&s, b)| cfg.train_config(s, Some((b[0], b[1]))))
        .collect()
}

fn candidate_schemes(cfg: &ExperimentConfig, staging: &Staging) -> Result<Vec<WatermarkScheme>> {
    let corpus = training_corpus(cfg, ADVERSARY_TRAINING);
    candidate_configs(cfg)?
        .iter()
        .map(|tc| {
            let model = train_surrogate(tc, &corpus)?.model;
            model.save(staging.path(&format!("candidate_{}.ckpt", tc.seed)))?;
            Ok(WatermarkScheme::neural_with_gain(Arc::new(model), cfg.attack.gain)?)
        })
        .collect()
}

fn write_query_log(path: &Path, oracle: &DetectorOracle) -> Result<()> {
    let mut s = String::from("query,digest,detected,corrupted\n");
    for (i, r) in oracle.log().iter().enumerate() {
        let _ = writeln!(s, "{},{},{},{}", i + 1, r.digest, r.response.detected, r.response.corrupted);
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn matrix(cfg: &ExperimentConfig, staging: &Staging) -> Result<String> {
    let corpus = load_corpus(cfg)?;
    let families: Vec<Family> = cfg
        .metrics
        .matrix_families
        .iter()
        .map(|f| f.parse::<Family>())
        .collect::<wmlab::Result<_>>()?;
    let bits = cfg.owner.message_bits;
    let keys = derive(cfg.seed, MATRIX_KEYS);
    let mut schemes = Vec::with_capacity(families.len());
    for (i, f) in families.iter().enumerate() {
        let key = WatermarkKey::new(mix64(keys ^ i as u64));
        let s = match f {
            Family::Lsb => WatermarkScheme::lsb(key),
            Family::SpreadSpectrum => WatermarkScheme::spread_spectrum(key, wmlab::schemes::DEFAULT_ALPHA)?,
            Family::QimFreq => WatermarkScheme::qim_freq(key, wmlab::schemes::DEFAULT_DELTA)?,
            Family::Neural => {
                if cfg.owner_family()? == Family::Neural {
                    owner_scheme(cfg, staging)?
                } else {
                    let model = neural_surrogate(cfg, cfg.owner.key, None, OWNER_TRAINING)?;
                    model.save(staging.path("neural.ckpt"))?;
                    WatermarkScheme::neural(Arc::new(model))
                }
            }
        };
        schemes.push(if *f == Family::Neural { s } else { s.with_message_bits(bits)? });
    }
    let n = corpus.clips.len();
    let owner_msgs = messages(cfg.seed, OWNER_MESSAGES, n, bits);
    let adv_msgs = messages(cfg.seed, ADVERSARY_MESSAGES, n, bits);
    let cm = cross_matrix(&schemes, &corpus.clips, &owner_msgs, &adv_msgs)?;
    cm.write_csv(staging.path("matrix.csv"))?;
    Ok(format!("{0}x{0} matrix over {n} clips", schemes.len()))
}

pub fn report(cfg: &ExperimentConfig, staging: &Staging) -> Result<String> {
    let path = cfg
        .report
        .samples
        .as_deref()
        .context("report needs `report.samples` pointing at a samples CSV")?;
    let samples = read_samples_csv(path)?;
    let m = MetricsRecord::from_samples(samples, cfg.metrics.bins)?;
    m.write_report(staging.path("report.txt"))?;
    write_histogram(&staging.path("histogram.csv"), &m)?;
    let row = report_row(&cfg.attack.tier, "", &m, None);
    std::fs::write(staging.path("report.csv"), format!("{REPORT_HEADER}\n{row}\n"))?;
    Ok(format!("ASR {:.3}, ACC {:.3}, SNR {:.2} dB over {} samples", m.asr, m.acc, m.snr_mean_db, m.samples.len()))
}

pub fn serve_oracle(cfg: &ExperimentConfig, staging: &Staging) -> Result<String> {
    let owner = owner_scheme(cfg, staging)?;
    let mut oracle = DetectorOracle::new(owner, cfg.attack.budget, cfg.oracle_mode()?);
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    protocol::serve(&mut oracle, stdin.lock(), &mut out)?;
    out.flush()?;
    write_query_log(&staging.path("queries.csv"), &oracle)?;
    Ok(format!("answered {} of {} budgeted queries", oracle.used(), oracle.budget()))
}
