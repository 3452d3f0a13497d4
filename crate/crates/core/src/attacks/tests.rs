use std::io::Cursor;
use std::sync::Arc;

use proptest::prelude::*;

use super::protocol::{serve, Reply, Request};
use super::*;
use crate::audio::{save_wav, synth_corpus};
use crate::rng::stream_rng;
use crate::schemes::WatermarkKey;
use crate::training::partial_train;

fn messages(seed: u64, n: usize, len: usize) -> Vec<Message> {
    (0..n).map(|k| Message::random(&mut stream_rng(seed, k as u64), len)).collect()
}

fn classic() -> Vec<WatermarkScheme> {
    vec![
        WatermarkScheme::lsb(WatermarkKey::new(1)),
        WatermarkScheme::spread_spectrum(WatermarkKey::new(2), 0.01).unwrap(),
        WatermarkScheme::qim_freq(WatermarkKey::new(3), 0.1).unwrap(),
    ]
}

#[test]
fn white_box_overwrite_classic_families() {
    let corpus = synth_corpus(31, 20, 3.0, 16000);
    let owner_msgs = messages(1, 20, 16);
    let m_adv = Message::random(&mut stream_rng(2, 0), 16);
    for s in classic() {
        let r = run_suite(&s, &s, &corpus, &owner_msgs, &m_adv, DEFAULT_SNR_FLOOR_DB, |x| overwrite(&s, x, &m_adv))
            .unwrap();
        let m = r.metrics(10).unwrap();
        assert_eq!(m.acc, 1.0, "{}", s.label());
        assert!((0.35..=0.65).contains(&m.ber_mean), "{}: {}", s.label(), m.ber_mean);
        assert!(r.samples.iter().all(|x| x.snr_db.is_finite() || x.snr_db == f64::INFINITY));
    }
}

#[test]
fn orthogonal_pair_leaves_owner_intact() {
    let corpus = synth_corpus(32, 20, 3.0, 16000);
    let owner_msgs = messages(3, 20, 16);
    let m_adv = Message::random(&mut stream_rng(4, 0), 16);
    let s = classic();
    for (o, a) in [(1, 2), (2, 1)] {
        let r = run_suite(&s[o], &s[a], &corpus, &owner_msgs, &m_adv, 20.0, |x| overwrite(&s[a], x, &m_adv)).unwrap();
        assert!(r.metrics(10).unwrap().ber_mean <= 0.15);
    }
}

#[test]
fn stacking_single_equals_overwrite_and_snr_decreases() {
    let corpus = synth_corpus(33, 5, 2.0, 16000);
    let m_adv = Message::random(&mut stream_rng(5, 0), 16);
    let s = classic();
    let order = [s[1].clone(), s[2].clone(), s[0].clone()];
    for clip in &corpus {
        let x_w = s[2].embed(clip, &m_adv.complement()).unwrap();
        let one = stack_overwrite(&order[..1], &x_w, &m_adv).unwrap();
        assert_eq!(one.clip, overwrite(&order[0], &x_w, &m_adv).unwrap());
        let all = stack_overwrite(&order, &x_w, &m_adv).unwrap();
        assert_eq!(all.snrs.len(), 3);
        assert!(all.snrs.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{:?}", all.snrs);
        assert_eq!(all.clip.len(), x_w.len());
    }
    assert!(stack_overwrite(&[], &corpus[0], &m_adv).is_err());
}

#[test]
fn verify_identity_and_pattern_failure() {
    let clip = &synth_corpus(34, 1, 2.0, 16000)[0];
    let mut owner = WatermarkScheme::qim_freq(WatermarkKey::new(9), 0.1).unwrap().with_pattern_bits(4).unwrap();
    let m = Message::random(&mut stream_rng(6, 0), owner.payload_bits());
    let x_w = owner.embed(clip, &m).unwrap();
    let adv = owner.clone();
    let flags = verify_attack(&mut owner, &adv, &x_w, &x_w, &m, &m.complement(), 20.0).unwrap();
    assert!(!flags.owner_removed);
    assert!(!flags.adversary_verified);
    assert!(flags.imperceptible);

    // Same key, no pattern: the adversary writes the complement of the pattern.
    let attacker = WatermarkScheme::qim_freq(WatermarkKey::new(9), 0.1).unwrap();
    let m_adv = owner.pattern().unwrap().complement().concat(&m);
    let forged = overwrite(&attacker, &x_w, &m_adv).unwrap();
    assert!(!owner.detect(&forged).unwrap().detected);
    let flags = verify_attack(&mut owner, &attacker, &x_w, &forged, &m, &m_adv, 20.0).unwrap();
    assert!(flags.all());
}

#[test]
fn spec_and_tier_validation() {
    let m = Message::zeros(4).unwrap();
    assert!(AttackSpec::new(Tier::BlackBoxZeroQuery, m.clone(), vec![], vec![], 0, 20.0).is_err());
    assert!(AttackSpec::new(Tier::BlackBoxQuery, m.clone(), classic(), vec![], 10, 20.0).is_err());
    assert!(AttackSpec::new(Tier::WhiteBox, m.clone(), classic(), vec![], 0, f64::NAN).is_err());
    assert!(AttackSpec::new(Tier::WhiteBox, m, classic(), vec![], 0, 20.0).is_ok());
    for t in Tier::ALL {
        assert_eq!(t.name().parse::<Tier>().unwrap(), t);
    }
    assert!("grey-box".parse::<Tier>().is_err());
}

#[test]
fn oracle_budget_and_log() {
    let clip = &synth_corpus(35, 1, 2.0, 16000)[0];
    let owner = WatermarkScheme::lsb(WatermarkKey::new(4));
    let m = Message::random(&mut stream_rng(7, 0), 16);
    let x_w = owner.embed(clip, &m).unwrap();
    let mut o = DetectorOracle::new(owner.clone(), 2, OracleMode::OneBit);
    let r = o.query(&x_w, &m).unwrap();
    assert!(!r.corrupted && r.detected && r.bits.is_none());
    assert_eq!(r.queries_used, 1);
    assert!(o.query(&x_w, &Message::zeros(3).unwrap()).is_err());
    assert_eq!(o.used(), 1);
    assert!(o.query(&x_w, &m.complement()).unwrap().corrupted);
    assert!(matches!(o.query(&x_w, &m), Err(crate::Error::BudgetExhausted { budget: 2 })));
    assert_eq!(o.used(), 2);
    assert_eq!(o.log().len(), 2);
    assert_eq!(o.log()[0].digest.len(), 64);
    assert_ne!(o.log()[0].digest, o.log()[1].digest);

    let mut full = DetectorOracle::new(owner, 1, OracleMode::FullMessage);
    assert_eq!(full.query(&x_w, &m).unwrap().bits, Some(m));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn oracle_never_exceeds_budget(budget in 0usize..6, attempts in 0usize..10) {
        let clip = AudioClip::new(vec![0.25; 64], 16000).unwrap();
        let mut o = DetectorOracle::new(WatermarkScheme::lsb(WatermarkKey::new(1)), budget, OracleMode::OneBit);
        let m = Message::zeros(16).unwrap();
        for i in 0..attempts {
            let r = o.query(&clip, &m);
            prop_assert_eq!(r.is_ok(), i < budget);
            prop_assert!(o.used() <= budget);
        }
        prop_assert_eq!(o.used(), attempts.min(budget));
        prop_assert_eq!(o.log().len(), o.used());
    }
}

#[test]
fn wire_protocol_round_trip() {
    let req = Request {
        id: "q1".into(),
        wav_path: "/tmp/a b.wav".into(),
        probe_hex: "a5f0".into(),
    };
    assert_eq!(Request::parse(&req.to_line()).unwrap(), req);
    assert!(Request::parse("q1\tonly-two").is_err());
    let m: Message = "1010010111110000".parse().unwrap();
    let answer = Reply::Answer {
        id: "7".into(),
        response: OracleResponse {
            detected: true,
            corrupted: false,
            bits: Some(m),
            queries_used: 3,
        },
    };
    assert_eq!(answer.to_line(), "7\t1\t0\ta5f0\t3");
    assert_eq!(Reply::parse(&answer.to_line(), 16).unwrap(), answer);
    let refused = Reply::Refused {
        id: "8".into(),
        reason: "budget".into(),
    };
    assert_eq!(Reply::parse(&refused.to_line(), 16).unwrap(), refused);
    assert!(Reply::parse("8\t2\t0\t\t1", 16).is_err());
}

#[test]
fn serve_enforces_budget() {
    let dir = tempfile::tempdir().unwrap();
    let clip = &synth_corpus(36, 1, 1.0, 16000)[0];
    let owner = WatermarkScheme::lsb(WatermarkKey::new(5));
    let m = Message::random(&mut stream_rng(8, 0), 16);
    let path = dir.path().join("x.wav");
    save_wav(&owner.embed(clip, &m).unwrap(), &path).unwrap();
    let p = path.display();
    let hex = m.to_hex();
    let input = format!("a\t{p}\t{hex}\n\nb\tmissing.wav\t{hex}\nc\t{p}\t{hex}\nd\t{p}\t{hex}\ngarbage\n");
    let mut oracle = DetectorOracle::new(owner, 2, OracleMode::OneBit);
    let mut out = Vec::new();
    serve(&mut oracle, Cursor::new(input), &mut out).unwrap();
    let lines: Vec<String> = String::from_utf8(out).unwrap().lines().map(String::from).collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[0], "a\t1\t0\t\t1");
    assert!(lines[1].starts_with("b\tERR\t"));
    assert_eq!(lines[2], "c\t1\t0\t\t2");
    assert!(lines[3].starts_with("d\tERR\tquery budget of 2 exhausted"));
    assert!(lines[4].starts_with("garbage\tERR\t"));
    assert_eq!(oracle.used(), 2);
}

fn tiny_setup() -> (Vec<AudioClip>, TrainConfig, WatermarkScheme) {
    let corpus = synth_corpus(37, 4, 0.5, 16000);
    let cfg = TrainConfig::with_seed(3);
    let model = partial_train(&cfg, &corpus, 10).unwrap().model;
    (corpus, cfg, WatermarkScheme::neural(Arc::new(model)))
}

#[test]
fn query_attack_zero_budget_makes_no_calls() {
    let (corpus, cfg, owner) = tiny_setup();
    let m = Message::random(&mut stream_rng(9, 0), 16);
    let x_w = owner.embed(&corpus[0], &m).unwrap();
    let mut oracle = DetectorOracle::new(owner, 0, OracleMode::OneBit);
    let out = query_attack(&[cfg], &corpus, &mut oracle, &x_w, &m, &m.complement(), &QuerySettings::default()).unwrap();
    assert!(!out.success());
    assert_eq!(out.queries_used, 0);
    assert_eq!(out.training_iterations, 0);
    assert!(oracle.log().is_empty());
}

#[test]
fn query_attack_respects_budget_and_cap() {
    let (corpus, cfg, owner) = tiny_setup();
    let m = Message::random(&mut stream_rng(10, 0), 16);
    let m_adv = m.complement();
    let x_w = owner.embed(&corpus[0], &m).unwrap();
    let settings = QuerySettings {
        step_iterations: 10,
        max_refine_iterations: 30,
        reliability_threshold: 0.0,
        ..QuerySettings::default()
    };
    for budget in [1, 3, 10] {
        let mut oracle = DetectorOracle::new(owner.clone(), budget, OracleMode::OneBit);
        let out = query_attack(&[cfg.clone(), cfg.clone()], &corpus, &mut oracle, &x_w, &m, &m_adv, &settings).unwrap();
        assert!(out.queries_used <= budget);
        assert!(out.queries_used <= 2 + settings.max_verification_queries);
        assert_eq!(out.queries_used, oracle.used());
        assert!(out.training_iterations <= 10 + 30);
        if budget == 1 {
            assert!(!out.success());
        }
        if out.success() {
            assert!(out.flags.all());
            assert!(out.surrogate.is_some());
        }
    }
}
