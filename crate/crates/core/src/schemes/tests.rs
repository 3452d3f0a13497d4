use super::*;
use crate::audio::synth_corpus;
use proptest::prelude::*;
use rand::SeedableRng;

fn corpus(seed: u64, n: usize) -> Vec<AudioClip> {
    synth_corpus(seed, n, 1.1, 16000)
}

fn ber(a: &Message, b: &Message) -> f64 {
    a.bits().iter().zip(b.bits()).filter(|(x, y)| x != y).count() as f64 / a.len() as f64
}

fn snr_db(x: &AudioClip, y: &AudioClip) -> f64 {
    let e: f64 = x.samples().iter().zip(y.samples()).map(|(a, b)| (a - b).powi(2)).sum();
    10.0 * (x.energy() / e).log10()
}

fn classic(seed: u64) -> Vec<WatermarkScheme> {
    let k = WatermarkKey::new(seed);
    vec![
        WatermarkScheme::lsb(k),
        WatermarkScheme::spread_spectrum(k, DEFAULT_ALPHA).unwrap(),
        WatermarkScheme::qim_freq(k, DEFAULT_DELTA).unwrap(),
    ]
}

#[test]
fn message_text_forms() {
    let m: Message = "0101110001".parse().unwrap();
    assert_eq!(m.to_string(), "0101110001");
    assert_eq!(m.to_hex(), "5c4");
    assert_eq!(Message::from_hex("5c4", 10).unwrap(), m);
    assert!(Message::from_hex("5c5", 10).is_err());
    assert!(Message::from_hex("5c", 10).is_err());
    assert!("012".parse::<Message>().is_err());
    assert!(Message::new(vec![]).is_err());
    assert_eq!(m.complement().to_string(), "1010001110");
}

#[test]
fn detection_result_invariants() {
    let d = DetectionResult::from_scores(vec![0.2, 0.5, 0.51, 1.0]);
    assert!(d.detected);
    assert_eq!(d.decoded.unwrap().to_string(), "0011");
    let f = DetectionResult::failure(vec![0.9]);
    assert!(!f.detected && f.decoded.is_none());
}

#[test]
fn zero_alpha_is_identity_and_chance() {
    let s = WatermarkScheme::spread_spectrum(WatermarkKey::new(4), 0.0).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let mut total = 0.0;
    let clips = corpus(30, 40);
    for c in &clips {
        let m = Message::random(&mut rng, 16);
        let y = s.embed(c, &m).unwrap();
        assert_eq!(&y, c);
        total += ber(&m, &s.detect(&y).unwrap().decoded.unwrap());
    }
    let mean = total / clips.len() as f64;
    assert!((mean - 0.5).abs() <= 0.1, "{mean}");
}

#[test]
fn classic_families_round_trip() {
    let clips = corpus(31, 100);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    for s in classic(17) {
        for c in &clips {
            let m = Message::random(&mut rng, 16);
            let y = s.embed(c, &m).unwrap();
            assert_eq!(y.len(), c.len());
            assert!(y.peak() <= 1.0);
            let d = s.detect(&y).unwrap();
            assert_eq!(d.decoded.as_ref(), Some(&m), "{}", s.label());
            assert!(snr_db(c, &y) >= s.family().snr_floor_db(), "{}", s.label());
        }
    }
}

#[test]
fn qim_snr_on_corpus() {
    let s = WatermarkScheme::qim_freq(WatermarkKey::new(5), 0.1).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for c in corpus(32, 30) {
        let y = s.embed(&c, &Message::random(&mut rng, 16)).unwrap();
        assert!(snr_db(&c, &y) >= 20.0);
    }
}

#[test]
fn unwatermarked_and_wrong_key_detection_is_chance() {
    let clips = synth_corpus(33, 200, 1.1, 16000);
    let fixed: Message = "0110100111000101".parse().unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    for (owner, other) in classic(40).into_iter().zip(classic(41)) {
        let (mut clean, mut wrong) = (0.0, 0.0);
        for c in &clips {
            clean += ber(&fixed, &owner.detect(c).unwrap().decoded.unwrap());
            let m = Message::random(&mut rng, 16);
            let y = owner.embed(c, &m).unwrap();
            wrong += ber(&m, &other.detect(&y).unwrap().decoded.unwrap());
        }
        let n = clips.len() as f64;
        assert!((clean / n - 0.5).abs() <= 0.1, "{} clean {}", owner.label(), clean / n);
        assert!((wrong / n - 0.5).abs() <= 0.1, "{} wrong key {}", owner.label(), wrong / n);
    }
}

#[test]
fn same_family_overwrite_replaces_message() {
    let clips = corpus(34, 50);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for s in classic(50) {
        let mut bers = vec![];
        for c in &clips {
            let (m1, m2) = (Message::random(&mut rng, 16), Message::random(&mut rng, 16));
            let y = s.embed(&s.embed(c, &m1).unwrap(), &m2).unwrap();
            bers.push(ber(&m2, &s.detect(&y).unwrap().decoded.unwrap()));
        }
        let mean = bers.iter().sum::<f64>() / bers.len() as f64;
        match s.family() {
            Family::SpreadSpectrum => assert!(mean <= 0.05, "{mean}"),
            _ => assert_eq!(mean, 0.0, "{}", s.label()),
        }
    }
}

#[test]
fn spread_spectrum_and_qim_leave_each_other_intact() {
    let clips = corpus(35, 50);
    let ss = WatermarkScheme::spread_spectrum(WatermarkKey::new(60), DEFAULT_ALPHA).unwrap();
    let qim = WatermarkScheme::qim_freq(WatermarkKey::new(61), DEFAULT_DELTA).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
    for (owner, attacker) in [(&ss, &qim), (&qim, &ss)] {
        let mut total = 0.0;
        for c in &clips {
            let (m1, m2) = (Message::random(&mut rng, 16), Message::random(&mut rng, 16));
            let y = attacker.embed(&owner.embed(c, &m1).unwrap(), &m2).unwrap();
            total += ber(&m1, &owner.detect(&y).unwrap().decoded.unwrap());
        }
        assert!(total / clips.len() as f64 <= 0.15);
    }
}

#[test]
fn pattern_mismatch_fails_detection() {
    let key = WatermarkKey::new(70);
    let guarded = WatermarkScheme::qim_freq(key, DEFAULT_DELTA).unwrap().with_pattern_bits(4).unwrap();
    assert_eq!(guarded.payload_bits(), 12);
    let bare = WatermarkScheme::qim_freq(key, DEFAULT_DELTA).unwrap();
    let pattern = guarded.pattern().unwrap().clone();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let clips = corpus(36, 40);
    let mut failures = 0;
    for c in &clips {
        let m = Message::random(&mut rng, 12);
        let x_w = guarded.embed(c, &m).unwrap();
        let ok = guarded.detect(&x_w).unwrap();
        assert_eq!(ok.decoded.as_ref(), Some(&m));

        // Overwrite with a prefix that certainly breaks the pattern.
        let forced = pattern.complement().concat(&Message::random(&mut rng, 12));
        let d = guarded.detect(&bare.embed(&x_w, &forced).unwrap()).unwrap();
        assert!(!d.detected && d.decoded.is_none());
        assert_eq!(d.soft_scores.len(), 12);

        let random = Message::random(&mut rng, 16);
        failures += !guarded.detect(&bare.embed(&x_w, &random).unwrap()).unwrap().detected as usize;
    }
    // A random 4-bit prefix survives with probability 1/16.
    assert!(failures >= clips.len() * 3 / 4, "{failures}");
}

#[test]
fn invalid_configurations_are_rejected() {
    let k = WatermarkKey::new(1);
    assert!(WatermarkScheme::qim_freq(k, 0.0).is_err());
    assert!(WatermarkScheme::spread_spectrum(k, -0.1).is_err());
    assert!(WatermarkScheme::lsb(k).with_pattern_bits(16).is_err());
    let short = AudioClip::new(vec![0.1; 1000], 16000).unwrap();
    for s in classic(1) {
        if s.min_len() > short.len() {
            assert!(matches!(s.detect(&short), Err(Error::TooShort { .. })));
            assert!(s.embed(&short, &Message::zeros(16).unwrap()).is_err());
        }
    }
    let ok = AudioClip::new(vec![0.1; 20000], 16000).unwrap();
    assert!(matches!(
        WatermarkScheme::lsb(k).embed(&ok, &Message::zeros(8).unwrap()),
        Err(Error::LengthMismatch { .. })
    ));
}

#[test]
fn descriptor_round_trip() {
    let text = "family = qim-freq\nseed = 11\nstrength = 0.05 # coarse\nmessage_bits = 12\npattern_bits = 4\n";
    let d = SchemeDescriptor::parse(text).unwrap();
    assert_eq!(SchemeDescriptor::parse(&d.to_text()).unwrap(), d);
    let s = d.build(std::path::Path::new(".")).unwrap();
    assert_eq!(s.family(), Family::QimFreq);
    assert_eq!(s.strength(), 0.05);
    assert_eq!(s.payload_bits(), 8);
    assert!(SchemeDescriptor::parse("family = echo").is_err());
    assert!(SchemeDescriptor::parse("seed = 3").is_err());
    assert!(SchemeDescriptor::parse("family = neural\nseed = 3").is_err());
    assert!(SchemeDescriptor::parse("family = lsb\ncolour = red").is_err());
}

#[test]
fn neural_descriptor_loads_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let model = SurrogateModel::with_defaults(9);
    model.save(dir.path().join("m.ckpt")).unwrap();
    let mut d = SchemeDescriptor::new(Family::Neural, 0);
    d.checkpoint = Some("m.ckpt".into());
    d.strength = Some(1.5);
    let s = d.build(dir.path()).unwrap();
    assert_eq!(s.key().seed, 9);
    assert_eq!(s.strength(), 1.5);
    assert_eq!(s.model().unwrap().as_ref(), &model);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn embedding_is_deterministic_and_length_preserving(seed in 0u64..10_000, extra in 0usize..3000, fam in 0usize..3) {
        let clip = synth_corpus(seed, 1, 1.03, 16000).remove(0);
        let mut x = clip.samples().to_vec();
        x.extend(std::iter::repeat_n(0.01, extra));
        let clip = AudioClip::new(x, 16000).unwrap();
        let s = classic(seed).swap_remove(fam);
        let m = Message::random(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed), 16);
        let a = s.embed(&clip, &m).unwrap();
        let b = s.embed(&clip, &m).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.len(), clip.len());
        prop_assert_eq!(s.detect(&a).unwrap(), s.detect(&b).unwrap());
        prop_assert_eq!(s.detect(&a).unwrap().decoded, Some(m));
    }
}
