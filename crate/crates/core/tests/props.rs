mod common;

use std::collections::BTreeSet;
use std::path::Path;

use common::*;
use homosmooth::loss::{cross_entropy, log_softmax, sequence_ls_loss, softmax};
use homosmooth::ngram::count_unigrams;
use homosmooth::prior::{export_priors, fuzzy_homophone_prior, homophone_prior, import_priors, unigram_prior, SmoothingDistribution};
use homosmooth::toy::{generate_dataset, ModelDims, SyntheticLanguageConfig, ToyModelParams};
use homosmooth::{
    corpus_cer, edit_distance, kl_divergence, ls_loss, ls_loss_grad, mixed_target, train_bigram, FuzzyRules, HomophoneIndex,
    Lexicon, Smoothing, Syllable, ToneMode, Vocabulary,
};
use proptest::prelude::*;
use proptest::sample::subsequence;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `(k0, homo, K)` with `homo` disjoint from `k0` and `K > N + 1`.
fn homo_case() -> impl Strategy<Value = (usize, BTreeSet<usize>, usize)> {
    (5usize..400).prop_flat_map(|k| {
        let n_max = 20.min(k - 2);
        (Just(k), 0..k, subsequence((0..k).collect::<Vec<_>>(), 1..=n_max + 1))
    })
    .prop_filter_map("needs one homophone besides k0", |(k, k0, mut homo)| {
        homo.retain(|&h| h != k0);
        homo.truncate(k - 2);
        (!homo.is_empty()).then(|| (k0, homo.into_iter().collect(), k))
    })
}

/// A random distribution over `k` classes, sparse with a tail or fully dense.
fn distribution(k: usize) -> impl Strategy<Value = SmoothingDistribution> {
    (prop::collection::vec(0.0f64..1.0, k), any::<bool>(), 0usize..k).prop_map(move |(w, dense, k0)| {
        if dense {
            let z: f64 = w.iter().sum::<f64>() + 1e-9;
            let probs: Vec<f64> = w.iter().map(|x| (x + 1e-9 / k as f64) / z).collect();
            let s: f64 = probs.iter().sum();
            SmoothingDistribution::from_dense(&probs.iter().map(|p| p / s).collect::<Vec<_>>()).unwrap()
        } else if k > 2 {
            homophone_prior(k0, &BTreeSet::from([(k0 + 1) % k]), k).unwrap()
        } else {
            SmoothingDistribution::point_mass(k, k0).unwrap()
        }
    })
}

fn loss_case() -> impl Strategy<Value = (Vec<f64>, usize, SmoothingDistribution, f64)> {
    (2usize..40).prop_flat_map(|k| (prop::collection::vec(-8.0f64..8.0, k), 0..k, distribution(k), 0.0f64..=1.0))
}

fn dense_sum(d: &SmoothingDistribution) -> f64 {
    d.to_dense().iter().sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn vocabulary_is_a_bijection(chars in prop::collection::vec(prop::char::range('\u{4e00}', '\u{4e40}'), 0..60)) {
        let v = Vocabulary::from_chars(chars.iter().copied());
        let distinct: BTreeSet<char> = chars.iter().copied().collect();
        prop_assert_eq!(v.len(), 4 + distinct.len());
        for &c in &distinct {
            let k = v.get(c).unwrap();
            prop_assert!(k >= 4);
            prop_assert_eq!(v.decode_char(k), Some(c));
        }
        let s = v.specials();
        prop_assert_eq!(BTreeSet::from([s.unk, s.space, s.sos, s.eos]).len(), 4);
    }

    #[test]
    fn syllable_round_trip(i in 0usize..INITIALS.len(), f in 0usize..FINALS.len(), tone in 0u8..=5) {
        let s = Syllable::new(INITIALS[i], FINALS[f], tone).unwrap();
        let text = s.to_string();
        let back: Syllable = text.parse().unwrap();
        prop_assert_eq!(back.to_string(), text);
    }

    #[test]
    fn homophone_prior_values((k0, homo, k) in homo_case()) {
        let d = homophone_prior(k0, &homo, k).unwrap();
        let n = homo.len() as f64;
        for j in 0..k {
            let want = if j == k0 { 0.6 } else if homo.contains(&j) { 0.3 / n } else { 0.1 / (k as f64 - n - 1.0) };
            prop_assert!((d.prob(j) - want).abs() <= 1e-15);
        }
        prop_assert!((dense_sum(&d) - 1.0).abs() <= 1e-12);
        prop_assert!((d.mass_of(&homo) - 0.3).abs() <= 1e-12);
    }

    #[test]
    fn fuzzy_prior_values((k0, homo, k) in homo_case(), split in 0usize..=20) {
        let all: Vec<usize> = homo.into_iter().collect();
        let cut = split.min(all.len());
        let (h, s): (BTreeSet<usize>, BTreeSet<usize>) = (all[..cut].iter().copied().collect(), all[cut..].iter().copied().collect());
        let d = fuzzy_homophone_prior(k0, &h, &s, k).unwrap();
        let (hm, sm) = match (h.len(), s.len()) {
            (0, _) => (0.0, 0.3),
            (_, 0) => (0.3, 0.0),
            _ => (0.15, 0.15),
        };
        prop_assert!((d.prob(k0) - 0.6).abs() <= 1e-15);
        prop_assert!((d.mass_of(&h) - hm).abs() <= 1e-12);
        prop_assert!((d.mass_of(&s) - sm).abs() <= 1e-12);
        prop_assert!((dense_sum(&d) - 1.0).abs() <= 1e-12);
        prop_assert!(d.to_dense().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn prior_export_round_trip(ds in prop::collection::vec((0usize..30).prop_flat_map(|_| distribution(30)), 1..8)) {
        let pairs: Vec<(usize, SmoothingDistribution)> = ds.into_iter().enumerate().map(|(i, d)| (i % 30, d)).collect();
        let mut buf = Vec::new();
        export_priors(&pairs, &mut buf).unwrap();
        let back = import_priors(&buf[..], 30, Path::new("mem")).unwrap();
        prop_assert_eq!(back.len(), pairs.len());
        for ((k0, a), (k1, b)) in pairs.iter().zip(&back) {
            prop_assert_eq!(k0, k1);
            prop_assert!(max_abs_diff(&a.to_dense(), &b.to_dense()) <= 1e-12);
        }
    }

    #[test]
    fn unigram_prior_has_no_zeros(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alphabet: Vec<char> = "一二三四五六七八九十".chars().collect();
        let corpus = random_corpus(&mut rng, &alphabet[..4], 50);
        let vocab = Vocabulary::from_chars(alphabet.iter().copied());
        let uni = count_unigrams(&corpus, &vocab).unwrap();
        prop_assert!((uni.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let d = unigram_prior(&uni);
        prop_assert!(d.to_dense().iter().all(|&p| p > 0.0));
        prop_assert!((dense_sum(&d) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn bigram_rows_normalize(seed in any::<u64>(), k in 0.0f64..2.0, lambda in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alphabet: Vec<char> = "一二三四五六七八九十".chars().collect();
        let corpus = random_corpus(&mut rng, &alphabet[..7], 80);
        let vocab = Vocabulary::from_chars(alphabet.iter().copied());
        for smoothing in [Smoothing::AddK(k), Smoothing::Interpolated(lambda)] {
            let lm = train_bigram(&corpus, &vocab, smoothing).unwrap();
            for prev in 0..vocab.len() {
                let row = lm.predict(prev).unwrap().to_dense();
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                prop_assert!(row.iter().all(|&p| p >= 0.0));
            }
        }
    }

    #[test]
    fn log_softmax_normalizes(z in prop::collection::vec(-300.0f64..300.0, 1..50)) {
        let lp = log_softmax(&z).unwrap();
        prop_assert!(lp.iter().all(|&x| x <= 0.0));
        prop_assert!((lp.iter().map(|x| x.exp()).sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn mixed_target_normalizes((_, k0, v, beta) in loss_case()) {
        let t = mixed_target(k0, &v, beta).unwrap();
        prop_assert!((dense_sum(&t) - 1.0).abs() <= 1e-12);
        prop_assert!((t.prob(k0) - ((1.0 - beta) + beta * v.prob(k0))).abs() <= 1e-12);
    }

    #[test]
    fn loss_is_ce_minus_scaled_entropy((z, k0, v, beta) in loss_case()) {
        let loss = ls_loss(&z, k0, &v, beta).unwrap();
        let ce = cross_entropy(&mixed_target(k0, &v, beta).unwrap(), &log_softmax(&z).unwrap()).unwrap();
        prop_assert!(loss.is_finite());
        prop_assert!((loss - (ce - beta * v.entropy())).abs() <= 1e-10);
    }

    #[test]
    fn gradient_is_softmax_minus_target((z, k0, v, beta) in loss_case()) {
        let g = ls_loss_grad(&z, k0, &v, beta).unwrap();
        let p = softmax(&z).unwrap();
        let t = mixed_target(k0, &v, beta).unwrap().to_dense();
        for j in 0..z.len() {
            prop_assert!((g[j] - (p[j] - t[j])).abs() <= 1e-12);
        }
        prop_assert!(g.iter().sum::<f64>().abs() <= 1e-12);
    }

    #[test]
    fn loss_is_shift_invariant((z, k0, v, beta) in loss_case(), c in -50.0f64..50.0) {
        let shifted: Vec<f64> = z.iter().map(|x| x + c).collect();
        let a = ls_loss(&z, k0, &v, beta).unwrap();
        let b = ls_loss(&shifted, k0, &v, beta).unwrap();
        prop_assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn kl_is_nonnegative_and_zero_at_match((z, _, v, _) in loss_case()) {
        prop_assert!(kl_divergence(&v, &log_softmax(&z).unwrap()).unwrap() >= -1e-12);
        let dense = v.to_dense();
        if dense.iter().all(|&p| p > 0.0) {
            let at: Vec<f64> = dense.iter().map(|p| p.ln()).collect();
            prop_assert!(kl_divergence(&v, &log_softmax(&at).unwrap()).unwrap().abs() <= 1e-12);
        }
    }

    #[test]
    fn sequence_loss_is_sum_and_order_free(cases in prop::collection::vec(
        (prop::collection::vec(-5.0f64..5.0, 6), 0usize..6, distribution(6)), 0..6), beta in 0.0f64..=1.0) {
        let logits: Vec<Vec<f64>> = cases.iter().map(|c| c.0.clone()).collect();
        let targets: Vec<usize> = cases.iter().map(|c| c.1).collect();
        let priors: Vec<SmoothingDistribution> = cases.iter().map(|c| c.2.clone()).collect();
        let total = sequence_ls_loss(&logits, &targets, &priors, beta).unwrap();
        let parts: f64 = cases.iter().map(|(z, k, v)| ls_loss(z, *k, v, beta).unwrap()).sum();
        prop_assert!((total - parts).abs() <= 1e-12);
        fn rev<T: Clone>(x: &[T]) -> Vec<T> {
            x.iter().rev().cloned().collect()
        }
        let reversed = sequence_ls_loss(&rev(&logits), &rev(&targets), &rev(&priors), beta).unwrap();
        prop_assert!((total - reversed).abs() <= 1e-12);
    }

    #[test]
    fn edit_distance_metric(a in prop::collection::vec(0u8..4, 0..10), b in prop::collection::vec(0u8..4, 0..10), c in prop::collection::vec(0u8..4, 0..10)) {
        let d = |x: &[u8], y: &[u8]| edit_distance(x, y).distance();
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        prop_assert_eq!(d(&a, &a), 0);
        let st = edit_distance(&a, &b);
        prop_assert_eq!(st.distance(), edit_distance_recursive(&a, &b));
    }

    #[test]
    fn cer_ignores_corpus_order(pairs in prop::collection::vec(("[甲乙丙]{1,6}", "[甲乙丙]{0,6}"), 1..10), rot in 0usize..10) {
        let refs: Vec<&str> = pairs.iter().map(|p| p.0.as_str()).collect();
        let hyps: Vec<&str> = pairs.iter().map(|p| p.1.as_str()).collect();
        let a = corpus_cer(&refs, &hyps).unwrap();
        let r = rot % refs.len();
        let (mut r2, mut h2) = (refs.clone(), hyps.clone());
        r2.rotate_left(r);
        h2.rotate_left(r);
        prop_assert!((a - corpus_cer(&r2, &h2).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn homophone_sets_are_symmetric_and_disjoint(seed in any::<u64>(), insensitive in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = random_lexicon(&mut rng, 40);
        let vocab = Vocabulary::from_chars(entries.iter().map(|e| e.0));
        let lex = Lexicon::parse_str(&lexicon_tsv(&entries), &vocab, Path::new("p")).unwrap();
        let mode = if insensitive { ToneMode::Insensitive } else { ToneMode::Sensitive };
        let index = HomophoneIndex::build(&lex, &vocab, mode);
        let rules = FuzzyRules::defaults();
        for i in 0..vocab.len() {
            for s in index.readings(i) {
                let homo = index.homophones(i, s);
                let simi = index.fuzzy_neighbors(i, s, &rules);
                prop_assert!(!homo.contains(&i) && !simi.contains(&i));
                prop_assert!(homo.is_disjoint(&simi));
                for &j in &homo {
                    prop_assert!(index.homophones(j, s).contains(&i));
                }
            }
        }
    }

    #[test]
    fn attention_weights_normalize(seed in any::<u64>(), t in 1usize..8, prev in 0usize..7) {
        let dims = ModelDims { vocab: 7, input: 3, hidden: 5, embed: 2, attention: 4 };
        let p = ToyModelParams::init(dims, seed);
        let frames: Vec<Vec<f64>> = (0..t).map(|i| vec![(i as f64).sin(), 0.5, -0.25]).collect();
        let enc = p.encode(&frames).unwrap();
        let step = p.decode_step(&vec![0.1; 5], prev, &enc).unwrap();
        prop_assert_eq!(step.attention.len(), t);
        prop_assert!((step.attention.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(p.is_finite());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn synthetic_language_invariants(seed in any::<u64>(), classes in 2usize..8, noise in 0.01f64..1.0) {
        let cfg = SyntheticLanguageConfig {
            num_classes: classes,
            noise_sigma: noise,
            num_train: 20,
            num_heldout: 5,
            seed,
            ..Default::default()
        };
        let lang = generate_dataset(&cfg).unwrap();
        prop_assert!(lang.class_members.iter().any(|m| m.len() >= 2));
        let k = lang.vocabulary.len();
        for u in lang.dataset.train.iter().chain(&lang.dataset.heldout) {
            prop_assert!(u.frames.len() >= u.labels.len());
            prop_assert!(u.labels.iter().all(|&l| l < k && !lang.vocabulary.is_special(l)));
            prop_assert!(u.frames.iter().all(|f| f.len() == cfg.frame_dim && f.iter().all(|x| x.is_finite())));
        }
        let again = generate_dataset(&cfg).unwrap();
        prop_assert_eq!(again.dataset, lang.dataset);
    }
}
