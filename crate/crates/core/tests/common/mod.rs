//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use homosmooth::lexicon::Syllable;
use homosmooth::toy::ToyModelParams;
use homosmooth::ToneMode;
use rand::seq::IndexedRandom;
use rand::Rng;

pub const INITIALS: [&str; 8] = ["", "b", "d", "z", "zh", "s", "sh", "l"];
pub const FINALS: [&str; 8] = ["a", "an", "ang", "in", "ing", "en", "eng", "ong"];

/// Syllable equality under a tone mode, written out field by field.
pub fn same_sound(a: &Syllable, b: &Syllable, mode: ToneMode) -> bool {
    a.initial == b.initial && a.final_ == b.final_ && (mode == ToneMode::Insensitive || a.tone == b.tone)
}

pub fn random_syllable(rng: &mut impl Rng) -> Syllable {
    Syllable {
        initial: INITIALS.choose(rng).unwrap().to_string(),
        final_: FINALS.choose(rng).unwrap().to_string(),
        tone: rng.random_range(1..=4),
    }
}

/// A lexicon of `n` characters starting at U+4E00 with one to three readings each.
pub fn random_lexicon(rng: &mut impl Rng, n: usize) -> Vec<(char, Vec<Syllable>)> {
    (0..n)
        .map(|i| {
            let c = char::from_u32(0x4E00 + i as u32).unwrap();
            let r = rng.random_range(1..=3);
            let mut syls: Vec<Syllable> = Vec::new();
            while syls.len() < r {
                let s = random_syllable(rng);
                if !syls.contains(&s) {
                    syls.push(s);
                }
            }
            (c, syls)
        })
        .collect()
}

pub fn lexicon_tsv(entries: &[(char, Vec<Syllable>)]) -> String {
    entries
        .iter()
        .map(|(c, syls)| {
            let rs: Vec<String> = syls.iter().map(|s| format!("{}{}{}", s.initial, s.final_, s.tone)).collect();
            format!("{c}\t{}\n", rs.join(","))
        })
        .collect()
}

/// Characters other than `k0` with some reading that sounds like `syl`.
pub fn homophones_pairwise(readings: &[Vec<Syllable>], k0: usize, syl: &Syllable, mode: ToneMode) -> BTreeSet<usize> {
    (0..readings.len())
        .filter(|&k| k != k0 && readings[k].iter().any(|r| same_sound(r, syl, mode)))
        .collect()
}

fn one_rule_apart(a: &Syllable, b: &Syllable, mode: ToneMode, initials: &[(&str, &str)], finals: &[(&str, &str)]) -> bool {
    let pair = |x: &str, y: &str, rules: &[(&str, &str)]| rules.iter().any(|&(p, q)| (x == p && y == q) || (x == q && y == p));
    let tone_ok = mode == ToneMode::Insensitive || a.tone == b.tone;
    tone_ok
        && ((a.final_ == b.final_ && pair(&a.initial, &b.initial, initials))
            || (a.initial == b.initial && pair(&a.final_, &b.final_, finals)))
}

/// Characters one fuzzy rule away from `syl` that are not homophones of it.
pub fn fuzzy_pairwise(
    readings: &[Vec<Syllable>],
    k0: usize,
    syl: &Syllable,
    mode: ToneMode,
    initials: &[(&str, &str)],
    finals: &[(&str, &str)],
) -> BTreeSet<usize> {
    (0..readings.len())
        .filter(|&k| k != k0)
        .filter(|&k| !readings[k].iter().any(|r| same_sound(r, syl, mode)))
        .filter(|&k| readings[k].iter().any(|r| one_rule_apart(r, syl, mode, initials, finals)))
        .collect()
}

/// Levenshtein distance by memoized recursion on suffixes.
pub fn edit_distance_recursive<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    fn go<T: PartialEq>(a: &[T], b: &[T], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(&d) = memo.get(&(i, j)) {
            return d;
        }
        let d = if a[i] == b[j] {
            go(a, b, i + 1, j + 1, memo)
        } else {
            1 + go(a, b, i + 1, j + 1, memo)
                .min(go(a, b, i + 1, j, memo))
                .min(go(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), d);
        d
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

/// Bigram probabilities by counting over `<s> sentence </s>` index sequences.
pub struct CountingBigram {
    pub size: usize,
    pairs: HashMap<(usize, usize), u64>,
    context: HashMap<usize, u64>,
    next: HashMap<usize, u64>,
    total_next: u64,
}

impl CountingBigram {
    pub fn new(sentences: &[Vec<usize>], size: usize, sos: usize, eos: usize) -> Self {
        let mut pairs = HashMap::new();
        let mut context = HashMap::new();
        let mut next = HashMap::new();
        let mut total_next = 0;
        for s in sentences {
            let mut prev = sos;
            for &k in s.iter().chain(std::iter::once(&eos)) {
                *pairs.entry((prev, k)).or_insert(0) += 1;
                *context.entry(prev).or_insert(0) += 1;
                *next.entry(k).or_insert(0) += 1;
                total_next += 1;
                prev = k;
            }
        }
        CountingBigram { size, pairs, context, next, total_next }
    }

    pub fn unigram(&self, j: usize) -> f64 {
        *self.next.get(&j).unwrap_or(&0) as f64 / self.total_next as f64
    }

    pub fn add_k(&self, i: usize, j: usize, k: f64) -> f64 {
        let c = *self.pairs.get(&(i, j)).unwrap_or(&0) as f64;
        let n = *self.context.get(&i).unwrap_or(&0) as f64;
        if n == 0.0 && k == 0.0 {
            return self.unigram(j);
        }
        (c + k) / (n + k * self.size as f64)
    }

    pub fn interpolated(&self, i: usize, j: usize, lambda: f64) -> f64 {
        let n = *self.context.get(&i).unwrap_or(&0) as f64;
        if n == 0.0 {
            return self.unigram(j);
        }
        let c = *self.pairs.get(&(i, j)).unwrap_or(&0) as f64;
        lambda * c / n + (1.0 - lambda) * self.unigram(j)
    }
}

fn mat(p: &ToyModelParams, id: usize) -> (usize, usize, &[f64]) {
    let t = &p.tensors[id];
    (t.rows, t.cols, &t.data)
}

fn matvec(p: &ToyModelParams, id: usize, x: &[f64]) -> Vec<f64> {
    let (r, c, w) = mat(p, id);
    assert_eq!(c, x.len());
    (0..r).map(|i| (0..c).map(|j| w[i * c + j] * x[j]).sum()).collect()
}

fn bias(p: &ToyModelParams, id: usize) -> Vec<f64> {
    p.tensors[id].data.clone()
}

/// Encoder states computed with plain loops.
pub fn reference_encode(p: &ToyModelParams, frames: &[Vec<f64>]) -> Vec<Vec<f64>> {
    use homosmooth::toy::model::pid;
    let mut h = vec![0.0; p.dims.hidden];
    let mut out = Vec::new();
    for f in frames {
        let a = matvec(p, pid::ENC_WX, f);
        let b = matvec(p, pid::ENC_WH, &h);
        let c = bias(p, pid::ENC_B);
        h = (0..h.len()).map(|i| (a[i] + b[i] + c[i]).tanh()).collect();
        out.push(h.clone());
    }
    out
}

/// One decoder step computed with plain loops: (state, context, attention, logits).
pub fn reference_step(p: &ToyModelParams, s_prev: &[f64], prev: usize, enc: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    use homosmooth::toy::model::pid;
    let d = p.dims;
    let q: Vec<f64> = matvec(p, pid::ATT_W, s_prev)
        .iter()
        .zip(bias(p, pid::ATT_B))
        .map(|(a, b)| a + b)
        .collect();
    let (_, ac, u) = mat(p, pid::ATT_U);
    let v = bias(p, pid::ATT_V);
    let scores: Vec<f64> = enc
        .iter()
        .map(|h| {
            (0..ac)
                .map(|a| {
                    let key: f64 = (0..d.hidden).map(|i| h[i] * u[i * ac + a]).sum();
                    v[a] * (key + q[a]).tanh()
                })
                .sum()
        })
        .collect();
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    let att: Vec<f64> = e.iter().map(|x| x / z).collect();
    let ctx: Vec<f64> = (0..d.hidden).map(|i| enc.iter().zip(&att).map(|(h, a)| a * h[i]).sum()).collect();

    let (_, ec, emb) = mat(p, pid::EMBED);
    let mut x: Vec<f64> = emb[prev * ec..(prev + 1) * ec].to_vec();
    x.extend(&ctx);
    let a = matvec(p, pid::DEC_WX, &x);
    let b = matvec(p, pid::DEC_WH, s_prev);
    let c = bias(p, pid::DEC_B);
    let state: Vec<f64> = (0..d.hidden).map(|i| (a[i] + b[i] + c[i]).tanh()).collect();
    let mut o = state.clone();
    o.extend(&ctx);
    let logits: Vec<f64> = matvec(p, pid::OUT_W, &o)
        .iter()
        .zip(bias(p, pid::OUT_B))
        .map(|(a, b)| a + b)
        .collect();
    (state, ctx, att, logits)
}

/// Teacher-forced logits for `labels` then EOS.
pub fn reference_forward(p: &ToyModelParams, frames: &[Vec<f64>], labels: &[usize], sos: usize) -> Vec<Vec<f64>> {
    let enc = reference_encode(p, frames);
    let mut s = vec![0.0; p.dims.hidden];
    let mut prev = sos;
    let mut out = Vec::new();
    for u in 0..=labels.len() {
        let (state, _, _, logits) = reference_step(p, &s, prev, &enc);
        out.push(logits);
        s = state;
        if u < labels.len() {
            prev = labels[u];
        }
    }
    out
}

pub fn reference_log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    z.iter().map(|x| x - lse).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub const DEFAULT_INITIAL_RULES: [(&str, &str); 3] = [("z", "zh"), ("c", "ch"), ("s", "sh")];
pub const DEFAULT_FINAL_RULES: [(&str, &str); 3] = [("in", "ing"), ("en", "eng"), ("an", "ang")];

/// Random corpus of at least `tokens` characters drawn from `alphabet`.
pub fn random_corpus(rng: &mut impl Rng, alphabet: &[char], tokens: usize) -> Vec<String> {
    let mut lines = Vec::new();
    let mut n = 0;
    while n < tokens {
        let len = rng.random_range(1..=20);
        lines.push((0..len).map(|_| *alphabet.choose(rng).unwrap()).collect::<String>());
        n += len;
    }
    lines
}

/// Largest deviation of a trained bigram from the counting oracle over all
/// `(prev, next)` pairs, for add-k and interpolated smoothing.
pub fn bigram_oracle_error(seed: u64) -> f64 {
    use homosmooth::{train_bigram, Smoothing, Vocabulary};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let alphabet: Vec<char> = (0..30).map(|i| char::from_u32(0x4E00 + i).unwrap()).collect();
    let corpus = random_corpus(&mut rng, &alphabet[..25], 5000);
    let vocab = Vocabulary::from_chars(alphabet.iter().copied());
    let s = vocab.specials();
    let seqs: Vec<Vec<usize>> = corpus.iter().map(|l| vocab.encode(l)).collect();
    let oracle = CountingBigram::new(&seqs, vocab.len(), s.sos, s.eos);
    let mut worst: f64 = 0.0;
    for smoothing in [Smoothing::AddK(0.0), Smoothing::AddK(0.5), Smoothing::Interpolated(0.7)] {
        let lm = train_bigram(&corpus, &vocab, smoothing).unwrap();
        for i in 0..vocab.len() {
            let row = lm.predict(i).unwrap().to_dense();
            for (j, &p) in row.iter().enumerate() {
                let want = match smoothing {
                    Smoothing::AddK(k) => oracle.add_k(i, j, k),
                    Smoothing::Interpolated(l) => oracle.interpolated(i, j, l),
                };
                worst = worst.max((lm.prob(i, j).unwrap() - want).abs()).max((p - want).abs());
            }
        }
    }
    worst
}

/// Pairs out of `n` random sequences whose distance or S/D/I bookkeeping
/// disagrees with the recursive oracle.
pub fn edit_distance_mismatches(seed: u64, n: usize) -> usize {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..n {
        let seq = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<u8> {
            let len = rng.random_range(0..=12);
            (0..len).map(|_| rng.random_range(0..4u8)).collect()
        };
        let a = seq(&mut rng);
        let b = seq(&mut rng);
        let st = homosmooth::edit_distance(&a, &b);
        let ok = st.distance() == edit_distance_recursive(&a, &b)
            && st.ref_len == a.len()
            && a.len() - st.deletions + st.insertions == b.len();
        if !ok {
            bad += 1;
        }
    }
    bad
}

/// Number of `(character, syllable)` queries where the homophone index or
/// its fuzzy neighbours disagree with the pairwise oracle, over a
/// `chars`-character random lexicon in both tone modes.
pub fn index_mismatches(seed: u64, chars: usize) -> usize {
    use homosmooth::{FuzzyRules, HomophoneIndex, Lexicon, Vocabulary};
    use rand::SeedableRng;
    use std::path::Path;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let entries = random_lexicon(&mut rng, chars);
    let vocab = Vocabulary::from_chars(entries.iter().map(|e| e.0));
    let lexicon = Lexicon::parse_str(&lexicon_tsv(&entries), &vocab, Path::new("random")).unwrap();
    let mut readings = vec![Vec::new(); vocab.len()];
    for (c, syls) in &entries {
        readings[vocab.get(*c).unwrap()] = syls.clone();
    }
    let rules = FuzzyRules::defaults();
    let mut bad = 0;
    for mode in [ToneMode::Sensitive, ToneMode::Insensitive] {
        let index = HomophoneIndex::build(&lexicon, &vocab, mode);
        for k in 0..vocab.len() {
            if index.readings(k) != readings[k].as_slice() {
                bad += 1;
            }
            let probe = random_syllable(&mut rng);
            for s in readings[k].iter().chain(std::iter::once(&probe)) {
                if index.homophones(k, s) != homophones_pairwise(&readings, k, s, mode) {
                    bad += 1;
                }
                let want = fuzzy_pairwise(&readings, k, s, mode, &DEFAULT_INITIAL_RULES, &DEFAULT_FINAL_RULES);
                if index.fuzzy_neighbors(k, s, &rules) != want {
                    bad += 1;
                }
            }
        }
    }
    bad
}
