//! Synthetic homophone language.
//!
//! Characters are grouped into pronunciation classes; every character of a
//! class shares one syllable and one acoustic template. An utterance's
//! frames are the class templates plus Gaussian noise, so homophones are
//! acoustically indistinguishable in expectation. Which member of a class
//! is written depends on language statistics only: the class sequence
//! follows a class bigram, and within a class a preferred member (chosen by
//! the previous class, or fixed) is written with probability `choice_skew`.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{Lexicon, Syllable, Vocabulary, FINALS, INITIALS};

/// First codepoint used for synthetic characters.
const FIRST_CHAR: u32 = 0x4E00;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticLanguageConfig {
    /// Number of pronunciation classes.
    pub num_classes: usize,
    /// Relative weights of class sizes 1, 2, 3 and 4.
    pub class_size_weights: [f64; 4],
    pub frame_dim: usize,
    /// Inclusive range of frames emitted per character.
    pub frames_per_char: (usize, usize),
    pub noise_sigma: f64,
    /// Lower values make class transitions more deterministic.
    pub transition_temperature: f64,
    /// Probability of writing the preferred member of a class.
    pub choice_skew: f64,
    /// Preferred member depends on the previous class; otherwise it is
    /// always the first member.
    pub context_preference: bool,
    /// Inclusive range of sentence lengths in characters.
    pub sentence_len: (usize, usize),
    pub num_train: usize,
    pub num_heldout: usize,
    pub seed: u64,
}

impl Default for SyntheticLanguageConfig {
    fn default() -> Self {
        SyntheticLanguageConfig {
            num_classes: 20,
            class_size_weights: [0.1, 0.2, 0.3, 0.4],
            frame_dim: 16,
            frames_per_char: (2, 3),
            noise_sigma: 0.3,
            transition_temperature: 0.5,
            choice_skew: 0.99,
            context_preference: true,
            sentence_len: (3, 8),
            num_train: 2000,
            num_heldout: 300,
            seed: 7,
        }
    }
}

impl SyntheticLanguageConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_classes < 2 {
            return bad("num_classes must be at least 2");
        }
        if self.class_size_weights.iter().any(|w| !(*w >= 0.0)) {
            return bad("class_size_weights must be non-negative");
        }
        if self.class_size_weights[1..].iter().sum::<f64>() <= 0.0 {
            return bad("class_size_weights must allow classes of size 2 or more");
        }
        if self.frame_dim == 0 {
            return bad("frame_dim must be positive");
        }
        if self.frames_per_char.0 == 0 || self.frames_per_char.0 > self.frames_per_char.1 {
            return bad("frames_per_char must be a range starting at 1 or more");
        }
        if !(self.noise_sigma > 0.0) || !self.noise_sigma.is_finite() {
            return bad("noise_sigma must be positive");
        }
        if !(self.transition_temperature > 0.0) {
            return bad("transition_temperature must be positive");
        }
        if !(0.0..=1.0).contains(&self.choice_skew) {
            return bad("choice_skew must lie in [0, 1]");
        }
        if self.sentence_len.0 == 0 || self.sentence_len.0 > self.sentence_len.1 {
            return bad("sentence_len must be a range starting at 1 or more");
        }
        Ok(())
    }
}

/// One utterance: `T x d_in` frames and `U` label indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub frames: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ToyDataset {
    pub train: Vec<Utterance>,
    pub heldout: Vec<Utterance>,
}

/// Generated language: vocabulary, lexicon and data.
#[derive(Debug, Clone)]
pub struct ToyLanguage {
    pub vocabulary: Vocabulary,
    pub lexicon: Lexicon,
    /// Syllable of each class.
    pub class_syllables: Vec<Syllable>,
    /// Vocabulary indices of each class's members.
    pub class_members: Vec<Vec<usize>>,
    pub dataset: ToyDataset,
}

impl ToyLanguage {
    /// Class id of a vocabulary index, `None` for specials.
    pub fn class_of(&self, k: usize) -> Option<usize> {
        self.class_members.iter().position(|m| m.contains(&k))
    }

    pub fn corpus(&self) -> super::experiment::ToyCorpus<'_> {
        super::experiment::ToyCorpus {
            vocabulary: &self.vocabulary,
            lexicon: &self.lexicon,
            dataset: &self.dataset,
        }
    }
}

fn categorical(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Deterministic for a given config, including `seed`.
pub fn generate_dataset(config: &SyntheticLanguageConfig) -> Result<ToyLanguage> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let p = config.num_classes;

    let mut sizes: Vec<usize> = (0..p)
        .map(|_| 1 + categorical(&mut rng, &config.class_size_weights))
        .collect();
    if sizes.iter().all(|&s| s < 2) {
        sizes[0] = 2;
    }

    let mut pool: Vec<(&str, &str)> = INITIALS
        .iter()
        .flat_map(|i| FINALS.iter().map(move |f| (*i, *f)))
        .collect();
    pool.shuffle(&mut rng);
    let class_syllables: Vec<Syllable> = pool[..p]
        .iter()
        .map(|(i, f)| Syllable::new(i, f, rng.random_range(1..=4)))
        .collect::<Result<_>>()?;

    let mut chars = Vec::new();
    let mut class_chars = Vec::with_capacity(p);
    for &size in &sizes {
        let members: Vec<char> = (0..size)
            .map(|_| {
                let c = char::from_u32(FIRST_CHAR + chars.len() as u32).expect("CJK block");
                chars.push(c);
                c
            })
            .collect();
        class_chars.push(members);
    }
    let vocabulary = Vocabulary::from_chars(chars.iter().copied());
    let mut lexicon = Lexicon::new();
    for (members, syl) in class_chars.iter().zip(&class_syllables) {
        for &c in members {
            lexicon.add_char(c, [syl.clone()]);
        }
    }
    let class_members: Vec<Vec<usize>> = class_chars
        .iter()
        .map(|m| m.iter().map(|&c| vocabulary.encode_char(c)).collect())
        .collect();

    let templates: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..config.frame_dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    // Row `p` is the sentence-start context.
    let transitions: Vec<Vec<f64>> = (0..=p)
        .map(|_| {
            let logits: Vec<f64> = (0..p)
                .map(|_| rng.sample::<f64, _>(StandardNormal) / config.transition_temperature)
                .collect();
            softmax_row(&logits)
        })
        .collect();
    let preferred: Vec<Vec<usize>> = (0..=p)
        .map(|_| {
            sizes
                .iter()
                .map(|&s| if config.context_preference { rng.random_range(0..s) } else { 0 })
                .collect()
        })
        .collect();

    let sample = |rng: &mut ChaCha8Rng| -> Utterance {
        let len = rng.random_range(config.sentence_len.0..=config.sentence_len.1);
        let mut prev = p;
        let mut frames = Vec::new();
        let mut labels = Vec::with_capacity(len);
        for _ in 0..len {
            let class = categorical(rng, &transitions[prev]);
            let size = sizes[class];
            let pref = preferred[prev][class];
            let member = if size == 1 || rng.random::<f64>() < config.choice_skew {
                pref
            } else {
                let other = rng.random_range(0..size - 1);
                if other >= pref {
                    other + 1
                } else {
                    other
                }
            };
            labels.push(class_members[class][member]);
            let n = rng.random_range(config.frames_per_char.0..=config.frames_per_char.1);
            for _ in 0..n {
                let noise = |rng: &mut ChaCha8Rng| config.noise_sigma * rng.sample::<f64, _>(StandardNormal);
                frames.push(templates[class].iter().map(|t| t + noise(rng)).collect());
            }
            prev = class;
        }
        Utterance { frames, labels }
    };
    let train = (0..config.num_train).map(|_| sample(&mut rng)).collect();
    let heldout = (0..config.num_heldout).map(|_| sample(&mut rng)).collect();

    Ok(ToyLanguage {
        vocabulary,
        lexicon,
        class_syllables,
        class_members,
        dataset: ToyDataset { train, heldout },
    })
}

pub fn write_utterances<W: Write>(utts: &[Utterance], mut out: W) -> Result<()> {
    for u in utts {
        let line = serde_json::to_string(u).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io("<dataset>", e))?;
    }
    Ok(())
}

pub fn write_utterances_file(utts: &[Utterance], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_utterances(utts, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads JSON lines `{"frames": [[...]...], "labels": [...]}`.
pub fn read_utterances_file(path: &Path) -> Result<Vec<Utterance>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let u: Utterance = serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if u.frames.len() < u.labels.len() {
            return Err(Error::parse(path, i + 1, "fewer frames than labels"));
        }
        out.push(u);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homophone::HomophoneIndex;
    use crate::lexicon::ToneMode;

    fn small() -> SyntheticLanguageConfig {
        SyntheticLanguageConfig {
            num_classes: 5,
            num_train: 50,
            num_heldout: 10,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic() {
        let c = SyntheticLanguageConfig {
            num_train: 1000,
            ..small()
        };
        let a = generate_dataset(&c).unwrap();
        let b = generate_dataset(&c).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        write_utterances(&a.dataset.train, &mut ba).unwrap();
        write_utterances(&b.dataset.train, &mut bb).unwrap();
        assert_eq!(ba, bb);
        let d = generate_dataset(&SyntheticLanguageConfig { seed: 8, ..c }).unwrap();
        assert_ne!(d.dataset.train, a.dataset.train);
    }

    #[test]
    fn full_skew_without_context_writes_only_first_member() {
        let c = SyntheticLanguageConfig {
            choice_skew: 1.0,
            context_preference: false,
            class_size_weights: [0.0, 1.0, 0.0, 0.0],
            ..small()
        };
        let lang = generate_dataset(&c).unwrap();
        let seconds: Vec<usize> = lang.class_members.iter().map(|m| m[1]).collect();
        for u in &lang.dataset.train {
            assert!(u.labels.iter().all(|l| !seconds.contains(l)));
        }
        let idx = HomophoneIndex::build(&lang.lexicon, &lang.vocabulary, ToneMode::Sensitive);
        let (a, b) = (lang.class_members[0][0], lang.class_members[0][1]);
        let syl = &lang.class_syllables[0];
        assert_eq!(idx.homophones(a, syl).into_iter().collect::<Vec<_>>(), vec![b]);
    }

    #[test]
    fn tiny_noise_makes_homophone_frames_identical() {
        let c = SyntheticLanguageConfig {
            noise_sigma: 1e-300,
            ..small()
        };
        let lang = generate_dataset(&c).unwrap();
        let mut distinct: Vec<&Vec<f64>> = Vec::new();
        let mut classes = std::collections::BTreeSet::new();
        for u in &lang.dataset.train {
            classes.extend(u.labels.iter().map(|&l| lang.class_of(l).unwrap()));
            for f in &u.frames {
                if !distinct.contains(&f) {
                    distinct.push(f);
                }
            }
        }
        assert_eq!(distinct.len(), classes.len());
    }

    #[test]
    fn shapes() {
        let lang = generate_dataset(&small()).unwrap();
        let k = lang.vocabulary.len();
        for u in lang.dataset.train.iter().chain(&lang.dataset.heldout) {
            assert!(u.frames.len() >= u.labels.len());
            assert!(u.labels.iter().all(|&l| l < k && l >= 4));
            assert!(u.frames.iter().all(|f| f.len() == 16));
        }
        assert!(lang.class_members.iter().any(|m| m.len() >= 2));
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            SyntheticLanguageConfig { num_classes: 1, ..small() },
            SyntheticLanguageConfig { noise_sigma: 0.0, ..small() },
            SyntheticLanguageConfig { class_size_weights: [1.0, 0.0, 0.0, 0.0], ..small() },
            SyntheticLanguageConfig { frames_per_char: (0, 2), ..small() },
        ];
        for c in bad {
            assert!(generate_dataset(&c).is_err());
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let lang = generate_dataset(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("train.jsonl");
        write_utterances_file(&lang.dataset.train, &p).unwrap();
        assert_eq!(read_utterances_file(&p).unwrap(), lang.dataset.train);
    }
}
