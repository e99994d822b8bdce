//! Homophone and fuzzy-pronunciation neighbourhoods.
//!
//! `Homo(k, s)` is every other vocabulary character with a reading equal to
//! `s` (under the tone mode). `Simi(k, s)` is every other character with a
//! reading that differs from `s` by exactly one configured initial pair or
//! one configured final pair, minus `Homo(k, s)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use crate::error::{Error, Result};
use crate::lexicon::{is_final, is_initial, Lexicon, Syllable, ToneMode, Vocabulary};

/// Unordered pairs of interchangeable initials and finals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FuzzyRules {
    initial_pairs: BTreeSet<(String, String)>,
    final_pairs: BTreeSet<(String, String)>,
}

/// Rule file shipped with the tool. Only the z/zh and in/ing pairs are
/// canonical examples; the others are the usual Mandarin fuzzy classes.
pub const DEFAULT_FUZZY_RULES: &str = "\
initial z zh
initial c ch
initial s sh
final in ing
final en eng
final an ang
";

fn ordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl FuzzyRules {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn defaults() -> Self {
        Self::parse_str(DEFAULT_FUZZY_RULES, Path::new("<default>")).expect("default rules parse")
    }

    pub fn add_initial_pair(&mut self, a: &str, b: &str) -> Result<()> {
        if a.is_empty() || b.is_empty() || !is_initial(a) || !is_initial(b) || a == b {
            return Err(Error::InvalidArgument(format!("bad initial pair {a} {b}")));
        }
        self.initial_pairs.insert(ordered(a, b));
        Ok(())
    }

    pub fn add_final_pair(&mut self, a: &str, b: &str) -> Result<()> {
        if !is_final(a) || !is_final(b) || a == b {
            return Err(Error::InvalidArgument(format!("bad final pair {a} {b}")));
        }
        self.final_pairs.insert(ordered(a, b));
        Ok(())
    }

    pub fn initial_pairs(&self) -> &BTreeSet<(String, String)> {
        &self.initial_pairs
    }

    pub fn final_pairs(&self) -> &BTreeSet<(String, String)> {
        &self.final_pairs
    }

    pub fn is_empty(&self) -> bool {
        self.initial_pairs.is_empty() && self.final_pairs.is_empty()
    }

    pub fn initials_match(&self, a: &str, b: &str) -> bool {
        a != b && self.initial_pairs.contains(&ordered(a, b))
    }

    pub fn finals_match(&self, a: &str, b: &str) -> bool {
        a != b && self.final_pairs.contains(&ordered(a, b))
    }

    /// Every syllable one rule application away from `s`.
    fn variants(&self, s: &Syllable) -> Vec<Syllable> {
        let mut out = Vec::new();
        for (a, b) in &self.initial_pairs {
            for (from, to) in [(a, b), (b, a)] {
                if s.initial == *from {
                    out.push(Syllable {
                        initial: to.clone(),
                        ..s.clone()
                    });
                }
            }
        }
        for (a, b) in &self.final_pairs {
            for (from, to) in [(a, b), (b, a)] {
                if s.final_ == *from {
                    out.push(Syllable {
                        final_: to.clone(),
                        ..s.clone()
                    });
                }
            }
        }
        out
    }

    /// Lines are `initial A B` or `final A B`; `#` starts a comment line.
    pub fn parse_str(text: &str, origin: &Path) -> Result<Self> {
        let mut rules = FuzzyRules::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let err = |msg: String| Error::parse(origin, i + 1, msg);
            if fields.len() != 3 {
                return Err(err(format!("expected `KIND A B`, got {line:?}")));
            }
            match fields[0] {
                "initial" => rules
                    .add_initial_pair(fields[1], fields[2])
                    .map_err(|e| err(e.to_string()))?,
                "final" => rules
                    .add_final_pair(fields[1], fields[2])
                    .map_err(|e| err(e.to_string()))?,
                other => return Err(err(format!("unknown rule kind {other:?}"))),
            }
        }
        Ok(rules)
    }
}

pub fn parse_fuzzy_rules(path: &Path) -> Result<FuzzyRules> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    FuzzyRules::parse_str(&text, path)
}

/// Characters grouped by pronunciation.
#[derive(Debug, Clone)]
pub struct HomophoneIndex {
    tone_mode: ToneMode,
    vocab_size: usize,
    by_syllable: HashMap<Syllable, BTreeSet<usize>>,
    /// Readings per vocabulary index, empty for characters without any.
    readings: Vec<Vec<Syllable>>,
}

impl HomophoneIndex {
    /// Indexes every (character, reading) pair of in-vocabulary lexicon
    /// characters. Polyphones appear under each of their readings.
    pub fn build(lexicon: &Lexicon, vocabulary: &Vocabulary, tone_mode: ToneMode) -> Self {
        let mut by_syllable: HashMap<Syllable, BTreeSet<usize>> = HashMap::new();
        let mut readings = vec![Vec::new(); vocabulary.len()];
        for &c in lexicon.chars() {
            let Some(k) = vocabulary.get(c) else { continue };
            if vocabulary.is_special(k) {
                continue;
            }
            for s in lexicon.readings(c).unwrap_or_default() {
                by_syllable.entry(s.key(tone_mode)).or_default().insert(k);
                readings[k].push(s.clone());
            }
        }
        HomophoneIndex {
            tone_mode,
            vocab_size: vocabulary.len(),
            by_syllable,
            readings,
        }
    }

    pub fn tone_mode(&self) -> ToneMode {
        self.tone_mode
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn readings(&self, k: usize) -> &[Syllable] {
        self.readings.get(k).map(Vec::as_slice).unwrap_or_default()
    }

    /// Characters pronounced `syllable`.
    pub fn chars_with(&self, syllable: &Syllable) -> Option<&BTreeSet<usize>> {
        self.by_syllable.get(&syllable.key(self.tone_mode))
    }

    /// Syllable classes in canonical order.
    pub fn classes(&self) -> BTreeMap<Syllable, &BTreeSet<usize>> {
        self.by_syllable.iter().map(|(s, set)| (s.clone(), set)).collect()
    }

    /// `Homo(k0)` for `k0` read as `syllable`.
    pub fn homophones(&self, k0: usize, syllable: &Syllable) -> BTreeSet<usize> {
        let mut set = self.chars_with(syllable).cloned().unwrap_or_default();
        set.remove(&k0);
        set
    }

    /// `Simi(k0)` for `k0` read as `syllable`.
    pub fn fuzzy_neighbors(&self, k0: usize, syllable: &Syllable, rules: &FuzzyRules) -> BTreeSet<usize> {
        let homo = self.chars_with(syllable);
        let mut out = BTreeSet::new();
        for v in rules.variants(syllable) {
            if let Some(set) = self.chars_with(&v) {
                out.extend(set.iter().copied());
            }
        }
        out.remove(&k0);
        if let Some(homo) = homo {
            out.retain(|k| !homo.contains(k));
        }
        out
    }

    /// True if any reading of `k` has at least one homophone.
    pub fn has_homophones(&self, k: usize) -> bool {
        self.readings(k).iter().any(|s| !self.homophones(k, s).is_empty())
    }
}

/// Free-function form of [`HomophoneIndex::build`].
pub fn build_homophone_index(lexicon: &Lexicon, vocabulary: &Vocabulary, tone_mode: ToneMode) -> HomophoneIndex {
    HomophoneIndex::build(lexicon, vocabulary, tone_mode)
}

/// Free-function form of [`HomophoneIndex::fuzzy_neighbors`].
pub fn fuzzy_neighbors(index: &HomophoneIndex, k0: usize, syllable: &Syllable, rules: &FuzzyRules) -> BTreeSet<usize> {
    index.fuzzy_neighbors(k0, syllable, rules)
}
