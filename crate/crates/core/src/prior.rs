//! Label-smoothing priors.
//!
//! Every prior is a [`SmoothingDistribution`]: a handful of explicit entries
//! plus one "tail" probability shared by all remaining indices. The
//! homophone prior puts `truth` mass on the ground-truth character, splits
//! `homo` mass evenly over its homophones and spreads `other` mass evenly
//! over everything else. The fuzzy variant additionally splits `simi` mass
//! over fuzzy-pronunciation neighbours.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homophone::{FuzzyRules, HomophoneIndex};
use crate::lexicon::{pronounce_sentence, Lexicon, Syllable, ToneMode, Vocabulary};
use crate::ngram::{BigramLM, UnigramDistribution};

/// Floor added to every unigram probability before renormalizing.
pub const UNIGRAM_FLOOR: f64 = 1e-8;

const MASS_TOL: f64 = 1e-12;

/// Sparse probability vector over `size` indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingDistribution {
    size: usize,
    /// Sorted by index, unique.
    entries: Vec<(usize, f64)>,
    tail: f64,
}

impl SmoothingDistribution {
    /// Validates shape and non-negativity. Entries may arrive in any order.
    /// Total mass is checked loosely (1e-9); builders in this module are exact
    /// to rounding.
    pub fn new(size: usize, mut entries: Vec<(usize, f64)>, tail: f64) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidArgument("distribution over zero indices".into()));
        }
        entries.sort_by_key(|e| e.0);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidArgument(format!("duplicate entry {}", w[0].0)));
            }
        }
        if let Some(&(k, _)) = entries.last() {
            if k >= size {
                return Err(Error::IndexOutOfRange { index: k, size });
            }
        }
        if entries.iter().any(|e| !(e.1 >= 0.0) || !e.1.is_finite()) || !(tail >= 0.0) || !tail.is_finite() {
            return Err(Error::InvalidArgument("negative or non-finite probability".into()));
        }
        let d = SmoothingDistribution { size, entries, tail };
        let total = d.total();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("probabilities sum to {total}")));
        }
        Ok(d)
    }

    /// Internal constructor for builders that guarantee the invariants.
    pub(crate) fn from_parts(size: usize, entries: Vec<(usize, f64)>, tail: f64) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        SmoothingDistribution { size, entries, tail }
    }

    pub fn point_mass(size: usize, k: usize) -> Result<Self> {
        if k >= size {
            return Err(Error::IndexOutOfRange { index: k, size });
        }
        Ok(Self::from_parts(size, vec![(k, 1.0)], 0.0))
    }

    /// Dense vector, no sparsity.
    pub fn from_dense(probs: &[f64]) -> Result<Self> {
        Self::new(probs.len(), probs.iter().copied().enumerate().collect(), 0.0)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    /// Number of indices that take the tail value.
    pub fn tail_count(&self) -> usize {
        self.size - self.entries.len()
    }

    pub fn prob(&self, k: usize) -> f64 {
        match self.entries.binary_search_by_key(&k, |e| e.0) {
            Ok(i) => self.entries[i].1,
            Err(_) if k < self.size => self.tail,
            Err(_) => 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum::<f64>() + self.tail * self.tail_count() as f64
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![self.tail; self.size];
        for &(k, p) in &self.entries {
            out[k] = p;
        }
        out
    }

    /// Shannon entropy in nats, with `0 log 0 = 0`.
    pub fn entropy(&self) -> f64 {
        let h = |p: f64| if p > 0.0 { -p * p.ln() } else { 0.0 };
        self.entries.iter().map(|e| h(e.1)).sum::<f64>() + self.tail_count() as f64 * h(self.tail)
    }

    /// Total probability of `indices`.
    pub fn mass_of<'a>(&self, indices: impl IntoIterator<Item = &'a usize>) -> f64 {
        indices.into_iter().map(|&k| self.prob(k)).sum()
    }
}

/// `1/K` everywhere.
pub fn uniform_prior(size: usize) -> Result<SmoothingDistribution> {
    if size == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    Ok(SmoothingDistribution::from_parts(size, Vec::new(), 1.0 / size as f64))
}

/// Unigram frequencies with [`UNIGRAM_FLOOR`] added to every index.
pub fn unigram_prior(unigram: &UnigramDistribution) -> SmoothingDistribution {
    let probs = unigram.probs();
    let z = 1.0 + probs.len() as f64 * UNIGRAM_FLOOR;
    let entries = probs
        .iter()
        .enumerate()
        .map(|(k, p)| (k, (p + UNIGRAM_FLOOR) / z))
        .collect();
    SmoothingDistribution::from_parts(probs.len(), entries, 0.0)
}

/// Masses for the homophone prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomoMasses {
    pub truth: f64,
    pub homo: f64,
    pub other: f64,
}

impl Default for HomoMasses {
    fn default() -> Self {
        HomoMasses {
            truth: 0.6,
            homo: 0.3,
            other: 0.1,
        }
    }
}

/// Masses for the fuzzy homophone prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuzzyMasses {
    pub truth: f64,
    pub homo: f64,
    pub simi: f64,
    pub other: f64,
}

impl Default for FuzzyMasses {
    fn default() -> Self {
        FuzzyMasses {
            truth: 0.6,
            homo: 0.15,
            simi: 0.15,
            other: 0.1,
        }
    }
}

fn check_masses(masses: &[f64]) -> Result<()> {
    if masses.iter().any(|m| !(0.0..=1.0).contains(m)) {
        return Err(Error::Config(format!("mass parameters {masses:?} must lie in [0, 1]")));
    }
    let total: f64 = masses.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::Config(format!("mass parameters {masses:?} sum to {total}, not 1")));
    }
    Ok(())
}

impl HomoMasses {
    pub fn validate(&self) -> Result<()> {
        check_masses(&[self.truth, self.homo, self.other])
    }
}

impl FuzzyMasses {
    pub fn validate(&self) -> Result<()> {
        check_masses(&[self.truth, self.homo, self.simi, self.other])
    }
}

/// Homophone prior with the default 0.6 / 0.3 / 0.1 split.
pub fn homophone_prior(k0: usize, homo: &BTreeSet<usize>, size: usize) -> Result<SmoothingDistribution> {
    homophone_prior_with(k0, homo, size, &HomoMasses::default())
}

pub fn homophone_prior_with(
    k0: usize,
    homo: &BTreeSet<usize>,
    size: usize,
    masses: &HomoMasses,
) -> Result<SmoothingDistribution> {
    let n = homo.len();
    if n == 0 {
        return Err(Error::NoHomophones);
    }
    if size <= n + 1 {
        return Err(Error::DegenerateVocabulary { k: size, reserved: n + 1 });
    }
    check_members(k0, homo, None, size)?;
    let each = masses.homo / n as f64;
    let mut entries: Vec<(usize, f64)> = homo.iter().map(|&k| (k, each)).collect();
    entries.push((k0, masses.truth));
    entries.sort_by_key(|e| e.0);
    let tail = masses.other / (size - (n + 1)) as f64;
    Ok(SmoothingDistribution::from_parts(size, entries, tail))
}

/// Fuzzy homophone prior with the default 0.6 / 0.15 / 0.15 / 0.1 split.
pub fn fuzzy_homophone_prior(
    k0: usize,
    homo: &BTreeSet<usize>,
    simi: &BTreeSet<usize>,
    size: usize,
) -> Result<SmoothingDistribution> {
    fuzzy_homophone_prior_with(k0, homo, simi, size, &FuzzyMasses::default())
}

/// When one of `homo`/`simi` is empty its mass moves to the other group.
pub fn fuzzy_homophone_prior_with(
    k0: usize,
    homo: &BTreeSet<usize>,
    simi: &BTreeSet<usize>,
    size: usize,
    masses: &FuzzyMasses,
) -> Result<SmoothingDistribution> {
    let (n, m) = (homo.len(), simi.len());
    if n == 0 && m == 0 {
        return Err(Error::NoHomophones);
    }
    if size <= n + m + 1 {
        return Err(Error::DegenerateVocabulary {
            k: size,
            reserved: n + m + 1,
        });
    }
    check_members(k0, homo, Some(simi), size)?;
    let (homo_mass, simi_mass) = match (n, m) {
        (0, _) => (0.0, masses.homo + masses.simi),
        (_, 0) => (masses.homo + masses.simi, 0.0),
        _ => (masses.homo, masses.simi),
    };
    let mut entries = Vec::with_capacity(n + m + 1);
    entries.push((k0, masses.truth));
    entries.extend(homo.iter().map(|&k| (k, homo_mass / n as f64)));
    entries.extend(simi.iter().map(|&k| (k, simi_mass / m as f64)));
    entries.sort_by_key(|e| e.0);
    let tail = masses.other / (size - (n + m + 1)) as f64;
    Ok(SmoothingDistribution::from_parts(size, entries, tail))
}

fn check_members(k0: usize, homo: &BTreeSet<usize>, simi: Option<&BTreeSet<usize>>, size: usize) -> Result<()> {
    let all = std::iter::once(&k0).chain(homo).chain(simi.into_iter().flatten());
    if let Some(&k) = all.clone().find(|&&k| k >= size) {
        return Err(Error::IndexOutOfRange { index: k, size });
    }
    if homo.contains(&k0) || simi.is_some_and(|s| s.contains(&k0) || !s.is_disjoint(homo)) {
        return Err(Error::InvalidArgument("truth, homophone and fuzzy sets must be disjoint".into()));
    }
    Ok(())
}

/// Which prior a training run smooths towards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// No smoothing: the prior is a point mass on the truth, so the loss is plain NLL.
    NonLs,
    Uniform,
    Unigram,
    HomoUnigram,
    HomoNgram,
    HomoFuzzy,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::NonLs,
        StrategyKind::Uniform,
        StrategyKind::Unigram,
        StrategyKind::HomoUnigram,
        StrategyKind::HomoNgram,
        StrategyKind::HomoFuzzy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::NonLs => "non_ls",
            StrategyKind::Uniform => "uniform",
            StrategyKind::Unigram => "unigram",
            StrategyKind::HomoUnigram => "homo_unigram",
            StrategyKind::HomoNgram => "homo_ngram",
            StrategyKind::HomoFuzzy => "homo_fuzzy",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }

    pub fn needs_unigram(self) -> bool {
        matches!(self, StrategyKind::Unigram | StrategyKind::HomoUnigram | StrategyKind::HomoFuzzy)
    }

    pub fn needs_index(self) -> bool {
        matches!(self, StrategyKind::HomoUnigram | StrategyKind::HomoNgram | StrategyKind::HomoFuzzy)
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub homo_masses: HomoMasses,
    pub fuzzy_masses: FuzzyMasses,
    pub tone_mode: ToneMode,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        StrategyConfig {
            kind,
            homo_masses: HomoMasses::default(),
            fuzzy_masses: FuzzyMasses::default(),
            tone_mode: ToneMode::Sensitive,
        }
    }

    /// Checks the masses used by `kind`.
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            StrategyKind::HomoUnigram | StrategyKind::HomoNgram => self.homo_masses.validate(),
            StrategyKind::HomoFuzzy => self.fuzzy_masses.validate(),
            _ => Ok(()),
        }
    }
}

/// Everything a strategy may consult. Unneeded resources may be `None`.
#[derive(Debug, Clone, Copy)]
pub struct PriorResources<'a> {
    pub vocab_size: usize,
    pub eos: usize,
    pub unigram: Option<&'a SmoothingDistribution>,
    pub bigram: Option<&'a BigramLM>,
    pub index: Option<&'a HomophoneIndex>,
    pub fuzzy_rules: Option<&'a FuzzyRules>,
}

/// Builds priors for one strategy over fixed resources.
#[derive(Debug, Clone)]
pub struct PriorBuilder<'a> {
    config: StrategyConfig,
    res: PriorResources<'a>,
    uniform: SmoothingDistribution,
}

impl<'a> PriorBuilder<'a> {
    pub fn new(config: StrategyConfig, res: PriorResources<'a>) -> Result<Self> {
        config.validate()?;
        let missing = |what: &str| Error::Config(format!("strategy {} needs {what}", config.kind));
        if config.kind.needs_unigram() && res.unigram.is_none() {
            return Err(missing("a unigram distribution"));
        }
        if config.kind.needs_index() && res.index.is_none() {
            return Err(missing("a homophone index"));
        }
        if config.kind == StrategyKind::HomoNgram && res.bigram.is_none() {
            return Err(missing("a bigram LM"));
        }
        if config.kind == StrategyKind::HomoFuzzy && res.fuzzy_rules.is_none() {
            return Err(missing("fuzzy rules"));
        }
        if let Some(u) = res.unigram {
            if u.size() != res.vocab_size {
                return Err(Error::DimensionMismatch {
                    expected: res.vocab_size,
                    got: u.size(),
                });
            }
        }
        Ok(PriorBuilder {
            uniform: uniform_prior(res.vocab_size)?,
            config,
            res,
        })
    }

    pub fn config(&self) -> &StrategyConfig {
        &self.config
    }

    fn homophones(&self, k0: usize, syllable: Option<&Syllable>) -> BTreeSet<usize> {
        match (self.res.index, syllable) {
            (Some(index), Some(s)) => index.homophones(k0, s),
            _ => BTreeSet::new(),
        }
    }

    /// Prior for ground truth `k0` pronounced `syllable` (or unpronounced)
    /// following the context character `prev`.
    pub fn build(&self, k0: usize, syllable: Option<&Syllable>, prev: usize) -> Result<SmoothingDistribution> {
        let size = self.res.vocab_size;
        if k0 >= size {
            return Err(Error::IndexOutOfRange { index: k0, size });
        }
        let unigram = || self.res.unigram.cloned().ok_or(Error::Config("missing unigram".into()));
        match self.config.kind {
            StrategyKind::NonLs => SmoothingDistribution::point_mass(size, k0),
            StrategyKind::Uniform => Ok(self.uniform.clone()),
            StrategyKind::Unigram => unigram(),
            StrategyKind::HomoUnigram | StrategyKind::HomoNgram => {
                let homo = self.homophones(k0, syllable);
                if !homo.is_empty() {
                    homophone_prior_with(k0, &homo, size, &self.config.homo_masses)
                } else if self.config.kind == StrategyKind::HomoUnigram {
                    unigram()
                } else {
                    self.res
                        .bigram
                        .ok_or(Error::Config("missing bigram".into()))?
                        .predict(prev)
                }
            }
            StrategyKind::HomoFuzzy => {
                let homo = self.homophones(k0, syllable);
                let simi = match (self.res.index, self.res.fuzzy_rules, syllable) {
                    (Some(index), Some(rules), Some(s)) => index.fuzzy_neighbors(k0, s, rules),
                    _ => BTreeSet::new(),
                };
                if homo.is_empty() && simi.is_empty() {
                    unigram()
                } else {
                    fuzzy_homophone_prior_with(k0, &homo, &simi, size, &self.config.fuzzy_masses)
                }
            }
        }
    }

    /// Priors for an already-pronounced sentence plus a trailing EOS position.
    pub fn build_for_pronounced(
        &self,
        indices: &[usize],
        syllables: &[Option<Syllable>],
        sos: usize,
    ) -> Result<Vec<SmoothingDistribution>> {
        if indices.len() != syllables.len() {
            return Err(Error::DimensionMismatch {
                expected: indices.len(),
                got: syllables.len(),
            });
        }
        let mut out = Vec::with_capacity(indices.len() + 1);
        let mut prev = sos;
        for (&k, s) in indices.iter().zip(syllables) {
            out.push(self.build(k, s.as_ref(), prev)?);
            prev = k;
        }
        out.push(self.build(self.res.eos, None, prev)?);
        Ok(out)
    }

    /// One prior per character of `sentence`, with pronunciations resolved by
    /// [`pronounce_sentence`], followed by the EOS position.
    pub fn build_sequence(
        &self,
        sentence: &str,
        vocabulary: &Vocabulary,
        lexicon: &Lexicon,
    ) -> Result<Vec<SmoothingDistribution>> {
        let chars: Vec<char> = sentence.chars().collect();
        let pron = pronounce_sentence(&chars, lexicon);
        let indices: Vec<usize> = chars.iter().map(|&c| vocabulary.encode_char(c)).collect();
        let syllables: Vec<Option<Syllable>> = pron.into_iter().map(|(_, s)| s).collect();
        self.build_for_pronounced(&indices, &syllables, vocabulary.specials().sos)
    }
}

/// One exported prior position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorRecord {
    pub k0: usize,
    pub entries: Vec<(usize, f64)>,
    pub tail: f64,
}

/// Writes `(k0, prior)` pairs as JSON lines. The vocabulary size is not
/// stored and must be supplied on import.
pub fn export_priors<W: Write>(priors: &[(usize, SmoothingDistribution)], mut out: W) -> Result<()> {
    for (k0, d) in priors {
        let rec = PriorRecord {
            k0: *k0,
            entries: d.entries.clone(),
            tail: d.tail,
        };
        let line = serde_json::to_string(&rec).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io("<priors>", e))?;
    }
    Ok(())
}

pub fn export_priors_file(priors: &[(usize, SmoothingDistribution)], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    export_priors(priors, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn import_priors<R: BufRead>(input: R, size: usize, origin: &Path) -> Result<Vec<(usize, SmoothingDistribution)>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PriorRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
        let d = SmoothingDistribution::new(size, rec.entries, rec.tail)
            .map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
        out.push((rec.k0, d));
    }
    Ok(out)
}

pub fn import_priors_file(path: &Path, size: usize) -> Result<Vec<(usize, SmoothingDistribution)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    import_priors(std::io::BufReader::new(file), size, path)
}
