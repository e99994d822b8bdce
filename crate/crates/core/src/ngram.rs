//! Unigram statistics and a bigram character LM.
//!
//! Every context row is stored as explicit entries, a scale applied to the
//! LM's backoff distribution, and a uniform tail:
//!
//! ```text
//! p(j | i) = entries_i[j]                                if j is explicit
//!          = backoff_i * backoff_dist[j] + tail_i        otherwise
//! ```
//!
//! This one shape covers add-k, linear interpolation and Katz-style ARPA
//! models, and keeps rows sparse.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lexicon::{Vocabulary, EOS, SOS, SPACE, UNK};
use crate::prior::SmoothingDistribution;

/// Character frequencies over a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct UnigramDistribution {
    probs: Vec<f64>,
    counts: Vec<u64>,
}

impl UnigramDistribution {
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyCorpus);
        }
        let probs = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(UnigramDistribution { probs, counts })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Counts every character of `corpus` (spaces as `<space>`, unknown
/// characters as `<unk>`). Sentence delimiters are not counted.
pub fn count_unigrams<S: AsRef<str>>(corpus: &[S], vocabulary: &Vocabulary) -> Result<UnigramDistribution> {
    let mut counts = vec![0u64; vocabulary.len()];
    for line in corpus {
        for c in line.as_ref().chars() {
            counts[vocabulary.encode_char(c)] += 1;
        }
    }
    UnigramDistribution::from_counts(counts)
}

/// Bigram estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    /// `(c(i,j) + k) / (c(i,.) + kK)`.
    AddK(f64),
    /// `lambda * ML + (1 - lambda) * unigram`.
    Interpolated(f64),
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::AddK(0.01)
    }
}

impl Smoothing {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Smoothing::AddK(k) if !(k >= 0.0) || !k.is_finite() => {
                Err(Error::InvalidArgument(format!("add-k constant {k} must be >= 0")))
            }
            Smoothing::Interpolated(l) if !(0.0..=1.0).contains(&l) => Err(Error::InvalidArgument(format!(
                "interpolation weight {l} must lie in [0, 1]"
            ))),
            _ => Ok(()),
        }
    }
}

/// `(count + k) / (context_total + k * size)`.
pub fn add_k_prob(count: u64, context_total: u64, k: f64, size: usize) -> f64 {
    (count as f64 + k) / (context_total as f64 + k * size as f64)
}

#[derive(Debug, Clone, PartialEq)]
struct Row {
    entries: Vec<(usize, f64)>,
    backoff: f64,
    tail: f64,
}

impl Row {
    fn backoff_only() -> Self {
        Row {
            entries: Vec::new(),
            backoff: 1.0,
            tail: 0.0,
        }
    }
}

/// Conditional character distributions given the previous character.
#[derive(Debug, Clone, PartialEq)]
pub struct BigramLM {
    size: usize,
    backoff_dist: Vec<f64>,
    rows: Vec<Row>,
}

/// Language models conditioned on a history of token indices.
pub trait ContextModel {
    /// Number of tokens of history consulted, plus one.
    fn order(&self) -> usize;
    /// Distribution of the next token. An empty history means sentence start.
    fn predict_next(&self, history: &[usize]) -> Result<SmoothingDistribution>;
}

impl BigramLM {
    pub fn size(&self) -> usize {
        self.size
    }

    /// The distribution used for unseen contexts and backoff.
    pub fn backoff_distribution(&self) -> &[f64] {
        &self.backoff_dist
    }

    /// `p(next | prev)`.
    pub fn prob(&self, prev: usize, next: usize) -> Result<f64> {
        let row = self.row(prev)?;
        if next >= self.size {
            return Err(Error::IndexOutOfRange {
                index: next,
                size: self.size,
            });
        }
        Ok(match row.entries.binary_search_by_key(&next, |e| e.0) {
            Ok(i) => row.entries[i].1,
            Err(_) => row.backoff * self.backoff_dist[next] + row.tail,
        })
    }

    fn row(&self, prev: usize) -> Result<&Row> {
        self.rows.get(prev).ok_or(Error::IndexOutOfRange {
            index: prev,
            size: self.size,
        })
    }

    /// Full next-character distribution after `prev` (`<s>` allowed).
    pub fn predict(&self, prev: usize) -> Result<SmoothingDistribution> {
        let row = self.row(prev)?;
        if row.backoff == 0.0 {
            return Ok(SmoothingDistribution::from_parts(self.size, row.entries.clone(), row.tail));
        }
        let mut entries: BTreeMap<usize, f64> = row.entries.iter().copied().collect();
        for (j, &b) in self.backoff_dist.iter().enumerate() {
            if b > 0.0 {
                entries.entry(j).or_insert(row.backoff * b + row.tail);
            }
        }
        Ok(SmoothingDistribution::from_parts(self.size, entries.into_iter().collect(), row.tail))
    }

    /// Serializes as an ARPA bigram model. Rows with a uniform tail are
    /// written densely since ARPA backoff cannot express that tail.
    pub fn to_arpa(&self, vocabulary: &Vocabulary) -> String {
        let lp = |p: f64| if p > 0.0 { p.log10() } else { -99.0 };
        let mut bigrams = String::new();
        let mut n2 = 0usize;
        let mut backoffs = vec![0.0; self.size];
        for (i, row) in self.rows.iter().enumerate() {
            let ctx = arpa_symbol(vocabulary, i);
            let explicit: Vec<(usize, f64)> = if row.tail > 0.0 {
                (0..self.size)
                    .map(|j| (j, self.prob(i, j).unwrap_or(0.0)))
                    .filter(|e| e.1 > 0.0)
                    .collect()
            } else {
                backoffs[i] = row.backoff;
                row.entries.iter().copied().filter(|e| e.1 > 0.0).collect()
            };
            for (j, p) in explicit {
                let _ = writeln!(bigrams, "{:.12}\t{ctx} {}", lp(p), arpa_symbol(vocabulary, j));
                n2 += 1;
            }
        }
        let mut out = String::new();
        let _ = writeln!(out, "\\data\\\nngram 1={}\nngram 2={n2}\n\n\\1-grams:", self.size);
        for j in 0..self.size {
            let _ = writeln!(
                out,
                "{:.12}\t{}\t{:.12}",
                lp(self.backoff_dist[j]),
                arpa_symbol(vocabulary, j),
                lp(backoffs[j])
            );
        }
        let _ = writeln!(out, "\n\\2-grams:");
        out.push_str(&bigrams);
        out.push_str("\n\\end\\\n");
        out
    }
}

impl ContextModel for BigramLM {
    fn order(&self) -> usize {
        2
    }

    fn predict_next(&self, history: &[usize]) -> Result<SmoothingDistribution> {
        let prev = history.last().copied().unwrap_or(SOS_INDEX);
        self.predict(prev)
    }
}

const SOS_INDEX: usize = 2;

fn arpa_symbol(vocabulary: &Vocabulary, index: usize) -> String {
    let s = vocabulary.specials();
    if index == s.space {
        SPACE.to_string()
    } else {
        vocabulary.symbol(index).unwrap_or(UNK).to_string()
    }
}

/// Maps an ARPA token to a vocabulary index, `None` for out-of-vocabulary tokens.
fn arpa_token_index(vocabulary: &Vocabulary, token: &str) -> Option<usize> {
    let s = vocabulary.specials();
    match token {
        SOS => Some(s.sos),
        EOS => Some(s.eos),
        UNK => Some(s.unk),
        SPACE => Some(s.space),
        _ => {
            let mut it = token.chars();
            match (it.next(), it.next()) {
                (Some(c), None) if c != ' ' => vocabulary.get(c),
                _ => None,
            }
        }
    }
}

fn encode_line(line: &str, vocabulary: &Vocabulary) -> Vec<usize> {
    let s = vocabulary.specials();
    let mut seq = Vec::with_capacity(line.chars().count() + 2);
    seq.push(s.sos);
    seq.extend(line.chars().map(|c| vocabulary.encode_char(c)));
    seq.push(s.eos);
    seq
}

/// Trains a bigram LM on sentence-per-line text. Blank lines are skipped;
/// every sentence is wrapped in `<s>` ... `</s>`.
pub fn train_bigram<S: AsRef<str>>(corpus: &[S], vocabulary: &Vocabulary, smoothing: Smoothing) -> Result<BigramLM> {
    smoothing.validate()?;
    let size = vocabulary.len();
    let mut pair_counts: Vec<BTreeMap<usize, u64>> = vec![BTreeMap::new(); size];
    let mut next_counts = vec![0u64; size];
    for line in corpus.iter().map(AsRef::as_ref).filter(|l| !l.trim().is_empty()) {
        let seq = encode_line(line, vocabulary);
        for w in seq.windows(2) {
            *pair_counts[w[0]].entry(w[1]).or_default() += 1;
            next_counts[w[1]] += 1;
        }
    }
    let total_next: u64 = next_counts.iter().sum();
    if total_next == 0 {
        return Err(Error::EmptyCorpus);
    }
    let backoff_dist: Vec<f64> = next_counts.iter().map(|&c| c as f64 / total_next as f64).collect();

    let rows = pair_counts
        .iter()
        .map(|counts| {
            let ctx_total: u64 = counts.values().sum();
            match smoothing {
                Smoothing::AddK(k) if ctx_total == 0 && k == 0.0 => Row::backoff_only(),
                Smoothing::AddK(k) => Row {
                    entries: counts
                        .iter()
                        .map(|(&j, &c)| (j, add_k_prob(c, ctx_total, k, size)))
                        .collect(),
                    backoff: 0.0,
                    tail: add_k_prob(0, ctx_total, k, size),
                },
                Smoothing::Interpolated(_) if ctx_total == 0 => Row::backoff_only(),
                Smoothing::Interpolated(lambda) => Row {
                    entries: counts
                        .iter()
                        .map(|(&j, &c)| {
                            let ml = c as f64 / ctx_total as f64;
                            (j, lambda * ml + (1.0 - lambda) * backoff_dist[j])
                        })
                        .collect(),
                    backoff: 1.0 - lambda,
                    tail: 0.0,
                },
            }
        })
        .collect();
    Ok(BigramLM {
        size,
        backoff_dist,
        rows,
    })
}

/// Reads an ARPA model and projects it onto `vocabulary`.
///
/// `p(j|i) = 10^lp(i,j)` when the bigram is listed, else `10^bo(i) p(j)`.
/// ARPA tokens outside the vocabulary merge into `<unk>` as next tokens and
/// are dropped as contexts. Each row is renormalized over the vocabulary.
pub fn import_arpa(path: &Path, vocabulary: &Vocabulary) -> Result<BigramLM> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_arpa(&text, vocabulary, path)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Preamble,
    Data,
    Order(usize),
    End,
}

pub fn parse_arpa(text: &str, vocabulary: &Vocabulary, origin: &Path) -> Result<BigramLM> {
    let size = vocabulary.len();
    let mut section = Section::Preamble;
    let mut seen_unigrams = false;
    // token -> (log10 p, log10 backoff)
    let mut unigrams: HashMap<String, (f64, f64)> = HashMap::new();
    let mut uni_order: Vec<String> = Vec::new();
    let mut bigrams: Vec<(String, String, f64)> = Vec::new();

    let num = |s: &str, line: usize| -> Result<f64> {
        s.parse::<f64>()
            .ok()
            .filter(|v| !v.is_nan())
            .ok_or_else(|| Error::parse(origin, line, format!("non-numeric field {s:?}")))
    };

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line == "\\data\\" {
            section = Section::Data;
            continue;
        }
        if line == "\\end\\" {
            section = Section::End;
            continue;
        }
        if let Some(rest) = line.strip_prefix('\\').and_then(|l| l.strip_suffix("-grams:")) {
            if section == Section::Preamble {
                return Err(Error::parse(origin, lineno, "n-gram section before \\data\\"));
            }
            let order: usize = rest
                .parse()
                .map_err(|_| Error::parse(origin, lineno, format!("bad section header {line:?}")))?;
            seen_unigrams |= order == 1;
            section = Section::Order(order);
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match section {
            Section::Preamble | Section::End => {}
            Section::Data => {
                let ok = line.starts_with("ngram ")
                    && line[6..]
                        .split_once('=')
                        .is_some_and(|(a, b)| a.trim().parse::<usize>().is_ok() && b.trim().parse::<usize>().is_ok());
                if !ok {
                    return Err(Error::parse(origin, lineno, format!("bad count line {line:?}")));
                }
            }
            Section::Order(1) => {
                if !(2..=3).contains(&fields.len()) {
                    return Err(Error::parse(origin, lineno, "expected `logp token [backoff]`"));
                }
                let lp = num(fields[0], lineno)?;
                let bo = if fields.len() == 3 { num(fields[2], lineno)? } else { 0.0 };
                if unigrams.insert(fields[1].to_string(), (lp, bo)).is_none() {
                    uni_order.push(fields[1].to_string());
                }
            }
            Section::Order(2) => {
                if !(3..=4).contains(&fields.len()) {
                    return Err(Error::parse(origin, lineno, "expected `logp token token [backoff]`"));
                }
                let lp = num(fields[0], lineno)?;
                if fields.len() == 4 {
                    num(fields[3], lineno)?;
                }
                bigrams.push((fields[1].to_string(), fields[2].to_string(), lp));
            }
            // Higher orders do not affect bigram probabilities.
            Section::Order(_) => {}
        }
    }
    if section == Section::Preamble {
        return Err(Error::parse(origin, 0, "missing \\data\\ section"));
    }
    if !seen_unigrams {
        return Err(Error::parse(origin, 0, "missing \\1-grams: section"));
    }
    if section != Section::End {
        return Err(Error::parse(origin, 0, "missing \\end\\ marker"));
    }

    let pow = |lp: f64| 10f64.powf(lp);
    // Unigram mass per vocabulary index, OOV tokens merged into <unk>.
    let unk = vocabulary.specials().unk;
    let mut uni = vec![0.0; size];
    let mut uni_members: Vec<Vec<&str>> = vec![Vec::new(); size];
    for tok in &uni_order {
        let j = arpa_token_index(vocabulary, tok).unwrap_or(unk);
        uni[j] += pow(unigrams[tok].0);
        uni_members[j].push(tok.as_str());
    }
    let uni_total: f64 = uni.iter().sum();
    if !(uni_total > 0.0) {
        return Err(Error::parse(origin, 0, "unigram mass is zero over the vocabulary"));
    }
    let backoff_dist: Vec<f64> = uni.iter().map(|u| u / uni_total).collect();

    let mut explicit: Vec<HashMap<String, f64>> = vec![HashMap::new(); size];
    for (ctx, next, lp) in &bigrams {
        if !unigrams.contains_key(next) {
            // Keep the model closed over its unigram list.
            continue;
        }
        if let Some(i) = arpa_token_index(vocabulary, ctx).filter(|&i| arpa_symbol(vocabulary, i) == *ctx) {
            explicit[i].insert(next.clone(), pow(*lp));
        }
    }

    let rows = (0..size)
        .map(|i| {
            let ctx = arpa_symbol(vocabulary, i);
            let bo = unigrams.get(&ctx).map_or(1.0, |u| pow(u.1));
            let listed = &explicit[i];
            if listed.is_empty() {
                return Row::backoff_only();
            }
            // Unnormalized q(j) for every j that has a listed bigram.
            let mut entries: BTreeMap<usize, f64> = BTreeMap::new();
            for (j, members) in uni_members.iter().enumerate() {
                if !members.iter().any(|t| listed.contains_key(*t)) {
                    continue;
                }
                let q: f64 = members
                    .iter()
                    .map(|t| listed.get(*t).copied().unwrap_or_else(|| bo * pow(unigrams[*t].0)))
                    .sum();
                entries.insert(j, q);
            }
            let rest: f64 = (0..size).filter(|j| !entries.contains_key(j)).map(|j| bo * uni[j]).sum();
            let z = entries.values().sum::<f64>() + rest;
            Row {
                entries: entries.into_iter().map(|(j, q)| (j, q / z)).collect(),
                backoff: bo * uni_total / z,
                tail: 0.0,
            }
        })
        .collect();
    Ok(BigramLM {
        size,
        backoff_dist,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(chars: &str) -> Vocabulary {
        Vocabulary::from_chars(chars.chars())
    }

    #[test]
    fn unigram_frequencies() {
        let v = vocab("ab");
        let u = count_unigrams(&["aab"], &v).unwrap();
        assert!((u.probs()[4] - 2.0 / 3.0).abs() < 1e-15);
        assert!((u.probs()[5] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(u.probs()[..4], [0.0; 4]);
        let u = count_unigrams(&["a"], &v).unwrap();
        assert_eq!(u.probs()[4], 1.0);
        assert!(count_unigrams(&[""], &v).is_err());
    }

    #[test]
    fn oov_counts_as_unk() {
        let v = vocab("a");
        let u = count_unigrams(&["az"], &v).unwrap();
        assert_eq!(u.counts()[v.specials().unk], 1);
    }

    #[test]
    fn add_k_formula() {
        assert_eq!(add_k_prob(2, 2, 1.0, 2), 0.75);
    }

    #[test]
    fn deterministic_successor() {
        let v = vocab("ab");
        let lm = train_bigram(&["ab", "ab"], &v, Smoothing::AddK(0.0)).unwrap();
        assert_eq!(lm.prob(4, 5).unwrap(), 1.0);
        let d = lm.predict(4).unwrap();
        assert_eq!(d.prob(5), 1.0);
        assert_eq!(d.total(), 1.0);
    }

    #[test]
    fn invalid_smoothing() {
        let v = vocab("ab");
        assert!(train_bigram(&["ab"], &v, Smoothing::AddK(-1.0)).is_err());
        assert!(train_bigram(&["ab"], &v, Smoothing::Interpolated(1.5)).is_err());
    }

    #[test]
    fn unseen_context_backs_off_to_unigram() {
        let v = vocab("abc");
        let lm = train_bigram(&["ab", "ba"], &v, Smoothing::Interpolated(0.7)).unwrap();
        let c = v.get('c').unwrap();
        let d = lm.predict(c).unwrap();
        for (j, &u) in lm.backoff_distribution().iter().enumerate() {
            assert_eq!(d.prob(j), u);
        }
    }

    #[test]
    fn interpolated_rows_sum_to_one() {
        let v = vocab("abc");
        let lm = train_bigram(&["abcab", "cca", "b"], &v, Smoothing::Interpolated(0.6)).unwrap();
        for i in 0..v.len() {
            assert!((lm.predict(i).unwrap().total() - 1.0).abs() < 1e-12);
        }
        assert!(lm.predict(v.len()).is_err());
    }

    #[test]
    fn hand_written_arpa() {
        // p(b|a) listed; p(c|a) = 10^bo(a) * p(c); then renormalized.
        let text = "\\data\\\nngram 1=3\nngram 2=1\n\n\\1-grams:\n-0.30103 a -0.30103\n-0.60206 b\n-0.60206 c\n\n\\2-grams:\n-0.09691 a b\n\n\\end\\\n";
        let v = vocab("abc");
        let lm = parse_arpa(text, &v, Path::new("t.arpa")).unwrap();
        let (a, b, c) = (4, 5, 6);
        let e = |x: f64| 10f64.powf(x);
        let total = e(-0.30103) + 2.0 * e(-0.60206);
        let pb = e(-0.09691);
        let pa = e(-0.30103) * e(-0.30103);
        let pc = e(-0.30103) * e(-0.60206);
        let z = pa + pb + pc;
        assert!((lm.prob(a, b).unwrap() - pb / z).abs() < 1e-12);
        assert!((lm.prob(a, a).unwrap() - pa / z).abs() < 1e-12);
        assert!((lm.prob(a, c).unwrap() - pc / z).abs() < 1e-12);
        assert!((lm.prob(b, c).unwrap() - e(-0.60206) / total).abs() < 1e-12);
    }

    #[test]
    fn arpa_errors() {
        let v = vocab("ab");
        let p = Path::new("x.arpa");
        assert!(parse_arpa("\\1-grams:\n-1 a\n\\end\\\n", &v, p).is_err());
        assert!(parse_arpa("\\data\\\nngram 1=1\n\\end\\\n", &v, p).is_err());
        let e = parse_arpa("\\data\\\nngram 1=1\n\\1-grams:\nfoo a\n\\end\\\n", &v, p).unwrap_err();
        assert!(e.to_string().starts_with("x.arpa:4:"), "{e}");
        let e = parse_arpa("\\data\\\nngram 1=x\n", &v, p).unwrap_err();
        assert!(e.to_string().starts_with("x.arpa:2:"), "{e}");
    }

    #[test]
    fn oov_arpa_tokens_merge_into_unk() {
        let text = "\\data\\\nngram 1=3\n\\1-grams:\n-0.30103 a\n-0.60206 zz\n-0.60206 q\n\\end\\\n";
        let v = vocab("a");
        let lm = parse_arpa(text, &v, Path::new("t")).unwrap();
        let d = lm.predict(4).unwrap();
        let (pa, pz) = (10f64.powf(-0.30103), 10f64.powf(-0.60206));
        let total = pa + 2.0 * pz;
        assert!((d.prob(v.specials().unk) - 2.0 * pz / total).abs() < 1e-15);
        assert!((d.prob(4) - pa / total).abs() < 1e-15);
    }
}
