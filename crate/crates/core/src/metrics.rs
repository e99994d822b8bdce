//! Levenshtein alignment and character error rate.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EditStats {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ref_len: usize,
}

impl EditStats {
    pub fn distance(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// `None` for an empty reference.
    pub fn cer(&self) -> Option<f64> {
        (self.ref_len > 0).then(|| self.distance() as f64 / self.ref_len as f64)
    }
}

impl std::ops::Add for EditStats {
    type Output = EditStats;

    fn add(self, o: EditStats) -> EditStats {
        EditStats {
            substitutions: self.substitutions + o.substitutions,
            deletions: self.deletions + o.deletions,
            insertions: self.insertions + o.insertions,
            ref_len: self.ref_len + o.ref_len,
        }
    }
}

/// Unit-cost edit distance with an S/D/I breakdown.
///
/// When several minimal alignments exist the backtrace prefers substitution
/// (or match), then deletion, then insertion.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditStats {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = sub.min(del).min(ins);
        }
    }
    let mut stats = EditStats {
        ref_len: n,
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if d[(i - 1) * w + j - 1] + usize::from(!same) == here {
                stats.substitutions += usize::from(!same);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == here {
            stats.deletions += 1;
            i -= 1;
        } else {
            stats.insertions += 1;
            j -= 1;
        }
    }
    stats
}

/// Edit statistics between two strings, by Unicode scalar.
pub fn char_edit_distance(reference: &str, hypothesis: &str) -> EditStats {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    edit_distance(&r, &h)
}

/// Pooled CER over a corpus, in percent.
pub fn corpus_cer<R: AsRef<str>, H: AsRef<str>>(refs: &[R], hyps: &[H]) -> Result<f64> {
    Ok(corpus_stats(refs, hyps)?.1)
}

/// Summed edit statistics and the pooled CER percentage.
pub fn corpus_stats<R: AsRef<str>, H: AsRef<str>>(refs: &[R], hyps: &[H]) -> Result<(EditStats, f64)> {
    if refs.len() != hyps.len() {
        return Err(Error::DimensionMismatch {
            expected: refs.len(),
            got: hyps.len(),
        });
    }
    let total = refs
        .iter()
        .zip(hyps)
        .map(|(r, h)| char_edit_distance(r.as_ref(), h.as_ref()))
        .fold(EditStats::default(), |a, b| a + b);
    let cer = total
        .cer()
        .ok_or_else(|| Error::InvalidArgument("references contain no characters".into()))?;
    Ok((total, 100.0 * cer))
}

/// Reads line-aligned reference and hypothesis files.
pub fn read_aligned(ref_path: &Path, hyp_path: &Path) -> Result<(Vec<String>, Vec<String>)> {
    let read = |p: &Path| -> Result<Vec<String>> {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        Ok(text.lines().map(str::to_string).collect())
    };
    Ok((read(ref_path)?, read(hyp_path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity() {
        let s = char_edit_distance("abc", "abc");
        assert_eq!(s.distance(), 0);
        assert_eq!(s.cer(), Some(0.0));
    }

    #[test]
    fn single_substitution() {
        let s = char_edit_distance("abc", "axc");
        assert_eq!((s.substitutions, s.deletions, s.insertions), (1, 0, 0));
        assert!((s.cer().unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn deletions_and_insertions() {
        let s = char_edit_distance("abcd", "ad");
        assert_eq!((s.substitutions, s.deletions, s.insertions), (0, 2, 0));
        let s = char_edit_distance("a", "xay");
        assert_eq!((s.substitutions, s.deletions, s.insertions), (0, 0, 2));
        let s = char_edit_distance("", "ab");
        assert_eq!(s.insertions, 2);
        assert_eq!(s.cer(), None);
    }

    #[test]
    fn tie_break_prefers_substitution() {
        // "ab" -> "ba" is either 2 substitutions or 1 del + 1 ins.
        let s = char_edit_distance("ab", "ba");
        assert_eq!((s.substitutions, s.deletions, s.insertions), (2, 0, 0));
    }

    #[test]
    fn corpus_level() {
        let refs = ["abc", "de"];
        assert_eq!(corpus_cer(&refs, &refs).unwrap(), 0.0);
        let r: Vec<String> = vec!["a".repeat(100)];
        let mut h = "a".repeat(99);
        h.push('b');
        assert!((corpus_cer(&r, &[h]).unwrap() - 1.0).abs() < 1e-12);
        assert!(corpus_cer(&refs, &["abc"]).is_err());
        assert!(corpus_cer(&[""], &["x"]).is_err());
    }
}
