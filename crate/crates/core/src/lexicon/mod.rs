//! Vocabulary, pinyin syllables and the pronunciation lexicon.
//!
//! The lexicon file is UTF-8 TSV. A line whose key is a single character
//! lists that character's readings, most frequent first, separated by `,`.
//! A line whose key has two or more characters is a word entry whose
//! syllables are separated by spaces, one per character:
//!
//! ```text
//! # comment
//! 中	zhong1,zhong4
//! 行	xing2,hang2
//! 银行	yin2 hang2
//! ```

mod syllable;
mod vocab;

use std::collections::HashMap;
use std::path::Path;

pub use syllable::{is_final, is_initial, parse_syllable, Syllable, ToneMode, FINALS, INITIALS};
pub use vocab::{build_vocabulary, Specials, Vocabulary, EOS, SOS, SPACE, UNK};

use crate::error::{Error, Result};

/// Character readings and word pronunciations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    readings: HashMap<char, Vec<Syllable>>,
    /// Characters in first-seen order, so iteration is deterministic.
    char_order: Vec<char>,
    word_readings: HashMap<String, Vec<Syllable>>,
    words: WordTrie,
    oov_chars: Vec<char>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends readings for `c`, skipping ones already present.
    pub fn add_char(&mut self, c: char, syllables: impl IntoIterator<Item = Syllable>) {
        let entry = self.readings.entry(c).or_insert_with(|| {
            self.char_order.push(c);
            Vec::new()
        });
        for s in syllables {
            if !entry.contains(&s) {
                entry.push(s);
            }
        }
    }

    pub fn add_word(&mut self, word: &str, syllables: Vec<Syllable>) -> Result<()> {
        let n = word.chars().count();
        if n != syllables.len() {
            return Err(Error::InvalidArgument(format!(
                "word {word:?} has {n} characters but {} syllables",
                syllables.len()
            )));
        }
        let chars: Vec<char> = word.chars().collect();
        self.words.insert(&chars);
        self.word_readings.insert(word.to_string(), syllables);
        Ok(())
    }

    /// Readings of `c`, most frequent first.
    pub fn readings(&self, c: char) -> Option<&[Syllable]> {
        self.readings.get(&c).map(Vec::as_slice)
    }

    pub fn word_reading(&self, word: &str) -> Option<&[Syllable]> {
        self.word_readings.get(word).map(Vec::as_slice)
    }

    /// Characters with readings, in file order.
    pub fn chars(&self) -> &[char] {
        &self.char_order
    }

    pub fn words(&self) -> impl Iterator<Item = (&str, &[Syllable])> {
        self.word_readings.iter().map(|(w, s)| (w.as_str(), s.as_slice()))
    }

    pub fn num_words(&self) -> usize {
        self.word_readings.len()
    }

    /// Characters with readings that were missing from the vocabulary at load time.
    pub fn oov_chars(&self) -> &[char] {
        &self.oov_chars
    }

    /// Parses lexicon text. `origin` only labels error messages.
    pub fn parse_str(text: &str, vocabulary: &Vocabulary, origin: &Path) -> Result<Self> {
        let mut lex = Lexicon::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(origin, lineno, "expected KEY<TAB>READINGS"))?;
            let value = value.trim();
            if key.is_empty() || value.is_empty() {
                return Err(Error::parse(origin, lineno, "empty key or readings"));
            }
            let nchars = key.chars().count();
            let parse = |s: &str| {
                parse_syllable(s).map_err(|e| Error::parse(origin, lineno, e.to_string()))
            };
            if nchars == 1 {
                let c = key.chars().next().unwrap_or_default();
                let syls = value
                    .split(',')
                    .map(|s| parse(s.trim()))
                    .collect::<Result<Vec<_>>>()?;
                lex.add_char(c, syls);
            } else {
                if value.contains(',') {
                    return Err(Error::parse(origin, lineno, "word entries take one reading"));
                }
                let syls = value.split_whitespace().map(parse).collect::<Result<Vec<_>>>()?;
                if syls.len() != nchars {
                    return Err(Error::parse(
                        origin,
                        lineno,
                        format!("word {key:?} has {nchars} characters but {} syllables", syls.len()),
                    ));
                }
                lex.add_word(key, syls)?;
            }
        }
        lex.oov_chars = lex
            .char_order
            .iter()
            .copied()
            .filter(|&c| !vocabulary.contains(c))
            .collect();
        Ok(lex)
    }

    /// Renders the lexicon back to TSV: characters in file order, then words sorted.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for c in &self.char_order {
            let syls: Vec<String> = self.readings[c].iter().map(|s| s.to_string()).collect();
            out.push_str(&format!("{c}\t{}\n", syls.join(",")));
        }
        let mut words: Vec<_> = self.word_readings.iter().collect();
        words.sort();
        for (w, syls) in words {
            let syls: Vec<String> = syls.iter().map(|s| s.to_string()).collect();
            out.push_str(&format!("{w}\t{}\n", syls.join(" ")));
        }
        out
    }
}

/// Reads and parses a lexicon TSV file.
pub fn parse_lexicon(path: &Path, vocabulary: &Vocabulary) -> Result<Lexicon> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Lexicon::parse_str(&text, vocabulary, path)
}

#[derive(Debug, Clone, Default, PartialEq)]
struct WordTrie {
    children: HashMap<char, WordTrie>,
    terminal: bool,
}

impl WordTrie {
    fn insert(&mut self, word: &[char]) {
        let mut node = self;
        for c in word {
            node = node.children.entry(*c).or_default();
        }
        node.terminal = true;
    }

    /// Length of the longest word starting at `text[0]`, if any.
    fn longest_prefix(&self, text: &[char]) -> Option<usize> {
        let mut node = self;
        let mut best = None;
        for (i, c) in text.iter().enumerate() {
            match node.children.get(c) {
                Some(next) => node = next,
                None => break,
            }
            if node.terminal {
                best = Some(i + 1);
            }
        }
        best
    }
}

/// Assigns one pronunciation per character.
///
/// Segmentation is greedy longest-match against the word entries; characters
/// covered by a word take the word's syllables, the rest take their first
/// reading. Characters absent from the lexicon get `None`.
pub fn pronounce_sentence(sentence: &[char], lexicon: &Lexicon) -> Vec<(char, Option<Syllable>)> {
    let mut out = Vec::with_capacity(sentence.len());
    let mut i = 0;
    while i < sentence.len() {
        if let Some(len) = lexicon.words.longest_prefix(&sentence[i..]).filter(|&l| l >= 2) {
            let word: String = sentence[i..i + len].iter().collect();
            let syls = &lexicon.word_readings[&word];
            for (c, s) in sentence[i..i + len].iter().zip(syls) {
                out.push((*c, Some(s.clone())));
            }
            i += len;
        } else {
            let c = sentence[i];
            let syl = lexicon.readings(c).and_then(|r| r.first()).cloned();
            out.push((c, syl));
            i += 1;
        }
    }
    out
}
