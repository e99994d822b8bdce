use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const SPACE: &str = "<space>";
pub const SOS: &str = "<s>";
pub const EOS: &str = "</s>";

/// Indices of the special tokens. They always occupy the first four slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Specials {
    pub unk: usize,
    pub space: usize,
    pub sos: usize,
    pub eos: usize,
}

const SPECIALS: Specials = Specials {
    unk: 0,
    space: 1,
    sos: 2,
    eos: 3,
};

/// Bijection between modelling units and indices `0..K`.
///
/// Slots `0..4` hold `<unk>`, `<space>`, `<s>`, `</s>`; every other slot
/// holds exactly one character.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<String>,
    index_of: HashMap<char, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from an explicit character list, in order.
    /// Duplicates and `' '` are skipped.
    pub fn from_chars<I: IntoIterator<Item = char>>(chars: I) -> Self {
        let mut symbols: Vec<String> = [UNK, SPACE, SOS, EOS].iter().map(|s| s.to_string()).collect();
        let mut index_of = HashMap::new();
        for c in chars {
            if c == ' ' || index_of.contains_key(&c) {
                continue;
            }
            index_of.insert(c, symbols.len());
            symbols.push(c.to_string());
        }
        Vocabulary { symbols, index_of }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn specials(&self) -> Specials {
        SPECIALS
    }

    pub fn is_special(&self, index: usize) -> bool {
        index < 4
    }

    /// Index of a character; `' '` maps to `<space>`, unknown characters to `<unk>`.
    pub fn encode_char(&self, c: char) -> usize {
        if c == ' ' {
            return SPECIALS.space;
        }
        self.index_of.get(&c).copied().unwrap_or(SPECIALS.unk)
    }

    /// `None` when the character is not a vocabulary member.
    pub fn get(&self, c: char) -> Option<usize> {
        if c == ' ' {
            return Some(SPECIALS.space);
        }
        self.index_of.get(&c).copied()
    }

    pub fn contains(&self, c: char) -> bool {
        self.get(c).is_some()
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        text.chars().map(|c| self.encode_char(c)).collect()
    }

    pub fn symbol(&self, index: usize) -> Option<&str> {
        self.symbols.get(index).map(String::as_str)
    }

    /// The character at `index`, or `None` for specials and out-of-range indices.
    /// `<space>` decodes to `' '`.
    pub fn decode_char(&self, index: usize) -> Option<char> {
        if index == SPECIALS.space {
            return Some(' ');
        }
        if self.is_special(index) {
            return None;
        }
        self.symbols.get(index).and_then(|s| s.chars().next())
    }

    /// Renders an index sequence as text. Specials other than `<space>` are
    /// rendered by their symbol.
    pub fn decode(&self, indices: &[usize]) -> String {
        let mut out = String::new();
        for &i in indices {
            match self.decode_char(i) {
                Some(c) => out.push(c),
                None => out.push_str(self.symbol(i).unwrap_or(UNK)),
            }
        }
        out
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// Non-special characters, in index order.
    pub fn chars(&self) -> impl Iterator<Item = (usize, char)> + '_ {
        self.symbols
            .iter()
            .enumerate()
            .skip(4)
            .filter_map(|(i, s)| s.chars().next().map(|c| (i, c)))
    }

    /// One symbol per line.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for s in &self.symbols {
            text.push_str(s);
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        for (i, expected) in [UNK, SPACE, SOS, EOS].iter().enumerate() {
            match lines.next() {
                Some(l) if l == *expected => {}
                _ => return Err(Error::parse(path, i + 1, format!("expected special {expected}"))),
            }
        }
        let mut chars = Vec::new();
        for (i, line) in lines.enumerate() {
            let mut it = line.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => chars.push(c),
                _ => return Err(Error::parse(path, i + 5, "expected a single character")),
            }
        }
        let vocab = Vocabulary::from_chars(chars.iter().copied());
        if vocab.len() != chars.len() + 4 {
            return Err(Error::parse(path, 0, "duplicate characters"));
        }
        Ok(vocab)
    }
}

/// Counts characters across `corpus_lines` and keeps those seen at least
/// `min_count` times, ordered by descending count then ascending codepoint.
/// Spaces are modelled by the `<space>` special and never become characters.
pub fn build_vocabulary<S: AsRef<str>>(corpus_lines: &[S], min_count: usize) -> Result<Vocabulary> {
    if corpus_lines.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: HashMap<char, usize> = HashMap::new();
    for line in corpus_lines {
        for c in line.as_ref().chars().filter(|&c| c != ' ') {
            *counts.entry(c).or_default() += 1;
        }
    }
    let mut kept: Vec<(char, usize)> = counts.into_iter().filter(|&(_, n)| n >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(Vocabulary::from_chars(kept.into_iter().map(|(c, _)| c)))
}
