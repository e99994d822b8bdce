use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Pinyin initials. The 21 standard consonants plus the semivowels `y` and `w`.
/// The empty initial is represented by `""` and is not listed here.
pub const INITIALS: [&str; 23] = [
    "b", "p", "m", "f", "d", "t", "n", "l", "g", "k", "h", "j", "q", "x", "zh", "ch", "sh", "r",
    "z", "c", "s", "y", "w",
];

/// Pinyin finals in their written (post-initial) form. `v` stands for `ü`.
pub const FINALS: [&str; 37] = [
    "a", "o", "e", "i", "u", "v", "ai", "ei", "ui", "ao", "ou", "iu", "ie", "ve", "ue", "er", "an",
    "en", "in", "un", "vn", "ang", "eng", "ing", "ong", "ia", "iao", "ian", "iang", "iong", "ua",
    "uo", "uai", "uan", "van", "uang", "ueng",
];

pub fn is_initial(s: &str) -> bool {
    s.is_empty() || INITIALS.contains(&s)
}

pub fn is_final(s: &str) -> bool {
    FINALS.contains(&s)
}

/// How tones participate in pronunciation equality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToneMode {
    /// Initial, final and tone must all match.
    #[default]
    Sensitive,
    /// Tones are ignored.
    Insensitive,
}

/// One Mandarin syllable split into initial, final and tone.
///
/// Tone `0` means unspecified and `5` is the neutral tone.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Syllable {
    pub initial: String,
    pub final_: String,
    pub tone: u8,
}

impl Syllable {
    pub fn new(initial: &str, final_: &str, tone: u8) -> Result<Self> {
        if !is_initial(initial) || !is_final(final_) || tone > 5 {
            return Err(Error::InvalidSyllable(format!("{initial}{final_}{tone}")));
        }
        Ok(Syllable {
            initial: initial.to_string(),
            final_: final_.to_string(),
            tone,
        })
    }

    /// The equality key under `mode`: identical to `self` when tone-sensitive,
    /// with the tone cleared otherwise.
    pub fn key(&self, mode: ToneMode) -> Syllable {
        match mode {
            ToneMode::Sensitive => self.clone(),
            ToneMode::Insensitive => Syllable {
                tone: 0,
                ..self.clone()
            },
        }
    }
}

impl fmt::Display for Syllable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.initial, self.final_)?;
        if self.tone != 0 {
            write!(f, "{}", self.tone)?;
        }
        Ok(())
    }
}

impl FromStr for Syllable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_syllable(s)
    }
}

/// Splits lowercase pinyin with an optional trailing tone digit.
///
/// The initial is the longest prefix found in [`INITIALS`]; whatever remains
/// must be a member of [`FINALS`].
pub fn parse_syllable(s: &str) -> Result<Syllable> {
    let bad = || Error::InvalidSyllable(s.to_string());
    let (body, tone) = match s.as_bytes().last() {
        Some(d @ b'0'..=b'5') => (&s[..s.len() - 1], d - b'0'),
        Some(_) => (s, 0),
        None => return Err(bad()),
    };
    let initial = INITIALS
        .iter()
        .filter(|i| body.starts_with(**i))
        .max_by_key(|i| i.len())
        .copied()
        .unwrap_or("");
    let final_ = &body[initial.len()..];
    if !is_final(final_) {
        return Err(bad());
    }
    Ok(Syllable {
        initial: initial.to_string(),
        final_: final_.to_string(),
        tone,
    })
}
