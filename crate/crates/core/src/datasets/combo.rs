use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DIGIT_WORDS: [&str; 10] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
}

impl Color {
    pub const ALL: [Color; 3] = [Color::Red, Color::Green, Color::Blue];

    pub fn channel(self) -> usize {
        self as usize
    }

    pub fn word(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
        }
    }
}

impl FromStr for Color {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "red" => Ok(Color::Red),
            "green" => Ok(Color::Green),
            "blue" => Ok(Color::Blue),
            other => Err(Error::UnknownColor(other.to_string())),
        }
    }
}

pub fn digit_from_word(word: &str) -> Option<u8> {
    DIGIT_WORDS.iter().position(|w| *w == word).map(|d| d as u8)
}

/// A two-digit class, optionally with one color per digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ComboClass {
    pub digits: [u8; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub colors: Option<[Color; 2]>,
}

impl ComboClass {
    pub fn plain(first: u8, second: u8) -> Self {
        Self {
            digits: [first, second],
            colors: None,
        }
    }

    pub fn colored(first: u8, c1: Color, second: u8, c2: Color) -> Self {
        Self {
            digits: [first, second],
            colors: Some([c1, c2]),
        }
    }

    /// The uncolored digit pair.
    pub fn digit_pair(&self) -> ComboClass {
        Self::plain(self.digits[0], self.digits[1])
    }

    /// `["seven", "five"]` or `["red", "seven", "blue", "five"]`.
    pub fn tokens(&self) -> Vec<&'static str> {
        let [a, b] = self.digits.map(|d| DIGIT_WORDS[d as usize]);
        match self.colors {
            None => vec![a, b],
            Some([c1, c2]) => vec![c1.word(), a, c2.word(), b],
        }
    }

    /// All 100 uncolored classes in digit order.
    pub fn all_plain() -> Vec<ComboClass> {
        (0..10)
            .flat_map(|a| (0..10).map(move |b| ComboClass::plain(a, b)))
            .collect()
    }

    /// All 900 colored classes.
    pub fn all_colored() -> Vec<ComboClass> {
        Self::all_plain()
            .into_iter()
            .flat_map(|p| p.color_variants())
            .collect()
    }

    /// The nine colorings of this digit pair.
    pub fn color_variants(&self) -> Vec<ComboClass> {
        let [a, b] = self.digits;
        Color::ALL
            .iter()
            .flat_map(|&c1| {
                Color::ALL
                    .iter()
                    .map(move |&c2| ComboClass::colored(a, c1, b, c2))
            })
            .collect()
    }
}

impl fmt::Display for ComboClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens().join(" "))
    }
}

impl FromStr for ComboClass {
    type Err = Error;

    /// Accepts `"seven five"` or `"red seven blue five"`.
    fn from_str(s: &str) -> Result<Self> {
        let words: Vec<&str> = s.split_whitespace().collect();
        let digit =
            |w: &str| digit_from_word(w).ok_or_else(|| Error::UnknownTokens(vec![w.to_string()]));
        match words.as_slice() {
            [a, b] => Ok(Self::plain(digit(a)?, digit(b)?)),
            [c1, a, c2, b] => {
                let color = |w: &str| {
                    w.parse::<Color>()
                        .map_err(|_| Error::UnknownTokens(vec![w.to_string()]))
                };
                Ok(Self::colored(digit(a)?, color(c1)?, digit(b)?, color(c2)?))
            }
            _ => Err(Error::InvalidInput(format!(
                "class `{s}` must be two digit words or four color/digit words"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_counts() {
        assert_eq!(ComboClass::all_plain().len(), 100);
        let colored = ComboClass::all_colored();
        assert_eq!(colored.len(), 900);
        let unique: std::collections::HashSet<_> = colored.iter().collect();
        assert_eq!(unique.len(), 900);
    }

    #[test]
    fn tokens_and_parsing() {
        let c: ComboClass = "seven five".parse().unwrap();
        assert_eq!(c, ComboClass::plain(7, 5));
        assert_eq!(c.tokens(), vec!["seven", "five"]);
        let c: ComboClass = "red five blue one".parse().unwrap();
        assert_eq!(c, ComboClass::colored(5, Color::Red, 1, Color::Blue));
        assert_eq!(c.to_string(), "red five blue one");
        assert!("seven fiv".parse::<ComboClass>().is_err());
        assert!("purple five blue one".parse::<ComboClass>().is_err());
        assert!("five".parse::<ComboClass>().is_err());
        assert!("mauve".parse::<Color>().is_err());
    }
}
