//! Word lists used by the baseline taggers and the guideline linter.
//!
//! Each list has a shipped default and can be replaced from a plain-text
//! file with one entry per line (`#` starts a comment).

use std::collections::HashSet;
use std::io;
use std::path::Path;

use crate::tags::{tokenize, Token};

pub const DEFAULT_UNITS: &[&str] = &[
    "°C",
    "K",
    "degC",
    "g",
    "mg",
    "kg",
    "µg",
    "μg",
    "ml",
    "mL",
    "l",
    "L",
    "µL",
    "μL",
    "h",
    "hr",
    "hrs",
    "min",
    "s",
    "ms",
    "%",
    "wt%",
    "wt.%",
    "wt %",
    "at%",
    "vol%",
    "mol%",
    "pounds",
    "lb",
    "m",
    "cm",
    "mm",
    "nm",
    "µm",
    "μm",
    "km",
    "°C/min",
    "°C per minute",
    "K/min",
    "M",
    "mM",
    "mmol",
    "mol",
    "rpm",
    "Pa",
    "kPa",
    "MPa",
    "GPa",
    "bar",
    "atm",
    "Torr",
    "V",
    "mV",
    "A",
    "mA",
    "W",
    "kW",
    "Hz",
    "kHz",
    "MHz",
    "eV",
    "keV",
    "J",
    "kJ",
    "byr",
    "days",
    "day",
    "hours",
    "minutes",
    "seconds",
    "pages",
];

pub const DEFAULT_OPERATIONS: &[&str] = &[
    "dried",
    "vacuum-dried",
    "calcined",
    "calcinated",
    "heated",
    "stirred",
    "stirring",
    "sintered",
    "dissolved",
    "washed",
    "sonicated",
    "annealed",
    "cooled",
    "ground",
    "pressed",
    "mixed",
    "added",
    "filtered",
    "aged",
    "centrifuged",
    "milled",
    "evaporated",
    "refluxed",
    "kept",
    "maintained",
    "held",
    "immersed",
    "soaked",
    "weighted",
    "weighed",
    "risen",
    "accumulated",
    "measured",
];

pub const DEFAULT_ARTICLES: &[&str] = &["a", "an", "the"];

pub const DEFAULT_COPULAS: &[&str] = &["is", "are", "was", "were", "been", "be", "being"];

pub const DEFAULT_PREPOSITIONS: &[&str] = &[
    "of", "in", "at", "for", "to", "with", "by", "from", "on", "under", "into", "via", "over", "after", "before",
    "during", "until", "through", "between", "within", "without", "upon", "about", "per", "as",
];

/// Function words skipped when the baseline looks for a measured entity.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "and",
    "or",
    "but",
    "then",
    "than",
    "that",
    "which",
    "this",
    "these",
    "those",
    "it",
    "its",
    "their",
    "has",
    "have",
    "had",
    "also",
    "further",
    "finally",
    "subsequently",
    "thus",
    "respectively",
    "while",
    "where",
    "when",
    "not",
    "no",
    "typical",
    "process",
    "obtain",
    "prepare",
];

/// A list of possibly multi-token entries matched against token streams.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: Vec<Vec<String>>,
    case_insensitive: bool,
}

impl Lexicon {
    pub fn new<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut entries: Vec<Vec<String>> = entries
            .into_iter()
            .map(|e| tokenize(e.as_ref()).into_iter().map(|t| t.text).collect::<Vec<_>>())
            .filter(|e: &Vec<String>| !e.is_empty())
            .collect();
        // longest entries first so matching is greedy
        entries.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        entries.dedup();
        Self {
            entries,
            case_insensitive: false,
        }
    }

    pub fn case_insensitive(mut self) -> Self {
        self.case_insensitive = true;
        self
    }

    pub fn units() -> Self {
        Self::new(DEFAULT_UNITS)
    }

    pub fn operations() -> Self {
        Self::new(DEFAULT_OPERATIONS).case_insensitive()
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        Ok(Self::new(read_list(path)?))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn eq(&self, a: &str, b: &str) -> bool {
        if self.case_insensitive {
            a.to_lowercase() == b.to_lowercase()
        } else {
            a == b
        }
    }

    /// Length in tokens of the longest entry starting at `tokens[at]`.
    pub fn match_at(&self, tokens: &[Token], at: usize) -> Option<usize> {
        self.entries.iter().find_map(|entry| {
            let window = tokens.get(at..at + entry.len())?;
            let no_markers = window.iter().all(|t| !t.is_marker());
            (no_markers && window.iter().zip(entry).all(|(t, e)| self.eq(&t.text, e))).then_some(entry.len())
        })
    }

    /// Length of the longest entry ending at `tokens[end - 1]`.
    pub fn match_ending_at(&self, tokens: &[Token], end: usize) -> Option<usize> {
        self.entries
            .iter()
            .filter(|e| e.len() <= end)
            .find_map(|e| (self.match_at(tokens, end - e.len()) == Some(e.len())).then_some(e.len()))
    }
}

/// Lowercased single-word list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordSet(HashSet<String>);

impl WordSet {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self(words.into_iter().map(|w| w.as_ref().to_lowercase()).collect())
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        Ok(Self::new(read_list(path)?))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(&word.to_lowercase())
    }

    pub fn union(&self, other: &WordSet) -> WordSet {
        WordSet(self.0.union(&other.0).cloned().collect())
    }
}

/// Reads a one-entry-per-line list, ignoring blank lines and `#` comments.
pub fn read_list(path: &Path) -> io::Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_list(&text))
}

pub fn parse_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn longest_unit_wins() {
        let units = Lexicon::units();
        let tokens = tokenize("10 °C per minute");
        assert_eq!(units.match_at(&tokens, 1), Some(3));
        let tokens = tokenize("3 wt.% N");
        assert_eq!(units.match_at(&tokens, 1), Some(3));
        assert_eq!(units.match_ending_at(&tokens, 4), Some(3));
        assert_eq!(units.match_at(&tokens, 0), None);
    }

    #[test]
    fn markers_break_entries() {
        let units = Lexicon::new(["wt%"]);
        assert_eq!(units.match_at(&tokenize("wt%"), 0), Some(2));
        let tokens = vec![
            tokenize("wt")[0].clone(),
            Token::close_marker(),
            tokenize("%")[0].clone(),
        ];
        assert_eq!(units.match_at(&tokens, 0), None);
    }

    #[test]
    fn list_parsing_skips_comments() {
        assert_eq!(parse_list("# units\nmg\n\n  kg \n"), vec!["mg", "kg"]);
    }
}
