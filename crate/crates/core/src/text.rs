//! Character-offset helpers.
//!
//! Every offset in this crate counts Unicode scalar values, not bytes, so
//! that files produced here line up with tools written in other languages.

use crate::model::Span;

/// Number of Unicode scalar values in `text`.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// A string with a precomputed char-to-byte table.
#[derive(Debug, Clone)]
pub struct CharText<'a> {
    text: &'a str,
    // byte offset of every char boundary, including the final one
    bounds: Vec<usize>,
}

impl<'a> CharText<'a> {
    pub fn new(text: &'a str) -> Self {
        let mut bounds: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        bounds.push(text.len());
        Self { text, bounds }
    }

    pub fn as_str(&self) -> &'a str {
        self.text
    }

    pub fn len_chars(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn byte_offset(&self, char_idx: usize) -> Option<usize> {
        self.bounds.get(char_idx).copied()
    }

    /// Slice by character span; `None` when the span is malformed or out of range.
    pub fn slice(&self, span: Span) -> Option<&'a str> {
        if span.start > span.end {
            return None;
        }
        let start = self.byte_offset(span.start)?;
        let end = self.byte_offset(span.end)?;
        Some(&self.text[start..end])
    }

    /// Character index of a byte offset that falls on a char boundary.
    pub fn char_index(&self, byte: usize) -> Option<usize> {
        self.bounds.binary_search(&byte).ok()
    }
}

/// Slice `text` by a character span, returning `None` if out of range.
pub fn slice_chars(text: &str, span: Span) -> Option<&str> {
    CharText::new(text).slice(span)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slices_by_scalar_value() {
        let t = CharText::new("at 60 °C.");
        assert_eq!(t.len_chars(), 9);
        assert_eq!(t.slice(Span::new(6, 8)), Some("°C"));
        assert_eq!(t.slice(Span::new(6, 10)), None);
        assert_eq!(t.char_index(t.byte_offset(8).unwrap()), Some(8));
    }
}
