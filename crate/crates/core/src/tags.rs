//! Offset-preserving tokenization and the IO / BIO tag codecs.
//!
//! Quantities are tagged with a binary IO scheme. Context entities (Unit,
//! MeasuredEntity, MeasuredProperty) are tagged with BIO over a token stream
//! in which one quantity is wrapped in `[Q]` / `[/Q]` marker tokens. Markers
//! carry no span and are always tagged `O`.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use thiserror::Error;

use crate::model::{Document, EntityClass, MeasurementFrame, Span};
use crate::text::{char_len, CharText};

pub const OPEN_MARKER: &str = "[Q]";
pub const CLOSE_MARKER: &str = "[/Q]";

/// Characters split off the edges of whitespace-delimited words.
const EDGE_PUNCT: &[char] = &['.', ',', ';', ':', '(', ')', '[', ']', '{', '}', '"', '!', '?', '%'];

/// Prefixes that stay glued to a following number.
pub const NUMBER_SPECIFIERS: &[char] = &['~', '>', '<', '±', '≥', '≤', '≈'];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub text: String,
    /// Sentence-local span; `None` for marker tokens.
    pub span: Option<Span>,
}

impl Token {
    pub fn new(text: impl Into<String>, span: Span) -> Self {
        Self {
            text: text.into(),
            span: Some(span),
        }
    }

    pub fn open_marker() -> Self {
        Self {
            text: OPEN_MARKER.to_string(),
            span: None,
        }
    }

    pub fn close_marker() -> Self {
        Self {
            text: CLOSE_MARKER.to_string(),
            span: None,
        }
    }

    pub fn is_marker(&self) -> bool {
        self.span.is_none()
    }
}

/// Splits `text` into tokens whose spans index back into `text`.
///
/// Whitespace separates words. Edge punctuation (`.,;:()[]{}"!?%`) is peeled
/// off each word one character at a time; internal punctuation such as
/// hyphens, slashes, decimal points and degree signs stays attached. A word
/// made of a number directly followed by letters (`10h`, `200g`, `60°C`) is
/// split between the number and the unit.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        split_word(&chars, start, i, &mut tokens);
    }
    tokens
}

fn split_word(chars: &[char], start: usize, end: usize, out: &mut Vec<Token>) {
    let mut lo = start;
    let mut hi = end;
    while lo < hi && EDGE_PUNCT.contains(&chars[lo]) {
        out.push(char_token(chars, lo, lo + 1));
        lo += 1;
    }
    let mut trailing = Vec::new();
    while hi > lo && EDGE_PUNCT.contains(&chars[hi - 1]) {
        trailing.push(char_token(chars, hi - 1, hi));
        hi -= 1;
    }
    if lo < hi {
        match number_unit_split(&chars[lo..hi]) {
            Some(cut) => {
                out.push(char_token(chars, lo, lo + cut));
                out.push(char_token(chars, lo + cut, hi));
            }
            None => out.push(char_token(chars, lo, hi)),
        }
    }
    out.extend(trailing.into_iter().rev());
}

fn char_token(chars: &[char], start: usize, end: usize) -> Token {
    Token::new(chars[start..end].iter().collect::<String>(), Span::new(start, end))
}

// `10h` -> 2, `~200g` -> 4, `60°C` -> 2; anything else -> None.
fn number_unit_split(word: &[char]) -> Option<usize> {
    let mut i = 0;
    if i < word.len() && NUMBER_SPECIFIERS.contains(&word[i]) {
        i += 1;
    }
    let digits_start = i;
    while i < word.len() && (word[i].is_ascii_digit() || word[i] == '.' || word[i] == ',') {
        i += 1;
    }
    if i == digits_start || !word[digits_start].is_ascii_digit() || !word[i - 1].is_ascii_digit() {
        return None;
    }
    let cut = i;
    if i < word.len() && word[i] == '°' {
        i += 1;
    }
    let letters = &word[i..];
    if letters.is_empty() || !letters.iter().all(|c| c.is_alphabetic()) {
        return None;
    }
    Some(cut)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    O,
    Q,
    B(EntityClass),
    I(EntityClass),
}

impl Tag {
    pub fn class(&self) -> Option<EntityClass> {
        match self {
            Tag::O => None,
            Tag::Q => Some(EntityClass::Quantity),
            Tag::B(c) | Tag::I(c) => Some(*c),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::O => f.write_str("O"),
            Tag::Q => f.write_str("Q"),
            Tag::B(c) => write!(f, "B-{}", c.abbrev()),
            Tag::I(c) => write!(f, "I-{}", c.abbrev()),
        }
    }
}

impl FromStr for Tag {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let context = |abbrev: &str| match abbrev {
            "U" => Some(EntityClass::Unit),
            "ME" => Some(EntityClass::MeasuredEntity),
            "MP" => Some(EntityClass::MeasuredProperty),
            _ => None,
        };
        match s {
            "O" => Ok(Tag::O),
            "Q" => Ok(Tag::Q),
            _ => {
                let parsed = if let Some(rest) = s.strip_prefix("B-") {
                    context(rest).map(Tag::B)
                } else if let Some(rest) = s.strip_prefix("I-") {
                    context(rest).map(Tag::I)
                } else {
                    None
                };
                parsed.ok_or_else(|| CodecError::UnknownLabel(s.to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Binary inside/outside over quantities.
    IoQ,
    /// Begin/inside/outside over Unit, MeasuredEntity, MeasuredProperty.
    BioUmemp,
}

impl Scheme {
    pub fn allows(&self, tag: Tag) -> bool {
        match (self, tag) {
            (_, Tag::O) => true,
            (Scheme::IoQ, Tag::Q) => true,
            (Scheme::BioUmemp, Tag::B(c) | Tag::I(c)) => c != EntityClass::Quantity,
            _ => false,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::IoQ => "IO-Q",
            Scheme::BioUmemp => "BIO-UMEMP",
        })
    }
}

/// The two tagging stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Quantity,
    Context,
}

impl Task {
    pub fn scheme(&self) -> Scheme {
        match self {
            Task::Quantity => Scheme::IoQ,
            Task::Context => Scheme::BioUmemp,
        }
    }

    pub fn number(&self) -> u8 {
        match self {
            Task::Quantity => 1,
            Task::Context => 2,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Task::Quantity),
            2 => Some(Task::Context),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("span {span} lies outside the sentence (length {len})")]
    SpanOutOfSentence { span: Span, len: usize },
    #[error("span {span} covers no token")]
    NoCoveringToken { span: Span },
    #[error("{tags} tags for {tokens} tokens")]
    LengthMismatch { tokens: usize, tags: usize },
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("label {label} is not legal in scheme {scheme}")]
    IllegalLabel { label: String, scheme: Scheme },
    #[error("{first} and {second} share token {token}")]
    Collision {
        first: EntityClass,
        second: EntityClass,
        token: usize,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSequence {
    pub tokens: Vec<Token>,
    pub tags: Vec<Tag>,
    pub scheme: Scheme,
    pub quantity_markers: Option<(usize, usize)>,
}

impl TagSequence {
    pub fn new(
        tokens: Vec<Token>,
        tags: Vec<Tag>,
        scheme: Scheme,
        quantity_markers: Option<(usize, usize)>,
    ) -> Result<Self, CodecError> {
        let seq = Self {
            tokens,
            tags,
            scheme,
            quantity_markers,
        };
        seq.check()?;
        Ok(seq)
    }

    /// Parses label strings (`O`, `Q`, `B-U`, `I-ME`, ...).
    pub fn from_labels<S: AsRef<str>>(
        tokens: Vec<Token>,
        labels: &[S],
        scheme: Scheme,
        quantity_markers: Option<(usize, usize)>,
    ) -> Result<Self, CodecError> {
        let tags = labels
            .iter()
            .map(|l| l.as_ref().parse())
            .collect::<Result<Vec<Tag>, _>>()?;
        Self::new(tokens, tags, scheme, quantity_markers)
    }

    pub fn check(&self) -> Result<(), CodecError> {
        if self.tokens.len() != self.tags.len() {
            return Err(CodecError::LengthMismatch {
                tokens: self.tokens.len(),
                tags: self.tags.len(),
            });
        }
        if let Some(bad) = self.tags.iter().find(|t| !self.scheme.allows(**t)) {
            return Err(CodecError::IllegalLabel {
                label: bad.to_string(),
                scheme: self.scheme,
            });
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<String> {
        self.tags.iter().map(Tag::to_string).collect()
    }
}

/// First and last token index intersecting `span`.
pub fn covering_tokens(tokens: &[Token], span: Span) -> Option<(usize, usize)> {
    let mut hit = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.span.is_some_and(|s| s.overlaps(&span)))
        .map(|(i, _)| i);
    let first = hit.next()?;
    let last = hit.next_back().unwrap_or(first);
    Some((first, last))
}

/// Widens `span` to the boundaries of the tokens it touches.
pub fn snap_span(tokens: &[Token], span: Span) -> Result<Span, CodecError> {
    let (first, last) = covering_tokens(tokens, span).ok_or(CodecError::NoCoveringToken { span })?;
    let snapped = Span::new(
        tokens[first].span.expect("original token").start,
        tokens[last].span.expect("original token").end,
    );
    if snapped != span {
        warn!("span {span} snapped to token boundaries {snapped}");
    }
    Ok(snapped)
}

fn check_in_sentence(span: Span, len: usize) -> Result<(), CodecError> {
    if !span.is_well_formed() || span.end > len {
        return Err(CodecError::SpanOutOfSentence { span, len });
    }
    Ok(())
}

/// IO tags over the tokens of `sentence_text`.
pub fn encode_task1(sentence_text: &str, quantities: &[Span]) -> Result<TagSequence, CodecError> {
    let len = char_len(sentence_text);
    let tokens = tokenize(sentence_text);
    for q in quantities {
        check_in_sentence(*q, len)?;
        snap_span(&tokens, *q)?;
    }
    let tags = tokens
        .iter()
        .map(|t| {
            let span = t.span.expect("original token");
            if quantities.iter().any(|q| q.overlaps(&span)) {
                Tag::Q
            } else {
                Tag::O
            }
        })
        .collect();
    TagSequence::new(tokens, tags, Scheme::IoQ, None)
}

/// Inserts `[Q]` / `[/Q]` around the tokens covering `q`.
///
/// Returns the enriched stream and the indices of the two markers in it.
pub fn enrich_tokens(tokens: &[Token], q: Span) -> Result<(Vec<Token>, (usize, usize)), CodecError> {
    let (first, last) = covering_tokens(tokens, q).ok_or(CodecError::NoCoveringToken { span: q })?;
    let mut out = Vec::with_capacity(tokens.len() + 2);
    out.extend_from_slice(&tokens[..first]);
    out.push(Token::open_marker());
    out.extend_from_slice(&tokens[first..=last]);
    out.push(Token::close_marker());
    out.extend_from_slice(&tokens[last + 1..]);
    Ok((out, (first, last + 2)))
}

pub fn enrich_with_quantity(sentence_text: &str, q: Span) -> Result<(Vec<Token>, (usize, usize)), CodecError> {
    check_in_sentence(q, char_len(sentence_text))?;
    enrich_tokens(&tokenize(sentence_text), q)
}

/// What to do when two context classes claim the same token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverlapPolicy {
    #[default]
    Reject,
    /// Unit wins over MeasuredProperty, which wins over MeasuredEntity.
    Priority,
}

const PRIORITY: [EntityClass; 3] = [
    EntityClass::Unit,
    EntityClass::MeasuredProperty,
    EntityClass::MeasuredEntity,
];

/// BIO tags for one frame's context around its quantity.
pub fn encode_task2(sentence_text: &str, frame: &MeasurementFrame) -> Result<TagSequence, CodecError> {
    encode_task2_with(sentence_text, frame, OverlapPolicy::Reject)
}

pub fn encode_task2_with(
    sentence_text: &str,
    frame: &MeasurementFrame,
    policy: OverlapPolicy,
) -> Result<TagSequence, CodecError> {
    let len = char_len(sentence_text);
    for (_, span) in frame.entities() {
        check_in_sentence(span, len)?;
    }
    let tokens = tokenize(sentence_text);
    encode_context(&tokens, frame, policy)
}

/// [`encode_task2_with`] over an existing token stream.
pub fn encode_context(
    tokens: &[Token],
    frame: &MeasurementFrame,
    policy: OverlapPolicy,
) -> Result<TagSequence, CodecError> {
    let mut owner: Vec<Option<EntityClass>> = vec![None; tokens.len()];
    for class in PRIORITY {
        let Some(span) = frame.get(class) else { continue };
        let (first, last) = covering_tokens(tokens, span).ok_or(CodecError::NoCoveringToken { span })?;
        snap_span(tokens, span)?;
        for (i, slot) in owner.iter_mut().enumerate().take(last + 1).skip(first) {
            match (*slot, policy) {
                (None, _) => *slot = Some(class),
                (Some(prior), OverlapPolicy::Reject) => {
                    return Err(CodecError::Collision {
                        first: prior,
                        second: class,
                        token: i,
                    })
                }
                (Some(prior), OverlapPolicy::Priority) => {
                    warn!("token {i} claimed by {prior} and {class}; keeping {prior}");
                }
            }
        }
    }
    let (enriched, markers) = enrich_tokens(tokens, frame.quantity)?;
    let mut tags = Vec::with_capacity(enriched.len());
    let mut original = 0;
    let mut previous: Option<EntityClass> = None;
    for token in &enriched {
        if token.is_marker() {
            tags.push(Tag::O);
            continue;
        }
        let tag = match owner[original] {
            None => Tag::O,
            Some(c) if previous == Some(c) => Tag::I(c),
            Some(c) => Tag::B(c),
        };
        previous = owner[original];
        original += 1;
        tags.push(tag);
    }
    TagSequence::new(enriched, tags, Scheme::BioUmemp, Some(markers))
}

/// Turns a tag sequence back into class-labelled spans, in textual order.
///
/// Marker tokens are skipped, so a run may continue across them. Under BIO an
/// `I-X` that follows `O` or a different class opens a new span.
pub fn decode_tags(seq: &TagSequence) -> Result<Vec<(EntityClass, Span)>, CodecError> {
    seq.check()?;
    let mut spans: Vec<(EntityClass, Span)> = Vec::new();
    let mut open: Option<(EntityClass, Span)> = None;
    for (token, tag) in seq.tokens.iter().zip(&seq.tags) {
        let Some(span) = token.span else { continue };
        let (class, starts) = match *tag {
            Tag::O => {
                spans.extend(open.take());
                continue;
            }
            Tag::Q => (EntityClass::Quantity, false),
            Tag::B(c) => (c, true),
            Tag::I(c) => (c, false),
        };
        match open {
            Some((c, ref mut s)) if c == class && !starts => s.end = span.end,
            _ => {
                spans.extend(open.take());
                open = Some((class, span));
            }
        }
    }
    spans.extend(open);
    spans.sort_by_key(|(c, s)| (s.start, s.end, *c));
    Ok(spans)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExportStats {
    pub samples: usize,
    pub skipped: usize,
}

/// Writes `TOKEN<TAB>TAG` lines, one blank line between samples.
///
/// Task 1 emits one sample per sentence; task 2 one sample per frame whose
/// quantity lies in the sentence, with the markers inline. Frames that cannot
/// be encoded are skipped with a warning.
pub fn export_training<W: Write>(docs: &[Document], task: Task, out: &mut W) -> Result<ExportStats, CodecError> {
    let mut stats = ExportStats::default();
    let mut emit = |seq: &TagSequence, out: &mut W| -> io::Result<()> {
        if stats.samples > 0 {
            out.write_all(b"\n")?;
        }
        for (token, tag) in seq.tokens.iter().zip(&seq.tags) {
            writeln!(out, "{}\t{}", token.text, tag)?;
        }
        stats.samples += 1;
        Ok(())
    };
    for doc in docs {
        let text = CharText::new(&doc.text);
        for sentence in &doc.sentences {
            let Some(sentence_text) = text.slice(sentence.span) else {
                continue;
            };
            let offset = sentence.span.start;
            let local: Vec<MeasurementFrame> = local_frames(doc, sentence.index, offset);
            match task {
                Task::Quantity => {
                    let tokens = tokenize(sentence_text);
                    if tokens.is_empty() {
                        continue;
                    }
                    let quantities: Vec<Span> = local
                        .iter()
                        .map(|f| f.quantity)
                        .filter(|q| {
                            let ok = covering_tokens(&tokens, *q).is_some();
                            if !ok {
                                warn!("doc {}: quantity {q} covers no token, dropped", doc.doc_id);
                                stats.skipped += 1;
                            }
                            ok
                        })
                        .collect();
                    let seq = encode_task1(sentence_text, &quantities)?;
                    emit(&seq, out)?;
                }
                Task::Context => {
                    for frame in &local {
                        match encode_task2_with(sentence_text, frame, OverlapPolicy::Priority) {
                            Ok(seq) => emit(&seq, out)?,
                            Err(CodecError::Io(e)) => return Err(e.into()),
                            Err(e) => {
                                warn!("doc {}: frame at {} skipped: {e}", doc.doc_id, frame.quantity);
                                stats.skipped += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(stats)
}

/// Frames rooted in sentence `index`, re-based to sentence-local offsets.
/// Context spans outside the sentence are dropped.
pub(crate) fn local_frames(doc: &Document, index: usize, offset: usize) -> Vec<MeasurementFrame> {
    let mut frames: Vec<MeasurementFrame> = doc
        .frames
        .iter()
        .filter(|f| doc.sentence_of(f.quantity) == Some(index))
        .map(|f| {
            let mut local = MeasurementFrame::new(f.quantity.relative_to(offset).expect("inside sentence"));
            for class in EntityClass::CONTEXT {
                if let Some(span) = f.get(class) {
                    if doc.sentence_of(span) == Some(index) {
                        local.set(class, span.relative_to(offset));
                    } else {
                        warn!("doc {}: cross-sentence {class} {span} dropped", doc.doc_id);
                    }
                }
            }
            local
        })
        .collect();
    frames.sort_by_key(|f| (f.quantity.start, f.quantity.end));
    frames
}

pub fn export_training_file(docs: &[Document], task: Task, path: &Path) -> Result<ExportStats, CodecError> {
    let mut out = BufWriter::new(File::create(path)?);
    let stats = export_training(docs, task, &mut out)?;
    out.flush()?;
    Ok(stats)
}
