//! Two-stage cascading extraction.
//!
//! Stage one tags quantities with IO labels. For every decoded quantity the
//! sentence is re-tokenized with `[Q]`/`[/Q]` markers around it and stage two
//! tags Unit, MeasuredEntity and MeasuredProperty with BIO labels. Frames are
//! then assembled by picking, per class, the candidate closest to the
//! quantity.
//!
//! Taggers are pluggable: a rule baseline, a lexicon baseline, a reader for
//! externally produced predictions, and an oracle that replays gold frames.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::LazyLock;

use log::warn;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{Lexicon, WordSet, DEFAULT_ARTICLES, DEFAULT_COPULAS, DEFAULT_PREPOSITIONS, DEFAULT_STOPWORDS};
use crate::model::{Document, EntityClass, MeasurementFrame, Span};
use crate::tags::{
    covering_tokens, decode_tags, enrich_tokens, local_frames, snap_span, tokenize, CodecError, Scheme, Tag,
    TagSequence, Task, Token, NUMBER_SPECIFIERS,
};
use crate::text::CharText;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("input to the context tagger carries no quantity markers")]
    MissingMarkers,
    #[error("no prediction record for doc={doc_id} sentence={sentence_index} task={task}{}", fmt_quantity(.quantity))]
    MissingRecord {
        doc_id: String,
        sentence_index: usize,
        task: u8,
        quantity: Option<Span>,
    },
    #[error("dangling-quantity: task 2 record doc={doc_id} sentence={sentence_index} quantity={quantity} has no task 1 counterpart")]
    DanglingQuantity {
        doc_id: String,
        sentence_index: usize,
        quantity: Span,
    },
    #[error("duplicate prediction record doc={doc_id} sentence={sentence_index} task={task}{}", fmt_quantity(.quantity))]
    DuplicateRecord {
        doc_id: String,
        sentence_index: usize,
        task: u8,
        quantity: Option<Span>,
    },
    #[error("line {line}: malformed prediction record at {path}: {message}")]
    Malformed { line: usize, path: String, message: String },
    #[error("tagger contract violated: {0}")]
    Contract(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn fmt_quantity(q: &Option<Span>) -> String {
    q.map(|q| format!(" quantity={q}")).unwrap_or_default()
}

/// Everything a tagger may look at for one tagging call.
#[derive(Debug, Clone, Copy)]
pub struct TagRequest<'a> {
    pub doc_id: &'a str,
    pub sentence_index: usize,
    pub sentence_text: &'a str,
    pub task: Task,
    /// Plain tokens for task 1, marker-enriched tokens for task 2.
    pub tokens: &'a [Token],
    /// Sentence-local quantity the request is conditioned on (task 2).
    pub quantity: Option<Span>,
    pub markers: Option<(usize, usize)>,
}

/// A token classifier for one of the two stages.
///
/// Implementations must return exactly one tag per request token, using
/// labels legal for the task's scheme.
pub trait Tagger: Send + Sync {
    fn tag(&self, request: &TagRequest<'_>) -> Result<TagSequence, PipelineError>;
}

impl<T: Tagger + ?Sized> Tagger for &T {
    fn tag(&self, request: &TagRequest<'_>) -> Result<TagSequence, PipelineError> {
        (**self).tag(request)
    }
}

impl<T: Tagger + ?Sized> Tagger for Box<T> {
    fn tag(&self, request: &TagRequest<'_>) -> Result<TagSequence, PipelineError> {
        (**self).tag(request)
    }
}

// ---------------------------------------------------------------------------
// Rule-based quantity tagger

static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[~<>±≥≤≈]?[+\-−]?\d+(?:[.,]\d+)*(?:[eE][+\-−]?\d+)?$").unwrap());
static RANGE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[~<>±≥≤≈]?[+\-−]?\d+(?:[.,]\d+)*(?:[-–−]|to)\d+(?:[.,]\d+)*$").unwrap());
static RATIO: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d+(?:[.,]\d+)?(?::\d+(?:[.,]\d+)?)+$").unwrap());
static EXPONENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[x×]10\^?[+\-−]?\d*$").unwrap());

fn is_numeric(text: &str) -> bool {
    NUMBER.is_match(text) || RANGE.is_match(text) || RATIO.is_match(text)
}

/// Tags numbers, ranges, ratios and their specifiers as quantities.
///
/// Also absorbs a parenthesised power of ten after a number (`(x10-4)`) and
/// list continuations (`200, 300 or 400 ml`) when the list ends in a unit.
/// Bracketed citation numbers (`[12]`) are skipped.
#[derive(Debug, Clone)]
pub struct RuleQuantityTagger {
    units: Lexicon,
}

impl Default for RuleQuantityTagger {
    fn default() -> Self {
        Self::new(Lexicon::units())
    }
}

impl RuleQuantityTagger {
    pub fn new(units: Lexicon) -> Self {
        Self { units }
    }

    pub fn tag_tokens(&self, tokens: &[Token]) -> Result<TagSequence, CodecError> {
        let n = tokens.len();
        let text = |i: usize| tokens[i].text.as_str();
        let numeric: Vec<bool> = (0..n)
            .map(|i| is_numeric(text(i)) && !(i > 0 && i + 1 < n && text(i - 1) == "[" && text(i + 1) == "]"))
            .collect();
        let mut q = numeric.clone();
        for i in 0..n {
            if !numeric[i] {
                continue;
            }
            if i > 0 && text(i - 1).chars().count() == 1 && text(i - 1).chars().all(|c| NUMBER_SPECIFIERS.contains(&c))
            {
                q[i - 1] = true;
            }
            if i + 3 < n && text(i + 1) == "(" && EXPONENT.is_match(text(i + 2)) && text(i + 3) == ")" {
                q[i + 1..=i + 3].fill(true);
            }
        }
        let connector = |i: usize| matches!(text(i), "," | "or");
        let mut i = 0;
        while i < n {
            if !numeric[i] {
                i += 1;
                continue;
            }
            let mut end = i;
            loop {
                let mut j = end + 1;
                let mut hops = 0;
                while j < n && connector(j) && hops < 2 {
                    j += 1;
                    hops += 1;
                }
                if hops > 0 && j < n && numeric[j] {
                    end = j;
                } else {
                    break;
                }
            }
            if end > i && self.units.match_at(tokens, end + 1).is_some() {
                q[i..=end].fill(true);
            }
            i = end + 1;
        }
        let tags = q.into_iter().map(|b| if b { Tag::Q } else { Tag::O }).collect();
        TagSequence::new(tokens.to_vec(), tags, Scheme::IoQ, None)
    }
}

impl Tagger for RuleQuantityTagger {
    fn tag(&self, request: &TagRequest<'_>) -> Result<TagSequence, PipelineError> {
        Ok(self.tag_tokens(request.tokens)?)
    }
}

// ---------------------------------------------------------------------------
// Lexicon context tagger

/// Heuristic context tagger.
///
/// * Unit: a unit-lexicon match right after `[/Q]`, or at the end of the
///   marked quantity.
/// * MeasuredProperty: the operation-lexicon match nearest to the quantity.
/// * MeasuredEntity: the closest run of content words left of the property
///   (or of the quantity), falling back to the first run right of it.
#[derive(Debug, Clone)]
pub struct LexiconContextTagger {
    units: Lexicon,
    operations: Lexicon,
    stopwords: WordSet,
}

impl Default for LexiconContextTagger {
    fn default() -> Self {
        Self::new(Lexicon::units(), Lexicon::operations())
    }
}

const MAX_ENTITY_TOKENS: usize = 6;

impl LexiconContextTagger {
    pub fn new(units: Lexicon, operations: Lexicon) -> Self {
        let stopwords = WordSet::new(DEFAULT_ARTICLES)
            .union(&WordSet::new(DEFAULT_COPULAS))
            .union(&WordSet::new(DEFAULT_PREPOSITIONS))
            .union(&WordSet::new(DEFAULT_STOPWORDS));
        Self {
            units,
            operations: operations.case_insensitive(),
            stopwords,
        }
    }

    pub fn with_stopwords(mut self, stopwords: WordSet) -> Self {
        self.stopwords = stopwords;
        self
    }

    fn is_content(&self, token: &Token, claimed: bool) -> bool {
        !claimed
            && !token.is_marker()
            && token.text.chars().any(char::is_alphabetic)
            && !self.stopwords.contains(&token.text)
            && !(token.text.ends_with("ly") && token.text.chars().all(|c| c.is_lowercase()))
    }

    pub fn tag_enriched(
        &self,
        tokens: &[Token],
        markers: Option<(usize, usize)>,
    ) -> Result<TagSequence, PipelineError> {
        let (open, close) = markers
            .or_else(|| {
                let open = tokens.iter().position(|t| t.is_marker())?;
                let close = tokens.iter().rposition(|t| t.is_marker())?;
                (open < close).then_some((open, close))
            })
            .ok_or(PipelineError::MissingMarkers)?;
        if open >= close || close >= tokens.len() || !tokens[open].is_marker() || !tokens[close].is_marker() {
            return Err(PipelineError::MissingMarkers);
        }
        let n = tokens.len();
        let mut owner: Vec<Option<EntityClass>> = vec![None; n];

        // unit
        let unit = match self.units.match_at(tokens, close + 1) {
            Some(len) => Some((close + 1, close + 1 + len)),
            None if close - open > 2 => self
                .units
                .match_ending_at(tokens, close)
                .filter(|len| close - len > open + 1)
                .map(|len| (close - len, close)),
            None => None,
        };
        if let Some((a, b)) = unit {
            owner[a..b].fill(Some(EntityClass::Unit));
        }

        // property: nearest operation word outside the quantity, left side wins ties
        let mut best: Option<(usize, bool, usize, usize)> = None;
        let mut i = 0;
        while i < n {
            if (open..=close).contains(&i) || owner[i].is_some() {
                i += 1;
                continue;
            }
            if let Some(len) = self.operations.match_at(tokens, i) {
                let end = i + len;
                if owner[i..end].iter().all(Option::is_none) && !(i..end).any(|k| (open..=close).contains(&k)) {
                    let (dist, right) = if end <= open {
                        (open - end, true)
                    } else {
                        (i - close, false)
                    };
                    let key = (dist, right, i, end);
                    if best.is_none_or(|b| (key.0, key.1) < (b.0, b.1)) {
                        best = Some(key);
                    }
                }
                i = end;
            } else {
                i += 1;
            }
        }
        let property = best.map(|(_, _, a, b)| (a, b));
        if let Some((a, b)) = property {
            owner[a..b].fill(Some(EntityClass::MeasuredProperty));
        }

        // entity: content run left of the anchor, else right of the quantity
        let anchor = match property {
            Some((a, _)) if a < open => a,
            _ => open,
        };
        let is_op = |k: usize| self.operations.match_at(tokens, k).is_some();
        let left = {
            let mut k = anchor;
            while k > 0 && !self.is_content(&tokens[k - 1], owner[k - 1].is_some()) {
                k -= 1;
            }
            let end = k;
            while k > 0
                && end - k < MAX_ENTITY_TOKENS
                && self.is_content(&tokens[k - 1], owner[k - 1].is_some())
                && !is_op(k - 1)
            {
                k -= 1;
            }
            (k < end).then_some((k, end))
        };
        let entity = left.or_else(|| {
            let mut k = unit.map_or(close + 1, |(_, b)| b);
            while k < n && !(self.is_content(&tokens[k], owner[k].is_some()) && !is_op(k)) {
                k += 1;
            }
            let start = k;
            while k < n && k - start < MAX_ENTITY_TOKENS && self.is_content(&tokens[k], owner[k].is_some()) && !is_op(k)
            {
                k += 1;
            }
            (start < k).then_some((start, k))
        });
        if let Some((a, b)) = entity {
            owner[a..b].fill(Some(EntityClass::MeasuredEntity));
        }

        let mut tags = Vec::with_capacity(n);
        let mut previous = None;
        for (k, token) in tokens.iter().enumerate() {
            if token.is_marker() {
                tags.push(Tag::O);
                continue;
            }
            tags.push(match owner[k] {
                None => Tag::O,
                Some(c) if previous == Some(c) => Tag::I(c),
                Some(c) => Tag::B(c),
            });
            previous = owner[k];
        }
        Ok(TagSequence::new(
            tokens.to_vec(),
            tags,
            Scheme::BioUmemp,
            Some((open, close)),
        )?)
    }
}

impl Tagger for LexiconContextTagger {
    fn tag(&self, request: &TagRequest<'_>) -> Result<TagSequence, PipelineError> {
        self.tag_enriched(request.tokens, request.markers)
    }
}

// ---------------------------------------------------------------------------
// Spans to tags

/// Tags over `tokens` for a set of sentence-local spans.
///
/// IO marks every token touched by a span. BIO starts a new run at the first
/// token of each span; where spans collide the earlier span keeps the token.
/// Spans covering no token are dropped with a warning.
pub fn tags_from_spans(tokens: &[Token], spans: &[(EntityClass, Span)], scheme: Scheme) -> Vec<Tag> {
    let mut owner: Vec<Option<(usize, EntityClass)>> = vec![None; tokens.len()];
    for (id, (class, span)) in spans.iter().enumerate() {
        if scheme == Scheme::IoQ && *class != EntityClass::Quantity
            || scheme == Scheme::BioUmemp && *class == EntityClass::Quantity
        {
            warn!("{class} span {span} is not part of scheme {scheme}; ignored");
            continue;
        }
        if snap_span(tokens, *span).is_err() {
            warn!("{class} span {span} covers no token; ignored");
            continue;
        }
        for (k, token) in tokens.iter().enumerate() {
            if token.span.is_some_and(|s| s.overlaps(span)) && owner[k].is_none() {
                owner[k] = Some((id, *class));
            }
        }
    }
    let mut previous: Option<usize> = None;
    let mut tags = Vec::with_capacity(tokens.len());
    for (k, token) in tokens.iter().enumerate() {
        if token.is_marker() {
            tags.push(Tag::O);
            continue;
        }
        tags.push(match (scheme, owner[k]) {
            (_, None) => Tag::O,
            (Scheme::IoQ, Some(_)) => Tag::Q,
            (Scheme::BioUmemp, Some((id, c))) if previous == Some(id) => Tag::I(c),
            (Scheme::BioUmemp, Some((_, c))) => Tag::B(c),
        });
        previous = owner[k].map(|(id, _)| id);
    }
    tags
}

// ---------------------------------------------------------------------------
// Prediction interchange

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PredictedSpan {
    pub class: EntityClass,
    pub start: usize,
    pub end: usize,
}

impl PredictedSpan {
    pub fn span(&self) -> Span {
        Span::new(self.start, self.end)
    }
}

/// One line of a prediction interchange file. Offsets are sentence-local.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub doc_id: String,
    pub sentence_index: usize,
    pub task: u8,
    #[serde(default)]
    pub quantity: Option<Span>,
    #[serde(default)]
    pub spans: Vec<PredictedSpan>,
}

type RecordKey = (String, usize, u8, Option<Span>);

/// Indexed, validated prediction records.
#[derive(Debug, Clone, Default)]
pub struct PredictionFile {
    records: HashMap<RecordKey, Vec<(EntityClass, Span)>>,
}

impl PredictionFile {
    pub fn new(records: Vec<PredictionRecord>) -> Result<Self, PipelineError> {
        let mut index: HashMap<RecordKey, Vec<(EntityClass, Span)>> = HashMap::new();
        for r in records {
            let task = Task::from_number(r.task)
                .ok_or_else(|| PipelineError::Contract(format!("task must be 1 or 2, got {}", r.task)))?;
            if task == Task::Context && r.quantity.is_none() {
                return Err(PipelineError::Contract(format!(
                    "task 2 record doc={} sentence={} lacks a quantity",
                    r.doc_id, r.sentence_index
                )));
            }
            let quantity = if task == Task::Quantity { None } else { r.quantity };
            let key = (r.doc_id.clone(), r.sentence_index, r.task, quantity);
            if index.contains_key(&key) {
                return Err(PipelineError::DuplicateRecord {
                    doc_id: r.doc_id,
                    sentence_index: r.sentence_index,
                    task: r.task,
                    quantity,
                });
            }
            index.insert(key, r.spans.iter().map(|s| (s.class, s.span())).collect());
        }
        for (doc_id, sentence_index, task, quantity) in index.keys() {
            let Some(q) = quantity.filter(|_| *task == 2) else {
                continue;
            };
            let parent = index.get(&(doc_id.clone(), *sentence_index, 1, None));
            let found =
                parent.is_some_and(|spans| spans.iter().any(|(c, s)| *c == EntityClass::Quantity && s.overlaps(&q)));
            if !found {
                return Err(PipelineError::DanglingQuantity {
                    doc_id: doc_id.clone(),
                    sentence_index: *sentence_index,
                    quantity: q,
                });
            }
        }
        Ok(Self { records: index })
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, PipelineError> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(parse_prediction_line(&line, i + 1)?);
        }
        Self::new(records)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn lookup(&self, request: &TagRequest<'_>) -> Result<&[(EntityClass, Span)], PipelineError> {
        let task = request.task.number();
        let missing = || PipelineError::MissingRecord {
            doc_id: request.doc_id.to_string(),
            sentence_index: request.sentence_index,
            task,
            quantity: request.quantity,
        };
        match request.task {
            Task::Quantity => self
                .records
                .get(&(request.doc_id.to_string(), request.sentence_index, 1, None))
                .map(Vec::as_slice)
                .ok_or_else(missing),
            Task::Context => {
                let q = request.quantity.ok_or_else(missing)?;
                let key = (request.doc_id.to_string(), request.sentence_index, 2, Some(q));
                if let Some(spans) = self.records.get(&key) {
                    return Ok(spans);
                }
                // a recorded quantity that snaps onto the same tokens
                let target = covering_tokens(request.tokens, q);
                let mut candidates: Vec<(&Span, &Vec<(EntityClass, Span)>)> = self
                    .records
                    .iter()
                    .filter(|((d, s, t, _), _)| d == request.doc_id && *s == request.sentence_index && *t == 2)
                    .filter_map(|((_, _, _, rq), spans)| rq.as_ref().map(|rq| (rq, spans)))
                    .filter(|(rq, _)| covering_tokens(request.tokens, **rq) == target)
                    .collect();
                candidates.sort_by_key(|(rq, _)| **rq);
                candidates
                    .first()
                    .map(|(_, spans)| spans.as_slice())
                    .ok_or_else(missing)
            }
        }
    }
}

pub fn parse_prediction_line(line: &str, line_no: usize) -> Result<PredictionRecord, PipelineError> {
    let mut de = serde_json::Deserializer::from_str(line);
    let record: PredictionRecord = serde_path_to_error::deserialize(&mut de).map_err(|e| PipelineError::Malformed {
        line: line_no,
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    de.end().map_err(|e| PipelineError::Malformed {
        line: line_no,
        path: ".".to_string(),
        message: e.to_string(),
    })?;
    Ok(record)
}

/// Interchange records describing `frames` (document offsets) for `doc`.
///
/// Emits one task-1 record per sentence and one task-2 record per frame
/// rooted in a sentence.
pub fn frames_to_predictions(doc: &Document, frames: &[MeasurementFrame]) -> Vec<PredictionRecord> {
    let view = doc.with_frames(frames.to_vec());
    let mut out = Vec::new();
    for sentence in &doc.sentences {
        let local = local_frames(&view, sentence.index, sentence.span.start);
        out.push(PredictionRecord {
            doc_id: doc.doc_id.clone(),
            sentence_index: sentence.index,
            task: 1,
            quantity: None,
            spans: local
                .iter()
                .map(|f| PredictedSpan {
                    class: EntityClass::Quantity,
                    start: f.quantity.start,
                    end: f.quantity.end,
                })
                .collect(),
        });
        for f in &local {
            out.push(PredictionRecord {
                doc_id: doc.doc_id.clone(),
                sentence_index: sentence.index,
                task: 2,
                quantity: Some(f.quantity),
                spans: f
                    .entities()
                    .filter(|(c, _)| *c != EntityClass::Quantity)
                    .map(|(class, s)| PredictedSpan {
                        class,
                        start: s.start,
                        end: s.end,
                    })
                    .collect(),
            });
        }
    }
    out
}

pub fn write_predictions<W: Write>(records: &[PredictionRecord], out: &mut W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_predictions_file(records: &[PredictionRecord], path: &Path) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_predictions(records, &mut out)?;
    out.flush()
}

/// Replays spans from a prediction interchange file.
#[derive(Debug, Clone)]
pub struct FileBackedTagger {
    predictions: PredictionFile,
}

impl FileBackedTagger {
    pub fn new(predictions: PredictionFile) -> Self {
        Self { predictions }
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        Ok(Self::new(PredictionFile::load(path)?))
    }
}

impl Tagger for FileBackedTagger {
    fn tag(&self, request: &TagRequest<'_>) -> Result<TagSequence, PipelineError> {
        let spans = self.predictions.lookup(request)?;
        let scheme = request.task.scheme();
        let tags = tags_from_spans(request.tokens, spans, scheme);
        Ok(TagSequence::new(
            request.tokens.to_vec(),
            tags,
            scheme,
            request.markers,
        )?)
    }
}

/// Replays the frames of gold documents; used to check the pipeline itself.
#[derive(Debug, Clone, Default)]
pub struct OracleTagger {
    // doc_id -> sentence index -> sentence-local frames
    frames: HashMap<String, BTreeMap<usize, Vec<MeasurementFrame>>>,
}

impl OracleTagger {
    pub fn new(gold: &[Document]) -> Self {
        let frames = gold
            .iter()
            .map(|doc| {
                let per_sentence = doc
                    .sentences
                    .iter()
                    .map(|s| (s.index, local_frames(doc, s.index, s.span.start)))
                    .collect();
                (doc.doc_id.clone(), per_sentence)
            })
            .collect();
        Self { frames }
    }
}

impl Tagger for OracleTagger {
    fn tag(&self, request: &TagRequest<'_>) -> Result<TagSequence, PipelineError> {
        let frames = self
            .frames
            .get(request.doc_id)
            .and_then(|m| m.get(&request.sentence_index))
            .map(Vec::as_slice)
            .unwrap_or_default();
        let scheme = request.task.scheme();
        let spans: Vec<(EntityClass, Span)> = match request.task {
            Task::Quantity => frames.iter().map(|f| (EntityClass::Quantity, f.quantity)).collect(),
            Task::Context => frames
                .iter()
                .find(|f| Some(f.quantity) == request.quantity)
                .map(|f| f.entities().filter(|(c, _)| *c != EntityClass::Quantity).collect())
                .unwrap_or_default(),
        };
        let tags = tags_from_spans(request.tokens, &spans, scheme);
        Ok(TagSequence::new(
            request.tokens.to_vec(),
            tags,
            scheme,
            request.markers,
        )?)
    }
}

// ---------------------------------------------------------------------------
// Assembly and extraction

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assembly {
    pub frame: MeasurementFrame,
    pub warnings: Vec<String>,
}

/// Builds a frame from decoded context spans, keeping per class the
/// candidate nearest to `q` (ties: leftmost).
pub fn assemble_frame(q: Span, decoded: &[(EntityClass, Span)]) -> Assembly {
    let mut frame = MeasurementFrame::new(q);
    let mut warnings = Vec::new();
    for class in EntityClass::CONTEXT {
        let mut candidates: Vec<Span> = decoded.iter().filter(|(c, _)| *c == class).map(|(_, s)| *s).collect();
        candidates.sort_by_key(|s| (s.gap(&q), s.start, s.end));
        if let Some((keep, rest)) = candidates.split_first() {
            frame.set(class, Some(*keep));
            for dropped in rest {
                warnings.push(format!("discarded {class} candidate {dropped} in favour of {keep}"));
            }
        }
    }
    if frame.measured_property.is_some() && frame.measured_entity.is_none() {
        warnings.push("MP-without-ME".to_string());
    }
    Assembly { frame, warnings }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Serial,
    Parallel,
}

fn checked(seq: TagSequence, request: &TagRequest<'_>) -> Result<TagSequence, PipelineError> {
    if seq.tags.len() != request.tokens.len() {
        return Err(PipelineError::Contract(format!(
            "task {} tagger returned {} tags for {} tokens (doc={} sentence={})",
            request.task.number(),
            seq.tags.len(),
            request.tokens.len(),
            request.doc_id,
            request.sentence_index
        )));
    }
    let expected = request.task.scheme();
    if let Some(bad) = seq.tags.iter().find(|t| !expected.allows(**t)) {
        return Err(PipelineError::Contract(format!(
            "task {} tagger emitted {bad}, not legal in {expected}",
            request.task.number()
        )));
    }
    // decode against the request's tokens, not whatever the tagger echoed
    Ok(TagSequence::new(
        request.tokens.to_vec(),
        seq.tags,
        expected,
        request.markers,
    )?)
}

fn extract_sentence(
    doc: &Document,
    text: &CharText<'_>,
    index: usize,
    task1: &dyn Tagger,
    task2: &dyn Tagger,
) -> Result<Vec<MeasurementFrame>, PipelineError> {
    let sentence = doc.sentences[index];
    let Some(sentence_text) = text.slice(sentence.span) else {
        return Ok(Vec::new());
    };
    let tokens = tokenize(sentence_text);
    if tokens.is_empty() {
        return Ok(Vec::new());
    }
    let request = TagRequest {
        doc_id: &doc.doc_id,
        sentence_index: index,
        sentence_text,
        task: Task::Quantity,
        tokens: &tokens,
        quantity: None,
        markers: None,
    };
    let quantities = decode_tags(&checked(task1.tag(&request)?, &request)?)?;
    let mut frames = Vec::with_capacity(quantities.len());
    for (_, q) in quantities {
        let (enriched, markers) = enrich_tokens(&tokens, q)?;
        let request = TagRequest {
            doc_id: &doc.doc_id,
            sentence_index: index,
            sentence_text,
            task: Task::Context,
            tokens: &enriched,
            quantity: Some(q),
            markers: Some(markers),
        };
        let decoded = decode_tags(&checked(task2.tag(&request)?, &request)?)?;
        let assembly = assemble_frame(q, &decoded);
        for w in &assembly.warnings {
            warn!("doc {} sentence {index}: {w}", doc.doc_id);
        }
        frames.push(assembly.frame.shifted(sentence.span.start));
    }
    Ok(frames)
}

/// Runs both stages over every sentence of `doc`.
///
/// Frames come back in (sentence, quantity start) order, one per decoded
/// quantity.
pub fn extract(doc: &Document, task1: &dyn Tagger, task2: &dyn Tagger) -> Result<Vec<MeasurementFrame>, PipelineError> {
    extract_with(doc, task1, task2, Execution::Serial)
}

pub fn extract_with(
    doc: &Document,
    task1: &dyn Tagger,
    task2: &dyn Tagger,
    execution: Execution,
) -> Result<Vec<MeasurementFrame>, PipelineError> {
    let text = CharText::new(&doc.text);
    let per_sentence: Vec<Vec<MeasurementFrame>> = match execution {
        Execution::Serial => (0..doc.sentences.len())
            .map(|i| extract_sentence(doc, &text, i, task1, task2))
            .collect::<Result<_, _>>()?,
        Execution::Parallel => (0..doc.sentences.len())
            .into_par_iter()
            .map(|i| extract_sentence(doc, &text, i, task1, task2))
            .collect::<Result<_, _>>()?,
    };
    Ok(per_sentence.into_iter().flatten().collect())
}

/// Replaces every document's frames with extracted ones.
pub fn extract_corpus(
    docs: &[Document],
    task1: &dyn Tagger,
    task2: &dyn Tagger,
    execution: Execution,
) -> Result<Vec<Document>, PipelineError> {
    let run = |doc: &Document| extract_with(doc, task1, task2, Execution::Serial).map(|f| doc.with_frames(f));
    match execution {
        Execution::Serial => docs.iter().map(run).collect(),
        Execution::Parallel => docs.par_iter().map(run).collect(),
    }
}
