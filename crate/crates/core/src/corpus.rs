//! Canonical corpus files, sentence segmentation and source-scheme import.
//!
//! The canonical corpus is JSON Lines with one document per line. Sentence
//! offsets are stored rather than recomputed, so scoring never depends on the
//! segmenter that produced a file.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Document, EntityClass, MeasurementFrame, Sentence, Span, Split};
use crate::text::char_len;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: malformed record at {path}: {message}")]
    Malformed { line: usize, path: String, message: String },
    #[error("line {line}: span-out-of-bounds doc={doc_id} at {field}: {span} exceeds text length {len}")]
    SpanOutOfBounds {
        line: usize,
        doc_id: String,
        field: String,
        span: Span,
        len: usize,
    },
    #[error("line {line}: span-inverted doc={doc_id} at {field}: {span}")]
    SpanInverted {
        line: usize,
        doc_id: String,
        field: String,
        span: Span,
    },
    #[error("line {line}: sentences of doc={doc_id} overlap or are out of order at index {index}")]
    SentenceOrder { line: usize, doc_id: String, index: usize },
    #[error("line {line}: duplicate doc_id {doc_id}")]
    DuplicateDocId { line: usize, doc_id: String },
    #[error("duplicate source entity id {0}")]
    DuplicateEntityId(String),
    #[error("dangling relation endpoint {0}")]
    DanglingRelation(String),
    #[error("invalid mapping table: {0}")]
    InvalidMapping(String),
}

impl CorpusError {
    fn io(path: &Path, source: io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

// ---------------------------------------------------------------------------
// Sentence segmentation

pub const DEFAULT_ABBREVIATIONS: &[&str] = &["Fig.", "et al.", "e.g.", "i.e.", "cf.", "vs.", "ca.", "approx."];

/// Rule-based sentence splitter for scientific prose.
///
/// A boundary is a `.`, `!` or `?` followed by whitespace and then an
/// uppercase letter or digit. No boundary is placed after a protected
/// abbreviation or a single capital initial, nor inside brackets.
#[derive(Debug, Clone)]
pub struct Segmenter {
    abbreviations: Vec<Vec<char>>,
}

impl Default for Segmenter {
    fn default() -> Self {
        Self::new(DEFAULT_ABBREVIATIONS.iter().copied())
    }
}

impl Segmenter {
    pub fn new<I, S>(abbreviations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            abbreviations: abbreviations
                .into_iter()
                .map(|a| a.as_ref().to_lowercase().chars().collect())
                .filter(|a: &Vec<char>| !a.is_empty())
                .collect(),
        }
    }

    pub fn segment(&self, text: &str) -> Vec<Sentence> {
        let chars: Vec<char> = text.chars().collect();
        let mut spans = Vec::new();
        let mut depth: usize = 0;
        let mut start: Option<usize> = None;
        for i in 0..chars.len() {
            let c = chars[i];
            if start.is_none() {
                if c.is_whitespace() {
                    continue;
                }
                start = Some(i);
            }
            match c {
                '(' | '[' | '{' => depth += 1,
                ')' | ']' | '}' => depth = depth.saturating_sub(1),
                '.' | '!' | '?' if depth == 0 && self.is_boundary(&chars, i) => {
                    spans.push(Span::new(start.take().expect("open sentence"), i + 1));
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            let end = chars.iter().rposition(|c| !c.is_whitespace()).map_or(s, |p| p + 1);
            spans.push(Span::new(s, end));
        }
        spans
            .into_iter()
            .enumerate()
            .map(|(index, span)| Sentence { index, span })
            .collect()
    }

    fn is_boundary(&self, chars: &[char], i: usize) -> bool {
        if !chars.get(i + 1).is_some_and(|c| c.is_whitespace()) {
            return false;
        }
        let Some(next) = chars[i + 1..].iter().find(|c| !c.is_whitespace()) else {
            return false;
        };
        if !(next.is_uppercase() || next.is_ascii_digit()) {
            return false;
        }
        chars[i] != '.' || !self.is_protected(chars, i)
    }

    fn is_protected(&self, chars: &[char], dot: usize) -> bool {
        let word_start = chars[..dot]
            .iter()
            .rposition(|c| c.is_whitespace() || matches!(c, '(' | '[' | '{' | '"'))
            .map_or(0, |p| p + 1);
        let word = &chars[word_start..dot];
        if word.len() == 1 && word[0].is_uppercase() {
            return true;
        }
        self.abbreviations.iter().any(|abbr| {
            let n = abbr.len();
            if n > dot + 1 {
                return false;
            }
            let from = dot + 1 - n;
            let matches = chars[from..=dot]
                .iter()
                .zip(abbr)
                .all(|(a, b)| a.to_lowercase().eq(std::iter::once(*b)));
            let clean_left =
                from == 0 || chars[from - 1].is_whitespace() || matches!(chars[from - 1], '(' | '[' | '{' | '"');
            matches && clean_left
        })
    }
}

/// Segments with the default abbreviation list.
pub fn segment_sentences(text: &str) -> Vec<Sentence> {
    Segmenter::default().segment(text)
}

// ---------------------------------------------------------------------------
// Source-scheme import

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceEntity {
    pub id: String,
    #[serde(rename = "type")]
    pub type_label: String,
    #[serde(flatten)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRelation {
    #[serde(rename = "from")]
    pub from_id: String,
    #[serde(rename = "to")]
    pub to_id: String,
    pub label: String,
}

/// Source label to entity class, with one label acting as the quantity root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingTable {
    pub root_label: String,
    pub labels: BTreeMap<String, EntityClass>,
}

const MSP_UNITS: &[&str] = &["Amount-Unit", "Property-Unit", "Apparatus-Unit", "Condition-Unit"];
const MSP_ENTITIES: &[&str] = &[
    "Material",
    "Material-Descriptor",
    "Nonrecipe-Material",
    "Synthesis-Apparatus",
    "Apparatus-Descriptor",
    "Characterization-Apparatus",
    "Property-Misc",
];
const MSP_PROPERTIES: &[&str] = &[
    "Apparatus-Property-Type",
    "Amount-Misc",
    "Property-Type",
    "Condition-Misc",
    "Condition-Type",
];

impl Default for MappingTable {
    /// The materials-synthesis procedural corpus mapping, rooted at `Number`.
    fn default() -> Self {
        let mut labels = BTreeMap::new();
        labels.insert("Number".to_string(), EntityClass::Quantity);
        for (group, class) in [
            (MSP_UNITS, EntityClass::Unit),
            (MSP_ENTITIES, EntityClass::MeasuredEntity),
            (MSP_PROPERTIES, EntityClass::MeasuredProperty),
        ] {
            for label in group {
                labels.insert(label.to_string(), class);
            }
        }
        Self {
            root_label: "Number".to_string(),
            labels,
        }
    }
}

impl MappingTable {
    /// Ensures the root maps to Quantity and no other label does.
    pub fn validate(mut self) -> Result<Self, CorpusError> {
        match self.labels.get(&self.root_label) {
            None => {
                self.labels.insert(self.root_label.clone(), EntityClass::Quantity);
            }
            Some(EntityClass::Quantity) => {}
            Some(other) => {
                return Err(CorpusError::InvalidMapping(format!(
                    "root label {:?} maps to {other}, expected Quantity",
                    self.root_label
                )))
            }
        }
        if let Some((label, _)) = self
            .labels
            .iter()
            .find(|(l, c)| **c == EntityClass::Quantity && **l != self.root_label)
        {
            return Err(CorpusError::InvalidMapping(format!(
                "label {label:?} maps to Quantity but is not the root label"
            )));
        }
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let table: MappingTable = serde_json::from_str(text).map_err(|e| CorpusError::InvalidMapping(e.to_string()))?;
        table.validate()
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn class_of(&self, label: &str) -> Option<EntityClass> {
        self.labels.get(label).copied()
    }
}

/// One frame per root entity, filled by walking the relation graph.
///
/// Relations are followed in both directions up to two hops from the root,
/// without passing through other roots. Per context class the closest hop
/// count wins, then the smallest character gap to the root, then the leftmost
/// span. Unmapped labels are never assigned but may be walked through. A
/// MeasuredProperty with no MeasuredEntity is dropped.
pub fn map_source_annotations(
    entities: &[SourceEntity],
    relations: &[SourceRelation],
    table: &MappingTable,
) -> Result<Vec<MeasurementFrame>, CorpusError> {
    let mut index: HashMap<&str, usize> = HashMap::with_capacity(entities.len());
    for (i, e) in entities.iter().enumerate() {
        if index.insert(e.id.as_str(), i).is_some() {
            return Err(CorpusError::DuplicateEntityId(e.id.clone()));
        }
    }
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); entities.len()];
    for r in relations {
        let from = *index
            .get(r.from_id.as_str())
            .ok_or_else(|| CorpusError::DanglingRelation(r.from_id.clone()))?;
        let to = *index
            .get(r.to_id.as_str())
            .ok_or_else(|| CorpusError::DanglingRelation(r.to_id.clone()))?;
        adjacency[from].push(to);
        adjacency[to].push(from);
    }
    let is_root = |i: usize| entities[i].type_label == table.root_label;

    let mut roots: Vec<usize> = (0..entities.len()).filter(|&i| is_root(i)).collect();
    roots.sort_by_key(|&i| (entities[i].span.start, entities[i].span.end));

    let mut frames = Vec::with_capacity(roots.len());
    for root in roots {
        let root_span = entities[root].span;
        let mut best: BTreeMap<EntityClass, (usize, usize, usize, usize)> = BTreeMap::new();
        let mut seen: HashSet<usize> = HashSet::from([root]);
        let mut queue: VecDeque<(usize, usize)> = VecDeque::from([(root, 0)]);
        while let Some((node, depth)) = queue.pop_front() {
            if depth == 2 || (node != root && is_root(node)) {
                continue;
            }
            for &next in &adjacency[node] {
                if !seen.insert(next) {
                    continue;
                }
                queue.push_back((next, depth + 1));
                let Some(class) = table.class_of(&entities[next].type_label) else {
                    continue;
                };
                if class == EntityClass::Quantity {
                    continue;
                }
                let span = entities[next].span;
                let key = (depth + 1, span.gap(&root_span), span.start, span.end);
                best.entry(class)
                    .and_modify(|k| {
                        if key < *k {
                            *k = key;
                        }
                    })
                    .or_insert(key);
            }
        }
        let mut frame = MeasurementFrame::new(root_span);
        for (class, (_, _, start, end)) in best {
            frame.set(class, Some(Span::new(start, end)));
        }
        if frame.measured_entity.is_none() {
            frame.measured_property = None;
        }
        frames.push(frame);
    }
    Ok(frames)
}

/// One line of a source-annotation import file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub doc_id: String,
    pub text: String,
    #[serde(default)]
    pub entities: Vec<SourceEntity>,
    #[serde(default)]
    pub relations: Vec<SourceRelation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Debug, Clone)]
pub struct ConvertOptions {
    pub table: MappingTable,
    pub segmenter: Segmenter,
    /// When false the whole text becomes one sentence.
    pub segment: bool,
    pub default_domain: String,
}

impl Default for ConvertOptions {
    fn default() -> Self {
        Self {
            table: MappingTable::default(),
            segmenter: Segmenter::default(),
            segment: true,
            default_domain: "custom".to_string(),
        }
    }
}

pub fn parse_source_line(line: &str, line_no: usize) -> Result<SourceDocument, CorpusError> {
    parse_json_line(line, line_no)
}

/// Converts one source record into a canonical document.
pub fn convert_source(
    source: &SourceDocument,
    line_no: usize,
    options: &ConvertOptions,
) -> Result<Document, CorpusError> {
    let len = char_len(&source.text);
    for (i, e) in source.entities.iter().enumerate() {
        check_span(e.span, len, &source.doc_id, line_no, || format!("entities[{i}]"))?;
    }
    let frames = map_source_annotations(&source.entities, &source.relations, &options.table)?;
    let sentences: Vec<Span> = if options.segment {
        options
            .segmenter
            .segment(&source.text)
            .into_iter()
            .map(|s| s.span)
            .collect()
    } else {
        whole_text_span(&source.text).into_iter().collect()
    };
    Ok(Document::new(
        source.doc_id.clone(),
        source.domain.clone().unwrap_or_else(|| options.default_domain.clone()),
        source.split.unwrap_or(Split::Unsplit),
        source.text.clone(),
        sentences,
        frames,
    ))
}

fn whole_text_span(text: &str) -> Option<Span> {
    let chars: Vec<char> = text.chars().collect();
    let start = chars.iter().position(|c| !c.is_whitespace())?;
    let end = chars.iter().rposition(|c| !c.is_whitespace())? + 1;
    Some(Span::new(start, end))
}

pub fn read_source_file(path: &Path) -> Result<Vec<SourceDocument>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_source_line(&line, i + 1)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Canonical corpus

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DocumentRecord {
    doc_id: String,
    domain: String,
    split: Split,
    text: String,
    sentences: Vec<Span>,
    frames: Vec<MeasurementFrame>,
}

fn parse_json_line<T: serde::de::DeserializeOwned>(line: &str, line_no: usize) -> Result<T, CorpusError> {
    let mut de = serde_json::Deserializer::from_str(line);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| CorpusError::Malformed {
        line: line_no,
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    de.end().map_err(|e| CorpusError::Malformed {
        line: line_no,
        path: ".".to_string(),
        message: e.to_string(),
    })?;
    Ok(value)
}

fn check_span(
    span: Span,
    len: usize,
    doc_id: &str,
    line: usize,
    field: impl Fn() -> String,
) -> Result<(), CorpusError> {
    if !span.is_well_formed() {
        return Err(CorpusError::SpanInverted {
            line,
            doc_id: doc_id.to_string(),
            field: field(),
            span,
        });
    }
    if span.end > len {
        return Err(CorpusError::SpanOutOfBounds {
            line,
            doc_id: doc_id.to_string(),
            field: field(),
            span,
            len,
        });
    }
    Ok(())
}

/// Parses and validates one canonical corpus line.
pub fn parse_document_line(line: &str, line_no: usize) -> Result<Document, CorpusError> {
    let record: DocumentRecord = parse_json_line(line, line_no)?;
    let len = char_len(&record.text);
    let id = record.doc_id.as_str();
    let mut previous_end = 0;
    for (i, s) in record.sentences.iter().enumerate() {
        check_span(*s, len, id, line_no, || format!("sentences[{i}]"))?;
        if i > 0 && s.start < previous_end {
            return Err(CorpusError::SentenceOrder {
                line: line_no,
                doc_id: id.to_string(),
                index: i,
            });
        }
        previous_end = s.end;
    }
    for (i, frame) in record.frames.iter().enumerate() {
        for (class, span) in frame.entities() {
            check_span(span, len, id, line_no, || format!("frames[{i}].{}", field_name(class)))?;
        }
    }
    Ok(Document::new(
        record.doc_id,
        record.domain,
        record.split,
        record.text,
        record.sentences,
        record.frames,
    ))
}

fn field_name(class: EntityClass) -> &'static str {
    match class {
        EntityClass::Quantity => "quantity",
        EntityClass::Unit => "unit",
        EntityClass::MeasuredEntity => "measured_entity",
        EntityClass::MeasuredProperty => "measured_property",
    }
}

pub fn read_corpus_from<R: BufRead>(reader: R) -> Result<Vec<Document>, CorpusError> {
    let mut docs = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(Path::new("<reader>"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = parse_document_line(&line, i + 1)?;
        if !ids.insert(doc.doc_id.clone()) {
            return Err(CorpusError::DuplicateDocId {
                line: i + 1,
                doc_id: doc.doc_id,
            });
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn read_corpus(path: &Path) -> Result<Vec<Document>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    read_corpus_from(BufReader::new(file)).map_err(|e| match e {
        CorpusError::Io { source, .. } => CorpusError::io(path, source),
        other => other,
    })
}

/// Canonical single-line JSON for one document.
pub fn document_to_line(doc: &Document) -> String {
    let record = DocumentRecord {
        doc_id: doc.doc_id.clone(),
        domain: doc.domain.clone(),
        split: doc.split,
        text: doc.text.clone(),
        sentences: doc.sentences.iter().map(|s| s.span).collect(),
        frames: doc.frames.clone(),
    };
    serde_json::to_string(&record).expect("document records always serialize")
}

pub fn write_corpus_to<W: Write>(docs: &[Document], out: &mut W) -> io::Result<()> {
    for doc in docs {
        out.write_all(document_to_line(doc).as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_corpus(docs: &[Document], path: &Path) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_corpus_to(docs, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| CorpusError::io(path, e))
}

/// Documents tagged with `split`, in input order.
pub fn split_filter(docs: &[Document], split: Split) -> Vec<Document> {
    docs.iter().filter(|d| d.split == split).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::slice_chars;

    fn sentence_texts(text: &str) -> Vec<&str> {
        segment_sentences(text)
            .iter()
            .map(|s| slice_chars(text, s.span).unwrap())
            .collect()
    }

    #[test]
    fn splits_after_unit_period() {
        assert_eq!(
            sentence_texts("It was dried at 60 °C. Then cooled."),
            vec!["It was dried at 60 °C.", "Then cooled."]
        );
    }

    #[test]
    fn abbreviation_is_protected() {
        assert_eq!(
            sentence_texts("See Fig. 3 for details."),
            vec!["See Fig. 3 for details."]
        );
        assert_eq!(
            sentence_texts("As shown by Smith et al. The result holds. E. Coli grew."),
            vec!["As shown by Smith et al. The result holds.", "E. Coli grew."]
        );
        assert!(segment_sentences("").is_empty());
        assert!(segment_sentences("   ").is_empty());
    }

    #[test]
    fn brackets_and_decimals_do_not_split() {
        assert_eq!(
            sentence_texts("The yield (ca. 5. Note this) was 2.5 g. Next step!  Done?"),
            vec!["The yield (ca. 5. Note this) was 2.5 g.", "Next step!", "Done?"]
        );
        assert_eq!(
            sentence_texts("Values were 3.14 and 2.71."),
            vec!["Values were 3.14 and 2.71."]
        );
        assert_eq!(
            sentence_texts("It rose [12]. Then fell."),
            vec!["It rose [12].", "Then fell."]
        );
    }

    #[test]
    fn lowercase_continuation_does_not_split() {
        assert_eq!(sentence_texts("Add 5 mL. then stir."), vec!["Add 5 mL. then stir."]);
    }

    fn ent(id: &str, label: &str, start: usize, end: usize) -> SourceEntity {
        SourceEntity {
            id: id.into(),
            type_label: label.into(),
            span: Span::new(start, end),
        }
    }

    fn rel(from: &str, to: &str) -> SourceRelation {
        SourceRelation {
            from_id: from.into(),
            to_id: to.into(),
            label: "rel".into(),
        }
    }

    #[test]
    fn maps_unit_and_material() {
        let table = MappingTable::default();
        let frames = map_source_annotations(
            &[
                ent("n", "Number", 0, 3),
                ent("u", "Amount-Unit", 4, 6),
                ent("m", "Material", 10, 15),
            ],
            &[rel("n", "u"), rel("u", "m")],
            &table,
        )
        .unwrap();
        assert_eq!(
            frames,
            vec![MeasurementFrame::new(Span::new(0, 3))
                .with_unit(Span::new(4, 6))
                .with_entity(Span::new(10, 15))]
        );
    }

    #[test]
    fn unmapped_labels_are_dropped() {
        let frames = map_source_annotations(
            &[ent("n", "Number", 0, 3), ent("b", "Brand", 4, 9)],
            &[rel("n", "b")],
            &MappingTable::default(),
        )
        .unwrap();
        assert_eq!(frames, vec![MeasurementFrame::new(Span::new(0, 3))]);
    }

    #[test]
    fn property_without_entity_is_removed() {
        let frames = map_source_annotations(
            &[ent("n", "Number", 0, 3), ent("p", "Condition-Type", 4, 9)],
            &[rel("p", "n")],
            &MappingTable::default(),
        )
        .unwrap();
        assert_eq!(frames, vec![MeasurementFrame::new(Span::new(0, 3))]);
    }

    #[test]
    fn nearest_candidate_wins_and_depth_is_capped() {
        let entities = [
            ent("n", "Number", 20, 22),
            ent("far", "Material", 0, 5),
            ent("near", "Material", 25, 30),
            ent("op", "Operation", 40, 45),
            ent("deep", "Material", 50, 55),
            ent("deeper", "Amount-Unit", 60, 62),
        ];
        let relations = [
            rel("n", "far"),
            rel("n", "near"),
            rel("n", "op"),
            rel("op", "deep"),
            rel("deep", "deeper"),
        ];
        let frames = map_source_annotations(&entities, &relations, &MappingTable::default()).unwrap();
        assert_eq!(frames[0].measured_entity, Some(Span::new(25, 30)));
        assert_eq!(frames[0].unit, None);
    }

    #[test]
    fn one_frame_per_root_without_crossing_roots() {
        let entities = [
            ent("n1", "Number", 0, 2),
            ent("n2", "Number", 10, 12),
            ent("u2", "Amount-Unit", 13, 15),
        ];
        let frames =
            map_source_annotations(&entities, &[rel("n1", "n2"), rel("n2", "u2")], &MappingTable::default()).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].unit, None);
        assert_eq!(frames[1].unit, Some(Span::new(13, 15)));
    }

    #[test]
    fn dangling_relation_names_the_id() {
        let err = map_source_annotations(
            &[ent("n", "Number", 0, 1)],
            &[rel("n", "ghost")],
            &MappingTable::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("ghost"));
    }

    #[test]
    fn mapping_table_rejects_non_quantity_root() {
        let bad = r#"{"root_label": "Value", "labels": {"Value": "Unit"}}"#;
        assert!(MappingTable::from_json(bad).is_err());
        let ok =
            MappingTable::from_json(r#"{"root_label": "Value", "labels": {"Unit": "U", "Property": "MP"}}"#).unwrap();
        assert_eq!(ok.class_of("Value"), Some(EntityClass::Quantity));
        assert_eq!(ok.class_of("Property"), Some(EntityClass::MeasuredProperty));
    }

    const GOOD: &str = r#"{"doc_id":"d1","domain":"msp","split":"test","text":"Dried at 60 °C.","sentences":[{"start":0,"end":15}],"frames":[{"quantity":{"start":9,"end":11},"unit":{"start":12,"end":14},"measured_entity":null,"measured_property":null}]}"#;

    #[test]
    fn canonical_line_round_trips() {
        let doc = parse_document_line(GOOD, 1).unwrap();
        assert_eq!(doc.sentences.len(), 1);
        assert_eq!(document_to_line(&doc), GOOD);
    }

    #[test]
    fn out_of_bounds_names_document() {
        let bad = GOOD.replace(r#""end":14}"#, r#""end":40}"#);
        let err = parse_document_line(&bad, 7).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("span-out-of-bounds doc=d1"), "{msg}");
        assert!(msg.contains("line 7"), "{msg}");
    }

    #[test]
    fn missing_quantity_names_field() {
        let bad = GOOD.replace(r#""quantity":{"start":9,"end":11},"#, "");
        let err = parse_document_line(&bad, 3).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("quantity"), "{msg}");
        assert!(msg.contains("frames[0]"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn duplicate_ids_and_overlapping_sentences_rejected() {
        let two = format!("{GOOD}\n{GOOD}\n");
        assert!(matches!(
            read_corpus_from(two.as_bytes()),
            Err(CorpusError::DuplicateDocId { line: 2, .. })
        ));
        let overlap = GOOD.replace(
            r#""sentences":[{"start":0,"end":15}]"#,
            r#""sentences":[{"start":0,"end":9},{"start":5,"end":15}]"#,
        );
        assert!(matches!(
            parse_document_line(&overlap, 1),
            Err(CorpusError::SentenceOrder { index: 1, .. })
        ));
    }

    #[test]
    fn split_filter_keeps_order() {
        let base = parse_document_line(GOOD, 1).unwrap();
        let splits = [
            Split::Train,
            Split::Dev,
            Split::Train,
            Split::Test,
            Split::Train,
            Split::Train,
            Split::Test,
            Split::Dev,
            Split::Train,
            Split::Train,
        ];
        let docs: Vec<Document> = splits
            .iter()
            .enumerate()
            .map(|(i, s)| Document {
                doc_id: format!("d{i}"),
                split: *s,
                ..base.clone()
            })
            .collect();
        let test: Vec<String> = split_filter(&docs, Split::Test).into_iter().map(|d| d.doc_id).collect();
        assert_eq!(test, vec!["d3", "d6"]);
        assert!(split_filter(&docs, Split::Unsplit).is_empty());
        assert!(split_filter(&[], Split::Test).is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn document() -> impl Strategy<Value = Document> {
            (
                "[a-z]{1,6}",
                "[A-Za-z0-9 .,°~()]{1,80}",
                0usize..4,
                proptest::collection::vec((0usize..80, 1usize..6, 0usize..80, 0usize..80, any::<bool>()), 0..5),
            )
                .prop_map(|(id, text, split, raw)| {
                    let len = char_len(&text);
                    let sentences: Vec<Span> = segment_sentences(&text).into_iter().map(|s| s.span).collect();
                    let clamp = |s: usize, w: usize| {
                        let s = s % len;
                        Span::new(s, (s + w).min(len).max(s + 1))
                    };
                    let frames = raw
                        .into_iter()
                        .map(|(q, w, u, me, with_mp)| {
                            let mut f = MeasurementFrame::new(clamp(q, w)).with_unit(clamp(u, 1));
                            if with_mp {
                                f = f.with_entity(clamp(me, 2)).with_property(clamp(me + 3, 1));
                            }
                            f
                        })
                        .collect();
                    let split = [Split::Train, Split::Dev, Split::Test, Split::Unsplit][split];
                    Document::new(id, "synthetic", split, text, sentences, frames)
                })
        }

        proptest! {
            #[test]
            fn corpus_round_trip(docs in proptest::collection::vec(document(), 0..4)) {
                let mut docs = docs;
                for (i, d) in docs.iter_mut().enumerate() {
                    d.doc_id = format!("{}-{i}", d.doc_id);
                }
                let mut buf = Vec::new();
                write_corpus_to(&docs, &mut buf).unwrap();
                let back = read_corpus_from(buf.as_slice()).unwrap();
                prop_assert_eq!(&back, &docs);
                let mut again = Vec::new();
                write_corpus_to(&back, &mut again).unwrap();
                prop_assert_eq!(again, buf);
            }

            #[test]
            fn segmentation_is_ordered_and_idempotent(text in "[A-Za-z0-9 .!?()]{0,120}") {
                let sentences = segment_sentences(&text);
                let mut prev_end = 0;
                for (i, s) in sentences.iter().enumerate() {
                    prop_assert_eq!(s.index, i);
                    prop_assert!(s.span.is_well_formed());
                    prop_assert!(i == 0 || s.span.start >= prev_end);
                    prev_end = s.span.end;
                    let inner = slice_chars(&text, s.span).unwrap();
                    prop_assert_eq!(segment_sentences(inner).len(), 1);
                }
                let covered: usize = sentences.iter().map(|s| s.span.len()).sum();
                let non_ws = text.chars().filter(|c| !c.is_whitespace()).count();
                prop_assert!(covered >= non_ws);
            }

            #[test]
            fn one_frame_per_root(n_roots in 0usize..5, n_other in 0usize..5, edges in proptest::collection::vec((0usize..10, 0usize..10), 0..12)) {
                let mut entities = Vec::new();
                for i in 0..n_roots {
                    entities.push(ent(&format!("n{i}"), "Number", i * 10, i * 10 + 2));
                }
                let labels = ["Material", "Amount-Unit", "Condition-Type", "Operation", "Brand"];
                for i in 0..n_other {
                    entities.push(ent(&format!("o{i}"), labels[i % labels.len()], 100 + i * 10, 103 + i * 10));
                }
                prop_assume!(!entities.is_empty());
                let relations: Vec<SourceRelation> = edges
                    .iter()
                    .map(|(a, b)| rel(&entities[a % entities.len()].id, &entities[b % entities.len()].id))
                    .collect();
                let frames = map_source_annotations(&entities, &relations, &MappingTable::default()).unwrap();
                prop_assert_eq!(frames.len(), n_roots);
                for f in &frames {
                    prop_assert!(f.measured_property.is_none() || f.measured_entity.is_some());
                }
            }
        }
    }
}
