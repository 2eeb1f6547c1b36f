//! Annotation guideline checks over canonical documents.

use std::fmt;
use std::io::{self, Write};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{WordSet, DEFAULT_ARTICLES, DEFAULT_COPULAS, DEFAULT_PREPOSITIONS};
use crate::model::{validate_frame_len, Document, EntityClass, Span, ViolationKind};
use crate::tags::{tokenize, NUMBER_SPECIFIERS};
use crate::text::CharText;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RuleInfo {
    pub id: &'static str,
    pub severity: Severity,
    pub description: &'static str,
    /// Guideline topic the rule encodes.
    pub anchor: &'static str,
}

pub const ROOT_REQUIRED: &str = "ROOT-REQUIRED";
pub const MP_NEEDS_ME: &str = "MP-NEEDS-ME";
pub const SPAN_EXTENT: &str = "A2-SPAN-EXTENT";
pub const SPECIFIER: &str = "B1-SPECIFIER";
pub const NOT_A_UNIT: &str = "A6-NOT-A-UNIT";
pub const ABBREVIATION: &str = "B7-ABBREV";
pub const CLOSEST_MENTION: &str = "A3-CLOSEST-MENTION";

static CATALOG: [RuleInfo; 7] = [
    RuleInfo {
        id: ROOT_REQUIRED,
        severity: Severity::Error,
        description: "every frame is rooted in a usable Quantity span",
        anchor: "the quantity is the root entity of each sample",
    },
    RuleInfo {
        id: MP_NEEDS_ME,
        severity: Severity::Error,
        description: "a MeasuredProperty requires a MeasuredEntity",
        anchor: "data model cardinalities",
    },
    RuleInfo {
        id: SPAN_EXTENT,
        severity: Severity::Warning,
        description: "entity and property spans do not start or end with an article, copula or preposition",
        anchor: "span extent of entities and properties",
    },
    RuleInfo {
        id: SPECIFIER,
        severity: Severity::Warning,
        description: "a specifier such as ~, >, < or ± directly before a quantity belongs to the quantity",
        anchor: "number specifiers",
    },
    RuleInfo {
        id: NOT_A_UNIT,
        severity: Severity::Warning,
        description: "pH and ratios are not units",
        anchor: "unit definition",
    },
    RuleInfo {
        id: ABBREVIATION,
        severity: Severity::Warning,
        description: "a parenthesised abbreviation right after an entity is part of its span",
        anchor: "abbreviations",
    },
    RuleInfo {
        id: CLOSEST_MENTION,
        severity: Severity::Warning,
        description: "when an entity is mentioned several times, the mention closest to the quantity is annotated",
        anchor: "closest mention",
    },
];

static DOCUMENTATION_ONLY: [RuleInfo; 5] = [
    RuleInfo {
        id: "A4-PART-WHOLE",
        severity: Severity::Warning,
        description: "the measured entity of a part-whole construction is the part",
        anchor: "part-whole relations",
    },
    RuleInfo {
        id: "A5-NON-NOUN-PROPERTY",
        severity: Severity::Warning,
        description: "properties may be verbs or adjectives, not only nouns",
        anchor: "non-noun properties",
    },
    RuleInfo {
        id: "B3-OPERATION-SPAN",
        severity: Severity::Warning,
        description: "an operation used as property spans only the operation word",
        anchor: "operations as properties",
    },
    RuleInfo {
        id: "B4-AMBIVALENT",
        severity: Severity::Warning,
        description: "ambivalent relations are resolved towards the most specific entity",
        anchor: "ambivalent relations and coreference",
    },
    RuleInfo {
        id: "B4-TRANSFORMATION",
        severity: Severity::Warning,
        description: "for transformations the entity is the resulting material",
        anchor: "transformations",
    },
];

/// The automated rules, in a stable order.
pub fn rule_catalog() -> &'static [RuleInfo] {
    &CATALOG
}

/// Guideline rules that need human judgement; they have no check.
pub fn documentation_rules() -> &'static [RuleInfo] {
    &DOCUMENTATION_ONLY
}

pub fn rule(id: &str) -> Option<&'static RuleInfo> {
    CATALOG.iter().find(|r| r.id == id)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintFinding {
    pub doc_id: String,
    pub rule_id: String,
    pub severity: Severity,
    pub start: Option<usize>,
    pub end: Option<usize>,
    pub message: String,
}

impl LintFinding {
    fn new(doc_id: &str, rule_id: &'static str, span: Option<Span>, message: String) -> Self {
        let info = rule(rule_id).expect("rule ids come from the catalog");
        Self {
            doc_id: doc_id.to_string(),
            rule_id: rule_id.to_string(),
            severity: info.severity,
            start: span.map(|s| s.start),
            end: span.map(|s| s.end),
            message,
        }
    }

    pub fn span(&self) -> Option<Span> {
        Some(Span::new(self.start?, self.end?))
    }
}

impl fmt::Display for LintFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} {}", self.doc_id, self.severity, self.rule_id)?;
        if let Some(s) = self.span() {
            write!(f, " {s}")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LintError {
    #[error("doc={doc_id}: frame {frame}: {message}")]
    MalformedSpan {
        doc_id: String,
        frame: usize,
        message: String,
    },
}

static ABBREV: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*\(([A-Za-z0-9\-]+)\)").unwrap());

/// Linter with configurable stoplists.
#[derive(Debug, Clone)]
pub struct Linter {
    boundary_words: WordSet,
}

impl Default for Linter {
    fn default() -> Self {
        Self::new(
            WordSet::new(DEFAULT_ARTICLES),
            WordSet::new(DEFAULT_COPULAS),
            WordSet::new(DEFAULT_PREPOSITIONS),
        )
    }
}

fn is_abbreviation(s: &str) -> bool {
    s.chars().next().is_some_and(char::is_uppercase) && s.chars().filter(|c| c.is_uppercase()).count() >= 2
}

fn word_boundary(chars: &[char], start: usize, end: usize) -> bool {
    let before = start == 0 || !chars[start - 1].is_alphanumeric();
    let after = end == chars.len() || !chars[end].is_alphanumeric();
    before && after
}

impl Linter {
    pub fn new(articles: WordSet, copulas: WordSet, prepositions: WordSet) -> Self {
        Self {
            boundary_words: articles.union(&copulas).union(&prepositions),
        }
    }

    /// Applies the rule catalog to every frame of `doc`.
    ///
    /// Findings come back ordered by frame, then catalog order. A context
    /// span that is inverted or outside the text means the document does not
    /// parse, which is reported as an error instead of a finding.
    pub fn lint_document(&self, doc: &Document) -> Result<Vec<LintFinding>, LintError> {
        let text = CharText::new(&doc.text);
        let chars: Vec<char> = doc.text.chars().collect();
        let len = chars.len();
        let mut out = Vec::new();
        for (i, frame) in doc.frames.iter().enumerate() {
            let report = validate_frame_len(frame, len);
            let mut root_ok = true;
            for v in &report.violations {
                match v.kind {
                    ViolationKind::SpanInverted(EntityClass::Quantity)
                    | ViolationKind::SpanOutOfBounds(EntityClass::Quantity) => {
                        root_ok = false;
                    }
                    ViolationKind::SpanInverted(_) | ViolationKind::SpanOutOfBounds(_) => {
                        return Err(LintError::MalformedSpan {
                            doc_id: doc.doc_id.clone(),
                            frame: i,
                            message: v.message.clone(),
                        });
                    }
                    ViolationKind::MpWithoutMe => {}
                }
            }
            if !root_ok {
                out.push(LintFinding::new(
                    &doc.doc_id,
                    ROOT_REQUIRED,
                    None,
                    format!("frame {i} has no usable Quantity span {}", frame.quantity),
                ));
                continue;
            }
            if report.violations.iter().any(|v| v.kind == ViolationKind::MpWithoutMe) {
                out.push(LintFinding::new(
                    &doc.doc_id,
                    MP_NEEDS_ME,
                    frame.measured_property,
                    format!("frame {i}: MeasuredProperty without a MeasuredEntity"),
                ));
            }

            let surface = |s: Span| text.slice(s).unwrap_or("");
            for class in [EntityClass::MeasuredEntity, EntityClass::MeasuredProperty] {
                let Some(span) = frame.get(class) else { continue };
                let tokens = tokenize(surface(span));
                for (edge, token) in [("starts", tokens.first()), ("ends", tokens.last())] {
                    if let Some(t) = token.filter(|t| self.boundary_words.contains(&t.text)) {
                        out.push(LintFinding::new(
                            &doc.doc_id,
                            SPAN_EXTENT,
                            Some(span),
                            format!("{class} {:?} {edge} with {:?}", surface(span), t.text),
                        ));
                    }
                }
            }

            let q = frame.quantity;
            if q.start > 0 && NUMBER_SPECIFIERS.contains(&chars[q.start - 1]) {
                out.push(LintFinding::new(
                    &doc.doc_id,
                    SPECIFIER,
                    Some(q),
                    format!(
                        "specifier {:?} before quantity {:?} is outside the span",
                        chars[q.start - 1],
                        surface(q)
                    ),
                ));
            }

            if let Some(u) = frame.unit {
                let t = surface(u);
                if t == "pH" || t.to_lowercase().contains("ratio") {
                    out.push(LintFinding::new(
                        &doc.doc_id,
                        NOT_A_UNIT,
                        Some(u),
                        format!("{t:?} is not a unit"),
                    ));
                }
            }

            for (class, span) in frame.entities() {
                let rest: String = chars[span.end..].iter().take(40).collect();
                if let Some(m) = ABBREV.captures(&rest) {
                    if is_abbreviation(&m[1]) {
                        out.push(LintFinding::new(
                            &doc.doc_id,
                            ABBREVIATION,
                            Some(span),
                            format!(
                                "{class} {:?} is followed by abbreviation ({}) outside its span",
                                surface(span),
                                &m[1]
                            ),
                        ));
                    }
                }
            }

            if let Some(me) = frame.measured_entity {
                let sentence = doc.sentence_of(me).filter(|s| Some(*s) == doc.sentence_of(q));
                if let Some(index) = sentence {
                    let bounds = doc.sentences[index].span;
                    let needle: Vec<char> = surface(me).chars().collect();
                    let gap = me.gap(&q);
                    let closer = (bounds.start..=bounds.end.saturating_sub(needle.len()))
                        .map(|s| Span::new(s, s + needle.len()))
                        .filter(|s| *s != me)
                        .filter(|s| chars[s.start..s.end] == needle[..] && word_boundary(&chars, s.start, s.end))
                        .find(|s| s.gap(&q) < gap);
                    if let Some(c) = closer {
                        out.push(LintFinding::new(
                            &doc.doc_id,
                            CLOSEST_MENTION,
                            Some(me),
                            format!("{:?} also occurs at {c}, closer to the quantity {q}", surface(me)),
                        ));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// [`Linter::lint_document`] with the shipped stoplists.
pub fn lint_document(doc: &Document) -> Result<Vec<LintFinding>, LintError> {
    Linter::default().lint_document(doc)
}

pub fn write_findings_jsonl<W: Write>(findings: &[LintFinding], out: &mut W) -> io::Result<()> {
    for f in findings {
        serde_json::to_writer(&mut *out, f)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
