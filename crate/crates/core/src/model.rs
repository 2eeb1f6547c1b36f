//! Spans, entity classes, measurement frames and documents.
//!
//! A [`MeasurementFrame`] is rooted at exactly one Quantity and carries at
//! most one Unit, MeasuredEntity and MeasuredProperty. Relations are not
//! stored; they follow from which optional slots are filled (see
//! [`frame_relations`]).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{char_len, CharText};

/// Half-open character interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub const fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `start < end`.
    pub fn is_well_formed(&self) -> bool {
        self.start < self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// Number of shared characters.
    pub fn intersection_len(&self, other: &Span) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        hi.saturating_sub(lo)
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    /// Characters between the nearer boundaries; 0 when the spans overlap or touch.
    pub fn gap(&self, other: &Span) -> usize {
        other
            .start
            .saturating_sub(self.end)
            .max(self.start.saturating_sub(other.end))
    }

    pub fn shifted(&self, offset: usize) -> Span {
        Span::new(self.start + offset, self.end + offset)
    }

    /// Re-bases the span onto a window starting at `offset`.
    pub fn relative_to(&self, offset: usize) -> Option<Span> {
        Some(Span::new(
            self.start.checked_sub(offset)?,
            self.end.checked_sub(offset)?,
        ))
    }

    /// Smallest span covering both.
    pub fn cover(&self, other: &Span) -> Span {
        Span::new(self.start.min(other.start), self.end.max(other.end))
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.start, self.end)
    }
}

/// The four annotated entity classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityClass {
    #[serde(alias = "Q")]
    Quantity,
    #[serde(alias = "U")]
    Unit,
    #[serde(alias = "ME")]
    MeasuredEntity,
    #[serde(alias = "MP")]
    MeasuredProperty,
}

impl EntityClass {
    pub const ALL: [EntityClass; 4] = [
        EntityClass::Quantity,
        EntityClass::Unit,
        EntityClass::MeasuredEntity,
        EntityClass::MeasuredProperty,
    ];

    /// Context classes predicted by the second tagging stage.
    pub const CONTEXT: [EntityClass; 3] = [
        EntityClass::Unit,
        EntityClass::MeasuredEntity,
        EntityClass::MeasuredProperty,
    ];

    pub fn abbrev(self) -> &'static str {
        match self {
            EntityClass::Quantity => "Q",
            EntityClass::Unit => "U",
            EntityClass::MeasuredEntity => "ME",
            EntityClass::MeasuredProperty => "MP",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EntityClass::Quantity => "Quantity",
            EntityClass::Unit => "Unit",
            EntityClass::MeasuredEntity => "MeasuredEntity",
            EntityClass::MeasuredProperty => "MeasuredProperty",
        }
    }
}

impl fmt::Display for EntityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown entity class {0:?}")]
pub struct UnknownClass(pub String);

impl FromStr for EntityClass {
    type Err = UnknownClass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Quantity" | "Q" => Ok(EntityClass::Quantity),
            "Unit" | "U" => Ok(EntityClass::Unit),
            "MeasuredEntity" | "ME" => Ok(EntityClass::MeasuredEntity),
            "MeasuredProperty" | "MP" => Ok(EntityClass::MeasuredProperty),
            other => Err(UnknownClass(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationType {
    HasQuantity,
    HasProperty,
}

impl RelationType {
    pub const ALL: [RelationType; 2] = [RelationType::HasQuantity, RelationType::HasProperty];
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelationType::HasQuantity => f.write_str("HasQuantity"),
            RelationType::HasProperty => f.write_str("HasProperty"),
        }
    }
}

/// A typed edge between two slots of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Relation {
    pub source: EntityClass,
    pub relation: RelationType,
    pub target: EntityClass,
}

/// One quantity and its context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MeasurementFrame {
    pub quantity: Span,
    pub unit: Option<Span>,
    pub measured_entity: Option<Span>,
    pub measured_property: Option<Span>,
}

impl MeasurementFrame {
    pub fn new(quantity: Span) -> Self {
        Self {
            quantity,
            unit: None,
            measured_entity: None,
            measured_property: None,
        }
    }

    pub fn with_unit(mut self, span: Span) -> Self {
        self.unit = Some(span);
        self
    }

    pub fn with_entity(mut self, span: Span) -> Self {
        self.measured_entity = Some(span);
        self
    }

    pub fn with_property(mut self, span: Span) -> Self {
        self.measured_property = Some(span);
        self
    }

    pub fn get(&self, class: EntityClass) -> Option<Span> {
        match class {
            EntityClass::Quantity => Some(self.quantity),
            EntityClass::Unit => self.unit,
            EntityClass::MeasuredEntity => self.measured_entity,
            EntityClass::MeasuredProperty => self.measured_property,
        }
    }

    pub fn set(&mut self, class: EntityClass, span: Option<Span>) {
        match class {
            EntityClass::Quantity => {
                if let Some(span) = span {
                    self.quantity = span;
                }
            }
            EntityClass::Unit => self.unit = span,
            EntityClass::MeasuredEntity => self.measured_entity = span,
            EntityClass::MeasuredProperty => self.measured_property = span,
        }
    }

    /// Present slots in class order, quantity first.
    pub fn entities(&self) -> impl Iterator<Item = (EntityClass, Span)> + '_ {
        EntityClass::ALL
            .into_iter()
            .filter_map(move |c| self.get(c).map(|s| (c, s)))
    }

    pub fn shifted(&self, offset: usize) -> Self {
        Self {
            quantity: self.quantity.shifted(offset),
            unit: self.unit.map(|s| s.shifted(offset)),
            measured_entity: self.measured_entity.map(|s| s.shifted(offset)),
            measured_property: self.measured_property.map(|s| s.shifted(offset)),
        }
    }

    pub fn relative_to(&self, offset: usize) -> Option<Self> {
        let rel = |s: Option<Span>| match s {
            Some(s) => s.relative_to(offset).map(Some),
            None => Some(None),
        };
        Some(Self {
            quantity: self.quantity.relative_to(offset)?,
            unit: rel(self.unit)?,
            measured_entity: rel(self.measured_entity)?,
            measured_property: rel(self.measured_property)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    MpWithoutMe,
    SpanInverted(EntityClass),
    SpanOutOfBounds(EntityClass),
}

impl ViolationKind {
    pub fn rule_id(&self) -> &'static str {
        match self {
            ViolationKind::MpWithoutMe => "MP-without-ME",
            ViolationKind::SpanInverted(_) => "span-inverted",
            ViolationKind::SpanOutOfBounds(_) => "span-out-of-bounds",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl Violation {
    pub fn rule_id(&self) -> &'static str {
        self.kind.rule_id()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn rule_ids(&self) -> Vec<&'static str> {
        self.violations.iter().map(Violation::rule_id).collect()
    }
}

/// Checks cardinality and span invariants of `frame` against `text`.
pub fn validate_frame(frame: &MeasurementFrame, text: &str) -> ValidationReport {
    validate_frame_len(frame, char_len(text))
}

pub(crate) fn validate_frame_len(frame: &MeasurementFrame, text_len: usize) -> ValidationReport {
    let mut violations = structural_violations(frame);
    for (class, span) in frame.entities() {
        if span.is_well_formed() && span.end > text_len {
            violations.push(Violation {
                kind: ViolationKind::SpanOutOfBounds(class),
                message: format!("{class} span {span} exceeds text length {text_len}"),
            });
        }
    }
    ValidationReport { violations }
}

fn structural_violations(frame: &MeasurementFrame) -> Vec<Violation> {
    let mut violations = Vec::new();
    for (class, span) in frame.entities() {
        if !span.is_well_formed() {
            violations.push(Violation {
                kind: ViolationKind::SpanInverted(class),
                message: format!("{class} span {span} must satisfy start < end"),
            });
        }
    }
    if frame.measured_property.is_some() && frame.measured_entity.is_none() {
        violations.push(Violation {
            kind: ViolationKind::MpWithoutMe,
            message: "MeasuredProperty present without a MeasuredEntity".to_string(),
        });
    }
    violations
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid frame: {}", .0.join(", "))]
pub struct InvalidFrame(pub Vec<&'static str>);

/// Relation edges implied by the filled slots of a frame.
pub fn frame_relations(frame: &MeasurementFrame) -> Result<Vec<Relation>, InvalidFrame> {
    let violations = structural_violations(frame);
    if !violations.is_empty() {
        return Err(InvalidFrame(violations.iter().map(Violation::rule_id).collect()));
    }
    let edge = |source, relation, target| Relation {
        source,
        relation,
        target,
    };
    Ok(match (frame.measured_entity, frame.measured_property) {
        (Some(_), Some(_)) => vec![
            edge(
                EntityClass::MeasuredEntity,
                RelationType::HasProperty,
                EntityClass::MeasuredProperty,
            ),
            edge(
                EntityClass::MeasuredProperty,
                RelationType::HasQuantity,
                EntityClass::Quantity,
            ),
        ],
        (Some(_), None) => vec![edge(
            EntityClass::MeasuredEntity,
            RelationType::HasQuantity,
            EntityClass::Quantity,
        )],
        _ => Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
    Unsplit,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            "unsplit" => Ok(Split::Unsplit),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
            Split::Unsplit => "unsplit",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Sentence {
    pub index: usize,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub domain: String,
    pub split: Split,
    pub text: String,
    pub sentences: Vec<Sentence>,
    pub frames: Vec<MeasurementFrame>,
}

impl Document {
    /// Builds a document whose sentences come from `spans`, indexed in order.
    pub fn new(
        doc_id: impl Into<String>,
        domain: impl Into<String>,
        split: Split,
        text: impl Into<String>,
        spans: impl IntoIterator<Item = Span>,
        frames: Vec<MeasurementFrame>,
    ) -> Self {
        Self {
            doc_id: doc_id.into(),
            domain: domain.into(),
            split,
            text: text.into(),
            sentences: spans
                .into_iter()
                .enumerate()
                .map(|(index, span)| Sentence { index, span })
                .collect(),
            frames,
        }
    }

    pub fn char_len(&self) -> usize {
        char_len(&self.text)
    }

    pub fn sentence_text(&self, index: usize) -> Option<&str> {
        let sentence = self.sentences.get(index)?;
        CharText::new(&self.text).slice(sentence.span)
    }

    /// Index of the sentence that fully contains `span`.
    pub fn sentence_of(&self, span: Span) -> Option<usize> {
        self.sentences.iter().find(|s| s.span.contains(&span)).map(|s| s.index)
    }

    /// True when the frame's slots do not all sit in the same sentence.
    pub fn is_cross_sentence(&self, frame: &MeasurementFrame) -> bool {
        let home = self.sentence_of(frame.quantity);
        home.is_none() || frame.entities().any(|(_, s)| self.sentence_of(s) != home)
    }

    /// Same document with a different frame list.
    pub fn with_frames(&self, frames: Vec<MeasurementFrame>) -> Self {
        Self { frames, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standalone_quantity_is_valid() {
        let text = "The patient weighted ~100 pounds.";
        let frame = MeasurementFrame::new(Span::new(21, 25));
        assert!(validate_frame(&frame, text).is_valid());
        assert_eq!(crate::text::slice_chars(text, frame.quantity), Some("~100"));
    }

    #[test]
    fn property_without_entity_is_flagged() {
        let frame = MeasurementFrame::new(Span::new(0, 3)).with_property(Span::new(10, 16));
        let report = validate_frame(&frame, "0123456789abcdefghij");
        assert_eq!(report.rule_ids(), vec!["MP-without-ME"]);
    }

    #[test]
    fn inverted_span_is_flagged() {
        let frame = MeasurementFrame::new(Span::new(5, 2));
        let report = validate_frame(&frame, "0123456789");
        assert_eq!(report.rule_ids(), vec!["span-inverted"]);
    }

    #[test]
    fn out_of_bounds_span_is_flagged() {
        let frame = MeasurementFrame::new(Span::new(0, 2)).with_unit(Span::new(3, 12));
        let report = validate_frame(&frame, "0123456789");
        assert_eq!(report.rule_ids(), vec!["span-out-of-bounds"]);
    }

    #[test]
    fn relations_follow_filled_slots() {
        let q = Span::new(0, 3);
        let full = MeasurementFrame::new(q)
            .with_unit(Span::new(4, 6))
            .with_entity(Span::new(10, 12))
            .with_property(Span::new(13, 15));
        let rels = frame_relations(&full).unwrap();
        assert_eq!(
            rels,
            vec![
                Relation {
                    source: EntityClass::MeasuredEntity,
                    relation: RelationType::HasProperty,
                    target: EntityClass::MeasuredProperty
                },
                Relation {
                    source: EntityClass::MeasuredProperty,
                    relation: RelationType::HasQuantity,
                    target: EntityClass::Quantity
                },
            ]
        );

        let me_only = MeasurementFrame::new(q).with_entity(Span::new(10, 12));
        assert_eq!(
            frame_relations(&me_only).unwrap(),
            vec![Relation {
                source: EntityClass::MeasuredEntity,
                relation: RelationType::HasQuantity,
                target: EntityClass::Quantity
            }]
        );
        assert!(frame_relations(&MeasurementFrame::new(q)).unwrap().is_empty());

        let bad = MeasurementFrame::new(q).with_property(Span::new(4, 5));
        assert!(frame_relations(&bad).is_err());
    }

    #[test]
    fn gap_and_containment() {
        let a = Span::new(10, 20);
        let b = Span::new(25, 30);
        assert_eq!(a.gap(&b), 5);
        assert_eq!(b.gap(&a), 5);
        assert_eq!(a.gap(&Span::new(20, 22)), 0);
        assert!(a.contains(&a));
        assert!(a.contains(&Span::new(12, 15)));
        assert_eq!(a.intersection_len(&Span::new(15, 40)), 5);
    }

    #[test]
    fn class_parsing_accepts_abbreviations() {
        assert_eq!("ME".parse::<EntityClass>(), Ok(EntityClass::MeasuredEntity));
        assert_eq!("Unit".parse::<EntityClass>(), Ok(EntityClass::Unit));
        assert!("Brand".parse::<EntityClass>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn frame() -> impl Strategy<Value = MeasurementFrame> {
            let span = (0usize..40, 0usize..40).prop_map(|(a, b)| Span::new(a, b));
            (
                span.clone(),
                proptest::option::of(span.clone()),
                proptest::option::of(span.clone()),
                proptest::option::of(span),
            )
                .prop_map(|(q, u, me, mp)| MeasurementFrame {
                    quantity: q,
                    unit: u,
                    measured_entity: me,
                    measured_property: mp,
                })
        }

        proptest! {
            #[test]
            fn valid_frames_have_at_most_two_edges(f in frame()) {
                let text = "x".repeat(40);
                let first = validate_frame(&f, &text);
                prop_assert_eq!(&first, &validate_frame(&f, &text));
                if first.is_valid() {
                    let rels = frame_relations(&f).unwrap();
                    prop_assert!(rels.len() <= 2);
                    let has_mp = rels.iter().any(|r| r.source == EntityClass::MeasuredProperty);
                    let has_me = rels.iter().any(|r| r.source == EntityClass::MeasuredEntity);
                    prop_assert!(!has_mp || has_me);
                }
            }

            #[test]
            fn containment_is_transitive(a in 0usize..30, b in 0usize..30, c in 0usize..30, d in 0usize..30) {
                let outer = Span::new(a.min(b), a.max(b) + 5);
                let mid = Span::new(outer.start + c % (outer.len() + 1) / 2, outer.end - d % (outer.len() + 1) / 2);
                let inner = Span::new(mid.start, mid.start.max(mid.end.saturating_sub(1)));
                prop_assert!(outer.contains(&outer));
                if outer.contains(&mid) && mid.contains(&inner) {
                    prop_assert!(outer.contains(&inner));
                }
            }
        }
    }
}
