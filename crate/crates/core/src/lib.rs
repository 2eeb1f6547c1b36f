//! Measurement and context extraction from scientific text.
//!
//! A measurement is represented as a [`MeasurementFrame`]: one Quantity span
//! plus optional Unit, MeasuredEntity and MeasuredProperty spans. Offsets are
//! Unicode scalar-value indices into the document text.
//!
//! * [`corpus`] reads and writes corpora and converts source annotations.
//! * [`tags`] tokenizes sentences and converts frames to and from tag
//!   sequences.
//! * [`pipeline`] runs the two-stage tagger cascade and assembles frames.
//! * [`score`] matches predictions against gold and reports scores.
//! * [`analysis`] computes entity attributes, vocabulary overlap and
//!   inter-annotator agreement.
//! * [`lint`] checks annotations against the annotation guidelines.

pub mod analysis;
pub mod config;
pub mod corpus;
pub mod lexicon;
pub mod lint;
pub mod model;
pub mod pipeline;
pub mod score;
pub mod table;
pub mod tags;
pub mod text;

pub use model::{Document, EntityClass, MeasurementFrame, Relation, RelationType, Sentence, Span, Split};
pub use score::{score_corpus, ScoreReport, ScoringMode};
pub use tags::{Tag, TagSequence, Task, Token};
