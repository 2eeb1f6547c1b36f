//! Entity-attribute error analysis, vocabulary overlap between corpora and
//! character-level Krippendorff's alpha.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Document, EntityClass, Span};
use crate::score::{align_documents, align_frames, MatchType, ScoreError};
use crate::table::{fixed3, render};
use crate::tags::tokenize;
use crate::text::{char_len, CharText};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("span {span} lies outside the sentence ({len} characters)")]
    SpanOutsideSentence { span: Span, len: usize },
    #[error("doc={doc_id}: {class} span {span} is not inside a single sentence")]
    CrossSentenceSpan {
        doc_id: String,
        class: EntityClass,
        span: Span,
    },
    #[error("sentence has no tokens")]
    EmptySentence,
    #[error(transparent)]
    Alignment(#[from] ScoreError),
    #[error("top-k must be at least 1")]
    ZeroK,
    #[error("agreement needs at least two coders, got {0}")]
    TooFewCoders(usize),
    #[error("coder {coder}: {message}")]
    UnitMismatch { coder: String, message: String },
}

/// Number of tokens of `sentence` touched by `span` (sentence-local offsets).
pub fn entity_length(span: Span, sentence: &str) -> Result<usize, AnalysisError> {
    let len = char_len(sentence);
    if span.end > len || span.start > span.end {
        return Err(AnalysisError::SpanOutsideSentence { span, len });
    }
    Ok(tokenize(sentence)
        .iter()
        .filter(|t| t.span.is_some_and(|s| s.overlaps(&span)))
        .count())
}

/// Distinct entity spans of all classes in the sentence per sentence token.
///
/// Spans use sentence-local offsets; spans outside the sentence are ignored.
pub fn entity_density(sentence: &str, entities: &[(EntityClass, Span)]) -> Result<f64, AnalysisError> {
    let tokens = tokenize(sentence).len();
    if tokens == 0 {
        return Err(AnalysisError::EmptySentence);
    }
    let bounds = Span::new(0, char_len(sentence));
    let distinct: BTreeSet<&(EntityClass, Span)> = entities.iter().filter(|(_, s)| bounds.contains(s)).collect();
    Ok(distinct.len() as f64 / tokens as f64)
}

/// Character gap between an entity and its quantity; 0 when they overlap or touch.
pub fn quantity_distance(entity: Span, quantity: Span) -> usize {
    entity.gap(&quantity)
}

/// One row of the attribute table: a (domain, class, match type) bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeRow {
    pub domain: String,
    pub class: EntityClass,
    pub match_type: MatchType,
    pub count: usize,
    pub mean_elen: f64,
    pub mean_eden: f64,
    /// Only for MeasuredEntity and MeasuredProperty; cross-sentence pairs excluded.
    pub mean_qdist: Option<f64>,
    pub qdist_count: usize,
}

/// Attributes of a single matched, missed or spurious span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanAttributes {
    pub class: EntityClass,
    pub match_type: MatchType,
    pub span: Span,
    pub elen: usize,
    pub eden: f64,
    pub qdist: Option<usize>,
}

struct SentenceCache<'a> {
    doc: &'a Document,
    texts: Vec<&'a str>,
    density: HashMap<usize, f64>,
}

impl<'a> SentenceCache<'a> {
    fn new(doc: &'a Document) -> Self {
        let text = CharText::new(&doc.text);
        let texts = doc.sentences.iter().map(|s| text.slice(s.span).unwrap_or("")).collect();
        Self {
            doc,
            texts,
            density: HashMap::new(),
        }
    }

    fn density(&mut self, index: usize) -> Result<f64, AnalysisError> {
        if let Some(d) = self.density.get(&index) {
            return Ok(*d);
        }
        let sentence = self.doc.sentences[index].span;
        let local: Vec<(EntityClass, Span)> = self
            .doc
            .frames
            .iter()
            .flat_map(|f| f.entities())
            .filter(|(_, s)| sentence.contains(s))
            .map(|(c, s)| (c, s.relative_to(sentence.start).expect("span inside sentence")))
            .collect();
        let d = entity_density(self.texts[index], &local)?;
        self.density.insert(index, d);
        Ok(d)
    }

    fn attributes(
        &mut self,
        class: EntityClass,
        match_type: MatchType,
        span: Span,
        quantity: Option<Span>,
    ) -> Result<SpanAttributes, AnalysisError> {
        let index = self
            .doc
            .sentence_of(span)
            .ok_or_else(|| AnalysisError::CrossSentenceSpan {
                doc_id: self.doc.doc_id.clone(),
                class,
                span,
            })?;
        let sentence = self.doc.sentences[index].span;
        let local = span.relative_to(sentence.start).expect("span inside sentence");
        let elen = entity_length(local, self.texts[index])?;
        let eden = self.density(index)?;
        let qdist = match class {
            EntityClass::MeasuredEntity | EntityClass::MeasuredProperty => quantity
                .filter(|q| self.doc.sentence_of(*q) == Some(index))
                .map(|q| quantity_distance(span, q)),
            _ => None,
        };
        Ok(SpanAttributes {
            class,
            match_type,
            span,
            elen,
            eden,
            qdist,
        })
    }
}

/// Per-span attributes for one aligned document pair.
///
/// Matches, partials and missing spans are measured on the gold side;
/// spurious spans on the predicted side.
pub fn document_attributes(gold: &Document, pred: &Document) -> Result<Vec<SpanAttributes>, AnalysisError> {
    let (_, records) = align_frames(&gold.frames, &pred.frames);
    let mut gold_cache = SentenceCache::new(gold);
    let mut pred_cache = SentenceCache::new(pred);
    records
        .iter()
        .map(|r| {
            let m = r.record;
            match (m.match_type, m.gold, m.pred) {
                (MatchType::Spurious, _, Some(p)) => pred_cache.attributes(m.class, m.match_type, p, r.pred_quantity),
                (_, Some(g), _) => gold_cache.attributes(m.class, m.match_type, g, r.gold_quantity),
                _ => unreachable!("records always carry the side they are measured on"),
            }
        })
        .collect()
}

type BucketKey = (String, EntityClass, MatchType);

/// Counts and mean attributes grouped by (domain, class, match type).
pub fn attribute_report(gold: &[Document], pred: &[Document]) -> Result<Vec<AttributeRow>, AnalysisError> {
    let pairs = align_documents(gold, pred)?;
    // (count, sum elen, sum eden, qdist count, sum qdist)
    let mut buckets: BTreeMap<BucketKey, (usize, usize, f64, usize, usize)> = BTreeMap::new();
    let mut ordered = pairs;
    ordered.sort_by(|a, b| a.0.doc_id.cmp(&b.0.doc_id));
    for (g, p) in ordered {
        for a in document_attributes(g, p)? {
            let e = buckets.entry((g.domain.clone(), a.class, a.match_type)).or_default();
            e.0 += 1;
            e.1 += a.elen;
            e.2 += a.eden;
            if let Some(q) = a.qdist {
                e.3 += 1;
                e.4 += q;
            }
        }
    }
    Ok(buckets
        .into_iter()
        .map(
            |((domain, class, match_type), (count, elen, eden, qn, qsum))| AttributeRow {
                domain,
                class,
                match_type,
                count,
                mean_elen: elen as f64 / count as f64,
                mean_eden: eden / count as f64,
                mean_qdist: (qn > 0).then(|| qsum as f64 / qn as f64),
                qdist_count: qn,
            },
        )
        .collect())
}

pub fn attribute_table(rows: &[AttributeRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.domain.clone(),
                r.class.abbrev().to_string(),
                r.match_type.to_string(),
                r.count.to_string(),
                fixed3(r.mean_elen),
                fixed3(r.mean_eden),
                r.mean_qdist.map(fixed3).unwrap_or_else(|| "-".to_string()),
            ]
        })
        .collect();
    render(&["domain", "class", "type", "count", "eLen", "eDen", "qDist"], &body)
}

/// Pairwise shared share of the top-`k` unigrams between named corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapMatrix {
    pub names: Vec<String>,
    pub k: usize,
    pub values: Vec<Vec<f64>>,
}

impl OverlapMatrix {
    pub fn to_table(&self) -> String {
        let mut headers = vec![""];
        headers.extend(self.names.iter().map(String::as_str));
        let rows: Vec<Vec<String>> = self
            .names
            .iter()
            .zip(&self.values)
            .map(|(n, row)| {
                std::iter::once(n.clone())
                    .chain(row.iter().map(|v| fixed3(*v)))
                    .collect()
            })
            .collect();
        render(&headers, &rows)
    }
}

/// The `k` most frequent lowercase word unigrams; ties broken alphabetically.
pub fn top_unigrams(docs: &[Document], k: usize) -> Vec<String> {
    let mut freq: HashMap<String, usize> = HashMap::new();
    for d in docs {
        for t in tokenize(&d.text) {
            if t.text.chars().any(char::is_alphanumeric) {
                *freq.entry(t.text.to_lowercase()).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().take(k).map(|(w, _)| w).collect()
}

/// Cell `(i, j)` is `|top_i ∩ top_j| / k`.
///
/// When a corpus has fewer than `k` distinct unigrams the denominator is the
/// larger of the two list sizes, which keeps the diagonal at 1.
pub fn vocab_overlap(corpora: &[(String, Vec<Document>)], k: usize) -> Result<OverlapMatrix, AnalysisError> {
    if k == 0 {
        return Err(AnalysisError::ZeroK);
    }
    let tops: Vec<BTreeSet<String>> = corpora
        .iter()
        .map(|(name, docs)| {
            let top = top_unigrams(docs, k);
            if top.len() < k {
                warn!(
                    "corpus {name} has only {} distinct unigrams; using all of them instead of the top {k}",
                    top.len()
                );
            }
            top.into_iter().collect()
        })
        .collect();
    let values = tops
        .iter()
        .map(|a| {
            tops.iter()
                .map(|b| {
                    let den = a.len().max(b.len());
                    if den == 0 {
                        if std::ptr::eq(a, b) {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        a.intersection(b).count() as f64 / den as f64
                    }
                })
                .collect()
        })
        .collect();
    Ok(OverlapMatrix {
        names: corpora.iter().map(|(n, _)| n.clone()).collect(),
        k,
        values,
    })
}

/// One coder's annotations: per document, the labelled spans.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoderAnnotations {
    pub coder: String,
    pub documents: BTreeMap<String, Vec<(EntityClass, Span)>>,
}

impl CoderAnnotations {
    pub fn from_documents(coder: impl Into<String>, docs: &[Document]) -> Self {
        Self {
            coder: coder.into(),
            documents: docs
                .iter()
                .map(|d| (d.doc_id.clone(), d.frames.iter().flat_map(|f| f.entities()).collect()))
                .collect(),
        }
    }

    /// Per-character labels; where spans of different classes overlap the
    /// class listed first in [`EntityClass::ALL`] wins.
    fn labels(&self, doc_id: &str, len: usize) -> Vec<Option<EntityClass>> {
        let mut out: Vec<Option<EntityClass>> = vec![None; len];
        for (class, span) in self.documents.get(doc_id).into_iter().flatten() {
            for slot in &mut out[span.start.min(len)..span.end.min(len)] {
                if slot.is_none_or(|c| *class < c) {
                    *slot = Some(*class);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaReport {
    pub coders: usize,
    pub units: usize,
    pub combined: f64,
    pub per_class: BTreeMap<EntityClass, f64>,
}

impl AlphaReport {
    pub fn to_table(&self) -> String {
        let mut rows = vec![vec!["combined".to_string(), fixed3(self.combined)]];
        rows.extend(
            self.per_class
                .iter()
                .map(|(c, a)| vec![c.abbrev().to_string(), fixed3(*a)]),
        );
        render(&["labels", "alpha"], &rows)
    }
}

fn check_units(coders: &[CoderAnnotations], docs: &[Document]) -> Result<(), AnalysisError> {
    if coders.len() < 2 {
        return Err(AnalysisError::TooFewCoders(coders.len()));
    }
    let expected: BTreeSet<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
    let lengths: HashMap<&str, usize> = docs.iter().map(|d| (d.doc_id.as_str(), d.char_len())).collect();
    for c in coders {
        let got: BTreeSet<&str> = c.documents.keys().map(String::as_str).collect();
        if got != expected {
            let missing: Vec<&str> = expected.difference(&got).copied().collect();
            let extra: Vec<&str> = got.difference(&expected).copied().collect();
            return Err(AnalysisError::UnitMismatch {
                coder: c.coder.clone(),
                message: format!(
                    "document set differs; missing [{}], extra [{}]",
                    missing.join(", "),
                    extra.join(", ")
                ),
            });
        }
        for (doc_id, spans) in &c.documents {
            let len = lengths[doc_id.as_str()];
            if let Some((class, span)) = spans.iter().find(|(_, s)| s.end > len || s.start > s.end) {
                return Err(AnalysisError::UnitMismatch {
                    coder: c.coder.clone(),
                    message: format!("doc={doc_id}: {class} span {span} outside the {len}-character text"),
                });
            }
        }
    }
    Ok(())
}

/// Krippendorff's alpha over characters, with every character of every
/// document as one unit labelled by each coder.
///
/// `combined` uses the five labels Q, U, ME, MP and none; `per_class`
/// collapses the labels to "class X" against "anything else".
pub fn krippendorff_alpha(coders: &[CoderAnnotations], docs: &[Document]) -> Result<AlphaReport, AnalysisError> {
    check_units(coders, docs)?;
    let index = |l: Option<EntityClass>| l.map_or(0, |c| 1 + EntityClass::ALL.iter().position(|x| *x == c).unwrap());
    let mut combined = vec![vec![0u64; 5]; 5];
    let mut binary: Vec<Vec<Vec<u64>>> = vec![vec![vec![0u64; 2]; 2]; 4];
    let mut units = 0;
    let mut ordered: Vec<&Document> = docs.iter().collect();
    ordered.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    for doc in ordered {
        let len = doc.char_len();
        let labels: Vec<Vec<Option<EntityClass>>> = coders.iter().map(|c| c.labels(&doc.doc_id, len)).collect();
        for u in 0..len {
            units += 1;
            let mut hist = [0u64; 5];
            for coder in &labels {
                hist[index(coder[u])] += 1;
            }
            for c in 0..5 {
                for k in 0..5 {
                    combined[c][k] += if c == k {
                        hist[c] * hist[c].saturating_sub(1)
                    } else {
                        hist[c] * hist[k]
                    };
                }
            }
            for (x, matrix) in binary.iter_mut().enumerate() {
                let yes = hist[x + 1];
                let no = coders.len() as u64 - yes;
                matrix[1][1] += yes * yes.saturating_sub(1);
                matrix[0][0] += no * no.saturating_sub(1);
                matrix[0][1] += yes * no;
                matrix[1][0] += yes * no;
            }
        }
    }
    let m = (coders.len() - 1) as f64;
    let scale = |matrix: &[Vec<u64>]| -> f64 {
        // rescale n to the coincidence-matrix total before applying the formula
        let raw: Vec<Vec<f64>> = matrix
            .iter()
            .map(|r| r.iter().map(|v| *v as f64 / m).collect())
            .collect();
        alpha_from_coincidences(&raw)
    };
    Ok(AlphaReport {
        coders: coders.len(),
        units,
        combined: scale(&combined),
        per_class: EntityClass::ALL
            .iter()
            .zip(&binary)
            .map(|(c, m)| (*c, scale(m)))
            .collect(),
    })
}

/// `1 - (n - 1) * sum_{c != k} o_ck / sum_{c != k} n_c n_k` on a coincidence matrix.
pub fn alpha_from_coincidences(o: &[Vec<f64>]) -> f64 {
    let n_c: Vec<f64> = o.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = n_c.iter().sum();
    let mut disagree = 0.0;
    let mut expected = 0.0;
    for c in 0..o.len() {
        for k in 0..o.len() {
            if c != k {
                disagree += o[c][k];
                expected += n_c[c] * n_c[k];
            }
        }
    }
    if expected == 0.0 {
        return 1.0;
    }
    1.0 - (n - 1.0) * disagree / expected
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MeasurementFrame, Split};
    use proptest::prelude::*;

    #[test]
    fn entity_length_examples() {
        let s = "with deionized (DI) water at";
        let b = s.find("deionized").unwrap();
        assert_eq!(entity_length(Span::new(b, b + "deionized (DI) water".len()), s), Ok(5));
        assert_eq!(entity_length(Span::new(0, 4), s), Ok(1));
        assert_eq!(entity_length(Span::new(0, 9), "a b c d e"), Ok(5));
        assert!(entity_length(Span::new(3, 40), s).is_err());
    }

    #[test]
    fn density_examples() {
        let sentence = vec!["w"; 20].join(" ");
        let f = MeasurementFrame::new(Span::new(0, 1))
            .with_unit(Span::new(2, 3))
            .with_entity(Span::new(4, 5))
            .with_property(Span::new(6, 7));
        let mut entities: Vec<(EntityClass, Span)> = f.entities().collect();
        entities.extend(f.entities());
        assert_eq!(entity_density(&sentence, &entities), Ok(0.2));
        assert_eq!(entity_density(&sentence, &[]), Ok(0.0));
        assert_eq!(entity_density("   ", &[]), Err(AnalysisError::EmptySentence));
    }

    #[test]
    fn distance_examples() {
        assert_eq!(quantity_distance(Span::new(10, 20), Span::new(25, 30)), 5);
        assert_eq!(quantity_distance(Span::new(8, 12), Span::new(0, 5)), 3);
        assert_eq!(quantity_distance(Span::new(0, 6), Span::new(5, 9)), 0);
        assert_eq!(quantity_distance(Span::new(0, 5), Span::new(5, 9)), 0);
    }

    fn coder(name: &str, labels: &[Option<EntityClass>]) -> CoderAnnotations {
        let spans = labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|c| (c, Span::new(i, i + 1))))
            .collect();
        CoderAnnotations {
            coder: name.into(),
            documents: BTreeMap::from([("d".to_string(), spans)]),
        }
    }

    fn four_chars() -> Vec<Document> {
        vec![Document::new("d", "x", Split::Test, "abcd", [Span::new(0, 4)], vec![])]
    }

    #[test]
    fn alpha_fixture() {
        let q = Some(EntityClass::Quantity);
        let a = coder("a", &[q, q, None, None]);
        let b = coder("b", &[q, None, None, None]);
        let r = krippendorff_alpha(&[a.clone(), b], &four_chars()).unwrap();
        assert!((r.combined - (1.0 - (2.0 / 8.0) / (30.0 / 56.0))).abs() < 1e-12);
        let perfect = krippendorff_alpha(&[a.clone(), a.clone()], &four_chars()).unwrap();
        assert_eq!(perfect.combined, 1.0);
        assert_eq!(
            krippendorff_alpha(&[a], &four_chars()),
            Err(AnalysisError::TooFewCoders(1))
        );
    }

    #[test]
    fn alpha_rejects_differing_units() {
        let a = coder("a", &[None; 4]);
        let mut b = coder("b", &[None; 4]);
        b.documents.insert("other".into(), vec![]);
        assert!(matches!(
            krippendorff_alpha(&[a, b], &four_chars()),
            Err(AnalysisError::UnitMismatch { .. })
        ));
    }

    fn corpus(text: &str) -> Vec<Document> {
        vec![Document::new(
            "d",
            "x",
            Split::Test,
            text,
            [Span::new(0, text.chars().count())],
            vec![],
        )]
    }

    #[test]
    fn overlap_fixture() {
        let a = corpus("alpha beta gamma delta epsilon zeta eta theta iota kappa");
        let b = corpus("alpha beta gamma delta epsilon zeta one two three four");
        let m = vocab_overlap(&[("a".into(), a), ("b".into(), b)], 10).unwrap();
        assert_eq!(m.values[0][1], 0.6);
        assert_eq!(m.values[1][0], 0.6);
        assert_eq!(m.values[0][0], 1.0);
        assert!(vocab_overlap(&[], 0).is_err());
    }

    #[test]
    fn top_unigrams_rank_by_frequency_then_alphabet() {
        let top = top_unigrams(&corpus("b a c b, The the"), 3);
        assert_eq!(top, vec!["b", "the", "a"]);
    }

    proptest! {
        #[test]
        fn distance_symmetric_and_translates(a in 0usize..50, la in 1usize..10, b in 0usize..50, lb in 1usize..10, d in 0usize..20) {
            let (x, y) = (Span::new(a, a + la), Span::new(b, b + lb));
            prop_assert_eq!(quantity_distance(x, y), quantity_distance(y, x));
            prop_assert_eq!(quantity_distance(x, y) == 0, x.overlaps(&y) || x.end == y.start || y.end == x.start);
            if x.end <= y.start {
                prop_assert_eq!(quantity_distance(x, y.shifted(d)), quantity_distance(x, y) + d);
            }
        }

        #[test]
        fn alpha_bounded_and_permutation_invariant(
            labels in prop::collection::vec(prop::collection::vec(prop::option::of(0usize..4), 12), 2..5)
        ) {
            let docs = vec![Document::new("d", "x", Split::Test, "x".repeat(12), [Span::new(0, 12)], vec![])];
            let coders: Vec<CoderAnnotations> = labels.iter().enumerate().map(|(i, l)| {
                let l: Vec<Option<EntityClass>> = l.iter().map(|c| c.map(|c| EntityClass::ALL[c])).collect();
                coder(&i.to_string(), &l)
            }).collect();
            let a = krippendorff_alpha(&coders, &docs).unwrap();
            let mut rev = coders.clone();
            rev.reverse();
            let b = krippendorff_alpha(&rev, &docs).unwrap();
            prop_assert!((a.combined - b.combined).abs() < 1e-12);
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&a.combined));
        }

        #[test]
        fn overlap_symmetric_unit_diagonal(texts in prop::collection::vec("[a-e ]{0,30}", 1..4), k in 1usize..8) {
            let corpora: Vec<(String, Vec<Document>)> = texts.iter().enumerate().map(|(i, t)| (i.to_string(), corpus(t))).collect();
            let m = vocab_overlap(&corpora, k).unwrap();
            for i in 0..m.values.len() {
                prop_assert_eq!(m.values[i][i], 1.0);
                for j in 0..m.values.len() {
                    prop_assert_eq!(m.values[i][j], m.values[j][i]);
                }
            }
        }
    }
}
