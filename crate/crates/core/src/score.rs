//! Span matching, strict and overlap scoring, and relation scoring.
//!
//! Quantities of a document are paired first; context spans and relations
//! are then compared only inside paired frames.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{frame_relations, Document, EntityClass, MeasurementFrame, RelationType, Span};
use crate::table::{fixed3, render};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchType {
    Match,
    Partial,
    Missing,
    Spurious,
}

impl MatchType {
    pub const ALL: [MatchType; 4] = [
        MatchType::Match,
        MatchType::Partial,
        MatchType::Missing,
        MatchType::Spurious,
    ];
}

impl fmt::Display for MatchType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchType::Match => "match",
            MatchType::Partial => "partial",
            MatchType::Missing => "missing",
            MatchType::Spurious => "spurious",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatchRecord {
    pub class: EntityClass,
    pub match_type: MatchType,
    pub gold: Option<Span>,
    pub pred: Option<Span>,
}

/// Pairs gold and predicted spans one-to-one.
///
/// Identical spans are paired first. The remaining spans are paired by an
/// optimal assignment that maximises the number of overlapping pairs, then
/// the total character overlap. Only overlapping pairs are returned.
pub fn pair_spans(gold: &[Span], pred: &[Span]) -> Vec<(usize, usize)> {
    let mut gold_order: Vec<usize> = (0..gold.len()).collect();
    gold_order.sort_by_key(|&i| (gold[i], i));
    let mut pred_used = vec![false; pred.len()];
    let mut gold_used = vec![false; gold.len()];
    let mut pairs = Vec::new();
    for &g in &gold_order {
        if let Some(p) = (0..pred.len()).find(|&p| !pred_used[p] && pred[p] == gold[g]) {
            pred_used[p] = true;
            gold_used[g] = true;
            pairs.push((g, p));
        }
    }
    let rest_gold: Vec<usize> = gold_order.into_iter().filter(|&g| !gold_used[g]).collect();
    let mut rest_pred: Vec<usize> = (0..pred.len()).filter(|&p| !pred_used[p]).collect();
    rest_pred.sort_by_key(|&p| (pred[p], p));
    let weight = |g: usize, p: usize| gold[g].intersection_len(&pred[p]) as i64;
    let any_overlap = rest_gold.iter().any(|&g| rest_pred.iter().any(|&p| weight(g, p) > 0));
    if any_overlap {
        let bonus: i64 = 1 + rest_gold
            .iter()
            .flat_map(|&g| rest_pred.iter().map(move |&p| (g, p)))
            .map(|(g, p)| weight(g, p))
            .sum::<i64>();
        let score = |g: usize, p: usize| match weight(g, p) {
            0 => 0,
            w => bonus + w,
        };
        let assignment = max_weight_assignment(rest_gold.len(), rest_pred.len(), &|i, j| {
            score(rest_gold[i], rest_pred[j])
        });
        for (i, j) in assignment {
            let (g, p) = (rest_gold[i], rest_pred[j]);
            if weight(g, p) > 0 {
                pairs.push((g, p));
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Hungarian algorithm on an `rows x cols` weight matrix; returns one
/// `(row, col)` per row when `rows <= cols`, otherwise one per column.
fn max_weight_assignment(rows: usize, cols: usize, weight: &dyn Fn(usize, usize) -> i64) -> Vec<(usize, usize)> {
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    if rows > cols {
        return max_weight_assignment(cols, rows, &|i, j| weight(j, i))
            .into_iter()
            .map(|(i, j)| (j, i))
            .collect();
    }
    // minimise negated weights; 1-based potentials as in the classic formulation
    let (n, m) = (rows, cols);
    let cost = |i: usize, j: usize| -weight(i - 1, j - 1);
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=m).filter(|&j| p[j] != 0).map(|j| (p[j] - 1, j - 1)).collect()
}

/// Classifies every span of one class as match, partial, missing or spurious.
pub fn classify_matches(gold: &[Span], pred: &[Span], class: EntityClass) -> Vec<MatchRecord> {
    let pairs = pair_spans(gold, pred);
    records_from_pairs(gold, pred, &pairs, class)
}

fn records_from_pairs(gold: &[Span], pred: &[Span], pairs: &[(usize, usize)], class: EntityClass) -> Vec<MatchRecord> {
    let mut gold_used = vec![false; gold.len()];
    let mut pred_used = vec![false; pred.len()];
    let mut out = Vec::with_capacity(gold.len() + pred.len());
    for &(g, p) in pairs {
        gold_used[g] = true;
        pred_used[p] = true;
        out.push(MatchRecord {
            class,
            match_type: if gold[g] == pred[p] {
                MatchType::Match
            } else {
                MatchType::Partial
            },
            gold: Some(gold[g]),
            pred: Some(pred[p]),
        });
    }
    out.extend(
        gold.iter()
            .zip(&gold_used)
            .filter(|(_, u)| !**u)
            .map(|(g, _)| MatchRecord {
                class,
                match_type: MatchType::Missing,
                gold: Some(*g),
                pred: None,
            }),
    );
    out.extend(
        pred.iter()
            .zip(&pred_used)
            .filter(|(_, u)| !**u)
            .map(|(p, _)| MatchRecord {
                class,
                match_type: MatchType::Spurious,
                gold: None,
                pred: Some(*p),
            }),
    );
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchCounts {
    pub matches: usize,
    pub partial: usize,
    pub missing: usize,
    pub spurious: usize,
}

impl MatchCounts {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a MatchRecord>) -> Self {
        let mut c = Self::default();
        for r in records {
            c.add(r.match_type);
        }
        c
    }

    pub fn add(&mut self, t: MatchType) {
        match t {
            MatchType::Match => self.matches += 1,
            MatchType::Partial => self.partial += 1,
            MatchType::Missing => self.missing += 1,
            MatchType::Spurious => self.spurious += 1,
        }
    }

    pub fn get(&self, t: MatchType) -> usize {
        match t {
            MatchType::Match => self.matches,
            MatchType::Partial => self.partial,
            MatchType::Missing => self.missing,
            MatchType::Spurious => self.spurious,
        }
    }

    fn merge(&mut self, other: &MatchCounts) {
        self.matches += other.matches;
        self.partial += other.partial;
        self.missing += other.missing;
        self.spurious += other.spurious;
    }

    pub fn prf(&self) -> Prf {
        let m = self.matches as f64;
        Prf::from_ratios(
            ratio(m, (self.matches + self.partial + self.spurious) as f64),
            ratio(m, (self.matches + self.partial + self.missing) as f64),
        )
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_ratios(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self { precision, recall, f1 }
    }
}

/// Strict precision, recall and F1: only exact matches count as correct.
pub fn strict_prf(records: &[MatchRecord]) -> Prf {
    MatchCounts::from_records(records).prf()
}

/// `2 |g ∩ p| / (|g| + |p|)`.
pub fn overlap_f1(gold: Span, pred: Span) -> f64 {
    let total = gold.len() + pred.len();
    if total == 0 {
        return 0.0;
    }
    2.0 * gold.intersection_len(&pred) as f64 / total as f64
}

/// [`overlap_f1`] where an absent side scores 0.
pub fn overlap_f1_opt(gold: Option<Span>, pred: Option<Span>) -> f64 {
    match (gold, pred) {
        (Some(g), Some(p)) => overlap_f1(g, p),
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QuantityMatching {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_gold: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
}

/// Pairs frames of one document through their quantity spans.
pub fn match_quantities(gold: &[MeasurementFrame], pred: &[MeasurementFrame]) -> QuantityMatching {
    let gq: Vec<Span> = gold.iter().map(|f| f.quantity).collect();
    let pq: Vec<Span> = pred.iter().map(|f| f.quantity).collect();
    let pairs = pair_spans(&gq, &pq);
    let gold_paired: BTreeSet<usize> = pairs.iter().map(|p| p.0).collect();
    let pred_paired: BTreeSet<usize> = pairs.iter().map(|p| p.1).collect();
    QuantityMatching {
        unmatched_gold: (0..gold.len()).filter(|i| !gold_paired.contains(i)).collect(),
        unmatched_pred: (0..pred.len()).filter(|i| !pred_paired.contains(i)).collect(),
        pairs,
    }
}

/// A match record together with the quantities its spans hang off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignedRecord {
    pub record: MatchRecord,
    pub gold_quantity: Option<Span>,
    pub pred_quantity: Option<Span>,
}

/// Match records for every span of both frame lists.
///
/// Quantity records follow the quantity pairing. Context spans are compared
/// inside paired frames; spans of unpaired frames are missing or spurious.
pub fn align_frames(gold: &[MeasurementFrame], pred: &[MeasurementFrame]) -> (QuantityMatching, Vec<AlignedRecord>) {
    let matching = match_quantities(gold, pred);
    let mut out = Vec::new();
    let gq: Vec<Span> = gold.iter().map(|f| f.quantity).collect();
    let pq: Vec<Span> = pred.iter().map(|f| f.quantity).collect();
    for record in records_from_pairs(&gq, &pq, &matching.pairs, EntityClass::Quantity) {
        out.push(AlignedRecord {
            record,
            gold_quantity: record.gold,
            pred_quantity: record.pred,
        });
    }
    for class in EntityClass::CONTEXT {
        for &(g, p) in &matching.pairs {
            let gs: Vec<Span> = gold[g].get(class).into_iter().collect();
            let ps: Vec<Span> = pred[p].get(class).into_iter().collect();
            for record in classify_matches(&gs, &ps, class) {
                out.push(AlignedRecord {
                    record,
                    gold_quantity: record.gold.map(|_| gold[g].quantity),
                    pred_quantity: record.pred.map(|_| pred[p].quantity),
                });
            }
        }
        for &g in &matching.unmatched_gold {
            if let Some(span) = gold[g].get(class) {
                out.push(AlignedRecord {
                    record: MatchRecord {
                        class,
                        match_type: MatchType::Missing,
                        gold: Some(span),
                        pred: None,
                    },
                    gold_quantity: Some(gold[g].quantity),
                    pred_quantity: None,
                });
            }
        }
        for &p in &matching.unmatched_pred {
            if let Some(span) = pred[p].get(class) {
                out.push(AlignedRecord {
                    record: MatchRecord {
                        class,
                        match_type: MatchType::Spurious,
                        gold: None,
                        pred: Some(span),
                    },
                    gold_quantity: None,
                    pred_quantity: Some(pred[p].quantity),
                });
            }
        }
    }
    (matching, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoringMode {
    #[default]
    Strict,
    Overlap,
}

impl FromStr for ScoringMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(ScoringMode::Strict),
            "overlap" => Ok(ScoringMode::Overlap),
            other => Err(format!("unknown scoring mode {other:?} (expected strict or overlap)")),
        }
    }
}

impl fmt::Display for ScoringMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoringMode::Strict => "strict",
            ScoringMode::Overlap => "overlap",
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("gold and prediction corpora cover different documents; missing from predictions: [{}]; not in gold: [{}]", .missing.join(", "), .extra.join(", "))]
    DocMismatch { missing: Vec<String>, extra: Vec<String> },
    #[error("duplicate doc_id {0} in {1} corpus")]
    DuplicateDocId(String, &'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: EntityClass,
    pub counts: MatchCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub overlap_f1: f64,
    /// Items averaged into `overlap_f1`.
    pub overlap_items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationScore {
    pub relation: RelationType,
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    /// `None` for the corpus-wide group.
    pub domain: Option<String>,
    pub documents: usize,
    pub classes: Vec<ClassScore>,
    pub relations: Vec<RelationScore>,
}

impl GroupScore {
    pub fn class(&self, class: EntityClass) -> &ClassScore {
        self.classes
            .iter()
            .find(|c| c.class == class)
            .expect("every class is reported")
    }

    pub fn relation(&self, relation: RelationType) -> &RelationScore {
        self.relations
            .iter()
            .find(|r| r.relation == relation)
            .expect("every relation is reported")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub mode: ScoringMode,
    /// One group per domain in name order, then the overall group.
    pub groups: Vec<GroupScore>,
}

impl ScoreReport {
    pub fn overall(&self) -> &GroupScore {
        self.groups.last().expect("overall group is always present")
    }

    pub fn domain(&self, name: &str) -> Option<&GroupScore> {
        self.groups.iter().find(|g| g.domain.as_deref() == Some(name))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned text table; numbers rounded to three decimals.
    pub fn to_table(&self) -> String {
        let mut rows = Vec::new();
        for g in &self.groups {
            let domain = g.domain.clone().unwrap_or_else(|| "overall".to_string());
            for c in &g.classes {
                let mut row = vec![domain.clone(), c.class.abbrev().to_string()];
                match self.mode {
                    ScoringMode::Strict => row.extend([fixed3(c.precision), fixed3(c.recall), fixed3(c.f1)]),
                    ScoringMode::Overlap => row.push(fixed3(c.overlap_f1)),
                }
                row.extend(MatchType::ALL.iter().map(|t| c.counts.get(*t).to_string()));
                rows.push(row);
            }
            for r in &g.relations {
                let mut row = vec![domain.clone(), r.relation.to_string()];
                match self.mode {
                    ScoringMode::Strict => row.extend([fixed3(r.precision), fixed3(r.recall), fixed3(r.f1)]),
                    ScoringMode::Overlap => row.push(fixed3(r.f1)),
                }
                row.extend([
                    r.correct.to_string(),
                    String::new(),
                    (r.gold - r.correct).to_string(),
                    (r.predicted - r.correct).to_string(),
                ]);
                rows.push(row);
            }
        }
        let headers: &[&str] = match self.mode {
            ScoringMode::Strict => &[
                "domain", "class", "P", "R", "F1", "match", "partial", "missing", "spurious",
            ],
            ScoringMode::Overlap => &["domain", "class", "OvF1", "match", "partial", "missing", "spurious"],
        };
        render(headers, &rows)
    }
}

#[derive(Debug, Clone, Default)]
struct Tally {
    counts: BTreeMap<EntityClass, MatchCounts>,
    overlap_sum: BTreeMap<EntityClass, f64>,
    overlap_items: BTreeMap<EntityClass, usize>,
    // (gold, predicted, correct)
    relations: BTreeMap<RelationType, (usize, usize, usize)>,
    documents: usize,
}

impl Tally {
    fn merge(&mut self, other: &Tally) {
        for (c, n) in &other.counts {
            self.counts.entry(*c).or_default().merge(n);
        }
        for (c, s) in &other.overlap_sum {
            *self.overlap_sum.entry(*c).or_default() += s;
        }
        for (c, n) in &other.overlap_items {
            *self.overlap_items.entry(*c).or_default() += n;
        }
        for (r, (g, p, k)) in &other.relations {
            let e = self.relations.entry(*r).or_default();
            e.0 += g;
            e.1 += p;
            e.2 += k;
        }
        self.documents += other.documents;
    }

    fn overlap_item(&mut self, class: EntityClass, score: f64) {
        *self.overlap_sum.entry(class).or_default() += score;
        *self.overlap_items.entry(class).or_default() += 1;
    }

    fn finish(&self, domain: Option<String>) -> GroupScore {
        let classes = EntityClass::ALL
            .iter()
            .map(|&class| {
                let counts = self.counts.get(&class).copied().unwrap_or_default();
                let prf = counts.prf();
                let items = self.overlap_items.get(&class).copied().unwrap_or(0);
                ClassScore {
                    class,
                    counts,
                    precision: prf.precision,
                    recall: prf.recall,
                    f1: prf.f1,
                    overlap_f1: ratio(self.overlap_sum.get(&class).copied().unwrap_or(0.0), items as f64),
                    overlap_items: items,
                }
            })
            .collect();
        let relations = RelationType::ALL
            .iter()
            .map(|&relation| {
                let (gold, predicted, correct) = self.relations.get(&relation).copied().unwrap_or_default();
                let prf = Prf::from_ratios(
                    ratio(correct as f64, predicted as f64),
                    ratio(correct as f64, gold as f64),
                );
                RelationScore {
                    relation,
                    gold,
                    predicted,
                    correct,
                    precision: prf.precision,
                    recall: prf.recall,
                    f1: prf.f1,
                }
            })
            .collect();
        GroupScore {
            domain,
            documents: self.documents,
            classes,
            relations,
        }
    }
}

type Endpoint = (EntityClass, Span);

fn relation_edges(frame: &MeasurementFrame) -> Vec<(RelationType, Endpoint, Endpoint)> {
    frame_relations(frame)
        .unwrap_or_default()
        .into_iter()
        .filter_map(|r| {
            let source = (r.source, frame.get(r.source)?);
            let target = (r.target, frame.get(r.target)?);
            Some((r.relation, source, target))
        })
        .collect()
}

fn tally_document(gold: &[MeasurementFrame], pred: &[MeasurementFrame]) -> Tally {
    let mut tally = Tally {
        documents: 1,
        ..Tally::default()
    };
    let (matching, records) = align_frames(gold, pred);
    for r in &records {
        tally.counts.entry(r.record.class).or_default().add(r.record.match_type);
    }

    // overlap: every gold item, plus predictions without a gold partner
    for &(g, p) in &matching.pairs {
        tally.overlap_item(EntityClass::Quantity, overlap_f1(gold[g].quantity, pred[p].quantity));
        for class in EntityClass::CONTEXT {
            match (gold[g].get(class), pred[p].get(class)) {
                (None, None) => {}
                (gs, ps) => tally.overlap_item(class, overlap_f1_opt(gs, ps)),
            }
        }
    }
    for &g in &matching.unmatched_gold {
        for (class, _) in gold[g].entities() {
            tally.overlap_item(class, 0.0);
        }
    }
    for &p in &matching.unmatched_pred {
        for (class, _) in pred[p].entities() {
            tally.overlap_item(class, 0.0);
        }
    }

    for frame in gold {
        for (rel, _, _) in relation_edges(frame) {
            tally.relations.entry(rel).or_default().0 += 1;
        }
    }
    for frame in pred {
        for (rel, _, _) in relation_edges(frame) {
            tally.relations.entry(rel).or_default().1 += 1;
        }
    }
    for &(g, p) in &matching.pairs {
        let predicted = relation_edges(&pred[p]);
        for (rel, gs, gt) in relation_edges(&gold[g]) {
            let hit = predicted.iter().any(|(r, ps, pt)| {
                *r == rel && ps.0 == gs.0 && pt.0 == gt.0 && ps.1.overlaps(&gs.1) && pt.1.overlaps(&gt.1)
            });
            if hit {
                tally.relations.entry(rel).or_default().2 += 1;
            }
        }
    }
    tally
}

/// Pairs documents by id; fails when the two corpora cover different ids.
pub fn align_documents<'a>(
    gold: &'a [Document],
    pred: &'a [Document],
) -> Result<Vec<(&'a Document, &'a Document)>, ScoreError> {
    let mut pred_by_id: HashMap<&str, &Document> = HashMap::new();
    for d in pred {
        if pred_by_id.insert(&d.doc_id, d).is_some() {
            return Err(ScoreError::DuplicateDocId(d.doc_id.clone(), "prediction"));
        }
    }
    let mut seen = BTreeSet::new();
    for d in gold {
        if !seen.insert(d.doc_id.as_str()) {
            return Err(ScoreError::DuplicateDocId(d.doc_id.clone(), "gold"));
        }
    }
    let missing: Vec<String> = gold
        .iter()
        .filter(|d| !pred_by_id.contains_key(d.doc_id.as_str()))
        .map(|d| d.doc_id.clone())
        .collect();
    let mut extra: Vec<String> = pred
        .iter()
        .filter(|d| !seen.contains(d.doc_id.as_str()))
        .map(|d| d.doc_id.clone())
        .collect();
    extra.sort();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(ScoreError::DocMismatch { missing, extra });
    }
    Ok(gold.iter().map(|g| (g, pred_by_id[g.doc_id.as_str()])).collect())
}

/// Scores predictions against gold, per domain and overall.
///
/// Both strict and overlap figures are always computed; `mode` selects what
/// the text table shows.
pub fn score_corpus(gold: &[Document], pred: &[Document], mode: ScoringMode) -> Result<ScoreReport, ScoreError> {
    let pairs = align_documents(gold, pred)?;
    let tallies: Vec<Tally> = pairs
        .par_iter()
        .map(|(g, p)| tally_document(&g.frames, &p.frames))
        .collect();
    // merge in doc_id order so float sums do not depend on input order
    let mut ordered: Vec<(&Document, &Tally)> = pairs.iter().map(|(g, _)| *g).zip(&tallies).collect();
    ordered.sort_by(|a, b| a.0.doc_id.cmp(&b.0.doc_id));
    let mut by_domain: BTreeMap<String, Tally> = BTreeMap::new();
    let mut overall = Tally::default();
    for (doc, t) in ordered {
        by_domain.entry(doc.domain.clone()).or_default().merge(t);
        overall.merge(t);
    }
    let mut groups: Vec<GroupScore> = by_domain.into_iter().map(|(d, t)| t.finish(Some(d))).collect();
    groups.push(overall.finish(None));
    Ok(ScoreReport { mode, groups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const Q: EntityClass = EntityClass::Quantity;

    fn s(a: usize, b: usize) -> Span {
        Span::new(a, b)
    }

    fn types(records: &[MatchRecord]) -> Vec<MatchType> {
        let mut t: Vec<MatchType> = records.iter().map(|r| r.match_type).collect();
        t.sort();
        t
    }

    #[test]
    fn classify_examples() {
        assert_eq!(
            types(&classify_matches(&[s(0, 5)], &[s(0, 5)], Q)),
            vec![MatchType::Match]
        );
        assert_eq!(
            types(&classify_matches(&[s(0, 5)], &[s(0, 3)], Q)),
            vec![MatchType::Partial]
        );
        assert_eq!(
            types(&classify_matches(&[s(0, 5)], &[s(10, 12)], Q)),
            vec![MatchType::Missing, MatchType::Spurious]
        );
    }

    #[test]
    fn assignment_beats_greedy_overlap() {
        // pairing the largest overlap first would leave (8,12) unpaired
        let gold = [s(0, 10), s(8, 12)];
        let pred = [s(5, 9), s(0, 3)];
        let c = MatchCounts::from_records(&classify_matches(&gold, &pred, Q));
        assert_eq!(c.partial, 2);
    }

    #[test]
    fn strict_prf_examples() {
        let rec = |t| MatchRecord {
            class: Q,
            match_type: t,
            gold: None,
            pred: None,
        };
        let p = strict_prf(&[rec(MatchType::Match)]);
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        let p = strict_prf(&[rec(MatchType::Partial)]);
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
        let p = strict_prf(&[
            rec(MatchType::Match),
            rec(MatchType::Match),
            rec(MatchType::Missing),
            rec(MatchType::Spurious),
        ]);
        assert!((p.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(strict_prf(&[]), Prf::default());
    }

    #[test]
    fn overlap_f1_examples() {
        // "~100 pounds" against "100 pounds"
        assert!((overlap_f1(s(0, 11), s(1, 11)) - 20.0 / 21.0).abs() < 1e-12);
        assert_eq!(overlap_f1(s(3, 9), s(3, 9)), 1.0);
        assert_eq!(overlap_f1(s(0, 2), s(5, 9)), 0.0);
        assert_eq!(overlap_f1_opt(Some(s(0, 2)), None), 0.0);
    }

    #[test]
    fn quantity_matching_examples() {
        let f = |a, b| MeasurementFrame::new(s(a, b));
        let m = match_quantities(&[f(0, 3), f(10, 12)], &[f(0, 3), f(10, 12)]);
        assert_eq!(m.pairs, vec![(0, 0), (1, 1)]);
        let m = match_quantities(&[f(0, 3)], &[f(20, 22)]);
        assert_eq!(m.unmatched_pred, vec![0]);
        assert_eq!(m.unmatched_gold, vec![0]);
        // one prediction overlapping two golds takes the larger overlap
        let m = match_quantities(&[f(0, 4), f(5, 12)], &[f(3, 10)]);
        assert_eq!(m.pairs, vec![(1, 0)]);
        assert_eq!(m.unmatched_gold, vec![0]);
    }

    fn doc(id: &str, domain: &str, frames: Vec<MeasurementFrame>) -> Document {
        Document::new(
            id,
            domain,
            crate::model::Split::Test,
            "x".repeat(80),
            [s(0, 80)],
            frames,
        )
    }

    fn full(q: usize) -> MeasurementFrame {
        MeasurementFrame::new(s(q, q + 3))
            .with_unit(s(q + 4, q + 6))
            .with_entity(s(q - 10, q - 6))
            .with_property(s(q - 5, q - 1))
    }

    #[test]
    fn perfect_and_empty() {
        let gold = vec![doc("a", "x", vec![full(20), full(50)]), doc("b", "y", vec![full(30)])];
        let r = score_corpus(&gold, &gold, ScoringMode::Strict).unwrap();
        for g in &r.groups {
            for c in &g.classes {
                assert_eq!((c.precision, c.recall, c.f1, c.overlap_f1), (1.0, 1.0, 1.0, 1.0));
            }
            for rel in &g.relations {
                assert_eq!((rel.precision, rel.recall, rel.f1), (1.0, 1.0, 1.0));
            }
        }
        let empty: Vec<Document> = gold.iter().map(|d| d.with_frames(Vec::new())).collect();
        let r = score_corpus(&gold, &empty, ScoringMode::Overlap).unwrap();
        for c in &r.overall().classes {
            assert_eq!(c.recall, 0.0);
            assert_eq!(c.overlap_f1, 0.0);
        }
        assert_eq!(r.groups.len(), 3);
        assert!(r.to_table().contains("overall"));
    }

    #[test]
    fn synthetic_four_frames() {
        // one ME partial, one MP missing, otherwise exact
        let gold = vec![doc(
            "a",
            "x",
            vec![full(20), full(40), full(60), MeasurementFrame::new(s(70, 72))],
        )];
        let mut p = gold[0].frames.clone();
        p[0].measured_entity = Some(s(11, 14));
        p[1].measured_property = None;
        let pred = vec![gold[0].with_frames(p)];
        let r = score_corpus(&gold, &pred, ScoringMode::Strict).unwrap();
        let me = r.overall().class(EntityClass::MeasuredEntity);
        assert_eq!(
            me.counts,
            MatchCounts {
                matches: 2,
                partial: 1,
                missing: 0,
                spurious: 0
            }
        );
        assert!((me.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((me.overlap_f1 - (2.0 + 2.0 * 3.0 / 7.0) / 3.0).abs() < 1e-12);
        let mp = r.overall().class(EntityClass::MeasuredProperty);
        assert_eq!(
            mp.counts,
            MatchCounts {
                matches: 2,
                partial: 0,
                missing: 1,
                spurious: 0
            }
        );
        assert_eq!((mp.precision, mp.recall), (1.0, 2.0 / 3.0));
        assert!((mp.overlap_f1 - 2.0 / 3.0).abs() < 1e-12);
        // frame 1 loses both edges to its MP and gains ME -> Q
        let hp = r.overall().relation(RelationType::HasProperty);
        assert_eq!((hp.gold, hp.predicted, hp.correct), (3, 2, 2));
        let hq = r.overall().relation(RelationType::HasQuantity);
        assert_eq!((hq.gold, hq.predicted, hq.correct), (3, 3, 2));
    }

    #[test]
    fn mismatched_documents_listed() {
        let gold = vec![doc("a", "x", vec![]), doc("b", "x", vec![])];
        let pred = vec![doc("a", "x", vec![]), doc("c", "x", vec![])];
        let err = score_corpus(&gold, &pred, ScoringMode::Strict).unwrap_err();
        assert_eq!(
            err,
            ScoreError::DocMismatch {
                missing: vec!["b".into()],
                extra: vec!["c".into()]
            }
        );
    }

    fn spans() -> impl Strategy<Value = Vec<Span>> {
        prop::collection::vec((0usize..40, 1usize..8).prop_map(|(a, l)| Span::new(a, a + l)), 0..7)
    }

    proptest! {
        #[test]
        fn partition_and_swap_symmetry(gold in spans(), pred in spans()) {
            let records = classify_matches(&gold, &pred, Q);
            let gold_seen: Vec<Span> = records.iter().filter_map(|r| r.gold).collect();
            let pred_seen: Vec<Span> = records.iter().filter_map(|r| r.pred).collect();
            prop_assert_eq!(gold_seen.len(), gold.len());
            prop_assert_eq!(pred_seen.len(), pred.len());
            for r in &records {
                match r.match_type {
                    MatchType::Match => prop_assert_eq!(r.gold, r.pred),
                    MatchType::Partial => prop_assert!(r.gold.unwrap().overlaps(&r.pred.unwrap()) && r.gold != r.pred),
                    MatchType::Missing => prop_assert!(r.pred.is_none()),
                    MatchType::Spurious => prop_assert!(r.gold.is_none()),
                }
            }
            let a = MatchCounts::from_records(&records);
            let b = MatchCounts::from_records(&classify_matches(&pred, &gold, Q));
            prop_assert_eq!((a.matches, a.partial, a.missing, a.spurious), (b.matches, b.partial, b.spurious, b.missing));
            let (pa, pb) = (a.prf(), b.prf());
            prop_assert!((pa.precision - pb.recall).abs() < 1e-12 && (pa.recall - pb.precision).abs() < 1e-12);
        }

        #[test]
        fn overlap_f1_symmetric(a in (0usize..30, 1usize..10), b in (0usize..30, 1usize..10)) {
            let (x, y) = (Span::new(a.0, a.0 + a.1), Span::new(b.0, b.0 + b.1));
            prop_assert_eq!(overlap_f1(x, y), overlap_f1(y, x));
            prop_assert!((0.0..=1.0).contains(&overlap_f1(x, y)));
            prop_assert_eq!(overlap_f1(x, y) == 1.0, x == y);
        }

        #[test]
        fn document_order_irrelevant(seed in 0usize..1000) {
            let docs: Vec<Document> = (0..5).map(|i| doc(&format!("d{i}"), if i % 2 == 0 { "x" } else { "y" }, vec![full(20 + i)])).collect();
            let mut pred: Vec<Document> = docs.iter().map(|d| {
                let mut f = d.frames.clone();
                f[0].unit = Some(Span::new(f[0].quantity.end + 1, f[0].quantity.end + 2 + seed % 3));
                d.with_frames(f)
            }).collect();
            let a = score_corpus(&docs, &pred, ScoringMode::Overlap).unwrap();
            pred.rotate_left(seed % 5);
            let mut gold = docs.clone();
            gold.reverse();
            let b = score_corpus(&gold, &pred, ScoringMode::Overlap).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
