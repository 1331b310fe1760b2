//! Entity/relation annotation graphs and RadGraph-style F1.
//!
//! Entities match when their normalized surface text (lowercased, whitespace
//! collapsed) and type are equal. Matching is greedy in reference order with
//! each candidate entity used at most once. A relation matches when both of
//! its endpoints matched each other and the relation types agree.

use std::collections::HashSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::ReportId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntityType {
    Anatomy,
    ObservationPresent,
    ObservationAbsent,
    ObservationUncertain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelationType {
    Modify,
    LocatedAt,
    SuggestiveOf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub entity_id: String,
    pub surface_text: String,
    pub entity_type: EntityType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub head: String,
    pub tail: String,
    pub relation_type: RelationType,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportGraph {
    #[serde(default)]
    pub entities: Vec<Entity>,
    #[serde(default)]
    pub relations: Vec<Relation>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("duplicate entity id `{0}`")]
    DuplicateEntity(String),
    #[error("relation endpoint `{0}` is not an entity")]
    DanglingEndpoint(String),
    #[error("entity `{0}` relates to itself")]
    SelfRelation(String),
    #[error("graph file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl ReportGraph {
    pub fn validate(&self) -> Result<(), GraphError> {
        let mut ids = HashSet::new();
        for e in &self.entities {
            if !ids.insert(e.entity_id.as_str()) {
                return Err(GraphError::DuplicateEntity(e.entity_id.clone()));
            }
        }
        for r in &self.relations {
            for end in [&r.head, &r.tail] {
                if !ids.contains(end.as_str()) {
                    return Err(GraphError::DanglingEndpoint(end.clone()));
                }
            }
            if r.head == r.tail {
                return Err(GraphError::SelfRelation(r.head.clone()));
            }
        }
        Ok(())
    }

    fn entity_index(&self, id: &str) -> Option<usize> {
        self.entities.iter().position(|e| e.entity_id == id)
    }
}

fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Matched pairs as (candidate index, reference index).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GraphMatching {
    pub entity_pairs: Vec<(usize, usize)>,
    pub relation_pairs: Vec<(usize, usize)>,
}

pub fn match_graph(
    candidate: &ReportGraph,
    reference: &ReportGraph,
) -> Result<GraphMatching, GraphError> {
    candidate.validate()?;
    reference.validate()?;

    let cand_keys: Vec<(String, EntityType)> = candidate
        .entities
        .iter()
        .map(|e| (normalize(&e.surface_text), e.entity_type))
        .collect();
    let mut used = vec![false; candidate.entities.len()];
    // cand_for_ref[r] = candidate entity matched to reference entity r
    let mut cand_for_ref: Vec<Option<usize>> = vec![None; reference.entities.len()];
    let mut entity_pairs = Vec::new();
    for (ri, re) in reference.entities.iter().enumerate() {
        let key = (normalize(&re.surface_text), re.entity_type);
        if let Some(ci) = (0..cand_keys.len()).find(|&ci| !used[ci] && cand_keys[ci] == key) {
            used[ci] = true;
            cand_for_ref[ri] = Some(ci);
            entity_pairs.push((ci, ri));
        }
    }

    let mut rel_used = vec![false; candidate.relations.len()];
    let mut relation_pairs = Vec::new();
    for (ri, rr) in reference.relations.iter().enumerate() {
        let (Some(rh), Some(rt)) = (
            reference.entity_index(&rr.head),
            reference.entity_index(&rr.tail),
        ) else {
            continue;
        };
        let (Some(ch), Some(ct)) = (cand_for_ref[rh], cand_for_ref[rt]) else {
            continue;
        };
        let hit = candidate.relations.iter().enumerate().find(|(ci, cr)| {
            !rel_used[*ci]
                && cr.relation_type == rr.relation_type
                && candidate.entity_index(&cr.head) == Some(ch)
                && candidate.entity_index(&cr.tail) == Some(ct)
        });
        if let Some((ci, _)) = hit {
            rel_used[ci] = true;
            relation_pairs.push((ci, ri));
        }
    }
    Ok(GraphMatching {
        entity_pairs,
        relation_pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrecisionRecall {
    /// Empty vs empty is perfect agreement; empty vs non-empty scores 0.
    pub fn from_counts(matched: usize, candidate_total: usize, reference_total: usize) -> Self {
        if candidate_total == 0 && reference_total == 0 {
            return PrecisionRecall {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
            };
        }
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(matched, candidate_total);
        let recall = ratio(matched, reference_total);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        PrecisionRecall {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadGraphScore {
    pub entity: PrecisionRecall,
    pub relation: PrecisionRecall,
    pub entity_f1: f64,
    pub relation_f1: f64,
    /// Mean of the entity and relation F1.
    pub combined: f64,
}

/// An empty graph (no entities) scored against a non-empty one gets 0 on
/// every component, including relations.
pub fn radgraph_f1(
    candidate: &ReportGraph,
    reference: &ReportGraph,
) -> Result<RadGraphScore, GraphError> {
    let m = match_graph(candidate, reference)?;
    if candidate.entities.is_empty() != reference.entities.is_empty() {
        let zero = PrecisionRecall {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        };
        return Ok(RadGraphScore {
            entity: zero,
            relation: zero,
            entity_f1: 0.0,
            relation_f1: 0.0,
            combined: 0.0,
        });
    }
    let entity = PrecisionRecall::from_counts(
        m.entity_pairs.len(),
        candidate.entities.len(),
        reference.entities.len(),
    );
    let relation = PrecisionRecall::from_counts(
        m.relation_pairs.len(),
        candidate.relations.len(),
        reference.relations.len(),
    );
    Ok(RadGraphScore {
        entity,
        relation,
        entity_f1: entity.f1,
        relation_f1: relation.f1,
        combined: (entity.f1 + relation.f1) / 2.0,
    })
}

/// Per-report macro average, scaled to 0–100.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorpusRadGraph {
    pub reports: usize,
    pub entity_f1: f64,
    pub relation_f1: f64,
    pub combined: f64,
}

pub fn corpus_radgraph_f1<'a, I>(pairs: I) -> Result<CorpusRadGraph, GraphError>
where
    I: IntoIterator<Item = (&'a ReportGraph, &'a ReportGraph)>,
{
    let mut n = 0usize;
    let (mut e, mut r, mut c) = (0.0, 0.0, 0.0);
    for (cand, reference) in pairs {
        let s = radgraph_f1(cand, reference)?;
        n += 1;
        e += s.entity_f1;
        r += s.relation_f1;
        c += s.combined;
    }
    let scale = |x: f64| if n == 0 { 0.0 } else { 100.0 * x / n as f64 };
    Ok(CorpusRadGraph {
        reports: n,
        entity_f1: scale(e),
        relation_f1: scale(r),
        combined: scale(c),
    })
}

/// One line of a graph annotation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub report_id: ReportId,
    #[serde(flatten)]
    pub graph: ReportGraph,
}

pub fn read_graph_file<R: BufRead>(reader: R) -> Result<Vec<GraphRecord>, GraphError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| GraphError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| GraphError::Parse {
            line: idx + 1,
            reason,
        };
        let rec: GraphRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        rec.graph.validate().map_err(|e| parse_err(e.to_string()))?;
        if !seen.insert(rec.report_id.clone()) {
            return Err(parse_err(format!(
                "duplicate report_id `{}`",
                rec.report_id
            )));
        }
        out.push(rec);
    }
    Ok(out)
}
