use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::FuseError;
use crate::kg::{ExtendedTriple, KgSnapshot, Object, SnapshotBuilder, Upsert};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationshipMergeDecision {
    pub predicate: String,
    pub source_r_id: String,
    /// `None` means the node is added as a new relationship node.
    pub kg_r_id: Option<String>,
    pub overlap_ratio: f64,
}

impl RelationshipMergeDecision {
    pub fn is_merge(&self) -> bool {
        self.kg_r_id.is_some()
    }
}

type NodeFacts<'a> = BTreeMap<(&'a str, &'a str), BTreeSet<(&'a str, &'a Object)>>;

fn nodes(triples: &[ExtendedTriple]) -> NodeFacts<'_> {
    let mut out: NodeFacts<'_> = BTreeMap::new();
    for t in triples {
        if let (Some(r), Some(rp)) = (&t.r_id, &t.r_predicate) {
            out.entry((t.predicate.as_str(), r.as_str())).or_default().insert((rp.as_str(), &t.object));
        }
    }
    out
}

/// For each source relationship node, the KG node under the same predicate
/// with the largest share of the source node's (r_predicate, object) facts
/// (ties to the smaller r_id). MERGE iff that share reaches `theta_rel`.
pub fn merge_relationship_nodes(
    kg_entity_triples: &[ExtendedTriple],
    source_entity_triples: &[ExtendedTriple],
    theta_rel: f64,
) -> Vec<RelationshipMergeDecision> {
    let kg = nodes(kg_entity_triples);
    let mut out = Vec::new();
    for ((pred, r), facts) in nodes(source_entity_triples) {
        let mut best: Option<(f64, &str)> = None;
        for ((kp, kr), kfacts) in &kg {
            if *kp != pred {
                continue;
            }
            let ratio = facts.intersection(kfacts).count() as f64 / facts.len() as f64;
            if best.is_none_or(|(b, _)| ratio > b) {
                best = Some((ratio, kr));
            }
        }
        let (ratio, kr) = best.unwrap_or((0.0, ""));
        out.push(RelationshipMergeDecision {
            predicate: pred.to_string(),
            source_r_id: r.to_string(),
            kg_r_id: (ratio >= theta_rel && !kr.is_empty()).then(|| kr.to_string()),
            overlap_ratio: ratio,
        });
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MergeOutcome {
    pub inserted: usize,
    pub updated: usize,
}

pub(crate) fn upsert_all(b: &mut SnapshotBuilder, facts: impl IntoIterator<Item = ExtendedTriple>) -> MergeOutcome {
    let mut m = MergeOutcome::default();
    for t in facts {
        match b.upsert(t) {
            Upsert::Inserted => m.inserted += 1,
            Upsert::Updated => m.updated += 1,
            Upsert::Unchanged => {}
        }
    }
    m
}

/// Outer join on the fact key: equal keys union provenance, new keys insert.
pub fn fuse_simple_facts(snapshot: &KgSnapshot, linked: &[ExtendedTriple]) -> Result<KgSnapshot, FuseError> {
    if let Some(t) = linked.iter().find(|t| !t.subject.is_graph()) {
        return Err(FuseError::UnlinkedSubject(t.subject.clone()));
    }
    let mut b = snapshot.builder();
    upsert_all(&mut b, linked.iter().cloned());
    Ok(b.finish())
}
