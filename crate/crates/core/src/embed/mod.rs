//! Knowledge-graph embeddings: TransE and DistMult trained on the
//! entity-to-entity facts of a snapshot, plus scoring, object prediction,
//! fact ranking and verification by brute-force search.

mod eval;
mod model;
mod train;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, KgSnapshot, SAME_AS_PREDICATE};

pub use eval::{filtered_mrr, planted_block_graph, random_mrr_baseline, split_holdout, MrrReport};
pub use model::{predict_object, rank_facts, score_fact, verify_facts, EmbeddingModel, ModelKind};
pub use train::{distmult_pair_loss, train, transe_pair_loss, PairGradient, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("no entity-to-entity facts to train on")]
    EmptyTrainingSet,
    #[error("unknown id {0}")]
    UnknownId(String),
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Indices into a [`TrainingView`]'s vocabularies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FactTriple {
    pub s: usize,
    pub p: usize,
    pub o: usize,
}

/// Predicates never used for training besides `same_as`.
pub const METADATA_PREDICATES: &[&str] = &[SAME_AS_PREDICATE, "source", "provenance", "trust"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingView {
    pub entities: Vec<EntityId>,
    pub predicates: Vec<String>,
    pub facts: Vec<FactTriple>,
}

impl TrainingView {
    /// View over explicit (subject, predicate, object) edges; vocabularies are sorted.
    pub fn from_edges<'a>(edges: impl IntoIterator<Item = (&'a EntityId, &'a str, &'a EntityId)>) -> Self {
        let edges: BTreeSet<(&EntityId, &str, &EntityId)> = edges.into_iter().collect();
        let entities: BTreeSet<&EntityId> = edges.iter().flat_map(|(s, _, o)| [*s, *o]).collect();
        let predicates: BTreeSet<&str> = edges.iter().map(|(_, p, _)| *p).collect();
        let eidx: BTreeMap<&EntityId, usize> = entities.iter().enumerate().map(|(i, e)| (*e, i)).collect();
        let pidx: BTreeMap<&str, usize> = predicates.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        let facts = edges.iter().map(|(s, p, o)| FactTriple { s: eidx[s], p: pidx[p], o: eidx[o] }).collect();
        Self {
            entities: entities.into_iter().cloned().collect(),
            predicates: predicates.into_iter().map(str::to_string).collect(),
            facts,
        }
    }

    pub fn entity_index(&self, id: &EntityId) -> Option<usize> {
        self.entities.binary_search(id).ok()
    }

    pub fn predicate_index(&self, p: &str) -> Option<usize> {
        self.predicates.binary_search_by(|x| x.as_str().cmp(p)).ok()
    }
}

/// Graph-entity-to-graph-entity facts of the snapshot; composite facts use
/// their dotted predicate path. Literal objects and metadata predicates are
/// dropped.
pub fn build_training_view(snapshot: &KgSnapshot) -> Result<TrainingView, EmbedError> {
    let edges: Vec<(&EntityId, String, &EntityId)> = snapshot
        .triples()
        .filter(|t| t.subject.is_graph() && !METADATA_PREDICATES.contains(&t.predicate.as_str()))
        .filter_map(|t| {
            let o = t.object.as_entity().filter(|o| o.is_graph())?;
            Some((&t.subject, t.predicate_path(), o))
        })
        .collect();
    let view = TrainingView::from_edges(edges.iter().map(|(s, p, o)| (*s, p.as_str(), *o)));
    if view.facts.is_empty() {
        return Err(EmbedError::EmptyTrainingSet);
    }
    Ok(view)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{ExtendedTriple, Object};

    #[test]
    fn training_view_keeps_entity_edges_only() {
        let a = EntityId::graph("a");
        let b = EntityId::graph("b");
        let kg = KgSnapshot::from_triples([
            ExtendedTriple::simple(a.clone(), "name", Object::literal("A"), "s", 0.9),
            ExtendedTriple::simple(a.clone(), "knows", Object::Entity(b.clone()), "s", 0.9),
            ExtendedTriple::simple(a.clone(), "same_as", Object::Entity("s:a".parse().unwrap()), "s", 0.9),
        ]);
        let v = build_training_view(&kg).unwrap();
        assert_eq!((v.facts.len(), v.entities.len(), v.predicates.len()), (1, 2, 1));
        assert_eq!(v.facts[0], FactTriple { s: 0, p: 0, o: 1 });
        let lits = KgSnapshot::from_triples([ExtendedTriple::simple(a, "name", Object::literal("A"), "s", 0.9)]);
        assert!(matches!(build_training_view(&lits), Err(EmbedError::EmptyTrainingSet)));
    }
}
