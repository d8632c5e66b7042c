//! Dedup and subject linking: blocking, pair generation, matching, a signed
//! linkage graph and correlation clustering with at most one graph entity
//! per cluster.

mod blocking;
mod cluster;
mod matching;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::SourceEntity;
use crate::kg::{EntityId, KgSnapshot, SAME_AS_PREDICATE, TYPE_PREDICATE};
use crate::simstrings::StringEncoder;

pub use blocking::{block, generate_pairs, BlockingFunction};
pub use cluster::{
    best_of_seeds, build_linkage_graph, disagreements, mint_graph_id, pivot_cluster, resolve_clusters,
    ClusterAssignment, LinkageGraph, Sign,
};
pub use matching::{
    fit_logistic, match_pairs, Comparator, Feature, MatchContext, MatchingModel, ModelKind, ScoredPair,
};

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("matching model uses predicate `{0}` which no entity in the payload carries")]
    MissingFeaturePredicate(String),
    #[error("thresholds must satisfy 0 <= tau_neg < tau_pos <= 1 (got {tau_neg}, {tau_pos})")]
    ThresholdOrder { tau_pos: f64, tau_neg: f64 },
    #[error("no encoder loaded for string type `{0}`")]
    MissingEncoder(String),
    #[error("payload mixes entity types")]
    MixedTypes,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkEntity {
    pub id: EntityId,
    pub predicates: BTreeMap<String, Vec<String>>,
    pub is_graph_entity: bool,
}

impl LinkEntity {
    pub fn values(&self, predicate: &str) -> &[String] {
        self.predicates.get(predicate).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn from_source(e: &SourceEntity) -> Self {
        Self {
            id: e.id.clone(),
            predicates: e
                .predicates
                .iter()
                .map(|(p, vs)| (p.clone(), vs.iter().filter(|v| !v.trim().is_empty()).cloned().collect()))
                .collect(),
            is_graph_entity: false,
        }
    }
}

/// Source entities combined with the KG view for one entity type.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinkingPayload {
    pub entity_type: String,
    pub entities: Vec<LinkEntity>,
}

impl LinkingPayload {
    pub fn new(entity_type: &str, source: &[SourceEntity], kg_view: Vec<LinkEntity>) -> Self {
        let mut entities = kg_view;
        entities.extend(source.iter().map(LinkEntity::from_source));
        Self { entity_type: entity_type.into(), entities }
    }

    pub fn index(&self) -> BTreeMap<&EntityId, &LinkEntity> {
        self.entities.iter().map(|e| (&e.id, e)).collect()
    }

    /// Every predicate name carried by at least one entity.
    pub fn schema(&self) -> BTreeSet<&str> {
        self.entities
            .iter()
            .flat_map(|e| e.predicates.iter().filter(|(_, v)| !v.is_empty()).map(|(p, _)| p.as_str()))
            .collect()
    }
}

/// All graph entities typed `entity_type`, flattened to predicate-path maps.
pub fn extract_kg_view(snapshot: &KgSnapshot, entity_type: &str) -> Vec<LinkEntity> {
    let mut out = Vec::new();
    for id in snapshot.entities().filter(|id| id.is_graph()) {
        let facts = snapshot.get_entity(id);
        let typed = facts.iter().any(|t| t.predicate == TYPE_PREDICATE && t.object.as_literal() == Some(entity_type));
        if !typed {
            continue;
        }
        let mut predicates: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for t in facts.iter().filter(|t| t.predicate != SAME_AS_PREDICATE) {
            let vs = predicates.entry(t.predicate_path()).or_default();
            let v = t.object.render();
            if !vs.contains(&v) {
                vs.push(v);
            }
        }
        out.push(LinkEntity { id: id.clone(), predicates, is_graph_entity: true });
    }
    out
}

fn default_tau_pos() -> f64 {
    0.9
}

fn default_tau_neg() -> f64 {
    0.1
}

fn default_seeds() -> u64 {
    11
}

/// Per entity type linking configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub entity_type: String,
    pub blocking: Vec<BlockingFunction>,
    pub model: MatchingModel,
    #[serde(default = "default_tau_pos")]
    pub tau_pos: f64,
    #[serde(default = "default_tau_neg")]
    pub tau_neg: f64,
    /// Pivot orders tried; the one with fewest disagreements wins.
    #[serde(default = "default_seeds")]
    pub seeds: u64,
    /// Skip graph–graph pairs because the KG is already deduplicated.
    #[serde(default)]
    pub graph_deduped: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinkOutcome {
    pub assignment: ClusterAssignment,
    pub pairs_scored: usize,
    pub blocks: usize,
}

impl LinkOutcome {
    /// Source id → akg id for every source node.
    pub fn links(&self) -> BTreeMap<EntityId, EntityId> {
        self.assignment.same_as.iter().cloned().collect()
    }
}

/// Runs the whole linking stage for one entity type.
pub fn link_entities(
    source: &[SourceEntity],
    snapshot: &KgSnapshot,
    cfg: &LinkConfig,
    ctx: &MatchContext,
    seed: u64,
) -> Result<LinkOutcome, LinkError> {
    let payload = LinkingPayload::new(&cfg.entity_type, source, extract_kg_view(snapshot, &cfg.entity_type));
    let blocks = block(&payload, &cfg.blocking);
    let mut pairs = generate_pairs(&blocks);
    if cfg.graph_deduped {
        let idx = payload.index();
        pairs.retain(|(a, b)| !(idx[a].is_graph_entity && idx[b].is_graph_entity));
    }
    let scored = match_pairs(&pairs, &payload, &cfg.model, ctx)?;
    let g = build_linkage_graph(&scored, cfg.tau_pos, cfg.tau_neg)?;
    let assignment = resolve_clusters(&g, &payload, seed, cfg.seeds.max(1));
    Ok(LinkOutcome { assignment, pairs_scored: scored.len(), blocks: blocks.len() })
}

/// Encoders available to `learned` comparators, by string type.
pub type EncoderRegistry = BTreeMap<String, StringEncoder>;
