use serde::{Deserialize, Serialize};

use saga_core::fuse::{estimate_fact_confidence, SourceTrustTable};
use saga_core::kg::SAME_AS_PREDICATE;
use saga_core::{EntityId, ExtendedTriple, KgSnapshot, ObjectKind};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactProvenance {
    pub predicate: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_predicate: Option<String>,
    pub object: String,
    pub object_kind: ObjectKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locale: Option<String>,
    pub sources: Vec<String>,
    pub trust: Vec<f64>,
    /// Noisy-or of the fact's own trust values.
    pub confidence: f64,
    /// Current estimate per source from truth discovery, when available.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub source_trust: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceReport {
    pub entity: EntityId,
    /// The requested source id when it was mapped through `same_as`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requested: Option<EntityId>,
    /// `stable` or `live`.
    pub origin: String,
    pub types: Vec<String>,
    pub facts: Vec<FactProvenance>,
    /// Source entities linked into this one.
    pub same_as: Vec<EntityId>,
}

impl ProvenanceReport {
    /// Every source contributing to any fact.
    pub fn sources(&self) -> Vec<&str> {
        let mut s: Vec<&str> = self.facts.iter().flat_map(|f| f.sources.iter().map(String::as_str)).collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// `ns:local`, or a bare local id in the graph namespace.
pub fn parse_entity_id(s: &str) -> Result<EntityId, CliError> {
    let s = s.trim();
    let parsed = if s.contains(':') {
        s.parse().ok()
    } else if s.is_empty() {
        None
    } else {
        Some(EntityId::graph(s))
    };
    parsed.ok_or_else(|| CliError::UnknownEntity(s.to_string()))
}

fn fact_provenance(t: &ExtendedTriple, table: Option<&SourceTrustTable>) -> FactProvenance {
    let own = SourceTrustTable {
        trust: t.sources.iter().cloned().zip(t.trust.iter().copied()).collect(),
        ..Default::default()
    };
    let confidence = estimate_fact_confidence(t, &own).map_or(0.0, |c| c.value());
    FactProvenance {
        predicate: t.predicate.clone(),
        r_id: t.r_id.clone(),
        r_predicate: t.r_predicate.clone(),
        object: t.object.render(),
        object_kind: t.object.kind(),
        locale: t.locale.clone(),
        sources: t.sources.clone(),
        trust: t.trust.clone(),
        confidence,
        source_trust: table.map(|tb| t.sources.iter().map(|s| tb.get(s)).collect()).unwrap_or_default(),
    }
}

/// Every fact of `id` with its sources, trust and confidence, plus the
/// source entities linked into it. Source ids resolve to the graph entity
/// holding their `same_as` fact.
pub fn inspect(
    snapshot: &KgSnapshot,
    trust: Option<&SourceTrustTable>,
    id: &str,
) -> Result<ProvenanceReport, CliError> {
    let requested = parse_entity_id(id)?;
    let (entity, via) = if snapshot.contains_entity(&requested) {
        (requested, None)
    } else {
        match snapshot.same_as_index().get(&requested) {
            Some(g) => (g.clone(), Some(requested)),
            None => return Err(CliError::UnknownEntity(requested.to_string())),
        }
    };
    let facts = snapshot.get_entity(&entity);
    Ok(ProvenanceReport {
        types: snapshot.types_of(&entity),
        same_as: facts
            .iter()
            .filter(|t| t.predicate == SAME_AS_PREDICATE)
            .filter_map(|t| t.object.as_entity().cloned())
            .collect(),
        facts: facts.iter().map(|t| fact_provenance(t, trust)).collect(),
        entity,
        requested: via,
        origin: "stable".into(),
    })
}
