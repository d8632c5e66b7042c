//! Extended-triples data model.
//!
//! Every fact is one flat row: subject, predicate, an optional relationship
//! node (`r_id` + `r_predicate`), an object that is either a literal or a
//! reference to another entity, and the provenance arrays `sources` / `trust`
//! which are always kept parallel.

mod ontology;
mod snapshot;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ontology::{Ontology, PredicateDef, Range};
pub use snapshot::{read_triples_jsonl, write_triples_jsonl, KgSnapshot, OneHop, SnapshotBuilder, Upsert};

/// Namespace of entities minted by the knowledge graph itself.
pub const GRAPH_NAMESPACE: &str = "akg";
/// Predicate carrying the entity type(s).
pub const TYPE_PREDICATE: &str = "type";
/// Provenance edge from a graph entity to a linked source entity.
pub const SAME_AS_PREDICATE: &str = "same_as";

#[derive(Debug, Error)]
pub enum KgError {
    #[error("fact has no sources")]
    EmptySources,
    #[error("sources and trust arrays differ in length ({sources} vs {trust})")]
    ArrayLengthMismatch { sources: usize, trust: usize },
    #[error("r_id and r_predicate must be both present or both absent")]
    DanglingCompositeField,
    #[error("trust value {0} is outside [0, 1]")]
    TrustOutOfRange(f64),
    #[error("locale is only allowed on literal objects")]
    LocaleOnEntityRef,
    #[error("empty predicate name")]
    EmptyPredicate,
    #[error("invalid entity id `{0}`")]
    InvalidEntityId(String),
    #[error("predicate `{predicate}` of {subject} has no relationship nodes")]
    NotComposite { subject: EntityId, predicate: String },
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `namespace:local_id`. The `akg` namespace is reserved for graph entities.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId {
    namespace: String,
    local_id: String,
}

impl EntityId {
    pub fn new(namespace: impl Into<String>, local_id: impl Into<String>) -> Result<Self, KgError> {
        let namespace = namespace.into();
        let local_id = local_id.into();
        if namespace.is_empty() || local_id.is_empty() || namespace.contains(':') {
            return Err(KgError::InvalidEntityId(format!("{namespace}:{local_id}")));
        }
        Ok(Self { namespace, local_id })
    }

    /// Graph entity id. Panics on an empty local id.
    pub fn graph(local_id: impl Into<String>) -> Self {
        Self::new(GRAPH_NAMESPACE, local_id).expect("graph ids need a non-empty local id")
    }

    pub fn namespace(&self) -> &str {
        &self.namespace
    }

    pub fn local_id(&self) -> &str {
        &self.local_id
    }

    pub fn is_graph(&self) -> bool {
        self.namespace == GRAPH_NAMESPACE
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.namespace, self.local_id)
    }
}

impl FromStr for EntityId {
    type Err = KgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (ns, local) = s.split_once(':').ok_or_else(|| KgError::InvalidEntityId(s.to_string()))?;
        Self::new(ns, local)
    }
}

impl Serialize for EntityId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EntityId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Literal,
    EntityRef,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Object {
    Literal(String),
    Entity(EntityId),
}

impl Object {
    pub fn literal(s: impl Into<String>) -> Self {
        Object::Literal(s.into())
    }

    pub fn kind(&self) -> ObjectKind {
        match self {
            Object::Literal(_) => ObjectKind::Literal,
            Object::Entity(_) => ObjectKind::EntityRef,
        }
    }

    pub fn as_entity(&self) -> Option<&EntityId> {
        match self {
            Object::Entity(id) => Some(id),
            Object::Literal(_) => None,
        }
    }

    pub fn as_literal(&self) -> Option<&str> {
        match self {
            Object::Literal(s) => Some(s),
            Object::Entity(_) => None,
        }
    }

    /// Rendered string form: the literal itself or `namespace:local_id`.
    pub fn render(&self) -> String {
        match self {
            Object::Literal(s) => s.clone(),
            Object::Entity(id) => id.to_string(),
        }
    }
}

/// The on-disk / unvalidated row. Field names are the JSON Lines column names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawTriple {
    pub subject: String,
    pub predicate: String,
    #[serde(default)]
    pub r_id: Option<String>,
    #[serde(default)]
    pub r_predicate: Option<String>,
    pub object: String,
    pub object_kind: ObjectKind,
    #[serde(default)]
    pub locale: Option<String>,
    pub sources: Vec<String>,
    pub trust: Vec<f64>,
}

/// A validated fact row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTriple", into = "RawTriple")]
pub struct ExtendedTriple {
    pub subject: EntityId,
    pub predicate: String,
    pub r_id: Option<String>,
    pub r_predicate: Option<String>,
    pub object: Object,
    pub locale: Option<String>,
    pub sources: Vec<String>,
    pub trust: Vec<f64>,
}

/// Identity of a fact, i.e. everything except the provenance arrays.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawFactKey", into = "RawFactKey")]
pub struct FactKey {
    pub subject: EntityId,
    pub predicate: String,
    pub r_id: Option<String>,
    pub r_predicate: Option<String>,
    pub object: Object,
    pub locale: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct RawFactKey {
    subject: String,
    predicate: String,
    #[serde(default)]
    r_id: Option<String>,
    #[serde(default)]
    r_predicate: Option<String>,
    object: String,
    object_kind: ObjectKind,
    #[serde(default)]
    locale: Option<String>,
}

impl TryFrom<RawFactKey> for FactKey {
    type Error = KgError;

    fn try_from(raw: RawFactKey) -> Result<Self, Self::Error> {
        let t = validate_triple(RawTriple {
            subject: raw.subject,
            predicate: raw.predicate,
            r_id: raw.r_id,
            r_predicate: raw.r_predicate,
            object: raw.object,
            object_kind: raw.object_kind,
            locale: raw.locale,
            sources: vec!["_".into()],
            trust: vec![1.0],
        })?;
        Ok(t.key())
    }
}

impl From<FactKey> for RawFactKey {
    fn from(k: FactKey) -> Self {
        RawFactKey {
            subject: k.subject.to_string(),
            predicate: k.predicate,
            r_id: k.r_id,
            r_predicate: k.r_predicate,
            object_kind: k.object.kind(),
            object: k.object.render(),
            locale: k.locale,
        }
    }
}

impl ExtendedTriple {
    /// Simple (non-composite) literal fact from a single source.
    pub fn simple(
        subject: EntityId,
        predicate: impl Into<String>,
        object: Object,
        source: impl Into<String>,
        trust: f64,
    ) -> Self {
        Self {
            subject,
            predicate: predicate.into(),
            r_id: None,
            r_predicate: None,
            object,
            locale: None,
            sources: vec![source.into()],
            trust: vec![trust],
        }
    }

    pub fn key(&self) -> FactKey {
        FactKey {
            subject: self.subject.clone(),
            predicate: self.predicate.clone(),
            r_id: self.r_id.clone(),
            r_predicate: self.r_predicate.clone(),
            object: self.object.clone(),
            locale: self.locale.clone(),
        }
    }

    pub fn is_composite(&self) -> bool {
        self.r_id.is_some()
    }

    /// `predicate` for simple facts, `predicate.r_predicate` for composite ones.
    pub fn predicate_path(&self) -> String {
        match &self.r_predicate {
            Some(rp) => format!("{}.{}", self.predicate, rp),
            None => self.predicate.clone(),
        }
    }

    pub fn trust_of(&self, source: &str) -> Option<f64> {
        self.sources.iter().position(|s| s == source).map(|i| self.trust[i])
    }

    /// Union provenance by source id; the incoming trust wins for a source already
    /// present. New sources are inserted in sorted position.
    pub fn merge_provenance(&mut self, sources: &[String], trust: &[f64]) -> bool {
        let mut changed = false;
        for (s, &t) in sources.iter().zip(trust) {
            match self.sources.iter().position(|x| x == s) {
                Some(i) => {
                    if self.trust[i] != t {
                        self.trust[i] = t;
                        changed = true;
                    }
                }
                None => {
                    let at = self.sources.partition_point(|x| x < s);
                    self.sources.insert(at, s.clone());
                    self.trust.insert(at, t);
                    changed = true;
                }
            }
        }
        changed
    }

    /// True if merging `sources`/`trust` would leave this fact as it is.
    pub fn provenance_covers(&self, sources: &[String], trust: &[f64]) -> bool {
        sources.iter().zip(trust).all(|(s, t)| self.trust_of(s) == Some(*t))
    }

    /// Drops `source` from the provenance arrays. Returns true if it was present.
    pub fn remove_source(&mut self, source: &str) -> bool {
        match self.sources.iter().position(|s| s == source) {
            Some(i) => {
                self.sources.remove(i);
                self.trust.remove(i);
                true
            }
            None => false,
        }
    }
}

impl TryFrom<RawTriple> for ExtendedTriple {
    type Error = KgError;

    fn try_from(raw: RawTriple) -> Result<Self, Self::Error> {
        validate_triple(raw)
    }
}

impl From<ExtendedTriple> for RawTriple {
    fn from(t: ExtendedTriple) -> Self {
        RawTriple {
            subject: t.subject.to_string(),
            predicate: t.predicate,
            r_id: t.r_id,
            r_predicate: t.r_predicate,
            object_kind: t.object.kind(),
            object: t.object.render(),
            locale: t.locale,
            sources: t.sources,
            trust: t.trust,
        }
    }
}

/// Checks a raw row against the extended-triple invariants. Pure.
pub fn validate_triple(raw: RawTriple) -> Result<ExtendedTriple, KgError> {
    if raw.sources.is_empty() {
        return Err(KgError::EmptySources);
    }
    if raw.sources.len() != raw.trust.len() {
        return Err(KgError::ArrayLengthMismatch { sources: raw.sources.len(), trust: raw.trust.len() });
    }
    if raw.r_id.is_some() != raw.r_predicate.is_some() {
        return Err(KgError::DanglingCompositeField);
    }
    if let Some(&t) = raw.trust.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(KgError::TrustOutOfRange(t));
    }
    if raw.predicate.is_empty() || raw.r_predicate.as_deref() == Some("") {
        return Err(KgError::EmptyPredicate);
    }
    let subject: EntityId = raw.subject.parse()?;
    let object = match raw.object_kind {
        ObjectKind::Literal => Object::Literal(raw.object),
        ObjectKind::EntityRef => {
            if raw.locale.is_some() {
                return Err(KgError::LocaleOnEntityRef);
            }
            Object::Entity(raw.object.parse()?)
        }
    };
    Ok(ExtendedTriple {
        subject,
        predicate: raw.predicate,
        r_id: raw.r_id,
        r_predicate: raw.r_predicate,
        object,
        locale: raw.locale,
        sources: raw.sources,
        trust: raw.trust,
    })
}

/// Aggregated probability that a fact is correct.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct FactConfidence(f64);

impl FactConfidence {
    pub fn new(p: f64) -> Option<Self> {
        (0.0..=1.0).contains(&p).then_some(Self(p))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}
