//! Per-source ingestion: import → entity transform → ontology alignment →
//! delta computation → export of extended triples.
//!
//! Every stage is a pure function of its inputs and the source config, so
//! pipelines of different sources can run side by side.

mod align;
mod config;
mod delta;
mod export;
mod import;
mod transform;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, KgError};

pub use align::{align_ontology, PgfConfig, PgfKind, PgfRule};
pub use config::{Artifact, SourceConfig};
pub use delta::{compute_delta, read_delta_dir, write_delta_dir, SourceDelta};
pub use export::{export_extended_triples, mint_r_id, ExportSettings};
pub use import::{import_reader, import_source, Format};
pub use transform::{transform_entities, JoinSpec, TransformSpec};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: line {line}: {message}")]
    FormatError { path: String, line: usize, message: String },
    #[error("unknown artifact format `{0}`")]
    UnknownFormat(String),
    #[error("duplicate entity id `{0}`")]
    DuplicateEntityId(String),
    #[error("row {row} of group `{group}` has no `{column}` id value")]
    MissingIdPredicate { group: String, row: usize, column: String },
    #[error("empty predicate name in group `{group}`")]
    EmptyPredicateName { group: String },
    #[error("schema predicate `{0}` is not produced by any artifact")]
    MissingSchemaPredicate(String),
    #[error("predicate `{predicate}` appears twice in a row of group `{group}`")]
    DuplicatePredicateName { group: String, predicate: String },
    #[error("unknown row group `{0}`")]
    UnknownGroup(String),
    #[error("PGF target `{0}` is not in the ontology")]
    UnknownTargetPredicate(String),
    #[error("rename rule for `{0}` needs exactly one source predicate")]
    RenameArity(String),
    #[error("combiner for `{target}` uses {placeholders:?} but the rule lists {sources:?}")]
    CombinerArityMismatch { target: String, placeholders: Vec<String>, sources: Vec<String> },
    #[error("rule for `{0}` is missing its combiner or constant value")]
    IncompleteRule(String),
    #[error("entity {entity} has no value for required predicate `{predicate}`")]
    UnmappedRequiredPredicate { entity: EntityId, predicate: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Validation(#[from] KgError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One imported row. Cells keep their original order and may repeat a column
/// name (that is reported by the transform stage).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRow {
    pub cells: Vec<(String, Vec<String>)>,
}

impl RawRow {
    pub fn get(&self, column: &str) -> Option<&[String]> {
        self.cells.iter().find(|(c, _)| c == column).map(|(_, v)| v.as_slice())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RowGroup {
    pub name: String,
    pub rows: Vec<RawRow>,
}

/// Everything one source produced in one import, grouped by artifact group.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawRowSet {
    pub source_id: String,
    pub groups: Vec<RowGroup>,
}

impl RawRowSet {
    pub fn group(&self, name: &str) -> Option<&RowGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn row_count(&self) -> usize {
        self.groups.iter().map(|g| g.rows.len()).sum()
    }
}

/// An entity-centric row. Predicate names containing a dot (`educated_at.school`)
/// are relationship-node fields; the i-th values of all fields sharing a
/// prefix form the i-th node.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceEntity {
    pub id: EntityId,
    pub predicates: BTreeMap<String, Vec<String>>,
}

impl SourceEntity {
    pub fn new(id: EntityId) -> Self {
        Self { id, predicates: BTreeMap::new() }
    }

    pub fn with(mut self, predicate: &str, values: &[&str]) -> Self {
        self.predicates.entry(predicate.to_string()).or_default().extend(values.iter().map(|v| v.to_string()));
        self
    }

    pub fn values(&self, predicate: &str) -> &[String] {
        self.predicates.get(predicate).map(|v| v.as_slice()).unwrap_or(&[])
    }
}
