//! Serving-side coordination: operation log, store agents, view catalog,
//! view procedures and entity importance.

mod catalog;
mod importance;
mod log;
mod store;
mod views;

use thiserror::Error;

pub use catalog::{plan_refresh, RefreshPlan, ViewCatalog, ViewDefinition};
pub use importance::{
    aggregate, compute_importance, importance_scores, pagerank, ImportanceRecord, DEFAULT_DAMPING, DEFAULT_TOLERANCE,
};
pub use log::{read_payload, LogEntry, OperationLog};
pub use store::{agent_replay, freshness, read_progress, write_progress, Freshness, StoreAgent, StoreKind, StoreState};
pub use views::{
    builtin_catalog, refresh_views, shared_features_catalog, BuiltinConfig, CreateFn, EntityFeatures,
    MaterializedViews, Neighborhood, Procedure, ProcedureRegistry, RankedEntityIndex, RefreshReport, UpdateFn,
    ViewArtifact, ViewInput, ViewRun, ENTITY_FEATURES, ENTITY_IMPORTANCE, ENTITY_NEIGHBORHOOD, GRAPH_EMBEDDINGS,
    NERD_ENTITIES, PEOPLE_EMBEDDINGS, RANKED_ENTITY_INDEX,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("staged payload {0} does not exist")]
    StageMissing(String),
    #[error("operation log is corrupt: {0}")]
    LogCorrupt(String),
    #[error("operation log has a gap: expected lsn {expected}, found {found}")]
    LogGap { expected: u64, found: u64 },
    #[error("bad payload: {0}")]
    Payload(String),
    #[error("store {store_id} failed to apply lsn {lsn}: {reason}")]
    ApplyFailure { store_id: String, lsn: u64, reason: String },
    #[error("store {store_id} is at lsn {replay_lsn} but the log head is {head}")]
    AheadOfLog { store_id: String, replay_lsn: u64, head: u64 },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("no agents to report freshness for")]
    EmptyAgentSet,
    #[error("view {view} depends on unregistered view {dependency}")]
    UnknownDependency { view: String, dependency: String },
    #[error("view dependency cycle: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("unknown view {0}")]
    UnknownView(String),
    #[error("bad view catalog: {0}")]
    Catalog(String),
    #[error("no procedure registered as {0}")]
    UnknownProcedure(String),
    #[error("view {view} failed: {reason}")]
    ViewProcedure { view: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
