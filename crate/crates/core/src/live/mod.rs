//! The live graph: a stable-graph view merged with streaming records, served
//! through KGQ queries, intents with semantic guards, per-session context and
//! curation hot fixes.

mod context;
mod curation;
mod exec;
mod indexes;
mod intent;
mod kgq;
mod service;
mod stream;

use thiserror::Error;

pub use context::{
    resolve_followup, update_context, ArgSlot, CompleteIntent, ContextEntity, ContextGraph, Interaction, PartialIntent,
    DEFAULT_CONTEXT_CAPACITY, GENDER_PREDICATE,
};
pub use curation::{
    append_curation, apply_and_record, apply_curation, curate_snapshot, read_curation_stream, CurationRecord,
};
pub use exec::{compare, condition_holds, execute_query, reach, QueryResult, Row};
pub use indexes::{LiveIndexes, NAME_PREDICATES};
pub use intent::{instantiate, route_intent, Guard, IntentAlternative, IntentDef, IntentRegistry, RoutedIntent};
pub use kgq::{
    expand_virtual_ops, parse_kgq, parse_kgq_with, CmpOp, Condition, Direction, EdgePattern, KgqQuery, Literal,
    NodePattern, OperatorRegistry, Pattern, Projection, VirtualOperator, DEFAULT_MAX_DEPTH,
};
pub use service::{LiveService, LiveState, Request, Response};
pub use stream::{
    build_live_indexes, ingest_stream_record, read_stream_records, EntityReference, StreamLinker, StreamRecord,
    STREAM_TRUST,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KgqError {
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unbound variable {0}")]
    UnboundVariable(String),
    #[error("traversal depth {hops} exceeds {max}")]
    DepthExceeded { hops: u32, max: u32 },
    #[error("unknown operator {0}")]
    UnknownOperator(String),
    #[error("recursive operator expansion: {}", .0.join(" -> "))]
    RecursiveExpansion(Vec<String>),
    #[error("{operator} takes {expected} argument(s), got {found}")]
    Arity { operator: String, expected: usize, found: usize },
}

#[derive(Debug, Error)]
pub enum LiveError {
    #[error(transparent)]
    Kgq(#[from] KgqError),
    #[error("no alternative of {0} applies")]
    NoApplicableAlternative(String),
    #[error("cannot resolve reference: {0}")]
    UnresolvableReference(String),
    #[error("unknown curation target: {0}")]
    UnknownTarget(String),
    #[error("unknown intent {0}")]
    UnknownIntent(String),
    #[error("invalid intent: {0}")]
    BadIntent(String),
    #[error("invalid record: {0}")]
    BadRecord(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
