//! Fusion of linked source payloads into the KG: provenance-merging upserts,
//! relationship-node merging, truth discovery, deletions and volatile
//! partition overwrite.

mod construct;
mod merge;
mod partition;
mod trust;

use thiserror::Error;

use crate::ingest::IngestError;
use crate::kg::{EntityId, ExtendedTriple, KgError, KgSnapshot};
use crate::link::LinkError;

pub use construct::{process_source_payloads, FuseConfig, FusionContext, FusionOutcome, FusionReport, SourceSettings};
pub use merge::{fuse_simple_facts, merge_relationship_nodes, MergeOutcome, RelationshipMergeDecision};
pub use partition::{apply_deletions, overwrite_volatile_partition, retract_source};
pub use trust::{estimate_fact_confidence, update_source_trust, SourceTrustTable, TrustConfig};

#[derive(Debug, Error)]
pub enum FuseError {
    #[error("subject {0} is not a graph entity; link it first")]
    UnlinkedSubject(EntityId),
    #[error("source `{0}` has no trust estimate")]
    UnknownSource(String),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Kg(#[from] KgError),
}

/// Maps a literal object to a KG entity of `expected_type`, or declines.
pub trait ObjectResolver {
    fn resolve(
        &self,
        snapshot: &KgSnapshot,
        subject_facts: &[ExtendedTriple],
        literal: &str,
        expected_type: &str,
    ) -> Option<EntityId>;
}

/// Leaves every literal as it is.
pub struct NoResolution;

impl ObjectResolver for NoResolution {
    fn resolve(&self, _: &KgSnapshot, _: &[ExtendedTriple], _: &str, _: &str) -> Option<EntityId> {
        None
    }
}
