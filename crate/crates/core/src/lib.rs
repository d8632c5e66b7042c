//! Continuous construction and serving of a provenance-carrying knowledge graph.
//!
//! The crate is organised along the data path:
//!
//! * [`kg`]: extended triples and the versioned snapshot store
//! * [`ingest`]: per-source import, entity transform, ontology alignment, deltas, export
//! * [`link`]: blocking, matching and correlation clustering
//! * [`fuse`]: provenance-preserving fusion, truth discovery, deletions, volatile partitions
//! * [`simstrings`]: deterministic and learned string similarity
//! * [`nerd`]: entity view, candidate retrieval, disambiguation with rejection
//! * [`engine`]: operation log, store agents, view catalog, entity importance
//! * [`embed`]: TransE / DistMult training and nearest-neighbour fact search
//! * [`live`]: live indexes, the KGQ language, intents, context and curation

pub mod embed;
pub mod engine;
pub mod fuse;
pub mod ingest;
pub mod kg;
pub mod link;
pub mod live;
pub mod nerd;
pub mod persist;
pub mod simstrings;
pub mod text;

pub use kg::{EntityId, ExtendedTriple, FactKey, KgSnapshot, Object, ObjectKind, Ontology};
