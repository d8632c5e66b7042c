use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::log::{read_payload, OperationLog};
use super::EngineError;
use crate::kg::{EntityId, ExtendedTriple, Object, SAME_AS_PREDICATE};
use crate::persist::write_atomic;
use crate::text;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreKind {
    Analytics,
    InvertedIndex,
    Kv,
    Vector,
}

/// In-process store contents, one shape per kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoreState {
    /// Fact table partitioned by subject.
    Analytics { facts: BTreeMap<EntityId, Vec<ExtendedTriple>> },
    /// Literal tokens → entities, plus the tokens each entity contributed.
    InvertedIndex { postings: BTreeMap<String, BTreeSet<EntityId>>, tokens_of: BTreeMap<EntityId, BTreeSet<String>> },
    /// Entity → JSON document of its facts.
    Kv { docs: BTreeMap<EntityId, String> },
    /// Entity vectors written by views; entities touched since are stale.
    Vector { vectors: BTreeMap<EntityId, Vec<f32>>, stale: BTreeSet<EntityId> },
}

impl StoreState {
    pub fn empty(kind: StoreKind) -> Self {
        match kind {
            StoreKind::Analytics => Self::Analytics { facts: BTreeMap::new() },
            StoreKind::InvertedIndex => Self::InvertedIndex { postings: BTreeMap::new(), tokens_of: BTreeMap::new() },
            StoreKind::Kv => Self::Kv { docs: BTreeMap::new() },
            StoreKind::Vector => Self::Vector { vectors: BTreeMap::new(), stale: BTreeSet::new() },
        }
    }

    pub fn kind(&self) -> StoreKind {
        match self {
            Self::Analytics { .. } => StoreKind::Analytics,
            Self::InvertedIndex { .. } => StoreKind::InvertedIndex,
            Self::Kv { .. } => StoreKind::Kv,
            Self::Vector { .. } => StoreKind::Vector,
        }
    }

    /// Replaces what the store holds for `id` with `facts` (empty = gone).
    /// Applying the same replacement twice is a no-op.
    pub fn replace_entity(&mut self, id: &EntityId, facts: &[ExtendedTriple]) {
        match self {
            Self::Analytics { facts: table } => {
                if facts.is_empty() {
                    table.remove(id);
                } else {
                    table.insert(id.clone(), facts.to_vec());
                }
            }
            Self::InvertedIndex { postings, tokens_of } => {
                for t in tokens_of.remove(id).unwrap_or_default() {
                    if let Some(p) = postings.get_mut(&t) {
                        p.remove(id);
                        if p.is_empty() {
                            postings.remove(&t);
                        }
                    }
                }
                let toks: BTreeSet<String> = facts
                    .iter()
                    .filter(|t| t.predicate != SAME_AS_PREDICATE)
                    .filter_map(|t| match &t.object {
                        Object::Literal(l) => Some(text::words(l)),
                        Object::Entity(_) => None,
                    })
                    .flatten()
                    .collect();
                for t in &toks {
                    postings.entry(t.clone()).or_default().insert(id.clone());
                }
                if !toks.is_empty() {
                    tokens_of.insert(id.clone(), toks);
                }
            }
            Self::Kv { docs } => {
                if facts.is_empty() {
                    docs.remove(id);
                } else {
                    docs.insert(id.clone(), serde_json::to_string(facts).expect("triples serialize"));
                }
            }
            Self::Vector { vectors, stale } => {
                if facts.is_empty() {
                    vectors.remove(id);
                    stale.remove(id);
                } else {
                    stale.insert(id.clone());
                }
            }
        }
    }

    /// sha256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("state serializes")))
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    store_id: String,
    replay_lsn: u64,
    state: StoreState,
}

/// Replays the operation log into one store. With a checkpoint directory
/// the store state and its LSN are persisted together after every apply.
#[derive(Debug)]
pub struct StoreAgent {
    pub store_id: String,
    pub replay_lsn: u64,
    pub state: StoreState,
    checkpoint: Option<PathBuf>,
    fail_at: Option<u64>,
}

impl StoreAgent {
    pub fn new(store_id: impl Into<String>, kind: StoreKind) -> Self {
        Self {
            store_id: store_id.into(),
            replay_lsn: 0,
            state: StoreState::empty(kind),
            checkpoint: None,
            fail_at: None,
        }
    }

    /// Agent checkpointed under `dir/<store_id>.json`, resumed from it when present.
    pub fn open(store_id: impl Into<String>, kind: StoreKind, dir: &Path) -> Result<Self, EngineError> {
        let store_id = store_id.into();
        let path = dir.join(format!("{store_id}.json"));
        let mut agent = Self::new(store_id, kind);
        if path.exists() {
            let cp: Checkpoint = serde_json::from_slice(&std::fs::read(&path)?)
                .map_err(|e| EngineError::Checkpoint(format!("{}: {e}", path.display())))?;
            if cp.state.kind() != kind || cp.store_id != agent.store_id {
                return Err(EngineError::Checkpoint(format!("{} belongs to another store", path.display())));
            }
            agent.replay_lsn = cp.replay_lsn;
            agent.state = cp.state;
        }
        agent.checkpoint = Some(path);
        Ok(agent)
    }

    pub fn kind(&self) -> StoreKind {
        self.state.kind()
    }

    /// Makes the next attempt to apply `lsn` fail once.
    pub fn inject_failure(&mut self, lsn: u64) {
        self.fail_at = Some(lsn);
    }

    pub fn digest(&self) -> String {
        self.state.digest()
    }

    fn save(&self) -> Result<(), EngineError> {
        let Some(path) = &self.checkpoint else {
            return Ok(());
        };
        let cp = Checkpoint { store_id: self.store_id.clone(), replay_lsn: self.replay_lsn, state: self.state.clone() };
        write_atomic(path, &serde_json::to_vec(&cp).expect("checkpoint serializes"))?;
        Ok(())
    }
}

/// Applies entries `(replay_lsn, replay_lsn + limit]` in order. `replay_lsn`
/// advances after each successful apply; a failure stops at the failing LSN.
/// Returns the number of entries applied.
pub fn agent_replay(agent: &mut StoreAgent, log: &OperationLog, limit: usize) -> Result<usize, EngineError> {
    if agent.replay_lsn > log.head() {
        return Err(EngineError::AheadOfLog {
            store_id: agent.store_id.clone(),
            replay_lsn: agent.replay_lsn,
            head: log.head(),
        });
    }
    let mut applied = 0;
    for entry in log.entries_after(agent.replay_lsn, limit) {
        if agent.fail_at == Some(entry.lsn) {
            agent.fail_at = None;
            return Err(EngineError::ApplyFailure {
                store_id: agent.store_id.clone(),
                lsn: entry.lsn,
                reason: "injected failure".into(),
            });
        }
        let payload = read_payload(&log.resolve(entry)).map_err(|e| EngineError::ApplyFailure {
            store_id: agent.store_id.clone(),
            lsn: entry.lsn,
            reason: e.to_string(),
        })?;
        let mut by_subject: BTreeMap<&EntityId, Vec<ExtendedTriple>> = BTreeMap::new();
        for t in &payload {
            by_subject.entry(&t.subject).or_default().push(t.clone());
        }
        for id in &entry.changed_entities {
            let facts = by_subject.get(id).map(Vec::as_slice).unwrap_or(&[]);
            agent.state.replace_entity(id, facts);
        }
        agent.replay_lsn = entry.lsn;
        agent.save()?;
        applied += 1;
    }
    Ok(applied)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Freshness {
    pub per_store: BTreeMap<String, u64>,
    pub min: u64,
}

impl Freshness {
    /// Minimum replay LSN over `required` stores (unknown stores count as 0).
    pub fn min_over<'a>(&self, required: impl IntoIterator<Item = &'a str>) -> u64 {
        required.into_iter().map(|s| self.per_store.get(s).copied().unwrap_or(0)).min().unwrap_or(self.min)
    }
}

pub fn freshness<'a>(agents: impl IntoIterator<Item = &'a StoreAgent>) -> Result<Freshness, EngineError> {
    let per_store: BTreeMap<String, u64> = agents.into_iter().map(|a| (a.store_id.clone(), a.replay_lsn)).collect();
    let min = per_store.values().copied().min().ok_or(EngineError::EmptyAgentSet)?;
    Ok(Freshness { per_store, min })
}

/// Progress file: `{store_id: replay_lsn}`.
pub fn write_progress<'a>(path: &Path, agents: impl IntoIterator<Item = &'a StoreAgent>) -> Result<(), EngineError> {
    let m: BTreeMap<&str, u64> = agents.into_iter().map(|a| (a.store_id.as_str(), a.replay_lsn)).collect();
    write_atomic(path, &serde_json::to_vec_pretty(&m).expect("map serializes"))?;
    Ok(())
}

pub fn read_progress(path: &Path) -> Result<BTreeMap<String, u64>, EngineError> {
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    serde_json::from_slice(&std::fs::read(path)?).map_err(|e| EngineError::Checkpoint(e.to_string()))
}
