use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LiveError, LiveIndexes};
use crate::kg::{EntityId, ExtendedTriple, FactKey, KgSnapshot};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum CurationRecord {
    BlockFact { key: FactKey },
    EditFact { key: FactKey, replacement: ExtendedTriple },
    BlockEntity { entity: EntityId },
}

impl CurationRecord {
    fn target(&self) -> String {
        match self {
            CurationRecord::BlockFact { key } | CurationRecord::EditFact { key, .. } => {
                format!("{} {} {}", key.subject, key.predicate, key.object.render())
            }
            CurationRecord::BlockEntity { entity } => entity.to_string(),
        }
    }
}

/// Applies a curation to the indexes in place. A record whose target is not
/// indexed is logged and leaves the indexes untouched.
pub fn apply_curation(idx: &mut LiveIndexes, record: &CurationRecord) -> Result<(), LiveError> {
    let known = match record {
        CurationRecord::BlockFact { key } | CurationRecord::EditFact { key, .. } => {
            idx.raw_facts(&key.subject).iter().any(|t| &t.key() == key)
        }
        CurationRecord::BlockEntity { entity } => idx.contains(entity),
    };
    if !known {
        log::warn!("curation target not found: {}", record.target());
        return Err(LiveError::UnknownTarget(record.target()));
    }
    match record {
        CurationRecord::BlockFact { key } => idx.block_fact(key.clone()),
        CurationRecord::EditFact { key, replacement } => {
            let mut facts: Vec<_> = idx.raw_facts(&key.subject).to_vec();
            facts.retain(|t| &t.key() != key);
            if replacement.subject == key.subject {
                facts.push(replacement.clone());
                idx.put_entity(&key.subject, facts);
            } else {
                idx.put_entity(&key.subject, facts);
                let mut other = idx.raw_facts(&replacement.subject).to_vec();
                other.push(replacement.clone());
                idx.put_entity(&replacement.subject, other);
            }
        }
        CurationRecord::BlockEntity { entity } => {
            idx.remove_entity(entity);
        }
    }
    Ok(())
}

/// Applies a curation and, when it took effect, appends it to the curation
/// stream so later constructions pick it up.
pub fn apply_and_record(idx: &mut LiveIndexes, record: &CurationRecord, stream: &Path) -> Result<(), LiveError> {
    apply_curation(idx, record)?;
    append_curation(stream, record)
}

pub fn append_curation(stream: &Path, record: &CurationRecord) -> Result<(), LiveError> {
    let mut f = OpenOptions::new().create(true).append(true).open(stream)?;
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    f.write_all(&line)?;
    f.sync_data()?;
    Ok(())
}

pub fn read_curation_stream(stream: &Path) -> Result<Vec<CurationRecord>, LiveError> {
    if !stream.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for (i, line) in BufReader::new(std::fs::File::open(stream)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| LiveError::BadRecord(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

/// Replays curations over a fused snapshot. Returns the curated snapshot and
/// the number of records that matched nothing.
pub fn curate_snapshot(snapshot: &KgSnapshot, records: &[CurationRecord]) -> (KgSnapshot, usize) {
    if records.is_empty() {
        return (snapshot.clone(), 0);
    }
    let mut b = snapshot.builder();
    let mut missed = 0;
    for r in records {
        let hit = match r {
            CurationRecord::BlockFact { key } => b.remove_fact(key).is_some(),
            CurationRecord::EditFact { key, replacement } => {
                let hit = b.remove_fact(key).is_some();
                if hit {
                    b.upsert(replacement.clone());
                }
                hit
            }
            CurationRecord::BlockEntity { entity } => !b.remove_entity(entity).is_empty(),
        };
        if !hit {
            missed += 1;
        }
    }
    (b.finish(), missed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Object;

    #[test]
    fn record_serde_shape() {
        let r = CurationRecord::BlockEntity { entity: EntityId::graph("x") };
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["action"], "block_entity");
        assert_eq!(serde_json::from_value::<CurationRecord>(v).unwrap(), r);
    }

    #[test]
    fn unknown_target_is_noop() {
        let t = ExtendedTriple::simple(EntityId::graph("a"), "name", Object::literal("A"), "s", 0.9);
        let mut idx = LiveIndexes::from_triples([t.clone()]);
        let before = idx.clone();
        let mut key = t.key();
        key.predicate = "other".into();
        assert!(matches!(
            apply_curation(&mut idx, &CurationRecord::BlockFact { key }),
            Err(LiveError::UnknownTarget(_))
        ));
        assert_eq!(idx, before);
    }
}
