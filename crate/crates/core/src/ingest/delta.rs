use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::export::{export_extended_triples, ExportSettings};
use super::{IngestError, SourceEntity};
use crate::kg::{read_triples_jsonl, write_triples_jsonl};
use crate::kg::{EntityId, ExtendedTriple};

/// Changes of one source between two consumed snapshots.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SourceDelta {
    pub source_id: String,
    pub added: Vec<SourceEntity>,
    pub deleted: Vec<SourceEntity>,
    /// Full current entities, not diffs.
    pub updated: Vec<SourceEntity>,
    pub volatile_dump: Vec<ExtendedTriple>,
    pub t0: u64,
    pub tn: u64,
}

impl SourceDelta {
    /// No added, deleted or updated entities.
    pub fn is_stable(&self) -> bool {
        self.added.is_empty() && self.deleted.is_empty() && self.updated.is_empty()
    }
}

type Canonical = BTreeMap<String, Vec<String>>;

fn canonical(e: &SourceEntity, volatile: &BTreeSet<String>) -> Canonical {
    e.predicates
        .iter()
        .filter(|(p, _)| !is_volatile(p, volatile))
        .filter_map(|(p, vs)| {
            let mut vs: Vec<String> = vs.iter().filter(|v| !v.trim().is_empty()).cloned().collect();
            vs.sort();
            vs.dedup();
            (!vs.is_empty()).then(|| (p.clone(), vs))
        })
        .collect()
}

fn is_volatile(p: &str, volatile: &BTreeSet<String>) -> bool {
    volatile.contains(p) || p.split_once('.').is_some_and(|(h, _)| volatile.contains(h))
}

fn strip(e: &SourceEntity, volatile: &BTreeSet<String>, keep_volatile: bool) -> SourceEntity {
    SourceEntity {
        id: e.id.clone(),
        predicates: e
            .predicates
            .iter()
            .filter(|(p, _)| is_volatile(p, volatile) == keep_volatile)
            .map(|(p, v)| (p.clone(), v.clone()))
            .collect(),
    }
}

/// Partitions `curr` against `prev` by source entity id. Volatile predicates
/// never count as a modification and are shipped separately as a full dump.
pub fn compute_delta(
    prev: &[SourceEntity],
    curr: &[SourceEntity],
    volatile: &BTreeSet<String>,
    settings: &ExportSettings,
    t0: u64,
    tn: u64,
) -> Result<SourceDelta, IngestError> {
    let before: BTreeMap<&EntityId, &SourceEntity> = prev.iter().map(|e| (&e.id, e)).collect();
    let after: BTreeMap<&EntityId, &SourceEntity> = curr.iter().map(|e| (&e.id, e)).collect();
    let mut d = SourceDelta { source_id: settings.source_id.clone(), t0, tn, ..Default::default() };
    for (id, e) in &after {
        match before.get(id) {
            None => d.added.push(strip(e, volatile, false)),
            Some(old) if canonical(old, volatile) != canonical(e, volatile) => {
                d.updated.push(strip(e, volatile, false))
            }
            Some(_) => {}
        }
    }
    for (id, e) in &before {
        if !after.contains_key(id) {
            d.deleted.push(strip(e, volatile, false));
        }
    }
    let vol: Vec<SourceEntity> = after.values().map(|e| strip(e, volatile, true)).collect();
    d.volatile_dump = export_extended_triples(&vol, settings)?;
    Ok(d)
}

#[derive(Serialize, Deserialize)]
struct DeltaMeta {
    source_id: String,
    t0: u64,
    tn: u64,
}

fn write_entities(path: &Path, es: &[SourceEntity]) -> Result<(), IngestError> {
    let mut w = BufWriter::new(File::create(path)?);
    for e in es {
        serde_json::to_writer(&mut w, e).map_err(|e| IngestError::Config(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_entities(path: &Path) -> Result<Vec<SourceEntity>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| IngestError::FormatError {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Writes `<root>/<source_id>/<tn>/{added,deleted,updated,volatile}.jsonl`
/// plus `meta.json`; returns the directory.
pub fn write_delta_dir(root: &Path, d: &SourceDelta) -> Result<PathBuf, IngestError> {
    let dir = root.join(&d.source_id).join(d.tn.to_string());
    std::fs::create_dir_all(&dir)?;
    write_entities(&dir.join("added.jsonl"), &d.added)?;
    write_entities(&dir.join("deleted.jsonl"), &d.deleted)?;
    write_entities(&dir.join("updated.jsonl"), &d.updated)?;
    let w = BufWriter::new(File::create(dir.join("volatile.jsonl"))?);
    write_triples_jsonl(w, &d.volatile_dump)?;
    let meta = DeltaMeta { source_id: d.source_id.clone(), t0: d.t0, tn: d.tn };
    std::fs::write(dir.join("meta.json"), serde_json::to_vec(&meta).expect("plain struct"))?;
    Ok(dir)
}

pub fn read_delta_dir(dir: &Path) -> Result<SourceDelta, IngestError> {
    let meta: DeltaMeta = serde_json::from_slice(&std::fs::read(dir.join("meta.json"))?)
        .map_err(|e| IngestError::Config(format!("{}: {e}", dir.display())))?;
    Ok(SourceDelta {
        source_id: meta.source_id,
        added: read_entities(&dir.join("added.jsonl"))?,
        deleted: read_entities(&dir.join("deleted.jsonl"))?,
        updated: read_entities(&dir.join("updated.jsonl"))?,
        volatile_dump: read_triples_jsonl(BufReader::new(File::open(dir.join("volatile.jsonl"))?))?,
        t0: meta.t0,
        tn: meta.tn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ent(id: &str, title: &str, pop: &str) -> SourceEntity {
        SourceEntity::new(EntityId::new("src", id).unwrap()).with("title", &[title]).with("popularity", &[pop])
    }

    fn vol() -> BTreeSet<String> {
        ["popularity".to_string()].into()
    }

    #[test]
    fn added_only() {
        let s = ExportSettings::new("src", 0.9);
        let d =
            compute_delta(&[ent("a", "A", "1")], &[ent("a", "A", "1"), ent("b", "B", "2")], &vol(), &s, 0, 1).unwrap();
        assert_eq!(d.added.len(), 1);
        assert_eq!(d.added[0].id.local_id(), "b");
        assert!(d.deleted.is_empty() && d.updated.is_empty());
    }

    #[test]
    fn volatile_change_is_not_an_update() {
        let s = ExportSettings::new("src", 0.9);
        let d = compute_delta(&[ent("a", "A", "10")], &[ent("a", "A", "99")], &vol(), &s, 0, 1).unwrap();
        assert!(d.is_stable());
        assert_eq!(d.volatile_dump.len(), 1);
        assert_eq!(d.volatile_dump[0].object.render(), "99");
    }

    #[test]
    fn repeated_value_is_not_an_update() {
        let s = ExportSettings::new("src", 0.9);
        let prev = ent("a", "A", "1").with("genre", &["drama", "drama"]);
        let curr = ent("a", "A", "1").with("genre", &["drama"]);
        assert!(compute_delta(&[prev], &[curr], &vol(), &s, 0, 1).unwrap().is_stable());
    }

    #[test]
    fn brand_new_source_is_all_added() {
        let s = ExportSettings::new("src", 0.9);
        let curr = [ent("a", "A", "1"), ent("b", "B", "2")];
        let d = compute_delta(&[], &curr, &vol(), &s, 0, 1).unwrap();
        assert_eq!(d.added.len(), 2);
        assert!(d.added.iter().all(|e| !e.predicates.contains_key("popularity")));
        assert!(d.deleted.is_empty() && d.updated.is_empty());
    }

    #[test]
    fn value_order_does_not_matter() {
        let s = ExportSettings::new("src", 0.9);
        let a = SourceEntity::new(EntityId::new("src", "a").unwrap()).with("alias", &["x", "y"]);
        let b = SourceEntity::new(EntityId::new("src", "a").unwrap()).with("alias", &["y", "x"]).with("empty", &[]);
        assert!(compute_delta(&[a], &[b], &vol(), &s, 0, 1).unwrap().is_stable());
    }

    #[test]
    fn delta_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = ExportSettings::new("src", 0.9);
        let d = compute_delta(
            &[ent("a", "A", "1"), ent("c", "C", "1")],
            &[ent("a", "A2", "1"), ent("b", "B", "2")],
            &vol(),
            &s,
            3,
            7,
        )
        .unwrap();
        let p = write_delta_dir(dir.path(), &d).unwrap();
        assert!(p.ends_with("src/7"));
        assert_eq!(read_delta_dir(&p).unwrap(), d);
    }
}
