use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::{EntityId, ExtendedTriple, FactKey, KgError, Object, SAME_AS_PREDICATE};

/// `r_id -> r_predicate -> objects` for one composite predicate of one subject.
pub type OneHop = BTreeMap<String, BTreeMap<String, Vec<Object>>>;

type KeyRef<'a> = (&'a EntityId, &'a String, &'a Option<String>, &'a Option<String>, &'a Object, &'a Option<String>);

fn key_ref(t: &ExtendedTriple) -> KeyRef<'_> {
    (&t.subject, &t.predicate, &t.r_id, &t.r_predicate, &t.object, &t.locale)
}

fn fact_key_ref(k: &FactKey) -> KeyRef<'_> {
    (&k.subject, &k.predicate, &k.r_id, &k.r_predicate, &k.object, &k.locale)
}

/// Immutable, versioned set of facts partitioned by subject.
///
/// Per-subject fact lists are shared between versions, so deriving a new
/// version only copies the lists that were touched.
#[derive(Clone, Debug, Default)]
pub struct KgSnapshot {
    version: u64,
    subjects: BTreeMap<EntityId, Arc<Vec<ExtendedTriple>>>,
    fact_count: usize,
}

impl PartialEq for KgSnapshot {
    /// Fact-set equality; the version number is ignored.
    fn eq(&self, other: &Self) -> bool {
        self.fact_count == other.fact_count && self.subjects == other.subjects
    }
}

impl KgSnapshot {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_triples(triples: impl IntoIterator<Item = ExtendedTriple>) -> Self {
        let mut b = Self::empty().builder();
        for t in triples {
            b.upsert(t);
        }
        b.finish()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.fact_count
    }

    pub fn is_empty(&self) -> bool {
        self.fact_count == 0
    }

    pub fn entity_count(&self) -> usize {
        self.subjects.len()
    }

    pub fn entities(&self) -> impl Iterator<Item = &EntityId> {
        self.subjects.keys()
    }

    pub fn contains_entity(&self, id: &EntityId) -> bool {
        self.subjects.contains_key(id)
    }

    /// All facts in (subject, key) order.
    pub fn triples(&self) -> impl Iterator<Item = &ExtendedTriple> {
        self.subjects.values().flat_map(|v| v.iter())
    }

    /// All facts of `id`; empty for unknown subjects.
    pub fn get_entity(&self, id: &EntityId) -> &[ExtendedTriple] {
        self.subjects.get(id).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn get_fact(&self, key: &FactKey) -> Option<&ExtendedTriple> {
        let facts = self.subjects.get(&key.subject)?;
        facts.binary_search_by(|t| key_ref(t).cmp(&fact_key_ref(key))).ok().map(|i| &facts[i])
    }

    /// Relationship nodes of `predicate` grouped by `r_id`, served from the
    /// subject partition alone.
    pub fn get_one_hop(&self, id: &EntityId, predicate: &str) -> Result<OneHop, KgError> {
        let mut out = OneHop::new();
        let mut saw_simple = false;
        for t in self.get_entity(id).iter().filter(|t| t.predicate == predicate) {
            match (&t.r_id, &t.r_predicate) {
                (Some(r), Some(rp)) => {
                    out.entry(r.clone()).or_default().entry(rp.clone()).or_default().push(t.object.clone())
                }
                _ => saw_simple = true,
            }
        }
        if out.is_empty() && saw_simple {
            return Err(KgError::NotComposite { subject: id.clone(), predicate: predicate.to_string() });
        }
        Ok(out)
    }

    /// Values of a simple predicate, in key order.
    pub fn values<'a>(&'a self, id: &EntityId, predicate: &'a str) -> impl Iterator<Item = &'a Object> + 'a {
        self.get_entity(id).iter().filter(move |t| t.predicate == predicate && t.r_id.is_none()).map(|t| &t.object)
    }

    /// Literal values of the `type` predicate.
    pub fn types_of(&self, id: &EntityId) -> Vec<String> {
        self.values(id, super::TYPE_PREDICATE).filter_map(|o| o.as_literal().map(str::to_string)).collect()
    }

    /// Map from linked source entity to the graph entity holding its `same_as` fact.
    pub fn same_as_index(&self) -> BTreeMap<EntityId, EntityId> {
        self.triples()
            .filter(|t| t.predicate == SAME_AS_PREDICATE)
            .filter_map(|t| t.object.as_entity().map(|o| (o.clone(), t.subject.clone())))
            .collect()
    }

    /// New snapshot (version + 1) with `batch` merged in. `self` is untouched.
    pub fn upsert_triples(&self, batch: impl IntoIterator<Item = ExtendedTriple>) -> KgSnapshot {
        let mut b = self.builder();
        for t in batch {
            b.upsert(t);
        }
        b.finish()
    }

    pub fn builder(&self) -> SnapshotBuilder {
        SnapshotBuilder { base_version: self.version, subjects: self.subjects.clone() }
    }

    pub fn write_jsonl<W: Write>(&self, w: W) -> Result<(), KgError> {
        write_triples_jsonl(w, self.triples())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<KgSnapshot, KgError> {
        Ok(Self::from_triples(read_triples_jsonl(r)?))
    }

    /// SHA-256 of the canonical JSON Lines serialization.
    pub fn digest(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        hex::encode(Sha256::digest(&buf))
    }
}

/// Outcome of a single upsert.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Upsert {
    Inserted,
    Updated,
    Unchanged,
}

/// Mutable working copy of a snapshot; `finish` seals it as the next version.
#[derive(Debug)]
pub struct SnapshotBuilder {
    base_version: u64,
    subjects: BTreeMap<EntityId, Arc<Vec<ExtendedTriple>>>,
}

impl SnapshotBuilder {
    pub fn upsert(&mut self, t: ExtendedTriple) -> Upsert {
        if let Some(facts) = self.subjects.get(&t.subject) {
            if let Ok(i) = facts.binary_search_by(|x| key_ref(x).cmp(&key_ref(&t))) {
                if facts[i].provenance_covers(&t.sources, &t.trust) {
                    return Upsert::Unchanged;
                }
            }
        }
        let facts = Arc::make_mut(self.subjects.entry(t.subject.clone()).or_default());
        match facts.binary_search_by(|x| key_ref(x).cmp(&key_ref(&t))) {
            Ok(i) => {
                if facts[i].merge_provenance(&t.sources, &t.trust) {
                    Upsert::Updated
                } else {
                    Upsert::Unchanged
                }
            }
            Err(i) => {
                facts.insert(i, t);
                Upsert::Inserted
            }
        }
    }

    pub fn facts(&self, id: &EntityId) -> &[ExtendedTriple] {
        self.subjects.get(id).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn contains_entity(&self, id: &EntityId) -> bool {
        self.subjects.get(id).is_some_and(|v| !v.is_empty())
    }

    pub fn remove_fact(&mut self, key: &FactKey) -> Option<ExtendedTriple> {
        let facts = self.subjects.get_mut(&key.subject)?;
        let i = facts.binary_search_by(|t| key_ref(t).cmp(&fact_key_ref(key))).ok()?;
        Some(Arc::make_mut(facts).remove(i))
    }

    pub fn remove_entity(&mut self, id: &EntityId) -> Vec<ExtendedTriple> {
        self.subjects.remove(id).map(|v| Arc::try_unwrap(v).unwrap_or_else(|a| (*a).clone())).unwrap_or_default()
    }

    /// Edits the provenance of an entity's facts in place. Facts for which `f`
    /// returns false are dropped, as are facts left without sources.
    /// Key fields must not be changed by `f`.
    pub fn retain_facts(&mut self, id: &EntityId, mut f: impl FnMut(&mut ExtendedTriple) -> bool) -> usize {
        let Some(facts) = self.subjects.get_mut(id) else {
            return 0;
        };
        let facts = Arc::make_mut(facts);
        let before = facts.len();
        facts.retain_mut(|t| f(t) && !t.sources.is_empty());
        before - facts.len()
    }

    pub fn entities(&self) -> impl Iterator<Item = &EntityId> {
        self.subjects.keys()
    }

    pub fn finish(self) -> KgSnapshot {
        let subjects: BTreeMap<_, _> = self.subjects.into_iter().filter(|(_, v)| !v.is_empty()).collect();
        let fact_count = subjects.values().map(|v| v.len()).sum();
        KgSnapshot { version: self.base_version + 1, subjects, fact_count }
    }
}

pub fn write_triples_jsonl<'a, W: Write>(
    mut w: W,
    triples: impl IntoIterator<Item = &'a ExtendedTriple>,
) -> Result<(), KgError> {
    for t in triples {
        serde_json::to_writer(&mut w, t).map_err(|e| KgError::Json { line: 0, source: e })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads one triple per non-blank line; errors carry 1-based line numbers.
pub fn read_triples_jsonl<R: BufRead>(r: R) -> Result<Vec<ExtendedTriple>, KgError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t = serde_json::from_str(&line).map_err(|e| KgError::Json { line: i + 1, source: e })?;
        out.push(t);
    }
    Ok(out)
}
