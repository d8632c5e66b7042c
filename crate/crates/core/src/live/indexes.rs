use std::collections::{BTreeMap, BTreeSet};

use crate::kg::{EntityId, ExtendedTriple, FactKey, Object, TYPE_PREDICATE};
use crate::text::tokenize;

/// Predicates whose literal values feed the inverted index.
pub const NAME_PREDICATES: &[&str] = &["name", "alias", "title"];

/// Inverted name index plus per-entity fact records, with curation blocks
/// applied on read.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LiveIndexes {
    inverted: BTreeMap<String, BTreeSet<EntityId>>,
    kv: BTreeMap<EntityId, Vec<ExtendedTriple>>,
    incoming: BTreeMap<EntityId, BTreeSet<(String, EntityId)>>,
    blocked_facts: BTreeSet<FactKey>,
    pub(crate) pending: BTreeSet<(EntityId, String)>,
    pub freshness_lsn: u64,
}

fn name_tokens<'a>(facts: impl IntoIterator<Item = &'a ExtendedTriple>) -> BTreeSet<String> {
    facts
        .into_iter()
        .filter(|t| !t.is_composite() && NAME_PREDICATES.contains(&t.predicate.as_str()))
        .filter_map(|t| t.object.as_literal())
        .flat_map(tokenize)
        .map(|t| t.text)
        .collect()
}

impl LiveIndexes {
    /// Indexes a stable-graph export, grouped by subject.
    pub fn from_triples(triples: impl IntoIterator<Item = ExtendedTriple>) -> Self {
        let mut by_subject: BTreeMap<EntityId, Vec<ExtendedTriple>> = BTreeMap::new();
        for t in triples {
            by_subject.entry(t.subject.clone()).or_default().push(t);
        }
        let mut idx = Self::default();
        for (id, facts) in by_subject {
            idx.put_entity(&id, facts);
        }
        idx
    }

    /// Replaces every fact of `id`; an empty list removes the entity.
    pub fn put_entity(&mut self, id: &EntityId, mut facts: Vec<ExtendedTriple>) {
        self.remove_entity(id);
        facts.retain(|t| &t.subject == id);
        if facts.is_empty() {
            return;
        }
        facts.sort_by_key(|a| a.key());
        facts.dedup_by(|a, b| a.key() == b.key());
        for tok in name_tokens(&facts) {
            self.inverted.entry(tok).or_default().insert(id.clone());
        }
        for t in &facts {
            if let Object::Entity(o) = &t.object {
                self.incoming.entry(o.clone()).or_default().insert((t.predicate_path(), id.clone()));
            }
        }
        self.kv.insert(id.clone(), facts);
    }

    pub fn remove_entity(&mut self, id: &EntityId) -> Option<Vec<ExtendedTriple>> {
        let old = self.kv.remove(id)?;
        for tok in name_tokens(&old) {
            if let Some(p) = self.inverted.get_mut(&tok) {
                p.remove(id);
                if p.is_empty() {
                    self.inverted.remove(&tok);
                }
            }
        }
        for t in &old {
            if let Object::Entity(o) = &t.object {
                if let Some(s) = self.incoming.get_mut(o) {
                    s.remove(&(t.predicate_path(), id.clone()));
                    if s.is_empty() {
                        self.incoming.remove(o);
                    }
                }
            }
        }
        self.pending.retain(|(e, _)| e != id);
        Some(old)
    }

    pub fn block_fact(&mut self, key: FactKey) {
        self.blocked_facts.insert(key);
    }

    pub fn is_blocked(&self, key: &FactKey) -> bool {
        self.blocked_facts.contains(key)
    }

    pub fn blocked_facts(&self) -> &BTreeSet<FactKey> {
        &self.blocked_facts
    }

    pub fn contains(&self, id: &EntityId) -> bool {
        self.kv.contains_key(id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &EntityId> {
        self.kv.keys()
    }

    pub fn len(&self) -> usize {
        self.kv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kv.is_empty()
    }

    /// All stored facts of `id`, blocked ones included.
    pub fn raw_facts(&self, id: &EntityId) -> &[ExtendedTriple] {
        self.kv.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn facts(&self, id: &EntityId) -> impl Iterator<Item = &ExtendedTriple> {
        self.raw_facts(id).iter().filter(|t| !self.blocked_facts.contains(&t.key()))
    }

    /// Rendered objects of `id` under a predicate path, sorted and distinct.
    pub fn values(&self, id: &EntityId, path: &str) -> Vec<String> {
        let set: BTreeSet<String> =
            self.facts(id).filter(|t| t.predicate_path() == path).map(|t| t.object.render()).collect();
        set.into_iter().collect()
    }

    pub fn types_of(&self, id: &EntityId) -> BTreeSet<String> {
        self.facts(id)
            .filter(|t| t.predicate == TYPE_PREDICATE && !t.is_composite())
            .filter_map(|t| t.object.as_literal().map(str::to_string))
            .collect()
    }

    pub fn has_type(&self, id: &EntityId, t: &str) -> bool {
        self.facts(id).any(|f| f.predicate == TYPE_PREDICATE && !f.is_composite() && f.object.as_literal() == Some(t))
    }

    /// Entities whose visible names contain every token of `text`.
    pub fn search(&self, text: &str) -> BTreeSet<EntityId> {
        let toks: BTreeSet<String> = tokenize(text).into_iter().map(|t| t.text).collect();
        let Some(first) = toks.iter().next() else {
            return BTreeSet::new();
        };
        let mut hits: BTreeSet<EntityId> = self.inverted.get(first).cloned().unwrap_or_default();
        for t in toks.iter().skip(1) {
            let Some(p) = self.inverted.get(t) else {
                return BTreeSet::new();
            };
            hits.retain(|e| p.contains(e));
        }
        hits.retain(|e| toks.is_subset(&name_tokens(self.facts(e))));
        hits
    }

    pub fn postings(&self, token: &str) -> Option<&BTreeSet<EntityId>> {
        self.inverted.get(token)
    }

    /// Entity objects reached from `id` over one visible `path` edge.
    pub fn out_neighbors(&self, id: &EntityId, path: &str) -> BTreeSet<EntityId> {
        self.facts(id).filter(|t| t.predicate_path() == path).filter_map(|t| t.object.as_entity().cloned()).collect()
    }

    /// Subjects with a visible `path` edge into `id`.
    pub fn in_neighbors(&self, id: &EntityId, path: &str) -> BTreeSet<EntityId> {
        let Some(s) = self.incoming.get(id) else {
            return BTreeSet::new();
        };
        s.iter()
            .filter(|(p, _)| p == path)
            .map(|(_, subj)| subj)
            .filter(|subj| self.facts(subj).any(|t| t.predicate_path() == path && t.object.as_entity() == Some(id)))
            .cloned()
            .collect()
    }

    /// References from stream records still waiting for an entity match.
    pub fn pending_references(&self) -> impl Iterator<Item = &(EntityId, String)> {
        self.pending.iter()
    }
}
