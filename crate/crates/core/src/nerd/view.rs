use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::kg::{EntityId, KgSnapshot, Object, SAME_AS_PREDICATE, TYPE_PREDICATE};
use crate::simstrings::StringEncoder;
use crate::text;

/// Locale key used for names without a locale tag.
pub const UNTAGGED_LOCALE: &str = "und";

/// Suffix marking an incoming relationship, e.g. `located_in^-1`.
pub const INVERSE_SUFFIX: &str = "^-1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewConfig {
    pub name_predicates: Vec<String>,
    pub description_predicate: String,
    /// Neighbors kept per record, by descending importance.
    pub max_relationships: usize,
}

impl Default for ViewConfig {
    fn default() -> Self {
        Self {
            name_predicates: vec!["name".into(), "alias".into(), "title".into()],
            description_predicate: "description".into(),
            max_relationships: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NerdEntityRecord {
    pub entity: EntityId,
    pub names_aliases: BTreeMap<String, Vec<String>>,
    pub types: Vec<String>,
    pub description: Option<String>,
    /// (predicate, neighbor surface); incoming edges carry [`INVERSE_SUFFIX`].
    pub key_relationships: Vec<(String, String)>,
    pub neighbor_types: Vec<String>,
    pub importance: f64,
}

impl NerdEntityRecord {
    pub fn aliases(&self) -> impl Iterator<Item = &str> {
        self.names_aliases.values().flatten().map(String::as_str)
    }

    /// Folded tokens of all relationship surfaces.
    pub fn relationship_tokens(&self) -> BTreeSet<String> {
        self.key_relationships.iter().flat_map(|(_, s)| text::words(s)).filter(|w| !text::is_stopword(w)).collect()
    }

    /// Folded tokens of neighbor types and the description.
    pub fn profile_tokens(&self) -> BTreeSet<String> {
        self.neighbor_types
            .iter()
            .flat_map(|t| text::words(t))
            .chain(self.description.iter().flat_map(|d| text::words(d)))
            .filter(|w| !text::is_stopword(w))
            .collect()
    }
}

/// The NERD entity view: one record per graph entity plus the indexes needed
/// to retrieve candidates and to refresh incrementally. Immutable; a refresh
/// produces a new view.
#[derive(Clone, Debug)]
pub struct EntityView {
    pub(crate) config: ViewConfig,
    pub(crate) records: BTreeMap<EntityId, NerdEntityRecord>,
    pub(crate) importance: BTreeMap<EntityId, f64>,
    out_nbrs: BTreeMap<EntityId, BTreeSet<EntityId>>,
    in_nbrs: BTreeMap<EntityId, BTreeSet<EntityId>>,
    /// Folded alias → entities.
    pub(crate) alias_index: BTreeMap<String, BTreeSet<EntityId>>,
    /// 3-gram of a folded alias → aliases containing it.
    pub(crate) gram_index: BTreeMap<String, BTreeSet<String>>,
    pub(crate) max_alias_tokens: usize,
    pub(crate) encoder: Option<StringEncoder>,
}

impl PartialEq for EntityView {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
            && self.alias_index == other.alias_index
            && self.gram_index == other.gram_index
            && self.max_alias_tokens == other.max_alias_tokens
    }
}

fn surface_of(snapshot: &KgSnapshot, cfg: &ViewConfig, id: &EntityId) -> String {
    for p in &cfg.name_predicates {
        if let Some(o) = snapshot.values(id, p).next() {
            return o.render();
        }
    }
    id.local_id().to_string()
}

fn outgoing(snapshot: &KgSnapshot, id: &EntityId) -> BTreeSet<EntityId> {
    snapshot
        .get_entity(id)
        .iter()
        .filter(|t| t.predicate != SAME_AS_PREDICATE)
        .filter_map(|t| t.object.as_entity())
        .filter(|o| o.is_graph() && *o != id)
        .cloned()
        .collect()
}

fn build_record(
    snapshot: &KgSnapshot,
    cfg: &ViewConfig,
    importance: &BTreeMap<EntityId, f64>,
    in_nbrs: &BTreeSet<EntityId>,
    id: &EntityId,
) -> NerdEntityRecord {
    let facts = snapshot.get_entity(id);
    let mut names_aliases: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for p in &cfg.name_predicates {
        for t in facts.iter().filter(|t| &t.predicate == p && t.r_id.is_none()) {
            let locale = t.locale.clone().unwrap_or_else(|| UNTAGGED_LOCALE.to_string());
            let v = names_aliases.entry(locale).or_default();
            let name = t.object.render();
            if !v.contains(&name) {
                v.push(name);
            }
        }
    }
    if names_aliases.is_empty() {
        names_aliases.insert(UNTAGGED_LOCALE.into(), vec![id.local_id().to_string()]);
    }
    let imp = |e: &EntityId| importance.get(e).copied().unwrap_or(0.0);

    let mut rels: Vec<(String, EntityId)> = Vec::new();
    for t in facts {
        if t.predicate == SAME_AS_PREDICATE || t.predicate == TYPE_PREDICATE {
            continue;
        }
        if let Object::Entity(o) = &t.object {
            if o.is_graph() && o != id {
                rels.push((t.predicate_path(), o.clone()));
            }
        }
    }
    for n in in_nbrs {
        for t in snapshot.get_entity(n) {
            if t.predicate != SAME_AS_PREDICATE && t.object.as_entity() == Some(id) {
                rels.push((format!("{}{INVERSE_SUFFIX}", t.predicate_path()), n.clone()));
            }
        }
    }
    let mut nbrs: Vec<&EntityId> = rels.iter().map(|(_, n)| n).collect::<BTreeSet<_>>().into_iter().collect();
    nbrs.sort_by(|a, b| imp(b).total_cmp(&imp(a)).then_with(|| a.cmp(b)));
    nbrs.truncate(cfg.max_relationships);
    let kept: BTreeSet<&EntityId> = nbrs.into_iter().collect();
    let mut key_relationships: Vec<(String, String)> =
        rels.iter().filter(|(_, n)| kept.contains(n)).map(|(p, n)| (p.clone(), surface_of(snapshot, cfg, n))).collect();
    key_relationships.sort();
    key_relationships.dedup();
    let neighbor_types: BTreeSet<String> = kept.iter().flat_map(|n| snapshot.types_of(n)).collect();

    NerdEntityRecord {
        entity: id.clone(),
        names_aliases,
        types: snapshot.types_of(id),
        description: snapshot.values(id, &cfg.description_predicate).next().map(Object::render),
        key_relationships,
        neighbor_types: neighbor_types.into_iter().collect(),
        importance: imp(id),
    }
}

pub(crate) fn alias_grams(alias: &str) -> BTreeSet<String> {
    crate::simstrings::qgram_set(alias, 3)
}

impl EntityView {
    pub fn build(snapshot: &KgSnapshot, importance: &BTreeMap<EntityId, f64>) -> Self {
        Self::build_with(snapshot, importance, ViewConfig::default())
    }

    pub fn build_with(snapshot: &KgSnapshot, importance: &BTreeMap<EntityId, f64>, config: ViewConfig) -> Self {
        let mut view = EntityView {
            config,
            records: BTreeMap::new(),
            importance: importance.clone(),
            out_nbrs: BTreeMap::new(),
            in_nbrs: BTreeMap::new(),
            alias_index: BTreeMap::new(),
            gram_index: BTreeMap::new(),
            max_alias_tokens: 0,
            encoder: None,
        };
        for id in snapshot.entities().filter(|e| e.is_graph()) {
            let out = outgoing(snapshot, id);
            for o in &out {
                view.in_nbrs.entry(o.clone()).or_default().insert(id.clone());
            }
            view.out_nbrs.insert(id.clone(), out);
        }
        let ids: Vec<EntityId> = view.out_nbrs.keys().cloned().collect();
        for id in ids {
            view.put_record(snapshot, &id);
        }
        view
    }

    /// Uses the learned encoder for alias similarity instead of q-gram Jaccard.
    pub fn with_encoder(mut self, encoder: StringEncoder) -> Self {
        self.encoder = Some(encoder);
        self
    }

    pub fn config(&self) -> &ViewConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &EntityId) -> Option<&NerdEntityRecord> {
        self.records.get(id)
    }

    pub fn records(&self) -> impl Iterator<Item = &NerdEntityRecord> {
        self.records.values()
    }

    pub fn importance_of(&self, id: &EntityId) -> f64 {
        self.importance.get(id).copied().unwrap_or(0.0)
    }

    fn put_record(&mut self, snapshot: &KgSnapshot, id: &EntityId) {
        self.drop_record(id);
        if !id.is_graph() || !snapshot.contains_entity(id) {
            return;
        }
        let empty = BTreeSet::new();
        let ins = self.in_nbrs.get(id).unwrap_or(&empty);
        let rec = build_record(snapshot, &self.config, &self.importance, ins, id);
        for a in rec.aliases() {
            let key = text::fold(a);
            if key.is_empty() {
                continue;
            }
            self.max_alias_tokens = self.max_alias_tokens.max(key.split(' ').count());
            for g in alias_grams(&key) {
                self.gram_index.entry(g).or_default().insert(key.clone());
            }
            self.alias_index.entry(key).or_default().insert(id.clone());
        }
        self.records.insert(id.clone(), rec);
    }

    fn drop_record(&mut self, id: &EntityId) {
        let Some(old) = self.records.remove(id) else {
            return;
        };
        for a in old.aliases() {
            let key = text::fold(a);
            let Some(ents) = self.alias_index.get_mut(&key) else {
                continue;
            };
            ents.remove(id);
            if ents.is_empty() {
                self.alias_index.remove(&key);
                for g in alias_grams(&key) {
                    if let Some(s) = self.gram_index.get_mut(&g) {
                        s.remove(&key);
                        if s.is_empty() {
                            self.gram_index.remove(&g);
                        }
                    }
                }
            }
        }
    }

    /// New view reflecting `snapshot` after the facts of `changed` entities
    /// (and possibly `importance`) changed. Only records that can depend on
    /// the change are rebuilt: the changed entities, their old and new
    /// neighbors, entities whose importance moved and the neighbors of those.
    pub fn refreshed(
        &self,
        snapshot: &KgSnapshot,
        importance: &BTreeMap<EntityId, f64>,
        changed: &BTreeSet<EntityId>,
    ) -> Self {
        let mut view = self.clone();
        let mut affected: BTreeSet<EntityId> = BTreeSet::new();
        for id in changed.iter().filter(|e| e.is_graph()) {
            let old = view.out_nbrs.remove(id).unwrap_or_default();
            for o in &old {
                if let Some(s) = view.in_nbrs.get_mut(o) {
                    s.remove(id);
                    if s.is_empty() {
                        view.in_nbrs.remove(o);
                    }
                }
            }
            let new = if snapshot.contains_entity(id) { outgoing(snapshot, id) } else { BTreeSet::new() };
            for o in &new {
                view.in_nbrs.entry(o.clone()).or_default().insert(id.clone());
            }
            if snapshot.contains_entity(id) {
                view.out_nbrs.insert(id.clone(), new.clone());
            }
            affected.insert(id.clone());
            affected.extend(old);
            affected.extend(new);
            affected.extend(view.in_nbrs.get(id).into_iter().flatten().cloned());
        }
        let all: BTreeSet<&EntityId> = self.importance.keys().chain(importance.keys()).collect();
        let moved: Vec<EntityId> =
            all.into_iter().filter(|e| self.importance.get(*e) != importance.get(*e)).cloned().collect();
        for id in moved {
            affected.extend(view.out_nbrs.get(&id).into_iter().flatten().cloned());
            affected.extend(view.in_nbrs.get(&id).into_iter().flatten().cloned());
            affected.insert(id);
        }
        view.importance = importance.clone();
        let mut max_tokens_stale = false;
        for id in &affected {
            if let Some(r) = view.records.get(id) {
                max_tokens_stale |= r.aliases().any(|a| text::fold(a).split(' ').count() >= view.max_alias_tokens);
            }
            view.put_record(snapshot, id);
        }
        if max_tokens_stale {
            view.max_alias_tokens = view.alias_index.keys().map(|k| k.split(' ').count()).max().unwrap_or(0);
        }
        view
    }
}
