use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::merge::{merge_relationship_nodes, upsert_all};
use super::partition::{apply_deletions, overwrite_volatile_partition, retract_source};
use super::{FuseError, ObjectResolver};
use crate::ingest::{export_extended_triples, ExportSettings, SourceDelta, SourceEntity};
use crate::kg::{EntityId, ExtendedTriple, KgSnapshot, Object, Ontology, SAME_AS_PREDICATE, TYPE_PREDICATE};
use crate::link::{link_entities, mint_graph_id, LinkConfig, MatchContext};

fn default_theta_rel() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuseConfig {
    pub ontology: Ontology,
    /// One entry per linkable entity type.
    #[serde(default)]
    pub link: Vec<LinkConfig>,
    #[serde(default = "default_theta_rel")]
    pub theta_rel: f64,
    #[serde(default)]
    pub seed: u64,
}

impl FuseConfig {
    pub fn new(ontology: Ontology) -> Self {
        Self { ontology, link: Vec::new(), theta_rel: default_theta_rel(), seed: 0 }
    }

    fn link_config(&self, e: &SourceEntity) -> Option<&LinkConfig> {
        e.values(TYPE_PREDICATE).iter().find_map(|t| self.link.iter().find(|c| &c.entity_type == t))
    }
}

/// Per-source export settings and volatile predicate names.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceSettings {
    pub export: ExportSettings,
    pub volatile: BTreeSet<String>,
}

pub struct FusionContext<'a> {
    pub cfg: &'a FuseConfig,
    pub matching: &'a MatchContext,
    pub resolver: &'a dyn ObjectResolver,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FusionReport {
    pub source_id: String,
    pub facts_added: usize,
    pub facts_updated: usize,
    pub facts_removed: usize,
    pub entities_created: usize,
    pub relationship_nodes_merged: usize,
    pub relationship_nodes_created: usize,
    pub links_reused: usize,
    pub objects_resolved: usize,
    pub never_linked: usize,
    pub drift_warnings: usize,
    pub review_pairs: Vec<(EntityId, EntityId)>,
    pub volatile_added: usize,
    pub volatile_removed: usize,
    pub volatile_skipped: usize,
}

impl FusionReport {
    pub fn fact_changes(&self) -> usize {
        self.facts_added + self.facts_updated + self.facts_removed + self.volatile_added + self.volatile_removed
    }
}

#[derive(Clone, Debug)]
pub struct FusionOutcome {
    pub snapshot: KgSnapshot,
    pub report: FusionReport,
}

/// Links every entity of `ents`, grouped by the link config of its type;
/// entities without one become their own graph entity.
fn link_new(
    ents: &[SourceEntity],
    snap: &KgSnapshot,
    ctx: &FusionContext<'_>,
    report: &mut FusionReport,
) -> Result<BTreeMap<EntityId, EntityId>, FuseError> {
    let mut by_type: BTreeMap<Option<&str>, Vec<SourceEntity>> = BTreeMap::new();
    for e in ents {
        by_type.entry(ctx.cfg.link_config(e).map(|c| c.entity_type.as_str())).or_default().push(e.clone());
    }
    let mut links = BTreeMap::new();
    for (ty, group) in by_type {
        match ty.and_then(|t| ctx.cfg.link.iter().find(|c| c.entity_type == t)) {
            Some(lc) => {
                let out = link_entities(&group, snap, lc, ctx.matching, ctx.cfg.seed)?;
                report.review_pairs.extend(out.assignment.review.iter().cloned());
                links.extend(out.links());
            }
            None => {
                for e in group {
                    let id = mint_graph_id(&[e.id.clone()].into());
                    links.insert(e.id, id);
                }
            }
        }
    }
    Ok(links)
}

/// Updated entities that matching would now place under another existing graph entity.
fn count_drift(
    updated: &[(SourceEntity, EntityId)],
    snap: &KgSnapshot,
    ctx: &FusionContext<'_>,
) -> Result<usize, FuseError> {
    let mut drift = 0;
    for lc in &ctx.cfg.link {
        let group: Vec<SourceEntity> = updated
            .iter()
            .filter(|(e, _)| ctx.cfg.link_config(e).is_some_and(|c| c.entity_type == lc.entity_type))
            .map(|(e, _)| e.clone())
            .collect();
        if group.is_empty() {
            continue;
        }
        let now = link_entities(&group, snap, lc, ctx.matching, ctx.cfg.seed)?.links();
        for (e, akg) in updated {
            if let Some(other) = now.get(&e.id) {
                if other != akg && snap.contains_entity(other) {
                    log::warn!("{} keeps link {akg} although matching prefers {other}", e.id);
                    drift += 1;
                }
            }
        }
    }
    Ok(drift)
}

/// Full pipeline for one source delta: deletions, linking of new entities,
/// same_as lookup for known ones, object resolution, relationship-node
/// merging, fusion and finally the volatile overwrite. Works on a private
/// copy; on error the input snapshot is all the caller has.
pub fn process_source_payloads(
    snapshot: &KgSnapshot,
    delta: &SourceDelta,
    source: &SourceSettings,
    ctx: &FusionContext<'_>,
) -> Result<FusionOutcome, FuseError> {
    let src = source.export.source_id.as_str();
    let mut report = FusionReport { source_id: src.to_string(), ..Default::default() };

    let deleted: Vec<EntityId> = delta.deleted.iter().map(|e| e.id.clone()).collect();
    let del = apply_deletions(snapshot, &deleted, src);
    report.facts_removed += del.facts_removed;
    report.facts_updated += del.facts_updated;
    report.never_linked += del.never_linked.len();
    let snap = del.snapshot;

    let index = snap.same_as_index();
    let mut known: Vec<(SourceEntity, EntityId)> = Vec::new();
    let mut fresh: Vec<SourceEntity> = Vec::new();
    for e in &delta.added {
        match index.get(&e.id) {
            Some(akg) => {
                report.links_reused += 1;
                known.push((e.clone(), akg.clone()));
            }
            None => fresh.push(e.clone()),
        }
    }
    let mut updated_known = Vec::new();
    for e in &delta.updated {
        match index.get(&e.id) {
            Some(akg) => updated_known.push((e.clone(), akg.clone())),
            None => {
                log::warn!("updated entity {} was never linked; linking it as new", e.id);
                report.never_linked += 1;
                fresh.push(e.clone());
            }
        }
    }
    if !updated_known.is_empty() && !ctx.cfg.link.is_empty() {
        report.drift_warnings = count_drift(&updated_known, &snap, ctx)?;
    }
    known.extend(updated_known);

    let new_links = link_new(&fresh, &snap, ctx, &mut report)?;
    let created: BTreeSet<&EntityId> = new_links.values().filter(|a| !snap.contains_entity(a)).collect();
    report.entities_created = created.len();
    let fresh_by_id: BTreeMap<&EntityId, &SourceEntity> = fresh.iter().map(|e| (&e.id, e)).collect();
    for (s, a) in &new_links {
        known.push(((*fresh_by_id[s]).clone(), a.clone()));
    }
    let mut links = index;
    links.extend(new_links.clone());

    let mut per_akg: BTreeMap<EntityId, Vec<SourceEntity>> = BTreeMap::new();
    for (e, akg) in known {
        per_akg.entry(akg).or_default().push(e);
    }
    let batch_ids: BTreeSet<EntityId> = per_akg.values().flatten().map(|e| e.id.clone()).collect();

    let mut b = snap.builder();
    for (akg, ents) in &per_akg {
        let mut facts: Vec<ExtendedTriple> = Vec::new();
        for e in ents {
            let mut ts = export_extended_triples(std::slice::from_ref(e), &source.export)?;
            for t in &mut ts {
                t.subject = akg.clone();
                if let Object::Entity(o) = &t.object {
                    if let Some(m) = links.get(o) {
                        t.object = Object::Entity(m.clone());
                    }
                }
            }
            let context = ts.clone();
            for t in &mut ts {
                let path = t.predicate_path();
                let Some(expected) = ctx.cfg.ontology.expected_type(&path) else {
                    continue;
                };
                if let Object::Literal(l) = &t.object {
                    if let Some(id) = ctx.resolver.resolve(&snap, &context, l, expected) {
                        t.object = Object::Entity(id);
                        t.locale = None;
                        report.objects_resolved += 1;
                    }
                }
            }
            let decisions = merge_relationship_nodes(b.facts(akg), &ts, ctx.cfg.theta_rel);
            let remap: BTreeMap<(String, String), String> = decisions
                .iter()
                .filter_map(|d| d.kg_r_id.as_ref().map(|k| ((d.predicate.clone(), d.source_r_id.clone()), k.clone())))
                .collect();
            for d in &decisions {
                let existed = b.facts(akg).iter().any(|t| t.r_id.as_deref() == Some(d.source_r_id.as_str()));
                match &d.kg_r_id {
                    Some(k) if *k == d.source_r_id || existed => {}
                    Some(_) => report.relationship_nodes_merged += 1,
                    None => report.relationship_nodes_created += 1,
                }
            }
            for t in &mut ts {
                if let Some(r) = &t.r_id {
                    if let Some(k) = remap.get(&(t.predicate.clone(), r.clone())) {
                        t.r_id = Some(k.clone());
                    }
                }
            }
            facts.extend(ts);
            facts.push(ExtendedTriple::simple(
                akg.clone(),
                SAME_AS_PREDICATE,
                Object::Entity(e.id.clone()),
                src,
                source.export.default_trust,
            ));
        }

        // withdraw what this source no longer says, unless another entity
        // of the source outside this batch also feeds the graph entity
        let keys: BTreeSet<_> = facts.iter().map(|t| t.key()).collect();
        let exclusive = b
            .facts(akg)
            .iter()
            .filter(|t| t.predicate == SAME_AS_PREDICATE && t.trust_of(src).is_some())
            .filter_map(|t| t.object.as_entity())
            .all(|o| batch_ids.contains(o));
        if exclusive {
            let vol = &source.volatile;
            let (removed, shrunk) = retract_source(&mut b, akg, src, |t| {
                !keys.contains(&t.key()) && !vol.contains(&t.predicate) && !vol.contains(&t.predicate_path())
            });
            report.facts_removed += removed;
            report.facts_updated += shrunk;
        }
        let m = upsert_all(&mut b, facts);
        report.facts_added += m.inserted;
        report.facts_updated += m.updated;
    }
    let fused = b.finish();

    let vol = overwrite_volatile_partition(&fused, src, &source.volatile, &delta.volatile_dump);
    report.volatile_added = vol.facts_added;
    report.volatile_removed = vol.facts_removed;
    report.facts_updated += vol.facts_updated;
    report.volatile_skipped = vol.skipped;
    Ok(FusionOutcome { snapshot: vol.snapshot, report })
}
