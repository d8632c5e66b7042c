use std::collections::{BTreeMap, BTreeSet};

use crate::kg::{EntityId, ExtendedTriple, FactKey, KgSnapshot, Object, SnapshotBuilder, Upsert, SAME_AS_PREDICATE};

/// Removes `source` from the provenance of the facts of `id` selected by
/// `pick`; facts left without sources disappear. Returns (removed, shrunk).
pub fn retract_source(
    b: &mut SnapshotBuilder,
    id: &EntityId,
    source: &str,
    mut pick: impl FnMut(&ExtendedTriple) -> bool,
) -> (usize, usize) {
    let mut shrunk = 0;
    let removed = b.retain_facts(id, |t| {
        if pick(t) && t.remove_source(source) {
            if t.sources.is_empty() {
                return false;
            }
            shrunk += 1;
        }
        true
    });
    (removed, shrunk)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DeletionOutcome {
    pub snapshot: KgSnapshot,
    pub facts_removed: usize,
    pub facts_updated: usize,
    pub entities_removed: usize,
    pub never_linked: Vec<EntityId>,
}

fn same_as_fact(akg: &EntityId, src: &EntityId) -> impl Fn(&ExtendedTriple) -> bool {
    let src = src.clone();
    let akg = akg.clone();
    move |t: &ExtendedTriple| t.subject == akg && t.predicate == SAME_AS_PREDICATE && t.object.as_entity() == Some(&src)
}

/// Withdraws `source_id`'s contribution for each deleted source entity, found
/// through its `same_as` link. When other entities of the same source still
/// link to the graph entity only the `same_as` fact goes.
pub fn apply_deletions(snapshot: &KgSnapshot, deleted: &[EntityId], source_id: &str) -> DeletionOutcome {
    let index = snapshot.same_as_index();
    let mut b = snapshot.builder();
    let mut out = DeletionOutcome::default();
    let gone: BTreeSet<&EntityId> = deleted.iter().collect();
    for src in deleted {
        let Some(akg) = index.get(src) else {
            log::warn!("deleted entity {src} was never linked; skipped");
            out.never_linked.push(src.clone());
            continue;
        };
        let siblings = b
            .facts(akg)
            .iter()
            .filter(|t| t.predicate == SAME_AS_PREDICATE && t.sources.iter().any(|s| s == source_id))
            .filter_map(|t| t.object.as_entity())
            .any(|o| o.namespace() == src.namespace() && !gone.contains(o));
        let (removed, shrunk) = if siblings {
            retract_source(&mut b, akg, source_id, same_as_fact(akg, src))
        } else {
            retract_source(&mut b, akg, source_id, |_| true)
        };
        out.facts_removed += removed;
        out.facts_updated += shrunk;
        if !b.contains_entity(akg) {
            out.entities_removed += 1;
        }
    }
    out.snapshot = b.finish();
    out
}

fn is_volatile(t: &ExtendedTriple, volatile: &BTreeSet<String>) -> bool {
    volatile.contains(&t.predicate) || volatile.contains(&t.predicate_path())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VolatileOutcome {
    pub snapshot: KgSnapshot,
    pub facts_added: usize,
    pub facts_removed: usize,
    pub facts_updated: usize,
    pub skipped: usize,
}

/// Replaces `source_id`'s volatile partition with `volatile_triples` (subjects
/// mapped through `same_as`). Facts outside the partition are never touched;
/// the replacement is computed as a difference so an identical dump is a no-op.
pub fn overwrite_volatile_partition(
    snapshot: &KgSnapshot,
    source_id: &str,
    volatile: &BTreeSet<String>,
    volatile_triples: &[ExtendedTriple],
) -> VolatileOutcome {
    let index = snapshot.same_as_index();
    let map = |id: &EntityId| -> Option<EntityId> {
        if id.is_graph() {
            Some(id.clone())
        } else {
            index.get(id).cloned()
        }
    };
    let mut out = VolatileOutcome::default();
    let mut desired: BTreeMap<FactKey, ExtendedTriple> = BTreeMap::new();
    for t in volatile_triples {
        let Some(subject) = map(&t.subject) else {
            log::warn!("volatile fact for unlinked subject {} skipped", t.subject);
            out.skipped += 1;
            continue;
        };
        let mut t = t.clone();
        t.subject = subject;
        if let Object::Entity(o) = &t.object {
            if let Some(m) = map(o) {
                t.object = Object::Entity(m);
            }
        }
        desired.insert(t.key(), t);
    }
    let mut b = snapshot.builder();
    let subjects: Vec<EntityId> = snapshot
        .entities()
        .filter(|id| {
            snapshot.get_entity(id).iter().any(|t| is_volatile(t, volatile) && t.trust_of(source_id).is_some())
        })
        .cloned()
        .collect();
    for id in subjects {
        let (removed, shrunk) =
            retract_source(&mut b, &id, source_id, |t| is_volatile(t, volatile) && !desired.contains_key(&t.key()));
        out.facts_removed += removed;
        out.facts_updated += shrunk;
    }
    for t in desired.into_values() {
        match b.upsert(t) {
            Upsert::Inserted => out.facts_added += 1,
            Upsert::Updated => out.facts_updated += 1,
            Upsert::Unchanged => {}
        }
    }
    out.snapshot = b.finish();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str, p: &str, o: Object, srcs: &[&str]) -> ExtendedTriple {
        ExtendedTriple {
            subject: s.parse().unwrap(),
            predicate: p.into(),
            r_id: None,
            r_predicate: None,
            object: o,
            locale: None,
            sources: srcs.iter().map(|s| s.to_string()).collect(),
            trust: vec![0.8; srcs.len()],
        }
    }

    fn lit(s: &str) -> Object {
        Object::literal(s)
    }

    fn ent(s: &str) -> Object {
        Object::Entity(s.parse().unwrap())
    }

    fn kg() -> KgSnapshot {
        KgSnapshot::from_triples([
            t("akg:e1", "name", lit("J. Smith"), &["src1", "src2"]),
            t("akg:e1", "birthdate", lit("1970"), &["src2"]),
            t("akg:e1", "same_as", ent("src1:a"), &["src1"]),
            t("akg:e1", "same_as", ent("src2:b"), &["src2"]),
            t("akg:m1", "title", lit("Alien"), &["src2"]),
            t("akg:m1", "popularity", lit("10"), &["src2"]),
            t("akg:m1", "same_as", ent("src2:m"), &["src2"]),
        ])
    }

    #[test]
    fn deletion_shrinks_and_removes() {
        let out = apply_deletions(&kg(), &["src2:b".parse().unwrap()], "src2");
        let e1 = out.snapshot.get_entity(&"akg:e1".parse().unwrap()).to_vec();
        let name = e1.iter().find(|t| t.predicate == "name").unwrap();
        assert_eq!(name.sources, ["src1"]);
        assert!(e1.iter().all(|t| t.predicate != "birthdate"));
        assert_eq!(out.facts_removed, 2);
        assert_eq!(out.entities_removed, 0);
        let out = apply_deletions(&kg(), &["src2:m".parse().unwrap()], "src2");
        assert_eq!(out.entities_removed, 1);
    }

    #[test]
    fn never_linked_is_skipped() {
        let out = apply_deletions(&kg(), &["src2:zzz".parse().unwrap()], "src2");
        assert_eq!(out.never_linked.len(), 1);
        assert_eq!(out.snapshot, kg());
    }

    #[test]
    fn volatile_overwrite() {
        let vol: BTreeSet<String> = ["popularity".to_string()].into();
        let out = overwrite_volatile_partition(&kg(), "src2", &vol, &[t("src2:m", "popularity", lit("99"), &["src2"])]);
        let m1 = out.snapshot.get_entity(&"akg:m1".parse().unwrap()).to_vec();
        let pops: Vec<_> = m1.iter().filter(|t| t.predicate == "popularity").map(|t| t.object.render()).collect();
        assert_eq!(pops, ["99"]);
        assert_eq!((out.facts_added, out.facts_removed), (1, 1));
        let before: BTreeSet<FactKey> =
            kg().triples().filter(|t| t.predicate != "popularity").map(|t| t.key()).collect();
        let after: BTreeSet<FactKey> =
            out.snapshot.triples().filter(|t| t.predicate != "popularity").map(|t| t.key()).collect();
        assert_eq!(before, after);
        let again = overwrite_volatile_partition(
            &out.snapshot,
            "src2",
            &vol,
            &[t("src2:m", "popularity", lit("99"), &["src2"])],
        );
        assert_eq!((again.facts_added, again.facts_removed, again.facts_updated), (0, 0, 0));
    }

    #[test]
    fn empty_dump_empties_partition_and_unlinked_rows_skip() {
        let vol: BTreeSet<String> = ["popularity".to_string()].into();
        let out = overwrite_volatile_partition(&kg(), "src2", &vol, &[]);
        assert!(out.snapshot.triples().all(|t| t.predicate != "popularity"));
        let out =
            overwrite_volatile_partition(&kg(), "src2", &vol, &[t("src2:nope", "popularity", lit("1"), &["src2"])]);
        assert_eq!(out.skipped, 1);
    }
}
