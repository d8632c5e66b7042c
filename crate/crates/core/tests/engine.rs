use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::Path;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saga_core::embed::TrainConfig;
use saga_core::engine::{
    agent_replay, aggregate, builtin_catalog, freshness, pagerank, plan_refresh, read_progress, refresh_views,
    shared_features_catalog, write_progress, BuiltinConfig, EngineError, MaterializedViews, OperationLog,
    ProcedureRegistry, StoreAgent, StoreKind, ViewCatalog, ViewDefinition, ENTITY_FEATURES, ENTITY_NEIGHBORHOOD,
    GRAPH_EMBEDDINGS, PEOPLE_EMBEDDINGS, RANKED_ENTITY_INDEX,
};
use saga_core::kg::write_triples_jsonl;
use saga_core::{EntityId, ExtendedTriple, KgSnapshot, Object};

const KINDS: [StoreKind; 4] = [StoreKind::Analytics, StoreKind::InvertedIndex, StoreKind::Kv, StoreKind::Vector];

fn g(s: &str) -> EntityId {
    EntityId::graph(s)
}

fn entity_facts(rng: &mut ChaCha8Rng, id: usize) -> Vec<ExtendedTriple> {
    let s = g(&format!("e{id:03}"));
    let mut v = vec![ExtendedTriple::simple(
        s.clone(),
        "name",
        Object::literal(format!("entity {id} v{}", rng.gen_range(0..5))),
        "src1",
        0.9,
    )];
    for _ in 0..rng.gen_range(0..3) {
        let o = g(&format!("e{:03}", rng.gen_range(0..60)));
        v.push(ExtendedTriple::simple(s.clone(), "related_to", Object::Entity(o), "src2", 0.8));
    }
    v
}

/// `n` staged payloads, each replacing the facts of one to three entities.
fn build_log(dir: &Path, n: usize, seed: u64) -> OperationLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = OperationLog::open(&dir.join("oplog.jsonl"), dir).unwrap();
    for i in 0..n {
        let ids: BTreeSet<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(0..60)).collect();
        let mut facts = Vec::new();
        let mut changed = Vec::new();
        for id in ids {
            changed.push(g(&format!("e{id:03}")));
            if !rng.gen_bool(0.1) {
                facts.extend(entity_facts(&mut rng, id));
            }
        }
        let name = format!("p{i:05}.jsonl");
        write_triples_jsonl(File::create(dir.join(&name)).unwrap(), &facts).unwrap();
        assert_eq!(log.append_op(&name, changed).unwrap(), i as u64 + 1);
    }
    log
}

fn state_bytes(a: &StoreAgent) -> Vec<u8> {
    serde_json::to_vec(&a.state).unwrap()
}

#[test]
fn agents_converge_after_crash_and_injected_failure() {
    let dir = tempfile::tempdir().unwrap();
    let log = build_log(dir.path(), 1000, 7);
    let cps = dir.path().join("agents");
    std::fs::create_dir_all(&cps).unwrap();

    let mut steady = StoreAgent::open("kv-a", StoreKind::Kv, &cps).unwrap();
    while agent_replay(&mut steady, &log, 128).unwrap() > 0 {}

    let mut crashy = StoreAgent::open("kv-b", StoreKind::Kv, &cps).unwrap();
    assert_eq!(agent_replay(&mut crashy, &log, 437).unwrap(), 437);
    crashy.inject_failure(438);
    let err = agent_replay(&mut crashy, &log, 100).unwrap_err();
    assert!(matches!(err, EngineError::ApplyFailure { lsn: 438, .. }));
    assert_eq!(crashy.replay_lsn, 437);
    drop(crashy);
    let mut resumed = StoreAgent::open("kv-b", StoreKind::Kv, &cps).unwrap();
    assert_eq!(resumed.replay_lsn, 437);
    assert_eq!(agent_replay(&mut resumed, &log, 1).unwrap(), 1);
    assert_eq!(resumed.replay_lsn, 438);
    while agent_replay(&mut resumed, &log, 200).unwrap() > 0 {}

    assert_eq!(steady.replay_lsn, 1000);
    assert_eq!(resumed.replay_lsn, steady.replay_lsn);
    assert_eq!(state_bytes(&resumed), state_bytes(&steady));
    assert_eq!(resumed.digest(), steady.digest());

    let progress = cps.join("progress.json");
    write_progress(&progress, [&steady, &resumed]).unwrap();
    assert_eq!(
        read_progress(&progress).unwrap(),
        BTreeMap::from([("kv-a".to_string(), 1000), ("kv-b".to_string(), 1000)])
    );
}

#[test]
fn every_store_kind_replays_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let log = build_log(dir.path(), 200, 3);
    for kind in KINDS {
        let mut a = StoreAgent::new("a", kind);
        let mut b = StoreAgent::new("b", kind);
        agent_replay(&mut a, &log, usize::MAX).unwrap();
        for _ in 0..200 {
            agent_replay(&mut b, &log, 1).unwrap();
        }
        assert_eq!(state_bytes(&a), state_bytes(&b), "{kind:?}");
    }
    let mut lagging = StoreAgent::new("lag", StoreKind::Vector);
    agent_replay(&mut lagging, &log, 50).unwrap();
    let mut head = StoreAgent::new("head", StoreKind::Kv);
    agent_replay(&mut head, &log, usize::MAX).unwrap();
    let f = freshness([&lagging, &head]).unwrap();
    assert_eq!(f.min, 50);
    assert!(matches!(freshness([]), Err(EngineError::EmptyAgentSet)));
}

#[test]
fn log_reopens_at_head_and_ignores_torn_tail() {
    let dir = tempfile::tempdir().unwrap();
    let head = build_log(dir.path(), 20, 1).head();
    let path = dir.path().join("oplog.jsonl");
    {
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"lsn":21,"payload_ref":"p"#).unwrap();
    }
    let mut log = OperationLog::open(&path, dir.path()).unwrap();
    assert_eq!(log.head(), head);
    assert_eq!(log.append_op("p00000.jsonl", vec![]).unwrap(), head + 1);
    assert!(matches!(log.append_op("missing.jsonl", vec![]), Err(EngineError::StageMissing(_))));
    let reopened = OperationLog::open(&path, dir.path()).unwrap();
    let lsns: Vec<u64> = reopened.entries().iter().map(|e| e.lsn).collect();
    assert_eq!(lsns, (1..=head + 1).collect::<Vec<_>>());
}

/// Power iteration written out independently for the two-node chain a → b.
fn chain_oracle(d: f64) -> (f64, f64) {
    let (mut a, mut b) = (0.5, 0.5);
    for _ in 0..100_000 {
        // b is dangling: its mass is spread over both nodes.
        let na = (1.0 - d) / 2.0 + d * b / 2.0;
        let nb = (1.0 - d) / 2.0 + d * (a + b / 2.0);
        let delta = (na - a).abs() + (nb - b).abs();
        a = na;
        b = nb;
        if delta < 1e-15 {
            break;
        }
    }
    (a, b)
}

#[test]
fn pagerank_small_graph_oracles() {
    let pr = pagerank(3, &[(0, 1), (1, 2), (2, 0)], 0.85, 1e-12);
    for x in &pr {
        assert!((x - 1.0 / 3.0).abs() < 1e-9);
    }
    let pr = pagerank(2, &[(0, 1)], 0.85, 1e-12);
    let (a, b) = chain_oracle(0.85);
    assert!((pr[0] - a).abs() < 1e-9 && (pr[1] - b).abs() < 1e-9);
}

fn random_dag_catalog(n: usize, edges: &[(usize, usize)]) -> ViewCatalog {
    let mut c = ViewCatalog::default();
    for v in 0..n {
        let deps: BTreeSet<String> =
            edges.iter().filter(|(a, b)| *b == v && a < b).map(|(a, _)| format!("v{a}")).collect();
        let deps: Vec<&str> = deps.iter().map(String::as_str).collect();
        c.register_view(ViewDefinition::new(&format!("v{v}"), &deps, StoreKind::Kv)).unwrap();
    }
    c
}

fn closure(c: &ViewCatalog, v: &str, out: &mut BTreeSet<String>) {
    if out.insert(v.to_string()) {
        for d in &c.get(v).unwrap().deps {
            closure(c, d, out);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pagerank_is_a_distribution(n in 1usize..400, raw in prop::collection::vec((0usize..400, 0usize..400), 0..1500)) {
        let edges: Vec<(usize, usize)> = raw.into_iter().map(|(a, b)| (a % n, b % n)).collect();
        let pr = pagerank(n, &edges, 0.85, 1e-9);
        prop_assert!((pr.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(pr.iter().all(|x| *x > 0.0 && *x < 1.0 || n == 1));
    }

    #[test]
    fn aggregate_ranking_survives_affine_rescaling(
        cols in prop::collection::vec(prop::collection::vec(0u32..50, 12), 4),
        col in 0usize..4,
        scale in 0.01f64..100.0,
        shift in -100.0f64..100.0,
    ) {
        let cols: Vec<Vec<f64>> = cols.into_iter().map(|c| c.into_iter().map(f64::from).collect()).collect();
        let mut scaled = cols.clone();
        for x in scaled[col].iter_mut() {
            *x = *x * scale + shift;
        }
        let a = aggregate(&cols);
        let b = aggregate(&scaled);
        let argsort = |v: &[f64]| {
            let mut i: Vec<usize> = (0..v.len()).collect();
            i.sort_by(|x, y| v[*y].total_cmp(&v[*x]).then(x.cmp(y)));
            i
        };
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        let (ra, rb) = (argsort(&a), argsort(&b));
        for w in ra.windows(2).zip(rb.windows(2)) {
            if (a[w.0[0]] - a[w.0[1]]).abs() > 1e-9 {
                prop_assert_eq!(w.0, w.1);
            }
        }
    }

    #[test]
    fn plans_are_topological_and_minimal(
        n in 1usize..12,
        edges in prop::collection::vec((0usize..12, 0usize..12), 0..30),
        targets in prop::collection::btree_set(0usize..12, 1..4),
    ) {
        let cat = random_dag_catalog(n, &edges);
        let names: Vec<String> = targets.iter().filter(|t| **t < n).map(|t| format!("v{t}")).collect();
        prop_assume!(!names.is_empty());
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let plan = plan_refresh(&cat, &BTreeSet::new(), &refs).unwrap();
        let pos: BTreeMap<&str, usize> = plan.order.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
        prop_assert_eq!(pos.len(), plan.order.len());
        let mut expected = BTreeSet::new();
        for t in &refs {
            closure(&cat, t, &mut expected);
        }
        prop_assert_eq!(plan.order.iter().cloned().collect::<BTreeSet<_>>(), expected);
        for v in &plan.order {
            for d in &cat.get(v).unwrap().deps {
                prop_assert!(pos[d.as_str()] < pos[v.as_str()]);
            }
        }
    }

    #[test]
    fn interleaved_appends_stay_gapless(ops in prop::collection::vec(any::<bool>(), 1..60)) {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("p"), b"").unwrap();
        let path = dir.path().join("oplog.jsonl");
        let mut log = OperationLog::open(&path, dir.path()).unwrap();
        let mut expected = 0;
        for reopen in ops {
            if reopen {
                log = OperationLog::open(&path, dir.path()).unwrap();
            }
            expected += 1;
            prop_assert_eq!(log.append_op("p", vec![]).unwrap(), expected);
        }
        let lsns: Vec<u64> = OperationLog::open(&path, dir.path()).unwrap().entries().iter().map(|e| e.lsn).collect();
        prop_assert_eq!(lsns, (1..=expected).collect::<Vec<_>>());
    }
}

fn view_kg(rng: &mut ChaCha8Rng, n: usize) -> KgSnapshot {
    let mut facts = Vec::new();
    for i in 0..n {
        facts.extend(view_entity(rng, i, n));
    }
    KgSnapshot::from_triples(facts)
}

fn view_entity(rng: &mut ChaCha8Rng, i: usize, n: usize) -> Vec<ExtendedTriple> {
    let s = g(&format!("e{i:02}"));
    let names = ["Smith", "Jones", "River", "Hill", "Stone"];
    let ty = if rng.gen_bool(0.5) { "person" } else { "organization" };
    let mut v = vec![
        ExtendedTriple::simple(s.clone(), "type", Object::literal(ty), "src1", 0.9),
        ExtendedTriple::simple(
            s.clone(),
            "name",
            Object::literal(format!("{} {}", names[rng.gen_range(0..5)], names[rng.gen_range(0..5)])),
            "src1",
            0.9,
        ),
    ];
    for _ in 0..rng.gen_range(0..4) {
        let o = g(&format!("e{:02}", rng.gen_range(0..n)));
        v.push(ExtendedTriple::simple(s.clone(), "related_to", Object::Entity(o), "src2", 0.7));
    }
    v
}

fn registry() -> ProcedureRegistry {
    ProcedureRegistry::builtin(BuiltinConfig {
        train: TrainConfig { epochs: 5, dim: 8, seed: 1, ..Default::default() },
        ..Default::default()
    })
}

fn all_views(cat: &ViewCatalog) -> Vec<&str> {
    cat.views().map(|v| v.name.as_str()).collect()
}

fn materialize(kg: &KgSnapshot) -> MaterializedViews {
    let cat = builtin_catalog();
    let plan = plan_refresh(&cat, &BTreeSet::new(), &all_views(&cat)).unwrap();
    let mut views = MaterializedViews::default();
    refresh_views(&plan, &cat, &registry(), kg, &mut views).unwrap();
    views
}

#[test]
fn both_leaves_share_entity_features() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let kg = view_kg(&mut rng, 30);
    let cat = shared_features_catalog();
    let plan = plan_refresh(&cat, &BTreeSet::new(), &[RANKED_ENTITY_INDEX, PEOPLE_EMBEDDINGS]).unwrap();
    let mut views = MaterializedViews::default();
    let report = refresh_views(&plan, &cat, &registry(), &kg, &mut views).unwrap();
    assert_eq!(report.executions(ENTITY_FEATURES), 1);
    assert_eq!(report.runs.len(), cat.views().count());
    let at = |v: &str| report.runs.iter().position(|r| r.view == v).unwrap();
    assert!(at(ENTITY_NEIGHBORHOOD) < at(GRAPH_EMBEDDINGS));
    assert!(at(GRAPH_EMBEDDINGS) < at(PEOPLE_EMBEDDINGS));
    let stores: Vec<StoreKind> =
        [ENTITY_NEIGHBORHOOD, GRAPH_EMBEDDINGS].iter().map(|v| report.runs[at(v)].target_store).collect();
    assert_eq!(stores, [StoreKind::Analytics, StoreKind::Vector]);
}

#[test]
fn single_entity_change_touches_one_feature_record() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let kg = view_kg(&mut rng, 30);
    let mut views = materialize(&kg);
    let before = views.features().unwrap().clone();
    let id = g("e05");
    let mut b = kg.builder();
    b.remove_entity(&id);
    for t in view_entity(&mut rng, 5, 30) {
        b.upsert(t);
    }
    b.upsert(ExtendedTriple::simple(id.clone(), "name", Object::literal("Renamed"), "src3", 0.6));
    let kg2 = b.finish();
    let cat = builtin_catalog();
    let plan = plan_refresh(&cat, &BTreeSet::from([id.clone()]), &all_views(&cat)).unwrap();
    refresh_views(&plan, &cat, &registry(), &kg2, &mut views).unwrap();
    let after = views.features().unwrap();
    let differing: Vec<&EntityId> = after.keys().filter(|k| before.get(*k) != after.get(*k)).collect();
    assert_eq!(differing, [&id]);
    assert_eq!(views, materialize(&kg2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn incremental_refresh_equals_full_rebuild(seed in any::<u64>(), edits in prop::collection::vec((0usize..25, any::<bool>()), 1..4)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kg = view_kg(&mut rng, 25);
        let mut views = materialize(&kg);
        let mut b = kg.builder();
        let mut changed = BTreeSet::new();
        for (i, delete) in edits {
            let id = g(&format!("e{i:02}"));
            b.remove_entity(&id);
            if !delete {
                for t in view_entity(&mut rng, i, 25) {
                    b.upsert(t);
                }
            }
            changed.insert(id);
        }
        let kg2 = b.finish();
        let cat = builtin_catalog();
        let plan = plan_refresh(&cat, &changed, &all_views(&cat)).unwrap();
        refresh_views(&plan, &cat, &registry(), &kg2, &mut views).unwrap();
        prop_assert!(views == materialize(&kg2));
    }
}
