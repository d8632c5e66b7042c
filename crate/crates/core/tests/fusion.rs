use std::collections::BTreeSet;

use proptest::prelude::*;
use saga_core::fuse::{
    estimate_fact_confidence, process_source_payloads, update_source_trust, FuseConfig, FusionContext, NoResolution,
    SourceSettings, SourceTrustTable, TrustConfig,
};
use saga_core::ingest::{compute_delta, ExportSettings, SourceEntity};
use saga_core::link::{BlockingFunction, Comparator, Feature, LinkConfig, MatchContext, MatchingModel, ModelKind};
use saga_core::{EntityId, ExtendedTriple, KgSnapshot, Object, Ontology};

fn movie(src: &str, id: &str, title: &str, year: &str) -> SourceEntity {
    SourceEntity::new(EntityId::new(src, id).unwrap())
        .with("type", &["movie"])
        .with("title", &[title])
        .with("year", &[year])
}

fn config() -> FuseConfig {
    let ontology = Ontology::new(["movie"])
        .with_literal("title", false)
        .with_literal("year", true)
        .with_literal("popularity", false);
    let mut cfg = FuseConfig::new(ontology);
    cfg.link.push(LinkConfig {
        entity_type: "movie".into(),
        blocking: vec![BlockingFunction::Token { predicate: "title".into() }],
        model: MatchingModel {
            kind: ModelKind::Logistic,
            bias: -8.0,
            features: vec![
                Feature {
                    predicate: "title".into(),
                    comparator: Comparator::Jaccard { q: 3 },
                    weight: 8.0,
                    threshold: 0.5,
                },
                Feature { predicate: "year".into(), comparator: Comparator::Exact, weight: 6.0, threshold: 0.5 },
            ],
        },
        tau_pos: 0.9,
        tau_neg: 0.1,
        seeds: 11,
        graph_deduped: false,
    });
    cfg
}

fn settings(src: &str, trust: f64) -> SourceSettings {
    SourceSettings { export: ExportSettings::new(src, trust), volatile: ["popularity".to_string()].into() }
}

fn run(kg: &KgSnapshot, prev: &[SourceEntity], curr: &[SourceEntity], s: &SourceSettings) -> (KgSnapshot, usize) {
    let cfg = config();
    let m = MatchContext::default();
    let ctx = FusionContext { cfg: &cfg, matching: &m, resolver: &NoResolution };
    let d = compute_delta(prev, curr, &s.volatile, &s.export, 0, 1).unwrap();
    let out = process_source_payloads(kg, &d, s, &ctx).unwrap();
    (out.snapshot, out.report.entities_created)
}

fn three() -> Vec<SourceEntity> {
    vec![
        movie("src1", "m1", "Alien", "1979").with("popularity", &["10"]),
        movie("src1", "m2", "Heat", "1995"),
        movie("src1", "m3", "Zodiac", "2007"),
    ]
}

#[test]
fn brand_new_source_creates_entities_and_links() {
    let s = settings("src1", 0.9);
    let (kg, created) = run(&KgSnapshot::empty(), &[], &three(), &s);
    assert_eq!(created, 3);
    assert_eq!(kg.entity_count(), 3);
    assert!(kg.entities().all(|e| e.is_graph()));
    assert_eq!(kg.same_as_index().len(), 3);
    assert_eq!(kg.triples().filter(|t| t.predicate == "popularity").count(), 1);
}

#[test]
fn identical_delta_twice_is_idempotent() {
    let s = settings("src1", 0.9);
    let cfg = config();
    let m = MatchContext::default();
    let ctx = FusionContext { cfg: &cfg, matching: &m, resolver: &NoResolution };
    let d = compute_delta(&[], &three(), &s.volatile, &s.export, 0, 1).unwrap();
    let once = process_source_payloads(&KgSnapshot::empty(), &d, &s, &ctx).unwrap();
    let twice = process_source_payloads(&once.snapshot, &d, &s, &ctx).unwrap();
    assert_eq!(once.snapshot, twice.snapshot);
    assert_eq!(twice.report.fact_changes(), 0);
    assert_eq!(twice.report.links_reused, 3);
}

#[test]
fn matching_movie_fuses_under_existing_id() {
    let (kg, _) = run(&KgSnapshot::empty(), &[], &three(), &settings("src1", 0.9));
    let (kg2, created) = run(&kg, &[], &[movie("src2", "x9", "Alien", "1979")], &settings("src2", 0.8));
    assert_eq!(created, 0);
    assert_eq!(kg2.entity_count(), 3);
    let akg = &kg2.same_as_index()[&EntityId::new("src2", "x9").unwrap()];
    assert_eq!(kg2.same_as_index()[&EntityId::new("src1", "m1").unwrap()], *akg);
    let title = kg2.get_entity(akg).iter().find(|t| t.predicate == "title").unwrap().clone();
    assert_eq!(title.sources, ["src1", "src2"]);
    assert_eq!(title.trust, [0.9, 0.8]);
}

#[test]
fn update_withdraws_stale_values_and_delete_removes_entity() {
    let s = settings("src1", 0.9);
    let (kg, _) = run(&KgSnapshot::empty(), &[], &three(), &s);
    let mut next = three();
    next[1] = movie("src1", "m2", "Heat", "1996");
    next.remove(2);
    let (kg2, _) = run(&kg, &three(), &next, &s);
    assert_eq!(kg2.entity_count(), 2);
    let heat = &kg2.same_as_index()[&EntityId::new("src1", "m2").unwrap()];
    let years: Vec<String> = kg2.values(heat, "year").map(|o| o.render()).collect();
    assert_eq!(years, ["1996"]);
}

#[test]
fn volatile_only_change_touches_only_the_partition() {
    let s = settings("src1", 0.9);
    let (kg, _) = run(&KgSnapshot::empty(), &[], &three(), &s);
    let mut next = three();
    next[0] = movie("src1", "m1", "Alien", "1979").with("popularity", &["99"]);
    let cfg = config();
    let m = MatchContext::default();
    let ctx = FusionContext { cfg: &cfg, matching: &m, resolver: &NoResolution };
    let d = compute_delta(&three(), &next, &s.volatile, &s.export, 1, 2).unwrap();
    assert!(d.is_stable());
    let out = process_source_payloads(&kg, &d, &s, &ctx).unwrap();
    let r = &out.report;
    assert_eq!((r.facts_added, r.facts_removed, r.volatile_added, r.volatile_removed), (0, 0, 1, 1));
    let non_vol = |k: &KgSnapshot| -> BTreeSet<_> {
        k.triples().filter(|t| t.predicate != "popularity").cloned().map(|t| t.key()).collect()
    };
    assert_eq!(non_vol(&kg), non_vol(&out.snapshot));
}

fn fact(s: &str, p: &str, o: &str, srcs: &[&str]) -> ExtendedTriple {
    ExtendedTriple {
        subject: s.parse().unwrap(),
        predicate: p.into(),
        r_id: None,
        r_predicate: None,
        object: Object::literal(o),
        locale: None,
        sources: srcs.iter().map(|s| s.to_string()).collect(),
        trust: vec![0.7; srcs.len()],
    }
}

#[test]
fn dissenting_source_ends_with_lowest_trust() {
    let mut ts = Vec::new();
    for i in 0..4 {
        ts.push(fact(&format!("akg:p{i}"), "name", &format!("P{i}"), &["a", "b", "c"]));
    }
    for i in 0..2 {
        ts.push(fact(&format!("akg:p{i}"), "birth_year", "1970", &["a", "b"]));
        ts.push(fact(&format!("akg:p{i}"), "birth_year", "1971", &["c"]));
    }
    let kg = KgSnapshot::from_triples(ts);
    let functional: BTreeSet<String> = ["birth_year".to_string()].into();
    let t = update_source_trust(&kg, &functional, &TrustConfig::default());
    assert!(t.converged && t.iteration_count <= 100);
    assert!(t.trust["c"] < t.trust["a"] && t.trust["c"] < t.trust["b"]);
    assert!(t.history.iter().all(|h| h.values().all(|v| (0.0..=1.0).contains(v))));
}

proptest! {
    #[test]
    fn noisy_or_is_monotone(ts in prop::collection::vec(0.0f64..=1.0, 1..6), extra in 0.0f64..=1.0) {
        let names: Vec<String> = (0..=ts.len()).map(|i| format!("s{i}")).collect();
        let mut table = SourceTrustTable::default();
        for (n, t) in names.iter().zip(ts.iter().chain([&extra])) {
            table.trust.insert(n.clone(), *t);
        }
        let srcs: Vec<&str> = names.iter().map(String::as_str).collect();
        let base = estimate_fact_confidence(&fact("akg:x", "p", "v", &srcs[..ts.len()]), &table).unwrap().value();
        let more = estimate_fact_confidence(&fact("akg:x", "p", "v", &srcs), &table).unwrap().value();
        prop_assert!(more >= base - 1e-15);
        prop_assert!((0.0..=1.0).contains(&more));
    }

    #[test]
    fn fused_provenance_contains_every_contributor(
        titles in prop::collection::vec(prop::sample::select(vec!["Alien", "Heat", "Zodiac", "Solaris", "Brazil"]), 1..5),
        second in prop::collection::vec(prop::sample::select(vec!["Alien", "Heat", "Zodiac", "Solaris", "Brazil"]), 1..5),
    ) {
        let one: Vec<SourceEntity> = titles.iter().enumerate().map(|(i, t)| movie("src1", &format!("a{i}"), t, "2000")).collect();
        let two: Vec<SourceEntity> = second.iter().enumerate().map(|(i, t)| movie("src2", &format!("b{i}"), t, "2000")).collect();
        let (kg, _) = run(&KgSnapshot::empty(), &[], &one, &settings("src1", 0.9));
        let (kg, _) = run(&kg, &[], &two, &settings("src2", 0.8));
        let index = kg.same_as_index();
        for t in kg.triples() {
            prop_assert_eq!(t.sources.len(), t.trust.len());
        }
        for (src, ents) in [("src1", &one), ("src2", &two)] {
            for e in ents.iter() {
                let akg = &index[&e.id];
                let title = kg.get_entity(akg).iter().find(|t| t.predicate == "title" && t.object.render() == e.values("title")[0]).unwrap();
                prop_assert!(title.sources.iter().any(|s| s == src));
            }
        }
    }
}
