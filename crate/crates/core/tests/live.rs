use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use saga_core::live::{
    apply_curation, build_live_indexes, curate_snapshot, execute_query, expand_virtual_ops, parse_kgq,
    resolve_followup, route_intent, update_context, ArgSlot, CmpOp, Condition, ContextEntity, ContextGraph,
    CurationRecord, Direction, EdgePattern, EntityReference, Guard, IntentAlternative, IntentDef, IntentRegistry,
    Interaction, KgqQuery, Literal, LiveError, LiveIndexes, LiveService, LiveState, NodePattern, OperatorRegistry,
    PartialIntent, Pattern, Projection, Request, StreamLinker, StreamRecord,
};
use saga_core::nerd::{DisambiguationWeights, EntityView};
use saga_core::{EntityId, ExtendedTriple, KgSnapshot, Object};

fn g(s: &str) -> EntityId {
    EntityId::graph(s)
}

fn lit(s: &str, p: &str, o: &str) -> ExtendedTriple {
    ExtendedTriple::simple(g(s), p, Object::literal(o), "src", 0.9)
}

fn edge(s: &str, p: &str, o: &str) -> ExtendedTriple {
    ExtendedTriple::simple(g(s), p, Object::Entity(g(o)), "src", 0.9)
}

fn rows(q: &str, idx: &LiveIndexes) -> Vec<Vec<Vec<String>>> {
    execute_query(&parse_kgq(q).unwrap(), idx).unwrap().rows
}

fn mini_kg() -> Vec<ExtendedTriple> {
    vec![
        lit("beyonce", "name", "Beyoncé"),
        lit("beyonce", "type", "person"),
        lit("beyonce", "sex_or_gender", "female"),
        edge("beyonce", "spouse", "jayz"),
        lit("jayz", "name", "Jay-Z"),
        lit("jayz", "type", "person"),
        lit("jayz", "sex_or_gender", "male"),
        edge("jayz", "spouse", "beyonce"),
        lit("hanks", "name", "Tom Hanks"),
        lit("hanks", "type", "person"),
        lit("hanks", "sex_or_gender", "male"),
        edge("hanks", "spouse", "rita"),
        edge("hanks", "place_of_birth", "concord"),
        lit("rita", "name", "Rita Wilson"),
        lit("rita", "type", "person"),
        lit("rita", "sex_or_gender", "female"),
        edge("rita", "spouse", "hanks"),
        edge("rita", "place_of_birth", "hollywood"),
        lit("hollywood", "name", "Hollywood"),
        lit("hollywood", "type", "city"),
        lit("concord", "name", "Concord"),
        lit("concord", "type", "city"),
        lit("canada", "name", "Canada"),
        lit("canada", "type", "country"),
        edge("canada", "prime_minister", "trudeau"),
        lit("trudeau", "name", "Justin Trudeau"),
        lit("trudeau", "type", "person"),
        lit("chicago", "name", "Chicago"),
        lit("chicago", "type", "city"),
        edge("chicago", "mayor", "johnson"),
        lit("johnson", "name", "Brandon Johnson"),
        lit("johnson", "type", "person"),
        lit("halo", "name", "Halo"),
        lit("halo", "type", "song"),
    ]
}

fn alt(any_type: &[&str], has_facts: &[&str], template: &str) -> IntentAlternative {
    IntentAlternative {
        guard: Guard {
            arg: 0,
            any_type: any_type.iter().map(|s| s.to_string()).collect(),
            has_facts: has_facts.iter().map(|s| s.to_string()).collect(),
        },
        template: template.into(),
    }
}

fn intents() -> IntentRegistry {
    let mut reg = IntentRegistry::default();
    let defs = [
        IntentDef {
            name: "HeadOfState".into(),
            arg_types: vec![],
            alternatives: vec![
                alt(
                    &["country"],
                    &["prime_minister"],
                    "MATCH (c)-[prime_minister]->(h) WHERE ID(c, $0) RETURN h, h.name",
                ),
                alt(&["city"], &["mayor"], "MATCH (c)-[mayor]->(h) WHERE ID(c, $0) RETURN h, h.name"),
            ],
        },
        IntentDef {
            name: "SpouseOf".into(),
            arg_types: vec!["person".into()],
            alternatives: vec![alt(&["person"], &[], "MATCH (a)-[spouse]->(b) WHERE ID(a, $0) RETURN b, b.name")],
        },
        IntentDef {
            name: "Birthplace".into(),
            arg_types: vec!["person".into()],
            alternatives: vec![alt(
                &["person"],
                &["place_of_birth"],
                "MATCH (a)-[place_of_birth]->(p) WHERE ID(a, $0) RETURN p, p.name",
            )],
        },
    ];
    for d in defs {
        reg.register(d).unwrap();
    }
    reg
}

#[test]
fn name_tokens_post_to_entities() {
    let idx = build_live_indexes(mini_kg(), &[], None).unwrap();
    assert_eq!(idx.postings("beyonce").unwrap(), &BTreeSet::from([g("beyonce")]));
    for tok in ["tom", "hanks", "jay", "z"] {
        for e in idx.postings(tok).unwrap() {
            assert!(idx.contains(e));
        }
    }
    assert_eq!(idx, LiveIndexes::from_triples(mini_kg()));
}

#[test]
fn spouse_query() {
    let idx = LiveIndexes::from_triples(mini_kg());
    assert_eq!(rows(r#"MATCH (a)-[spouse]->(b) WHERE SEARCH(a,"beyonce") RETURN b.name"#, &idx), [[["Jay-Z"]]]);
    let q = parse_kgq(r#"MATCH (e:person) WHERE SEARCH(e,"beyonce") RETURN e"#).unwrap();
    assert_eq!(q.returns, [Projection { var: "e".into(), path: None }]);
}

#[test]
fn composite_projection() {
    let comp = |rp: &str, o: &str| ExtendedTriple {
        subject: g("e1"),
        predicate: "educated_at".into(),
        r_id: Some("r1".into()),
        r_predicate: Some(rp.into()),
        object: Object::literal(o),
        locale: Some("en".into()),
        sources: vec!["src2".into()],
        trust: vec![0.8],
    };
    let idx = LiveIndexes::from_triples([
        lit("e1", "name", "J. Smith"),
        comp("school", "UW"),
        comp("degree", "PhD"),
        comp("year", "2005"),
    ]);
    assert_eq!(rows(r#"MATCH (e) WHERE ID(e, "akg:e1") RETURN e.educated_at.school"#, &idx), [[["UW"]]]);
    assert_eq!(rows(r#"MATCH (e) WHERE e.educated_at.year >= 2000 RETURN e.name"#, &idx), [[["J. Smith"]]]);
}

#[test]
fn stream_records_link_and_upsert() {
    let kg = KgSnapshot::from_triples([
        lit("warriors", "name", "Golden State Warriors"),
        lit("warriors", "alias", "Warriors"),
        lit("warriors", "type", "team"),
        lit("lakers", "name", "Los Angeles Lakers"),
        lit("lakers", "alias", "Lakers"),
        lit("lakers", "type", "team"),
    ]);
    let imp = BTreeMap::from([(g("warriors"), 0.9), (g("lakers"), 0.9)]);
    let view = EntityView::build(&kg, &imp);
    let weights = DisambiguationWeights::default();
    let linker = StreamLinker { view: &view, weights: &weights };
    let game = |score: i64| StreamRecord {
        stream: "nba".into(),
        natural_key: "game-401".into(),
        fields: BTreeMap::from([
            ("home_score".to_string(), serde_json::json!(score)),
            ("status".to_string(), serde_json::json!("live")),
        ]),
        entity_references: vec![
            EntityReference { field: "home_team".into(), surface: "Warriors".into(), type_hint: Some("team".into()) },
            EntityReference { field: "away_team".into(), surface: "Lakers".into(), type_hint: Some("team".into()) },
            EntityReference { field: "venue".into(), surface: "Qzxv Arena".into(), type_hint: Some("venue".into()) },
        ],
    };
    let idx = build_live_indexes(kg.triples().cloned(), &[game(98), game(102)], Some(&linker)).unwrap();
    let id: EntityId = "nba:game-401".parse().unwrap();
    assert_eq!(idx.values(&id, "home_team"), ["akg:warriors"]);
    assert_eq!(idx.values(&id, "home_score"), ["102"]);
    assert_eq!(idx.raw_facts(&id).iter().filter(|t| t.predicate == "home_score").count(), 1);
    assert_eq!(idx.values(&id, "venue"), ["Qzxv Arena"]);
    let pending: Vec<_> = idx.pending_references().cloned().collect();
    assert_eq!(pending, [(id.clone(), "venue".to_string())]);
    assert_eq!(
        rows(
            r#"MATCH (g)-[home_team]->(t) WHERE SEARCH(t, "warriors") AND g.status = "live" RETURN g.home_score"#,
            &idx
        ),
        [[["102"]]]
    );
}

#[test]
fn intent_routing_follows_guards() {
    let idx = LiveIndexes::from_triples(mini_kg());
    let reg = intents();
    let r = route_intent("HeadOfState", &[g("canada")], &idx, &reg).unwrap();
    assert_eq!(r.alternative, 0);
    assert_eq!(execute_query(&r.query, &idx).unwrap().rows[0][1], ["Justin Trudeau"]);
    let r = route_intent("HeadOfState", &[g("chicago")], &idx, &reg).unwrap();
    assert_eq!(r.alternative, 1);
    assert_eq!(execute_query(&r.query, &idx).unwrap().rows[0][1], ["Brandon Johnson"]);
    assert!(matches!(
        route_intent("HeadOfState", &[g("halo")], &idx, &reg),
        Err(LiveError::NoApplicableAlternative(_))
    ));
    for _ in 0..3 {
        assert_eq!(route_intent("HeadOfState", &[g("chicago")], &idx, &reg).unwrap().alternative, 1);
    }
}

#[test]
fn conversation_through_the_service() {
    let svc =
        LiveService::new(LiveState::new(LiveIndexes::from_triples(mini_kg()), OperatorRegistry::default(), intents()));
    let ask = |name: Option<&str>, args: Vec<ArgSlot>| {
        svc.handle(&Request::Intent {
            intent: PartialIntent { name: name.map(str::to_string), args },
            session_id: Some("s1".into()),
        })
    };
    let r = ask(Some("SpouseOf"), vec![ArgSlot::Entity(g("beyonce"))]);
    assert_eq!(r.rows, [[vec!["akg:jayz".to_string()], vec!["Jay-Z".to_string()]]]);
    assert_eq!(r.answered_by, "SpouseOf#0");
    let r = ask(None, vec![ArgSlot::Entity(g("hanks"))]);
    assert_eq!(r.resolved.unwrap().name, "SpouseOf");
    assert_eq!(r.rows[0][1], ["Rita Wilson"]);
    let r = ask(Some("Birthplace"), vec![ArgSlot::Ref { gender: Some("female".into()), type_name: None }]);
    assert_eq!(r.resolved.unwrap().args, [g("rita")]);
    assert_eq!(r.rows[0][1], ["Hollywood"]);
    let fresh = svc.handle(&Request::Intent {
        intent: PartialIntent { name: Some("Birthplace".into()), args: vec![ArgSlot::pronoun()] },
        session_id: Some("s2".into()),
    });
    assert!(fresh.error.unwrap().contains("cannot resolve reference"));
    assert_eq!(svc.context("s1").unwrap().len(), 3);
}

#[test]
fn context_updates() {
    let idx = LiveIndexes::from_triples(mini_kg());
    let mut ctx = ContextGraph::with_capacity(2);
    update_context(&mut ctx, Interaction::observe(&idx, "SpouseOf", &[g("hanks")], &[g("rita")]));
    assert_eq!(ctx.len(), 1);
    let rita = &ctx.latest().unwrap().answers[0];
    assert_eq!(rita.gender.as_deref(), Some("female"));
    assert!(rita.types.contains("person"));
    update_context(&mut ctx, Interaction::observe(&idx, "Birthplace", &[g("rita")], &[g("hollywood")]));
    update_context(&mut ctx, Interaction::observe(&idx, "HeadOfState", &[g("chicago")], &[g("johnson")]));
    assert_eq!(ctx.len(), 2);
    assert_eq!(ctx.interactions().next().unwrap().intent, "Birthplace");
}

#[test]
fn curation_hot_fixes() {
    let mut idx = LiveIndexes::from_triples(mini_kg());
    let spouse = edge("beyonce", "spouse", "jayz");
    apply_curation(&mut idx, &CurationRecord::BlockFact { key: spouse.key() }).unwrap();
    assert!(rows(r#"MATCH (a)-[spouse]->(b) WHERE SEARCH(a,"beyonce") RETURN b"#, &idx).is_empty());
    assert_eq!(rows(r#"MATCH (a)<-[spouse]-(b) WHERE ID(a, "akg:jayz") RETURN b"#, &idx).len(), 0);

    let old = lit("trudeau", "name", "Justin Trudeau");
    let new = lit("trudeau", "name", "Mark Carney");
    apply_curation(&mut idx, &CurationRecord::EditFact { key: old.key(), replacement: new }).unwrap();
    assert_eq!(
        rows(r#"MATCH (c)-[prime_minister]->(h) WHERE SEARCH(c,"canada") RETURN h.name"#, &idx),
        [[["Mark Carney"]]]
    );
    assert!(idx.search("justin").is_empty());

    apply_curation(&mut idx, &CurationRecord::BlockEntity { entity: g("halo") }).unwrap();
    assert!(idx.search("halo").is_empty());
    assert!(matches!(
        apply_curation(&mut idx, &CurationRecord::BlockEntity { entity: g("halo") }),
        Err(LiveError::UnknownTarget(_))
    ));
}

#[test]
fn curation_stream_replays_into_the_stable_graph() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("curation.jsonl");
    let kg = KgSnapshot::from_triples(mini_kg());
    let svc = LiveService::new(LiveState::new(
        LiveIndexes::from_triples(kg.triples().cloned()),
        OperatorRegistry::default(),
        IntentRegistry::default(),
    ))
    .with_curation_stream(stream.clone());
    let records = [
        CurationRecord::BlockFact { key: edge("hanks", "spouse", "rita").key() },
        CurationRecord::EditFact {
            key: lit("chicago", "name", "Chicago").key(),
            replacement: lit("chicago", "name", "Chicago IL"),
        },
        CurationRecord::BlockEntity { entity: g("halo") },
        CurationRecord::BlockEntity { entity: g("nobody") },
    ];
    for r in &records {
        svc.handle(&Request::Curate { record: r.clone() });
    }
    let replayed = saga_core::live::read_curation_stream(&stream).unwrap();
    assert_eq!(replayed, records[..3]);
    let (curated, missed) = curate_snapshot(&kg, &replayed);
    assert_eq!(missed, 0);
    let rebuilt = LiveIndexes::from_triples(curated.triples().cloned());
    let live = svc.snapshot();
    for q in fixture_queries() {
        assert_eq!(rows(&q, &rebuilt), rows(&q, &live.indexes), "{q}");
    }
}

fn fixture_queries() -> Vec<String> {
    let mut out = vec![
        r#"MATCH (a) WHERE SEARCH(a, "chicago") RETURN a, a.name"#.to_string(),
        r#"MATCH (a) WHERE SEARCH(a, "halo") RETURN a"#.to_string(),
        "MATCH (p:person) RETURN p, p.name, p.sex_or_gender".to_string(),
    ];
    for p in ["spouse", "place_of_birth", "mayor", "prime_minister"] {
        out.push(format!("MATCH (a)-[{p}]->(b) RETURN a, b, b.name"));
        out.push(format!("MATCH (a)<-[{p}]-(b) RETURN a, b"));
        out.push(format!("MATCH (a)-[{p}*2]->(b) RETURN a, b"));
    }
    out
}

#[test]
fn blocked_fact_never_surfaces() {
    let facts = mini_kg();
    for (i, f) in facts.iter().enumerate() {
        let mut idx = LiveIndexes::from_triples(facts.clone());
        apply_curation(&mut idx, &CurationRecord::BlockFact { key: f.key() }).unwrap();
        let mut without = facts.clone();
        without.remove(i);
        let reference = LiveIndexes::from_triples(without);
        for q in fixture_queries() {
            let got = rows(&q, &idx);
            if reference.contains(&f.subject) {
                assert_eq!(got, rows(&q, &reference), "{q} with {:?} blocked", f.key());
            }
        }
    }
}

#[test]
fn virtual_operator_expansion() {
    let mut reg = OperatorRegistry::default();
    reg.define("LocatedInCountry(x, c) := (x)-[located_in*3]->(c:country)").unwrap();
    let q = parse_kgq("MATCH (x:city) WHERE LocatedInCountry(x, c) RETURN c.name").unwrap();
    let expected = KgqQuery {
        patterns: vec![
            Pattern { start: NodePattern { var: "x".into(), type_name: Some("city".into()) }, hops: vec![] },
            Pattern {
                start: NodePattern { var: "x".into(), type_name: None },
                hops: vec![(
                    EdgePattern { predicate: "located_in".into(), direction: Direction::Out, max_hops: 3 },
                    NodePattern { var: "c".into(), type_name: Some("country".into()) },
                )],
            },
        ],
        conditions: vec![],
        returns: vec![Projection { var: "c".into(), path: Some("name".into()) }],
        limit: None,
    };
    assert_eq!(expand_virtual_ops(&q, &reg).unwrap(), expected);
    let idx = LiveIndexes::from_triples([
        lit("sea", "type", "city"),
        edge("sea", "located_in", "kc"),
        edge("kc", "located_in", "wa"),
        edge("wa", "located_in", "us"),
        lit("us", "type", "country"),
        lit("us", "name", "United States"),
    ]);
    assert_eq!(execute_query(&expand_virtual_ops(&q, &reg).unwrap(), &idx).unwrap().rows, [[["United States"]]]);
}

#[test]
fn context_entities_keep_types() {
    let e = ContextEntity::describe(&LiveIndexes::from_triples(mini_kg()), &g("hollywood"));
    assert_eq!(e.types, BTreeSet::from(["city".to_string()]));
    assert_eq!(e.gender, None);
}

// Query corpus for the print/parse round trip.

const VARS: &[&str] = &["a", "b", "c", "d", "node_1"];
const PREDS: &[&str] = &["spouse", "located_in", "educated_at", "p2", "knows"];
const PATHS: &[&str] = &["name", "age", "educated_at.school", "located_in"];
const TYPES: &[&str] = &["person", "city", "country"];

fn node() -> impl Strategy<Value = NodePattern> {
    (prop::sample::select(VARS), prop::option::of(prop::sample::select(TYPES)))
        .prop_map(|(v, t)| NodePattern { var: v.into(), type_name: t.map(str::to_string) })
}

fn edge_pat() -> impl Strategy<Value = EdgePattern> {
    (prop::sample::select(PREDS), any::<bool>(), 1u32..=3).prop_map(|(p, out, n)| EdgePattern {
        predicate: p.into(),
        direction: if out { Direction::Out } else { Direction::In },
        max_hops: n,
    })
}

fn literal() -> impl Strategy<Value = Literal> {
    prop_oneof![
        "\\PC{0,8}".prop_map(Literal::Str),
        (-1.0e6f64..1.0e6).prop_map(Literal::Num),
        (-1000i64..1000).prop_map(|i| Literal::Num(i as f64)),
    ]
}

fn op() -> impl Strategy<Value = CmpOp> {
    prop::sample::select(vec![CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge])
}

fn query() -> impl Strategy<Value = KgqQuery> {
    let pattern =
        (node(), prop::collection::vec((edge_pat(), node()), 0..3)).prop_map(|(start, hops)| Pattern { start, hops });
    (prop::collection::vec(pattern, 1..3), prop::collection::vec(any::<prop::sample::Index>(), 0..4))
        .prop_flat_map(|(patterns, _)| {
            let bound: Vec<String> = {
                let q = KgqQuery { patterns: patterns.clone(), conditions: vec![], returns: vec![], limit: None };
                q.bound_vars().into_iter().map(str::to_string).collect()
            };
            let var = prop::sample::select(bound);
            let cond = prop_oneof![
                (var.clone(), prop::sample::select(PATHS), op(), literal())
                    .prop_map(|(v, p, op, value)| { Condition::Compare { var: v, path: p.into(), op, value } }),
                (var.clone(), "\\PC{0,12}").prop_map(|(v, text)| Condition::Search { var: v, text }),
                (var.clone(), "[a-z]{1,4}:[a-z0-9_]{1,6}").prop_map(|(v, entity)| Condition::Id { var: v, entity }),
                (
                    prop::sample::select(vec!["LocatedIn", "Near", "SameCountry"]),
                    prop::collection::vec(var.clone(), 1..3)
                )
                    .prop_map(|(n, args)| Condition::Call { name: n.into(), args }),
            ];
            let proj = (var, prop::option::of(prop::sample::select(PATHS)))
                .prop_map(|(v, p)| Projection { var: v, path: p.map(str::to_string) });
            (
                Just(patterns),
                prop::collection::vec(cond, 0..4),
                prop::collection::vec(proj, 1..4),
                prop::option::of(0usize..100),
            )
        })
        .prop_map(|(patterns, conditions, returns, limit)| KgqQuery { patterns, conditions, returns, limit })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn print_parse_round_trip(q in query()) {
        let text = q.to_string();
        let parsed = parse_kgq(&text).unwrap();
        prop_assert_eq!(&parsed, &q);
        prop_assert_eq!(parse_kgq(&parsed.to_string()).unwrap(), parsed);
    }
}

// Executor against a nested-loop evaluator that reads the raw triple list.

#[derive(Clone, Debug)]
struct SmallGraph {
    n: usize,
    types: Vec<usize>,
    ages: Vec<Option<i32>>,
    edges: Vec<(usize, usize, usize)>,
}

const G_PREDS: &[&str] = &["p", "q"];
const G_TYPES: &[&str] = &["t0", "t1", "t2"];

impl SmallGraph {
    fn id(i: usize) -> EntityId {
        g(&format!("n{i:02}"))
    }

    fn triples(&self) -> Vec<ExtendedTriple> {
        let mut out = Vec::new();
        for i in 0..self.n {
            let id = Self::id(i);
            out.push(ExtendedTriple::simple(id.clone(), "type", Object::literal(G_TYPES[self.types[i]]), "s", 0.9));
            if let Some(a) = self.ages[i] {
                out.push(ExtendedTriple::simple(id, "age", Object::literal(a.to_string()), "s", 0.9));
            }
        }
        for &(s, p, o) in &self.edges {
            out.push(ExtendedTriple::simple(Self::id(s), G_PREDS[p], Object::Entity(Self::id(o)), "s", 0.9));
        }
        out
    }
}

fn small_graph() -> impl Strategy<Value = SmallGraph> {
    (2usize..=50).prop_flat_map(|n| {
        (
            prop::collection::vec(0..G_TYPES.len(), n),
            prop::collection::vec(prop::option::of(0i32..100), n),
            prop::collection::vec((0..n, 0..G_PREDS.len(), 0..n), 0..(3 * n)),
        )
            .prop_map(move |(types, ages, edges)| SmallGraph { n, types, ages, edges })
    })
}

#[derive(Clone, Debug)]
struct Hop {
    pred: usize,
    out: bool,
    max: u32,
    ty: Option<usize>,
}

#[derive(Clone, Debug)]
struct SmallQuery {
    start_ty: Option<usize>,
    hops: Vec<Hop>,
    age: Option<(usize, CmpOp, i32)>,
    id: Option<(usize, usize)>,
    limit: Option<usize>,
}

fn small_query() -> impl Strategy<Value = SmallQuery> {
    let hop = (0..G_PREDS.len(), any::<bool>(), 1u32..=2, prop::option::of(0..G_TYPES.len()))
        .prop_map(|(pred, out, max, ty)| Hop { pred, out, max, ty });
    (
        prop::option::of(0..G_TYPES.len()),
        prop::collection::vec(hop, 0..=2),
        prop::option::of((0usize..3, op(), 0i32..100)),
        prop::option::of((0usize..3, 0usize..50)),
        prop::option::of(1usize..10),
    )
        .prop_map(|(start_ty, hops, age, id, limit)| SmallQuery { start_ty, hops, age, id, limit })
}

impl SmallQuery {
    fn var(i: usize) -> String {
        format!("v{i}")
    }

    fn nvars(&self) -> usize {
        self.hops.len() + 1
    }

    fn text(&self) -> String {
        let ty = |t: Option<usize>| t.map(|t| format!(":{}", G_TYPES[t])).unwrap_or_default();
        let mut s = format!("MATCH (v0{})", ty(self.start_ty));
        for (i, h) in self.hops.iter().enumerate() {
            let star = if h.max == 1 { String::new() } else { format!("*{}", h.max) };
            if h.out {
                s += &format!("-[{}{star}]->", G_PREDS[h.pred]);
            } else {
                s += &format!("<-[{}{star}]-", G_PREDS[h.pred]);
            }
            s += &format!("({}{})", Self::var(i + 1), ty(h.ty));
        }
        let mut conds = Vec::new();
        if let Some((v, op, x)) = self.age {
            let sym = match op {
                CmpOp::Eq => "=",
                CmpOp::Ne => "!=",
                CmpOp::Lt => "<",
                CmpOp::Le => "<=",
                CmpOp::Gt => ">",
                CmpOp::Ge => ">=",
            };
            conds.push(format!("{}.age {sym} {x}", Self::var(v % self.nvars())));
        }
        if let Some((v, e)) = self.id {
            conds.push(format!("ID({}, \"akg:n{e:02}\")", Self::var(v % self.nvars())));
        }
        if !conds.is_empty() {
            s += " WHERE ";
            s += &conds.join(" AND ");
        }
        let ret: Vec<String> = (0..self.nvars()).map(Self::var).collect();
        s += " RETURN ";
        s += &ret.join(", ");
        s += ", v0.age";
        if let Some(l) = self.limit {
            s += &format!(" LIMIT {l}");
        }
        s
    }
}

/// Direct evaluation: enumerate every assignment of every variable.
fn naive(graph: &SmallGraph, blocked: &BTreeSet<usize>, q: &SmallQuery) -> Vec<Vec<Vec<String>>> {
    let live: Vec<(usize, usize, usize)> =
        graph.edges.iter().enumerate().filter(|(i, _)| !blocked.contains(i)).map(|(_, e)| *e).collect();
    let step = |a: usize, b: usize, p: usize| live.iter().any(|&(s, pp, o)| s == a && pp == p && o == b);
    fn path(step: &dyn Fn(usize, usize) -> bool, n: usize, a: usize, b: usize, k: u32) -> bool {
        if k == 0 {
            return false;
        }
        step(a, b) || (0..n).any(|m| step(a, m) && path(step, n, m, b, k - 1))
    }
    let age_ok = |i: usize, op: CmpOp, x: i32| {
        let v = graph.ages[i];
        match op {
            CmpOp::Ne => v != Some(x),
            CmpOp::Eq => v == Some(x),
            CmpOp::Lt => v.is_some_and(|v| v < x),
            CmpOp::Le => v.is_some_and(|v| v <= x),
            CmpOp::Gt => v.is_some_and(|v| v > x),
            CmpOp::Ge => v.is_some_and(|v| v >= x),
        }
    };
    let k = q.nvars();
    let mut out = BTreeSet::new();
    let mut assign = vec![0usize; k];
    let total = graph.n.pow(k as u32);
    for code in 0..total {
        let mut c = code;
        for slot in assign.iter_mut() {
            *slot = c % graph.n;
            c /= graph.n;
        }
        if q.start_ty.is_some_and(|t| graph.types[assign[0]] != t) {
            continue;
        }
        let hops_ok = q.hops.iter().enumerate().all(|(i, h)| {
            let (a, b) = (assign[i], assign[i + 1]);
            let st = |x: usize, y: usize| step(x, y, h.pred);
            let linked = if h.out { path(&st, graph.n, a, b, h.max) } else { path(&st, graph.n, b, a, h.max) };
            linked && h.ty.is_none_or(|t| graph.types[b] == t)
        });
        if !hops_ok {
            continue;
        }
        if let Some((v, op, x)) = q.age {
            if !age_ok(assign[v % k], op, x) {
                continue;
            }
        }
        if let Some((v, e)) = q.id {
            if assign[v % k] != e {
                continue;
            }
        }
        let mut row: Vec<Vec<String>> = assign.iter().map(|&i| vec![SmallGraph::id(i).to_string()]).collect();
        row.push(graph.ages[assign[0]].map(|a| a.to_string()).into_iter().collect());
        out.insert(row);
    }
    let mut out: Vec<_> = out.into_iter().collect();
    if let Some(l) = q.limit {
        out.truncate(l);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn executor_matches_nested_loops(
        graph in small_graph(),
        q in small_query(),
        block in prop::collection::btree_set(0usize..150, 0..5),
    ) {
        let triples = graph.triples();
        let mut idx = LiveIndexes::from_triples(triples);
        let blocked: BTreeSet<usize> = block.into_iter().filter(|&i| i < graph.edges.len()).collect();
        for &i in &blocked {
            let (s, p, o) = graph.edges[i];
            let key = ExtendedTriple::simple(SmallGraph::id(s), G_PREDS[p], Object::Entity(SmallGraph::id(o)), "s", 0.9).key();
            idx.block_fact(key);
        }
        let text = q.text();
        let got = execute_query(&parse_kgq(&text).unwrap(), &idx).unwrap().rows;
        // Duplicate edges in the generated list collapse to one fact, so an
        // edge counts as blocked when any copy of it is.
        let blocked_edges: BTreeSet<(usize, usize, usize)> = blocked.iter().map(|&i| graph.edges[i]).collect();
        let all_blocked: BTreeSet<usize> = graph
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| blocked_edges.contains(e))
            .map(|(i, _)| i)
            .collect();
        prop_assert_eq!(got, naive(&graph, &all_blocked, &q), "{}", text);
    }

    #[test]
    fn context_binding_respects_slot_types(
        entries in prop::collection::vec((0usize..3, prop::option::of(0usize..2)), 0..12),
        want in prop::option::of(0usize..3),
        gender in prop::option::of(0usize..2),
    ) {
        const T: &[&str] = &["person", "city", "song"];
        const GEN: &[&str] = &["female", "male"];
        let mut ctx = ContextGraph::with_capacity(4);
        for (i, (t, gn)) in entries.iter().enumerate() {
            let e = ContextEntity {
                id: g(&format!("x{i}")),
                types: BTreeSet::from([T[*t].to_string()]),
                gender: gn.map(|x| GEN[x].to_string()),
            };
            update_context(&mut ctx, Interaction {
                intent: "SpouseOf".into(),
                args: vec![],
                answers: vec![e],
                salient: vec![],
            });
        }
        let partial = PartialIntent {
            name: Some("SpouseOf".into()),
            args: vec![ArgSlot::Ref {
                gender: gender.map(|x| GEN[x].to_string()),
                type_name: want.map(|t| T[t].to_string()),
            }],
        };
        let reg = intents();
        let kept: Vec<_> = entries.iter().enumerate().skip(entries.len().saturating_sub(4)).collect();
        let ok = |t: usize, gn: Option<usize>| {
            T[t] == "person" && want.is_none_or(|w| w == t) && gender.is_none_or(|x| gn == Some(x))
        };
        match resolve_followup(&partial, &ctx, Some(&reg)) {
            Ok(c) => {
                let i: usize = c.args[0].local_id().trim_start_matches('x').parse().unwrap();
                let (t, gn) = entries[i];
                prop_assert!(ok(t, gn));
                let newest = kept.iter().rev().find(|(_, (t, gn))| ok(*t, *gn)).map(|(i, _)| *i);
                prop_assert_eq!(Some(i), newest);
            }
            Err(e) => {
                prop_assert!(matches!(e, LiveError::UnresolvableReference(_)));
                prop_assert!(!kept.iter().any(|(_, (t, gn))| ok(*t, *gn)));
            }
        }
    }
}
