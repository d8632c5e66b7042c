use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use saga_bench::{people_graph, person_link_config, person_records, random_edges};
use saga_core::engine::{pagerank, DEFAULT_DAMPING, DEFAULT_TOLERANCE};
use saga_core::link::{link_entities, MatchContext};
use saga_core::live::{execute_query, parse_kgq, LiveIndexes};
use saga_core::KgSnapshot;

fn kgq(c: &mut Criterion) {
    let idx = LiveIndexes::from_triples(people_graph(10_000, 1));
    let queries = [
        ("search", r#"MATCH (p:person) WHERE SEARCH(p, "grace hopper") RETURN p, p.name LIMIT 20"#),
        ("one_hop", r#"MATCH (p)-[spouse]->(s) WHERE SEARCH(p, "ada lovelace 5") RETURN s.name"#),
        (
            "two_hop_filter",
            r#"MATCH (p:person)-[place_of_birth]->(c)-[located_in]->(k) WHERE ID(k, "akg:k3") AND p.age >= 80 RETURN p"#,
        ),
        ("reverse", r#"MATCH (c:city)<-[place_of_birth]-(p) WHERE ID(c, "akg:c7") RETURN p.name"#),
    ];
    let mut group = c.benchmark_group("kgq");
    for (name, text) in queries {
        let q = parse_kgq(text).unwrap();
        group.bench_function(name, |b| b.iter(|| execute_query(&q, &idx).unwrap()));
    }
    group.bench_function("parse", |b| b.iter(|| parse_kgq(queries[2].1).unwrap()));
    group.finish();
}

fn pagerank_bench(c: &mut Criterion) {
    let mut group = c.benchmark_group("pagerank");
    for n in [1_000, 10_000, 100_000] {
        let edges = random_edges(n, 4, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &edges, |b, e| {
            b.iter(|| pagerank(n, e, DEFAULT_DAMPING, DEFAULT_TOLERANCE))
        });
    }
    group.finish();
}

fn linking(c: &mut Criterion) {
    let cfg = person_link_config();
    let ctx = MatchContext::default();
    let kg = KgSnapshot::empty();
    let mut group = c.benchmark_group("linking");
    group.sample_size(10);
    for n in [250, 1_000] {
        let records = person_records(n, 3);
        group.bench_with_input(BenchmarkId::from_parameter(n), &records, |b, r| {
            b.iter(|| link_entities(r, &kg, &cfg, &ctx, 7).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, kgq, pagerank_bench, linking);
criterion_main!(benches);
