//! Synthetic fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saga_core::ingest::SourceEntity;
use saga_core::link::{BlockingFunction, Comparator, Feature, LinkConfig, MatchingModel, ModelKind};
use saga_core::{EntityId, ExtendedTriple, Object};

const FIRST: &[&str] = &["Ada", "Alan", "Grace", "Edsger", "Barbara", "Donald", "Frances", "John", "Radia", "Ken"];
const LAST: &[&str] =
    &["Lovelace", "Turing", "Hopper", "Dijkstra", "Liskov", "Knuth", "Allen", "Backus", "Perlman", "Thompson"];

/// People, cities and countries wired by `spouse`, `place_of_birth` and
/// `located_in` edges.
pub fn people_graph(people: usize, seed: u64) -> Vec<ExtendedTriple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cities = (people / 20).max(1);
    let countries = (cities / 10).max(1);
    let lit = |s: &EntityId, p: &str, o: String| ExtendedTriple::simple(s.clone(), p, Object::literal(o), "bench", 0.9);
    let rel =
        |s: &EntityId, p: &str, o: EntityId| ExtendedTriple::simple(s.clone(), p, Object::Entity(o), "bench", 0.9);
    let mut out = Vec::new();
    for k in 0..countries {
        let id = EntityId::graph(format!("k{k}"));
        out.push(lit(&id, "type", "country".into()));
        out.push(lit(&id, "name", format!("Country {k}")));
    }
    for c in 0..cities {
        let id = EntityId::graph(format!("c{c}"));
        out.push(lit(&id, "type", "city".into()));
        out.push(lit(&id, "name", format!("City {c}")));
        out.push(rel(&id, "located_in", EntityId::graph(format!("k{}", c % countries))));
    }
    for p in 0..people {
        let id = EntityId::graph(format!("p{p}"));
        out.push(lit(&id, "type", "person".into()));
        out.push(lit(&id, "name", format!("{} {} {p}", FIRST[p % 10], LAST[(p / 10) % 10])));
        out.push(lit(&id, "age", rng.gen_range(18..90).to_string()));
        out.push(rel(&id, "place_of_birth", EntityId::graph(format!("c{}", rng.gen_range(0..cities)))));
        if rng.gen_bool(0.5) {
            out.push(rel(&id, "spouse", EntityId::graph(format!("p{}", rng.gen_range(0..people)))));
        }
    }
    out
}

/// Random directed edges over `n` nodes, `degree` per node on average.
pub fn random_edges(n: usize, degree: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * degree).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).collect()
}

/// `n` source people where roughly a third are noisy duplicates of another.
pub fn person_records(n: usize, seed: u64) -> Vec<SourceEntity> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<SourceEntity> = Vec::with_capacity(n);
    for i in 0..n {
        let (name, year) = if i > 0 && rng.gen_bool(0.3) {
            let orig = &out[rng.gen_range(0..i)];
            let mut name = orig.values("name")[0].clone();
            if rng.gen_bool(0.5) {
                name.push('.');
            }
            (name, orig.values("birth_year")[0].clone())
        } else {
            let name =
                format!("{} {} {}", FIRST[rng.gen_range(0..10)], LAST[rng.gen_range(0..10)], rng.gen_range(0..n));
            (name, rng.gen_range(1900..2000).to_string())
        };
        out.push(
            SourceEntity::new(EntityId::new("bench", format!("r{i}")).unwrap())
                .with("type", &["person"])
                .with("name", &[&name])
                .with("birth_year", &[&year]),
        );
    }
    out
}

pub fn person_link_config() -> LinkConfig {
    LinkConfig {
        entity_type: "person".into(),
        blocking: vec![BlockingFunction::Token { predicate: "name".into() }],
        model: MatchingModel {
            kind: ModelKind::Logistic,
            bias: -12.0,
            features: vec![
                Feature {
                    predicate: "name".into(),
                    comparator: Comparator::Jaccard { q: 3 },
                    weight: 12.0,
                    threshold: 0.5,
                },
                Feature { predicate: "birth_year".into(), comparator: Comparator::Exact, weight: 4.0, threshold: 0.5 },
            ],
        },
        tau_pos: 0.9,
        tau_neg: 0.1,
        seeds: 11,
        graph_deduped: true,
    }
}
