use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingModel, FactTriple, TrainingView};
use crate::kg::EntityId;

/// `n` entities split into `blocks` equal blocks, one predicate `linked`;
/// each ordered pair gets an edge with probability `p_in` inside a block and
/// `p_out` across blocks.
pub fn planted_block_graph(n: usize, blocks: usize, p_in: f64, p_out: f64, seed: u64) -> TrainingView {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = |i: usize| i * blocks / n;
    let mut facts = Vec::new();
    for s in 0..n {
        for o in 0..n {
            if s == o {
                continue;
            }
            let p = if block(s) == block(o) { p_in } else { p_out };
            if rng.gen_bool(p) {
                facts.push(FactTriple { s, p: 0, o });
            }
        }
    }
    TrainingView {
        entities: (0..n).map(|i| EntityId::graph(format!("n{i:04}"))).collect(),
        predicates: vec!["linked".into()],
        facts,
    }
}

/// Moves a seeded `fraction` of the facts out; vocabularies are kept whole.
pub fn split_holdout(view: &TrainingView, fraction: f64, seed: u64) -> (TrainingView, Vec<FactTriple>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut facts = view.facts.clone();
    facts.shuffle(&mut rng);
    let k = (facts.len() as f64 * fraction).round() as usize;
    let held = facts[..k].to_vec();
    let mut rest = facts[k..].to_vec();
    rest.sort();
    (TrainingView { entities: view.entities.clone(), predicates: view.predicates.clone(), facts: rest }, held)
}

/// Expected reciprocal rank of one item placed uniformly among `n`: H_n / n.
pub fn random_mrr_baseline(n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (1..=n).map(|k| 1.0 / k as f64).sum::<f64>() / n as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MrrReport {
    pub facts: usize,
    pub mrr: f64,
    /// Mean random-ranking MRR over the same candidate sets.
    pub random_baseline: f64,
    pub hits_at_10: f64,
}

/// Filtered object-prediction MRR: for each test fact, other known objects
/// of (s, p) are removed from the candidates; rank is 1 + the number of
/// candidates scoring strictly higher.
pub fn filtered_mrr(model: &EmbeddingModel, test: &[FactTriple], known: &BTreeSet<FactTriple>) -> MrrReport {
    let mut objects: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
    for f in known.iter().chain(test) {
        objects.entry((f.s, f.p)).or_default().insert(f.o);
    }
    let n_ent = model.entities.len();
    let (mut rr, mut base, mut hits) = (0.0, 0.0, 0usize);
    for f in test {
        let q = model.query_vector(f.s, f.p);
        let target = model.score_query(&q, f.o);
        let taken = &objects[&(f.s, f.p)];
        let mut candidates = 0usize;
        let mut above = 0usize;
        for o in 0..n_ent {
            if o != f.o && taken.contains(&o) {
                continue;
            }
            candidates += 1;
            if o != f.o && model.score_query(&q, o) > target {
                above += 1;
            }
        }
        rr += 1.0 / (above + 1) as f64;
        base += random_mrr_baseline(candidates);
        if above < 10 {
            hits += 1;
        }
    }
    let n = test.len().max(1) as f64;
    MrrReport { facts: test.len(), mrr: rr / n, random_baseline: base / n, hits_at_10: hits as f64 / n }
}
