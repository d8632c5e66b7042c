use std::collections::{BTreeMap, BTreeSet};
use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use super::{LinkEntity, LinkingPayload};
use crate::kg::EntityId;
use crate::simstrings::qgram_set;
use crate::text::{fold, is_stopword, words};

/// Maps an entity to zero or more bucket keys.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "function", rename_all = "snake_case")]
pub enum BlockingFunction {
    /// LSH over the q-gram set: `bands` keys of `rows` minhashes each.
    QgramMinhash {
        predicate: String,
        q: usize,
        bands: usize,
        rows: usize,
        #[serde(default)]
        seed: u64,
    },
    Prefix {
        predicate: String,
        length: usize,
    },
    Exact {
        predicate: String,
    },
    /// Every non-stopword token.
    Token {
        predicate: String,
    },
    /// Cartesian product of the parts' keys.
    Composite {
        parts: Vec<BlockingFunction>,
    },
}

fn hash_with(seed: u64, salt: u64, s: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write_u64(seed);
    h.write_u64(salt);
    h.write(s.as_bytes());
    h.finish()
}

impl BlockingFunction {
    pub fn keys(&self, e: &LinkEntity) -> BTreeSet<String> {
        let folded =
            |p: &str| -> Vec<String> { e.values(p).iter().map(|v| fold(v)).filter(|v| !v.is_empty()).collect() };
        match self {
            BlockingFunction::Exact { predicate } => folded(predicate).into_iter().collect(),
            BlockingFunction::Prefix { predicate, length } => {
                folded(predicate).into_iter().map(|v| v.chars().take(*length).collect()).collect()
            }
            BlockingFunction::Token { predicate } => {
                e.values(predicate).iter().flat_map(|v| words(v)).filter(|w| !is_stopword(w)).collect()
            }
            BlockingFunction::QgramMinhash { predicate, q, bands, rows, seed } => {
                let mut out = BTreeSet::new();
                for v in folded(predicate) {
                    let grams = qgram_set(&v, *q);
                    for b in 0..*bands {
                        let mut band = FnvHasher::default();
                        for r in 0..*rows {
                            let salt = (b * rows + r) as u64;
                            let m = grams.iter().map(|g| hash_with(*seed, salt, g)).min().unwrap_or(0);
                            band.write_u64(m);
                        }
                        out.insert(format!("{b}:{:016x}", band.finish()));
                    }
                }
                out
            }
            BlockingFunction::Composite { parts } => {
                let mut acc: BTreeSet<String> = [String::new()].into();
                for p in parts {
                    let ks = p.keys(e);
                    acc = acc.iter().flat_map(|a| ks.iter().map(move |k| format!("{a}\u{1f}{k}"))).collect();
                }
                acc
            }
        }
    }
}

/// Buckets from every function (keys are namespaced by function index);
/// singleton buckets are dropped. Members and blocks come out sorted.
pub fn block(payload: &LinkingPayload, cfg: &[BlockingFunction]) -> Vec<Vec<EntityId>> {
    let mut buckets: BTreeMap<(usize, String), BTreeSet<&EntityId>> = BTreeMap::new();
    for (i, f) in cfg.iter().enumerate() {
        for e in &payload.entities {
            for k in f.keys(e) {
                buckets.entry((i, k)).or_default().insert(&e.id);
            }
        }
    }
    let blocks: BTreeSet<Vec<EntityId>> =
        buckets.into_values().filter(|b| b.len() > 1).map(|b| b.into_iter().cloned().collect()).collect();
    blocks.into_iter().collect()
}

/// Every unordered pair sharing a block, once, stored as (smaller, larger).
pub fn generate_pairs(blocks: &[Vec<EntityId>]) -> Vec<(EntityId, EntityId)> {
    let mut pairs = BTreeSet::new();
    for b in blocks {
        for (i, a) in b.iter().enumerate() {
            for c in &b[i + 1..] {
                if a != c {
                    pairs.insert(if a < c { (a.clone(), c.clone()) } else { (c.clone(), a.clone()) });
                }
            }
        }
    }
    pairs.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ent(id: &str, preds: &[(&str, &str)]) -> LinkEntity {
        let mut predicates: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (p, v) in preds {
            predicates.entry(p.to_string()).or_default().push(v.to_string());
        }
        LinkEntity { id: id.parse().unwrap(), predicates, is_graph_entity: false }
    }

    fn payload(es: Vec<LinkEntity>) -> LinkingPayload {
        LinkingPayload { entity_type: "movie".into(), entities: es }
    }

    fn minhash() -> BlockingFunction {
        BlockingFunction::QgramMinhash { predicate: "title".into(), q: 3, bands: 8, rows: 2, seed: 1 }
    }

    #[test]
    fn alien_and_alien_dot_share_a_block() {
        let p = payload(vec![ent("s:a", &[("title", "Alien")]), ent("s:b", &[("title", "Alien.")])]);
        let blocks = block(&p, &[minhash()]);
        assert!(blocks.iter().any(|b| b.len() == 2));
    }

    #[test]
    fn disjoint_titles_never_meet() {
        let p = payload(vec![ent("s:a", &[("title", "Alien")]), ent("s:b", &[("title", "Zodiac")])]);
        assert!(block(&p, &[minhash(), BlockingFunction::Token { predicate: "title".into() }]).is_empty());
    }

    #[test]
    fn composite_prefix_year_separates_remakes() {
        let f = BlockingFunction::Composite {
            parts: vec![
                BlockingFunction::Prefix { predicate: "title".into(), length: 4 },
                BlockingFunction::Exact { predicate: "year".into() },
            ],
        };
        let p = payload(vec![
            ent("s:a", &[("title", "Solaris"), ("year", "1972")]),
            ent("s:b", &[("title", "Solaris"), ("year", "2002")]),
            ent("s:c", &[("title", "Solaris"), ("year", "2002")]),
        ]);
        let blocks = block(&p, &[f]);
        assert_eq!(blocks, vec![vec!["s:b".parse().unwrap(), "s:c".parse::<EntityId>().unwrap()]]);
    }

    #[test]
    fn pairs_are_deduplicated() {
        let id = |s: &str| -> EntityId { s.parse().unwrap() };
        let abc = vec![id("s:a"), id("s:b"), id("s:c")];
        assert_eq!(generate_pairs(std::slice::from_ref(&abc)).len(), 3);
        assert_eq!(generate_pairs(&[abc.clone(), abc]).len(), 3);
        let p = generate_pairs(&[vec![id("s:a"), id("s:b")], vec![id("s:b"), id("s:c")]]);
        assert_eq!(p, vec![(id("s:a"), id("s:b")), (id("s:b"), id("s:c"))]);
    }
}
