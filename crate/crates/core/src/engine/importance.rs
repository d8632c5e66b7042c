use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::kg::{EntityId, KgSnapshot, SAME_AS_PREDICATE};

pub const DEFAULT_DAMPING: f64 = 0.85;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
const MAX_ITERATIONS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRecord {
    pub entity: EntityId,
    pub in_degree: usize,
    pub out_degree: usize,
    pub identities: usize,
    pub pagerank: f64,
    pub aggregate: f64,
}

/// PageRank by power iteration over `n` nodes and directed `edges`, stopping
/// when the L1 change drops below `tol`. Dangling mass is spread uniformly.
pub fn pagerank(n: usize, edges: &[(usize, usize)], damping: f64, tol: f64) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in edges {
        out[a].push(b);
    }
    let nf = n as f64;
    let mut pr = vec![1.0 / nf; n];
    for _ in 0..MAX_ITERATIONS {
        let dangling: f64 = (0..n).filter(|&i| out[i].is_empty()).map(|i| pr[i]).sum();
        let base = (1.0 - damping) / nf + damping * dangling / nf;
        let mut next = vec![base; n];
        for (i, targets) in out.iter().enumerate() {
            if targets.is_empty() {
                continue;
            }
            let share = damping * pr[i] / targets.len() as f64;
            for &t in targets {
                next[t] += share;
            }
        }
        let delta: f64 = next.iter().zip(&pr).map(|(a, b)| (a - b).abs()).sum();
        pr = next;
        if delta < tol {
            break;
        }
    }
    pr
}

fn min_max(xs: &[f64]) -> Vec<f64> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    xs.iter().map(|x| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 }).collect()
}

/// Mean of the min–max normalized columns, row by row.
pub fn aggregate(columns: &[Vec<f64>]) -> Vec<f64> {
    let n = columns.first().map_or(0, Vec::len);
    let norm: Vec<Vec<f64>> = columns.iter().map(|c| min_max(c)).collect();
    (0..n).map(|i| norm.iter().map(|c| c[i]).sum::<f64>() / columns.len() as f64).collect()
}

/// Importance of every graph entity (subjects and entity-ref targets).
/// Degrees count entity-ref facts other than `same_as`; identities count
/// distinct sources over the entity's facts; PageRank runs on the distinct
/// directed edges without self loops.
pub fn compute_importance(snapshot: &KgSnapshot, damping: f64, tol: f64) -> Vec<ImportanceRecord> {
    let mut nodes: BTreeSet<&EntityId> = snapshot.entities().filter(|e| e.is_graph()).collect();
    let mut in_deg: BTreeMap<&EntityId, usize> = BTreeMap::new();
    let mut out_deg: BTreeMap<&EntityId, usize> = BTreeMap::new();
    let mut edges: BTreeSet<(&EntityId, &EntityId)> = BTreeSet::new();
    for t in snapshot.triples() {
        if t.predicate == SAME_AS_PREDICATE || !t.subject.is_graph() {
            continue;
        }
        if let Some(o) = t.object.as_entity().filter(|o| o.is_graph()) {
            nodes.insert(o);
            *out_deg.entry(&t.subject).or_default() += 1;
            *in_deg.entry(o).or_default() += 1;
            if *o != t.subject {
                edges.insert((&t.subject, o));
            }
        }
    }
    let ids: Vec<&EntityId> = nodes.into_iter().collect();
    let pos: BTreeMap<&EntityId, usize> = ids.iter().enumerate().map(|(i, e)| (*e, i)).collect();
    let e: Vec<(usize, usize)> = edges.iter().map(|(a, b)| (pos[a], pos[b])).collect();
    let pr = pagerank(ids.len(), &e, damping, tol);
    let identities: Vec<usize> = ids
        .iter()
        .map(|id| snapshot.get_entity(id).iter().flat_map(|t| t.sources.iter()).collect::<BTreeSet<_>>().len())
        .collect();
    let ind: Vec<usize> = ids.iter().map(|id| in_deg.get(id).copied().unwrap_or(0)).collect();
    let outd: Vec<usize> = ids.iter().map(|id| out_deg.get(id).copied().unwrap_or(0)).collect();
    let cols = [
        ind.iter().map(|&x| x as f64).collect(),
        outd.iter().map(|&x| x as f64).collect(),
        identities.iter().map(|&x| x as f64).collect(),
        pr.clone(),
    ];
    let agg = aggregate(&cols);
    ids.into_iter()
        .enumerate()
        .map(|(i, id)| ImportanceRecord {
            entity: id.clone(),
            in_degree: ind[i],
            out_degree: outd[i],
            identities: identities[i],
            pagerank: pr[i],
            aggregate: agg[i],
        })
        .collect()
}

/// Aggregate scores keyed by entity, as NERD and the live index consume them.
pub fn importance_scores(records: &[ImportanceRecord]) -> BTreeMap<EntityId, f64> {
    records.iter().map(|r| (r.entity.clone(), r.aggregate)).collect()
}
