use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{LinkError, LinkingPayload, ScoredPair};
use crate::kg::EntityId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Positive,
    Negative,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinkageGraph {
    pub nodes: BTreeSet<EntityId>,
    /// Keyed by (smaller, larger); the probability is kept for repair.
    pub edges: BTreeMap<(EntityId, EntityId), (Sign, f64)>,
}

impl LinkageGraph {
    pub fn add_node(&mut self, id: EntityId) {
        self.nodes.insert(id);
    }

    /// Adds both endpoints. Self-edges are ignored.
    pub fn add_edge(&mut self, a: EntityId, b: EntityId, sign: Sign, probability: f64) {
        if a == b {
            return;
        }
        let key = if a < b { (a, b) } else { (b, a) };
        self.nodes.insert(key.0.clone());
        self.nodes.insert(key.1.clone());
        self.edges.insert(key, (sign, probability));
    }

    pub fn edge(&self, a: &EntityId, b: &EntityId) -> Option<(Sign, f64)> {
        let key = if a < b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
        self.edges.get(&key).copied()
    }
}

/// +1 at p ≥ τ_pos, −1 at p ≤ τ_neg, nothing in between.
pub fn build_linkage_graph(scored: &[ScoredPair], tau_pos: f64, tau_neg: f64) -> Result<LinkageGraph, LinkError> {
    if !(0.0 <= tau_neg && tau_neg < tau_pos && tau_pos <= 1.0) {
        return Err(LinkError::ThresholdOrder { tau_pos, tau_neg });
    }
    let mut g = LinkageGraph::default();
    for s in scored {
        g.add_node(s.left.clone());
        g.add_node(s.right.clone());
        if s.probability >= tau_pos {
            g.add_edge(s.left.clone(), s.right.clone(), Sign::Positive, s.probability);
        } else if s.probability <= tau_neg {
            g.add_edge(s.left.clone(), s.right.clone(), Sign::Negative, s.probability);
        }
    }
    Ok(g)
}

/// Index form of a graph for the clustering loops.
struct Dense {
    ids: Vec<EntityId>,
    adj: Vec<Vec<(usize, Sign)>>,
}

impl Dense {
    fn new(g: &LinkageGraph) -> Self {
        let ids: Vec<EntityId> = g.nodes.iter().cloned().collect();
        let pos: BTreeMap<&EntityId, usize> = ids.iter().enumerate().map(|(i, id)| (id, i)).collect();
        let mut adj = vec![Vec::new(); ids.len()];
        for ((a, b), (s, _)) in &g.edges {
            let (i, j) = (pos[a], pos[b]);
            adj[i].push((j, *s));
            adj[j].push((i, *s));
        }
        Dense { ids, adj }
    }

    fn cost_in(&self, v: usize, label: &[usize], c: usize) -> usize {
        self.adj[v]
            .iter()
            .filter(|(u, s)| match s {
                Sign::Positive => label[*u] != c,
                Sign::Negative => label[*u] == c,
            })
            .count()
    }

    /// Greedy single-node moves while they strictly reduce disagreements.
    fn refine(&self, label: &mut [usize]) {
        let n = label.len();
        for _ in 0..100 {
            let mut moved = false;
            for v in 0..n {
                let cur = self.cost_in(v, label, label[v]);
                let mut best = (cur, label[v]);
                let mut cands: Vec<usize> = self.adj[v].iter().map(|(u, _)| label[*u]).collect();
                cands.sort_unstable();
                cands.dedup();
                for c in cands {
                    let k = self.cost_in(v, label, c);
                    if k < best.0 {
                        best = (k, c);
                    }
                }
                let fresh = label.iter().max().map_or(0, |m| m + 1);
                let alone = self.adj[v].iter().filter(|(_, s)| *s == Sign::Positive).count();
                if alone < best.0 {
                    best = (alone, fresh);
                }
                if best.1 != label[v] {
                    label[v] = best.1;
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
    }

    fn clusters(&self, label: &[usize]) -> Vec<BTreeSet<EntityId>> {
        let mut by: BTreeMap<usize, BTreeSet<EntityId>> = BTreeMap::new();
        for (v, &c) in label.iter().enumerate() {
            by.entry(c).or_default().insert(self.ids[v].clone());
        }
        let mut out: Vec<_> = by.into_values().collect();
        out.sort();
        out
    }
}

/// Random-order pivot: each unclustered pivot absorbs its unclustered +1
/// neighbours; followed by local moves that only ever lower the disagreement
/// count. Clusters come out sorted.
pub fn pivot_cluster(g: &LinkageGraph, seed: u64) -> Vec<BTreeSet<EntityId>> {
    let d = Dense::new(g);
    let n = d.ids.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for &p in &order {
        if label[p] != usize::MAX {
            continue;
        }
        label[p] = next;
        for &(u, s) in &d.adj[p] {
            if s == Sign::Positive && label[u] == usize::MAX {
                label[u] = next;
            }
        }
        next += 1;
    }
    d.refine(&mut label);
    d.clusters(&label)
}

/// +1 edges cut plus −1 edges kept inside a cluster; missing edges abstain.
pub fn disagreements(g: &LinkageGraph, clusters: &[BTreeSet<EntityId>]) -> usize {
    let of: BTreeMap<&EntityId, usize> =
        clusters.iter().enumerate().flat_map(|(i, c)| c.iter().map(move |id| (id, i))).collect();
    g.edges
        .iter()
        .filter(|((a, b), (s, _))| {
            let same = of.get(a) == of.get(b);
            match s {
                Sign::Positive => !same,
                Sign::Negative => same,
            }
        })
        .count()
}

/// The pivot clustering with fewest disagreements over seeds `seed..seed+n`.
pub fn best_of_seeds(g: &LinkageGraph, seed: u64, n: u64) -> (Vec<BTreeSet<EntityId>>, usize) {
    let mut best: Option<(Vec<BTreeSet<EntityId>>, usize)> = None;
    for s in seed..seed + n.max(1) {
        let c = pivot_cluster(g, s);
        let k = disagreements(g, &c);
        if best.as_ref().is_none_or(|(_, b)| k < *b) {
            best = Some((c, k));
        }
        if k == 0 {
            break;
        }
    }
    best.expect("at least one seed")
}

/// Deterministic id for a cluster without a graph entity.
pub fn mint_graph_id(members: &BTreeSet<EntityId>) -> EntityId {
    let first = members.iter().next().map(|id| id.to_string()).unwrap_or_default();
    let digest = Sha256::digest(first.as_bytes());
    EntityId::graph(format!("e{}", &hex::encode(digest)[..16]))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClusterAssignment {
    pub clusters: Vec<BTreeSet<EntityId>>,
    /// Parallel to `clusters`.
    pub id_of: Vec<EntityId>,
    /// (source entity, akg entity) for every non-graph node.
    pub same_as: Vec<(EntityId, EntityId)>,
    /// Graph entities the clustering wanted to merge; left for review.
    pub review: Vec<(EntityId, EntityId)>,
    pub minted: Vec<EntityId>,
    pub disagreements: usize,
}

/// Splits a cluster holding several graph entities: each other node follows
/// its strongest +1 edge towards an already assigned node, ties to the
/// smaller akg id.
fn repair(g: &LinkageGraph, cluster: &BTreeSet<EntityId>, graph: &[EntityId]) -> Vec<BTreeSet<EntityId>> {
    let mut owner: BTreeMap<EntityId, EntityId> = graph.iter().map(|id| (id.clone(), id.clone())).collect();
    loop {
        let mut round = Vec::new();
        for v in cluster.iter().filter(|v| !owner.contains_key(*v)) {
            let mut best: Option<(f64, &EntityId)> = None;
            for (u, o) in &owner {
                if let Some((Sign::Positive, p)) = g.edge(v, u) {
                    let better = match best {
                        None => true,
                        Some((bp, bo)) => p > bp || (p == bp && o < bo),
                    };
                    if better {
                        best = Some((p, o));
                    }
                }
            }
            if let Some((_, o)) = best {
                round.push((v.clone(), o.clone()));
            }
        }
        if round.is_empty() {
            break;
        }
        owner.extend(round);
    }
    let mut parts: BTreeMap<EntityId, BTreeSet<EntityId>> = BTreeMap::new();
    for v in cluster {
        let o = owner.get(v).cloned().unwrap_or_else(|| graph[0].clone());
        parts.entry(o).or_default().insert(v.clone());
    }
    parts.into_values().collect()
}

/// Clusters every payload node, repairs clusters with more than one graph
/// entity, and assigns akg ids.
pub fn resolve_clusters(g: &LinkageGraph, payload: &LinkingPayload, seed: u64, seeds: u64) -> ClusterAssignment {
    let mut g = g.clone();
    for e in &payload.entities {
        g.add_node(e.id.clone());
    }
    let graph_flag: BTreeMap<&EntityId, bool> = payload.entities.iter().map(|e| (&e.id, e.is_graph_entity)).collect();
    let is_graph = |id: &EntityId| graph_flag.get(id).copied().unwrap_or(id.is_graph());
    let (raw, _) = best_of_seeds(&g, seed, seeds);
    let mut out = ClusterAssignment::default();
    for c in raw {
        let graph: Vec<EntityId> = c.iter().filter(|id| is_graph(id)).cloned().collect();
        if graph.len() > 1 {
            for (i, a) in graph.iter().enumerate() {
                for b in &graph[i + 1..] {
                    out.review.push((a.clone(), b.clone()));
                }
            }
            out.clusters.extend(repair(&g, &c, &graph));
        } else {
            out.clusters.push(c);
        }
    }
    out.clusters.sort();
    for c in &out.clusters {
        let id = match c.iter().find(|id| is_graph(id)) {
            Some(gid) => gid.clone(),
            None => {
                let m = mint_graph_id(c);
                out.minted.push(m.clone());
                m
            }
        };
        for v in c.iter().filter(|v| !is_graph(v)) {
            out.same_as.push((v.clone(), id.clone()));
        }
        out.id_of.push(id);
    }
    out.disagreements = disagreements(&g, &out.clusters);
    if !out.review.is_empty() {
        log::warn!("{} graph entity pairs matched each other; flagged for review", out.review.len());
    }
    out
}
