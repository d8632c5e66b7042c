use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::kgq::{CmpOp, Condition, Direction, KgqQuery, Literal};
use super::{KgqError, LiveIndexes};
use crate::kg::EntityId;

/// One value list per projection.
pub type Row = Vec<Vec<String>>;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryResult {
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
}

/// Whether a stored value satisfies `op value`. `=`, `<`, ... hold when the
/// value compares that way; `!=` is decided by the caller over all values.
pub fn compare(stored: &str, op: CmpOp, value: &Literal) -> bool {
    let ord = match value {
        Literal::Str(s) => stored.cmp(s.as_str()),
        Literal::Num(x) => match stored.trim().parse::<f64>() {
            Ok(v) => match v.partial_cmp(x) {
                Some(o) => o,
                None => return false,
            },
            Err(_) => return false,
        },
    };
    match op {
        CmpOp::Eq | CmpOp::Ne => ord.is_eq(),
        CmpOp::Lt => ord.is_lt(),
        CmpOp::Le => ord.is_le(),
        CmpOp::Gt => ord.is_gt(),
        CmpOp::Ge => ord.is_ge(),
    }
}

/// Attribute condition over all values of `var.path`.
pub fn condition_holds(values: &[String], op: CmpOp, value: &Literal) -> bool {
    let any = values.iter().any(|v| compare(v, op, value));
    if op == CmpOp::Ne {
        !any
    } else {
        any
    }
}

/// Entities reachable from `from` in 1..=max_hops steps along `path`.
pub fn reach(idx: &LiveIndexes, from: &EntityId, path: &str, dir: Direction, max_hops: u32) -> BTreeSet<EntityId> {
    let mut seen = BTreeSet::new();
    let mut frontier = BTreeSet::from([from.clone()]);
    for _ in 0..max_hops {
        let mut next = BTreeSet::new();
        for e in &frontier {
            let step = match dir {
                Direction::Out => idx.out_neighbors(e, path),
                Direction::In => idx.in_neighbors(e, path),
            };
            for n in step {
                if seen.insert(n.clone()) {
                    next.insert(n);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    seen
}

struct Edge<'q> {
    from: &'q str,
    to: &'q str,
    path: &'q str,
    dir: Direction,
    hops: u32,
}

fn flip(d: Direction) -> Direction {
    match d {
        Direction::Out => Direction::In,
        Direction::In => Direction::Out,
    }
}

struct Plan<'q> {
    vars: Vec<&'q str>,
    types: BTreeMap<&'q str, BTreeSet<&'q str>>,
    seeds: BTreeMap<&'q str, BTreeSet<EntityId>>,
    attrs: BTreeMap<&'q str, Vec<(&'q str, CmpOp, &'q Literal)>>,
    edges: Vec<Edge<'q>>,
}

impl<'q> Plan<'q> {
    fn build(q: &'q KgqQuery, idx: &LiveIndexes) -> Result<Self, KgqError> {
        let mut p = Plan {
            vars: Vec::new(),
            types: BTreeMap::new(),
            seeds: BTreeMap::new(),
            attrs: BTreeMap::new(),
            edges: Vec::new(),
        };
        let node = |p: &mut Plan<'q>, n: &'q super::kgq::NodePattern| {
            if !p.vars.contains(&n.var.as_str()) {
                p.vars.push(&n.var);
            }
            if let Some(t) = &n.type_name {
                p.types.entry(&n.var).or_default().insert(t);
            }
        };
        for pat in &q.patterns {
            node(&mut p, &pat.start);
            let mut prev = pat.start.var.as_str();
            for (e, n) in &pat.hops {
                node(&mut p, n);
                p.edges.push(Edge { from: prev, to: &n.var, path: &e.predicate, dir: e.direction, hops: e.max_hops });
                prev = &n.var;
            }
        }
        let narrow = |p: &mut Plan<'q>, var: &'q str, set: BTreeSet<EntityId>| match p.seeds.get_mut(var) {
            Some(s) => s.retain(|e| set.contains(e)),
            None => {
                p.seeds.insert(var, set);
            }
        };
        for c in &q.conditions {
            match c {
                Condition::Search { var, text } => narrow(&mut p, var, idx.search(text)),
                Condition::Id { var, entity } => {
                    let set = entity.parse::<EntityId>().ok().filter(|e| idx.contains(e)).into_iter().collect();
                    narrow(&mut p, var, set)
                }
                Condition::Compare { var, path, op, value } => {
                    p.attrs.entry(var).or_default().push((path, *op, value));
                }
                Condition::Call { name, .. } => return Err(KgqError::UnknownOperator(name.clone())),
            }
        }
        Ok(p)
    }

    /// Node-local checks: type, seed membership and attribute conditions.
    fn admits(&self, idx: &LiveIndexes, var: &str, e: &EntityId) -> bool {
        if !idx.contains(e) {
            return false;
        }
        if let Some(s) = self.seeds.get(var) {
            if !s.contains(e) {
                return false;
            }
        }
        if let Some(ts) = self.types.get(var) {
            if !ts.iter().all(|t| idx.has_type(e, t)) {
                return false;
            }
        }
        self.attrs
            .get(var)
            .is_none_or(|cs| cs.iter().all(|(path, op, v)| condition_holds(&idx.values(e, path), *op, v)))
    }
}

struct Search<'a, 'q> {
    idx: &'a LiveIndexes,
    plan: &'a Plan<'q>,
    binding: BTreeMap<&'q str, EntityId>,
    out: Vec<BTreeMap<&'q str, EntityId>>,
}

impl<'q> Search<'_, 'q> {
    /// Next variable to bind: one reachable by an edge from a bound
    /// variable, else the unbound variable with the smallest seed set, else
    /// the first unbound one.
    fn next_var(&self) -> Option<(&'q str, Option<usize>)> {
        for (i, e) in self.plan.edges.iter().enumerate() {
            let (f, t) = (self.binding.contains_key(e.from), self.binding.contains_key(e.to));
            if f != t {
                return Some((if f { e.to } else { e.from }, Some(i)));
            }
        }
        let unbound = self.plan.vars.iter().filter(|v| !self.binding.contains_key(**v));
        unbound
            .clone()
            .filter_map(|v| self.plan.seeds.get(v).map(|s| (s.len(), *v)))
            .min()
            .map(|(_, v)| (v, None))
            .or_else(|| unbound.clone().next().map(|v| (*v, None)))
    }

    fn edges_hold(&self, var: &str) -> bool {
        self.plan.edges.iter().all(|e| {
            if e.from != var && e.to != var {
                return true;
            }
            match (self.binding.get(e.from), self.binding.get(e.to)) {
                (Some(a), Some(b)) => reach(self.idx, a, e.path, e.dir, e.hops).contains(b),
                _ => true,
            }
        })
    }

    fn run(&mut self) {
        let Some((var, via)) = self.next_var() else {
            self.out.push(self.binding.clone());
            return;
        };
        let candidates: Vec<EntityId> = match via {
            Some(i) => {
                let e = &self.plan.edges[i];
                if self.binding.contains_key(e.from) {
                    reach(self.idx, &self.binding[e.from], e.path, e.dir, e.hops).into_iter().collect()
                } else {
                    reach(self.idx, &self.binding[e.to], e.path, flip(e.dir), e.hops).into_iter().collect()
                }
            }
            None => match self.plan.seeds.get(var) {
                Some(s) => s.iter().cloned().collect(),
                None => self.idx.entities().cloned().collect(),
            },
        };
        for c in candidates {
            if !self.plan.admits(self.idx, var, &c) {
                continue;
            }
            self.binding.insert(var, c);
            if self.edges_hold(var) {
                self.run();
            }
            self.binding.remove(var);
        }
    }
}

/// Evaluates an expanded query. SEARCH and ID conditions seed their
/// variables from the inverted index before any traversal; the other
/// variables are bound by following edges from bound ones, with node
/// checks applied as each variable is bound. Rows are distinct, sorted
/// ascending, then cut to LIMIT.
pub fn execute_query(q: &KgqQuery, idx: &LiveIndexes) -> Result<QueryResult, KgqError> {
    let plan = Plan::build(q, idx)?;
    let mut s = Search { idx, plan: &plan, binding: BTreeMap::new(), out: Vec::new() };
    if plan.seeds.values().all(|x| !x.is_empty()) {
        s.run();
    }
    let rows: BTreeSet<Row> = s
        .out
        .iter()
        .map(|b| {
            q.returns
                .iter()
                .map(|p| match &p.path {
                    None => vec![b[p.var.as_str()].to_string()],
                    Some(path) => idx.values(&b[p.var.as_str()], path),
                })
                .collect()
        })
        .collect();
    let mut rows: Vec<Row> = rows.into_iter().collect();
    if let Some(l) = q.limit {
        rows.truncate(l);
    }
    Ok(QueryResult { columns: q.returns.iter().map(ToString::to_string).collect(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{ExtendedTriple, Object};
    use crate::live::parse_kgq;

    fn g(s: &str) -> EntityId {
        EntityId::graph(s)
    }

    fn idx() -> LiveIndexes {
        let f = |s: &str, p: &str, o: Object| ExtendedTriple::simple(g(s), p, o, "s", 0.9);
        LiveIndexes::from_triples([
            f("beyonce", "name", Object::literal("Beyoncé")),
            f("beyonce", "type", Object::literal("person")),
            f("beyonce", "spouse", Object::Entity(g("jayz"))),
            f("jayz", "name", Object::literal("Jay-Z")),
            f("jayz", "type", Object::literal("person")),
            f("jayz", "age", Object::literal("54")),
            f("a", "located_in", Object::Entity(g("b"))),
            f("b", "located_in", Object::Entity(g("c"))),
            f("c", "located_in", Object::Entity(g("d"))),
            f("d", "type", Object::literal("country")),
            f("d", "name", Object::literal("D")),
        ])
    }

    fn run(q: &str) -> Vec<Row> {
        execute_query(&parse_kgq(q).unwrap(), &idx()).unwrap().rows
    }

    #[test]
    fn spouse_and_filters() {
        assert_eq!(run(r#"MATCH (a)-[spouse]->(b) WHERE SEARCH(a, "beyonce") RETURN b.name"#), [[["Jay-Z"]]]);
        assert_eq!(run(r#"MATCH (b)<-[spouse]-(a) WHERE SEARCH(a, "beyonce") RETURN b"#), [[["akg:jayz"]]]);
        assert_eq!(run("MATCH (p:person) WHERE p.age >= 50 RETURN p"), [[["akg:jayz"]]]);
        assert_eq!(run("MATCH (p:person) WHERE p.age != 54 RETURN p"), [[["akg:beyonce"]]]);
        assert_eq!(run("MATCH (p:person) RETURN p LIMIT 1"), [[["akg:beyonce"]]]);
        assert!(run(r#"MATCH (a) WHERE SEARCH(a, "nobody") RETURN a"#).is_empty());
    }

    #[test]
    fn bounded_repetition() {
        assert!(run(r#"MATCH (x)-[located_in*2]->(c:country) WHERE ID(x, "akg:a") RETURN c"#).is_empty());
        assert_eq!(run(r#"MATCH (x)-[located_in*3]->(c:country) WHERE ID(x, "akg:a") RETURN c.name"#), [[["D"]]]);
        assert_eq!(run("MATCH (x)-[located_in*3]->(c:country) RETURN x").len(), 3);
    }
}
