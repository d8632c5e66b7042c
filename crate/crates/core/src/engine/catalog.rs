use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::store::StoreKind;
use super::EngineError;
use crate::kg::EntityId;
use crate::persist::write_atomic;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewDefinition {
    pub name: String,
    #[serde(default)]
    pub deps: Vec<String>,
    pub target_store: StoreKind,
    /// Registered procedure names.
    pub create: String,
    pub drop: String,
    pub update: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freshness_sla: Option<u64>,
}

impl ViewDefinition {
    /// Definition whose procedures are `<name>.create`, `<name>.drop`, `<name>.update`.
    pub fn new(name: &str, deps: &[&str], target_store: StoreKind) -> Self {
        Self {
            name: name.to_string(),
            deps: deps.iter().map(|d| d.to_string()).collect(),
            target_store,
            create: format!("{name}.create"),
            drop: format!("{name}.drop"),
            update: format!("{name}.update"),
            freshness_sla: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ViewCatalog {
    views: BTreeMap<String, ViewDefinition>,
}

impl ViewCatalog {
    pub fn get(&self, name: &str) -> Option<&ViewDefinition> {
        self.views.get(name)
    }

    pub fn views(&self) -> impl Iterator<Item = &ViewDefinition> {
        self.views.values()
    }

    /// Adds or replaces a definition. Dependencies must already be
    /// registered and the dependency graph must stay acyclic.
    pub fn register_view(&mut self, def: ViewDefinition) -> Result<(), EngineError> {
        if def.deps.contains(&def.name) {
            return Err(EngineError::CycleDetected(vec![def.name.clone(), def.name.clone()]));
        }
        if let Some(d) = def.deps.iter().find(|d| !self.views.contains_key(*d)) {
            return Err(EngineError::UnknownDependency { view: def.name.clone(), dependency: d.clone() });
        }
        let previous = self.views.insert(def.name.clone(), def.clone());
        if let Some(cycle) = self.find_cycle() {
            match previous {
                Some(p) => self.views.insert(p.name.clone(), p),
                None => self.views.remove(&def.name),
            };
            return Err(EngineError::CycleDetected(cycle));
        }
        Ok(())
    }

    fn find_cycle(&self) -> Option<Vec<String>> {
        fn visit<'a>(
            cat: &'a ViewCatalog,
            v: &'a str,
            stack: &mut Vec<&'a str>,
            done: &mut BTreeSet<&'a str>,
        ) -> Option<Vec<String>> {
            if let Some(i) = stack.iter().position(|s| *s == v) {
                let mut c: Vec<String> = stack[i..].iter().map(|s| s.to_string()).collect();
                c.push(v.to_string());
                return Some(c);
            }
            if done.contains(v) {
                return None;
            }
            stack.push(v);
            for d in cat.views.get(v).map(|d| d.deps.as_slice()).unwrap_or(&[]) {
                if let Some(c) = visit(cat, d, stack, done) {
                    return Some(c);
                }
            }
            stack.pop();
            done.insert(v);
            None
        }
        let mut done = BTreeSet::new();
        self.views.keys().find_map(|v| visit(self, v, &mut Vec::new(), &mut done))
    }

    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let defs: Vec<ViewDefinition> = serde_json::from_slice(&std::fs::read(path)?)
            .map_err(|e| EngineError::Catalog(format!("{}: {e}", path.display())))?;
        let mut cat = Self::default();
        let mut pending = defs;
        while !pending.is_empty() {
            let before = pending.len();
            let mut rest = Vec::new();
            for d in pending {
                if d.deps.iter().all(|x| cat.views.contains_key(x) && *x != d.name) {
                    cat.register_view(d)?;
                } else {
                    rest.push(d);
                }
            }
            if rest.len() == before {
                return cat.register_view(rest.swap_remove(0)).map(|_| cat);
            }
            pending = rest;
        }
        Ok(cat)
    }

    pub fn save(&self, path: &Path) -> Result<(), EngineError> {
        let defs: Vec<&ViewDefinition> = self.views.values().collect();
        write_atomic(path, &serde_json::to_vec_pretty(&defs).expect("definitions serialize"))?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefreshPlan {
    /// Views in execution order; every dependency precedes its dependents.
    pub order: Vec<String>,
    pub changed: BTreeSet<EntityId>,
}

/// Topological order of `targets` and their transitive dependencies, each
/// view once. Order is deterministic (dependencies visited by name).
pub fn plan_refresh(
    catalog: &ViewCatalog,
    changed: &BTreeSet<EntityId>,
    targets: &[&str],
) -> Result<RefreshPlan, EngineError> {
    fn visit(cat: &ViewCatalog, v: &str, seen: &mut BTreeSet<String>, order: &mut Vec<String>) {
        if !seen.insert(v.to_string()) {
            return;
        }
        let mut deps: Vec<&String> = cat.views[v].deps.iter().collect();
        deps.sort();
        for d in deps {
            visit(cat, d, seen, order);
        }
        order.push(v.to_string());
    }
    let mut targets: Vec<&str> = targets.to_vec();
    targets.sort();
    let mut seen = BTreeSet::new();
    let mut order = Vec::new();
    for t in targets {
        if catalog.get(t).is_none() {
            return Err(EngineError::UnknownView(t.to_string()));
        }
        visit(catalog, t, &mut seen, &mut order);
    }
    Ok(RefreshPlan { order, changed: changed.clone() })
}
