use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::catalog::{RefreshPlan, ViewCatalog, ViewDefinition};
use super::importance::{compute_importance, importance_scores, ImportanceRecord, DEFAULT_DAMPING, DEFAULT_TOLERANCE};
use super::store::StoreKind;
use super::EngineError;
use crate::embed::{train, EmbeddingModel, TrainConfig, TrainingView, METADATA_PREDICATES};
use crate::kg::{EntityId, KgSnapshot, TYPE_PREDICATE};
use crate::nerd::{EntityView, ViewConfig};
use crate::text::tokenize;

pub const ENTITY_IMPORTANCE: &str = "entity_importance";
pub const ENTITY_FEATURES: &str = "entity_features";
pub const RANKED_ENTITY_INDEX: &str = "ranked_entity_index";
pub const ENTITY_NEIGHBORHOOD: &str = "entity_neighborhood";
pub const GRAPH_EMBEDDINGS: &str = "graph_embeddings";
pub const PEOPLE_EMBEDDINGS: &str = "people_embeddings";
pub const NERD_ENTITIES: &str = "nerd_entities";

const NAME_PREDICATES: &[&str] = &["name", "alias", "title"];
const PERSON_TYPE: &str = "person";

/// Features computed from an entity's own facts only.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityFeatures {
    pub types: Vec<String>,
    pub names: Vec<String>,
    pub fact_count: usize,
    pub sources: Vec<String>,
    /// (predicate path, object) for every graph-entity object.
    pub out_edges: Vec<(String, EntityId)>,
}

impl EntityFeatures {
    pub fn of(snapshot: &KgSnapshot, id: &EntityId) -> Option<Self> {
        let facts = snapshot.get_entity(id);
        if facts.is_empty() {
            return None;
        }
        let mut types = BTreeSet::new();
        let mut names = BTreeSet::new();
        let mut sources = BTreeSet::new();
        let mut out = BTreeSet::new();
        for t in facts {
            sources.extend(t.sources.iter().cloned());
            if t.predicate == TYPE_PREDICATE {
                if let Some(l) = t.object.as_literal() {
                    types.insert(l.to_string());
                }
                continue;
            }
            if !t.is_composite() && NAME_PREDICATES.contains(&t.predicate.as_str()) {
                if let Some(l) = t.object.as_literal() {
                    names.insert(l.to_string());
                }
            }
            if METADATA_PREDICATES.contains(&t.predicate.as_str()) {
                continue;
            }
            if let Some(o) = t.object.as_entity().filter(|o| o.is_graph()) {
                out.insert((t.predicate_path(), o.clone()));
            }
        }
        Some(Self {
            types: types.into_iter().collect(),
            names: names.into_iter().collect(),
            fact_count: facts.len(),
            sources: sources.into_iter().collect(),
            out_edges: out.into_iter().collect(),
        })
    }
}

/// Name tokens to entities, each posting list ordered by importance
/// (descending) then id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedEntityIndex {
    pub postings: BTreeMap<String, Vec<EntityId>>,
    pub tokens_of: BTreeMap<EntityId, BTreeSet<String>>,
}

impl RankedEntityIndex {
    pub fn lookup(&self, token: &str) -> &[EntityId] {
        self.postings.get(token).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Typed out-edges per entity and the undirected neighbor sets they induce.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub out: BTreeMap<EntityId, BTreeSet<(String, EntityId)>>,
    pub neighbors: BTreeMap<EntityId, BTreeSet<EntityId>>,
}

impl Neighborhood {
    fn linked(&self, a: &EntityId, b: &EntityId) -> bool {
        let has = |x: &EntityId, y: &EntityId| self.out.get(x).is_some_and(|s| s.iter().any(|(_, o)| o == y));
        has(a, b) || has(b, a)
    }

    fn set_out(&mut self, id: &EntityId, edges: BTreeSet<(String, EntityId)>) {
        let old = self.out.remove(id).unwrap_or_default();
        for (_, o) in &old {
            if !self.linked(id, o) {
                for (x, y) in [(id, o), (o, id)] {
                    if let Some(s) = self.neighbors.get_mut(x) {
                        s.remove(y);
                        if s.is_empty() {
                            self.neighbors.remove(x);
                        }
                    }
                }
            }
        }
        for (_, o) in &edges {
            self.neighbors.entry(id.clone()).or_default().insert(o.clone());
            self.neighbors.entry(o.clone()).or_default().insert(id.clone());
        }
        if !edges.is_empty() {
            self.out.insert(id.clone(), edges);
        }
    }

    pub fn training_view(&self) -> TrainingView {
        TrainingView::from_edges(self.out.iter().flat_map(|(s, es)| es.iter().map(move |(p, o)| (s, p.as_str(), o))))
    }
}

/// Materialized content of one view.
#[derive(Clone, Debug)]
pub enum ViewArtifact {
    Importance(BTreeMap<EntityId, ImportanceRecord>),
    Features(BTreeMap<EntityId, EntityFeatures>),
    RankedIndex(RankedEntityIndex),
    Neighborhood(Neighborhood),
    Embeddings(Option<EmbeddingModel>),
    Vectors(BTreeMap<EntityId, Vec<f32>>),
    Nerd(Box<EntityView>),
}

impl PartialEq for ViewArtifact {
    fn eq(&self, other: &Self) -> bool {
        use ViewArtifact::*;
        match (self, other) {
            (Importance(a), Importance(b)) => a == b,
            (Features(a), Features(b)) => a == b,
            (RankedIndex(a), RankedIndex(b)) => a == b,
            (Neighborhood(a), Neighborhood(b)) => a == b,
            (Embeddings(a), Embeddings(b)) => a == b,
            (Vectors(a), Vectors(b)) => a == b,
            (Nerd(a), Nerd(b)) => a == b,
            _ => false,
        }
    }
}

/// What a procedure sees: the snapshot, the changed entities and the
/// already materialized views.
pub struct ViewInput<'a> {
    pub view: &'a str,
    pub snapshot: &'a KgSnapshot,
    pub changed: &'a BTreeSet<EntityId>,
    pub materialized: &'a BTreeMap<String, ViewArtifact>,
}

impl ViewInput<'_> {
    fn dep(&self, name: &str) -> Result<&ViewArtifact, String> {
        self.materialized.get(name).ok_or_else(|| format!("dependency {name} is not materialized"))
    }

    fn importance(&self) -> Result<&BTreeMap<EntityId, ImportanceRecord>, String> {
        match self.dep(ENTITY_IMPORTANCE)? {
            ViewArtifact::Importance(m) => Ok(m),
            _ => Err(format!("{ENTITY_IMPORTANCE} has the wrong shape")),
        }
    }

    fn features(&self) -> Result<&BTreeMap<EntityId, EntityFeatures>, String> {
        match self.dep(ENTITY_FEATURES)? {
            ViewArtifact::Features(m) => Ok(m),
            _ => Err(format!("{ENTITY_FEATURES} has the wrong shape")),
        }
    }

    fn neighborhood(&self) -> Result<&Neighborhood, String> {
        match self.dep(ENTITY_NEIGHBORHOOD)? {
            ViewArtifact::Neighborhood(m) => Ok(m),
            _ => Err(format!("{ENTITY_NEIGHBORHOOD} has the wrong shape")),
        }
    }

    fn embeddings(&self) -> Result<Option<&EmbeddingModel>, String> {
        match self.dep(GRAPH_EMBEDDINGS)? {
            ViewArtifact::Embeddings(m) => Ok(m.as_ref()),
            _ => Err(format!("{GRAPH_EMBEDDINGS} has the wrong shape")),
        }
    }
}

pub type CreateFn = dyn Fn(&ViewInput<'_>) -> Result<ViewArtifact, String> + Send + Sync;
pub type UpdateFn = dyn Fn(&ViewInput<'_>, ViewArtifact) -> Result<ViewArtifact, String> + Send + Sync;

#[derive(Clone)]
pub enum Procedure {
    Create(Arc<CreateFn>),
    Update(Arc<UpdateFn>),
    /// Dropping only discards the artifact.
    Drop,
}

/// Procedures by registered name.
#[derive(Clone, Default)]
pub struct ProcedureRegistry {
    procs: BTreeMap<String, Procedure>,
}

impl ProcedureRegistry {
    pub fn register(&mut self, name: impl Into<String>, p: Procedure) {
        self.procs.insert(name.into(), p);
    }

    pub fn get(&self, name: &str) -> Option<&Procedure> {
        self.procs.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.procs.keys().map(String::as_str)
    }

    /// Registers `<view>.create`, `<view>.update` and `<view>.drop`.
    pub fn register_view<C, U>(&mut self, view: &str, create: C, update: U)
    where
        C: Fn(&ViewInput<'_>) -> Result<ViewArtifact, String> + Send + Sync + 'static,
        U: Fn(&ViewInput<'_>, ViewArtifact) -> Result<ViewArtifact, String> + Send + Sync + 'static,
    {
        self.register(format!("{view}.create"), Procedure::Create(Arc::new(create)));
        self.register(format!("{view}.update"), Procedure::Update(Arc::new(update)));
        self.register(format!("{view}.drop"), Procedure::Drop);
    }

    /// The built-in views of [`builtin_catalog`].
    pub fn builtin(cfg: BuiltinConfig) -> Self {
        let mut r = Self::default();
        let c = Arc::new(cfg);

        let k = c.clone();
        let importance = move |inp: &ViewInput<'_>| {
            let recs = compute_importance(inp.snapshot, k.damping, k.tolerance);
            Ok(ViewArtifact::Importance(recs.into_iter().map(|r| (r.entity.clone(), r)).collect()))
        };
        let imp2 = importance.clone();
        r.register_view(
            ENTITY_IMPORTANCE,
            importance,
            move |inp, prev| {
                if inp.changed.is_empty() {
                    Ok(prev)
                } else {
                    imp2(inp)
                }
            },
        );

        r.register_view(
            ENTITY_FEATURES,
            |inp| {
                Ok(ViewArtifact::Features(
                    inp.snapshot
                        .entities()
                        .filter_map(|e| EntityFeatures::of(inp.snapshot, e).map(|f| (e.clone(), f)))
                        .collect(),
                ))
            },
            |inp, prev| {
                let ViewArtifact::Features(mut m) = prev else {
                    return Err("previous artifact has the wrong shape".into());
                };
                for id in inp.changed {
                    match EntityFeatures::of(inp.snapshot, id) {
                        Some(f) => m.insert(id.clone(), f),
                        None => m.remove(id),
                    };
                }
                Ok(ViewArtifact::Features(m))
            },
        );

        r.register_view(
            RANKED_ENTITY_INDEX,
            |inp| update_ranked(inp, RankedEntityIndex::default(), true),
            |inp, prev| match prev {
                ViewArtifact::RankedIndex(idx) => update_ranked(inp, idx, false),
                _ => Err("previous artifact has the wrong shape".into()),
            },
        );

        r.register_view(
            ENTITY_NEIGHBORHOOD,
            |inp| update_neighborhood(inp, Neighborhood::default(), true),
            |inp, prev| match prev {
                ViewArtifact::Neighborhood(n) => update_neighborhood(inp, n, false),
                _ => Err("previous artifact has the wrong shape".into()),
            },
        );

        let k = c.clone();
        let embed = move |inp: &ViewInput<'_>| {
            let view = inp.neighborhood()?.training_view();
            if view.facts.is_empty() {
                return Ok(ViewArtifact::Embeddings(None));
            }
            let out = train(&view, &k.train).map_err(|e| e.to_string())?;
            Ok(ViewArtifact::Embeddings(Some(out.model)))
        };
        let embed2 = embed.clone();
        r.register_view(
            GRAPH_EMBEDDINGS,
            embed,
            move |inp, prev| {
                if inp.changed.is_empty() {
                    Ok(prev)
                } else {
                    embed2(inp)
                }
            },
        );

        let people = |inp: &ViewInput<'_>| {
            let features = inp.features()?;
            let Some(model) = inp.embeddings()? else {
                return Ok(ViewArtifact::Vectors(BTreeMap::new()));
            };
            Ok(ViewArtifact::Vectors(
                model
                    .entities
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| features.get(*e).is_some_and(|f| f.types.iter().any(|t| t == PERSON_TYPE)))
                    .map(|(i, e)| (e.clone(), model.entity(i).to_vec()))
                    .collect(),
            ))
        };
        r.register_view(
            PEOPLE_EMBEDDINGS,
            people,
            move |inp, prev| {
                if inp.changed.is_empty() {
                    Ok(prev)
                } else {
                    people(inp)
                }
            },
        );

        let k = c;
        let k2 = k.clone();
        r.register_view(
            NERD_ENTITIES,
            move |inp| {
                let imp = scores(inp.importance()?);
                Ok(ViewArtifact::Nerd(Box::new(EntityView::build_with(inp.snapshot, &imp, k.nerd.clone()))))
            },
            move |inp, prev| {
                let ViewArtifact::Nerd(v) = prev else {
                    return Err("previous artifact has the wrong shape".into());
                };
                if inp.changed.is_empty() {
                    return Ok(ViewArtifact::Nerd(v));
                }
                debug_assert_eq!(v.config(), &k2.nerd);
                let imp = scores(inp.importance()?);
                Ok(ViewArtifact::Nerd(Box::new(v.refreshed(inp.snapshot, &imp, inp.changed))))
            },
        );
        r
    }
}

fn scores(m: &BTreeMap<EntityId, ImportanceRecord>) -> BTreeMap<EntityId, f64> {
    importance_scores(&m.values().cloned().collect::<Vec<_>>())
}

fn update_ranked(inp: &ViewInput<'_>, mut idx: RankedEntityIndex, full: bool) -> Result<ViewArtifact, String> {
    let features = inp.features()?;
    let importance = inp.importance()?;
    let touched: Vec<&EntityId> = if full { features.keys().collect() } else { inp.changed.iter().collect() };
    if !full && touched.is_empty() {
        return Ok(ViewArtifact::RankedIndex(idx));
    }
    for id in touched {
        for tok in idx.tokens_of.remove(id).unwrap_or_default() {
            if let Some(p) = idx.postings.get_mut(&tok) {
                p.retain(|e| e != id);
                if p.is_empty() {
                    idx.postings.remove(&tok);
                }
            }
        }
        let Some(f) = features.get(id) else { continue };
        let toks: BTreeSet<String> = f.names.iter().flat_map(|n| tokenize(n)).map(|t| t.text).collect();
        for t in &toks {
            idx.postings.entry(t.clone()).or_default().push(id.clone());
        }
        if !toks.is_empty() {
            idx.tokens_of.insert(id.clone(), toks);
        }
    }
    let imp = |e: &EntityId| importance.get(e).map_or(0.0, |r| r.aggregate);
    for p in idx.postings.values_mut() {
        p.sort_by(|a, b| imp(b).total_cmp(&imp(a)).then_with(|| a.cmp(b)));
    }
    Ok(ViewArtifact::RankedIndex(idx))
}

fn update_neighborhood(inp: &ViewInput<'_>, mut n: Neighborhood, full: bool) -> Result<ViewArtifact, String> {
    let features = inp.features()?;
    let touched: Vec<&EntityId> = if full { features.keys().collect() } else { inp.changed.iter().collect() };
    for id in touched {
        let edges = features.get(id).map(|f| f.out_edges.iter().cloned().collect()).unwrap_or_default();
        n.set_out(id, edges);
    }
    Ok(ViewArtifact::Neighborhood(n))
}

/// Parameters of the built-in procedures.
#[derive(Clone, Debug, PartialEq)]
pub struct BuiltinConfig {
    pub damping: f64,
    pub tolerance: f64,
    pub train: TrainConfig,
    pub nerd: ViewConfig,
}

impl Default for BuiltinConfig {
    fn default() -> Self {
        Self {
            damping: DEFAULT_DAMPING,
            tolerance: DEFAULT_TOLERANCE,
            train: TrainConfig { epochs: 50, ..Default::default() },
            nerd: ViewConfig::default(),
        }
    }
}

/// entity_features feeds ranked_entity_index (with entity_importance) and
/// entity_neighborhood; the neighborhood feeds graph_embeddings, which is
/// filtered down to people_embeddings.
pub fn shared_features_catalog() -> ViewCatalog {
    let mut c = ViewCatalog::default();
    let defs = [
        ViewDefinition::new(ENTITY_IMPORTANCE, &[], StoreKind::Analytics),
        ViewDefinition::new(ENTITY_FEATURES, &[], StoreKind::Analytics),
        ViewDefinition::new(RANKED_ENTITY_INDEX, &[ENTITY_FEATURES, ENTITY_IMPORTANCE], StoreKind::InvertedIndex),
        ViewDefinition::new(ENTITY_NEIGHBORHOOD, &[ENTITY_FEATURES], StoreKind::Analytics),
        ViewDefinition::new(GRAPH_EMBEDDINGS, &[ENTITY_NEIGHBORHOOD], StoreKind::Vector),
        ViewDefinition::new(PEOPLE_EMBEDDINGS, &[GRAPH_EMBEDDINGS, ENTITY_FEATURES], StoreKind::Vector),
    ];
    for d in defs {
        c.register_view(d).expect("built-in catalog is acyclic");
    }
    c
}

/// [`shared_features_catalog`] plus the NERD entity view.
pub fn builtin_catalog() -> ViewCatalog {
    let mut c = shared_features_catalog();
    c.register_view(ViewDefinition::new(NERD_ENTITIES, &[ENTITY_IMPORTANCE], StoreKind::Kv))
        .expect("built-in catalog is acyclic");
    c
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewRun {
    pub view: String,
    pub procedure: String,
    pub target_store: StoreKind,
    pub changed: usize,
    #[serde(with = "millis")]
    pub elapsed: Duration,
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1000.0)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?.max(0.0) / 1000.0))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RefreshReport {
    pub runs: Vec<ViewRun>,
}

impl RefreshReport {
    /// Number of procedure executions for `view`.
    pub fn executions(&self, view: &str) -> usize {
        self.runs.iter().filter(|r| r.view == view).count()
    }

    pub fn total(&self) -> Duration {
        self.runs.iter().map(|r| r.elapsed).sum()
    }
}

/// Materialized views, keyed by name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MaterializedViews {
    pub artifacts: BTreeMap<String, ViewArtifact>,
}

impl MaterializedViews {
    pub fn get(&self, name: &str) -> Option<&ViewArtifact> {
        self.artifacts.get(name)
    }

    pub fn importance(&self) -> Option<&BTreeMap<EntityId, ImportanceRecord>> {
        match self.get(ENTITY_IMPORTANCE)? {
            ViewArtifact::Importance(m) => Some(m),
            _ => None,
        }
    }

    pub fn features(&self) -> Option<&BTreeMap<EntityId, EntityFeatures>> {
        match self.get(ENTITY_FEATURES)? {
            ViewArtifact::Features(m) => Some(m),
            _ => None,
        }
    }

    pub fn ranked_index(&self) -> Option<&RankedEntityIndex> {
        match self.get(RANKED_ENTITY_INDEX)? {
            ViewArtifact::RankedIndex(m) => Some(m),
            _ => None,
        }
    }

    pub fn neighborhood(&self) -> Option<&Neighborhood> {
        match self.get(ENTITY_NEIGHBORHOOD)? {
            ViewArtifact::Neighborhood(m) => Some(m),
            _ => None,
        }
    }

    pub fn embeddings(&self) -> Option<&EmbeddingModel> {
        match self.get(GRAPH_EMBEDDINGS)? {
            ViewArtifact::Embeddings(m) => m.as_ref(),
            _ => None,
        }
    }

    pub fn people_vectors(&self) -> Option<&BTreeMap<EntityId, Vec<f32>>> {
        match self.get(PEOPLE_EMBEDDINGS)? {
            ViewArtifact::Vectors(m) => Some(m),
            _ => None,
        }
    }

    pub fn nerd_view(&self) -> Option<&EntityView> {
        match self.get(NERD_ENTITIES)? {
            ViewArtifact::Nerd(v) => Some(v),
            _ => None,
        }
    }

    /// Runs `<view>.drop` and discards the artifact.
    pub fn drop_view(
        &mut self,
        catalog: &ViewCatalog,
        registry: &ProcedureRegistry,
        view: &str,
    ) -> Result<(), EngineError> {
        let def = catalog.get(view).ok_or_else(|| EngineError::UnknownView(view.to_string()))?;
        match registry.get(&def.drop) {
            Some(Procedure::Drop) => {
                self.artifacts.remove(view);
                Ok(())
            }
            _ => Err(EngineError::UnknownProcedure(def.drop.clone())),
        }
    }
}

/// Executes `plan` in order: views without an artifact run their create
/// procedure over the whole snapshot, the others run update with the
/// plan's changed entities.
pub fn refresh_views(
    plan: &RefreshPlan,
    catalog: &ViewCatalog,
    registry: &ProcedureRegistry,
    snapshot: &KgSnapshot,
    views: &mut MaterializedViews,
) -> Result<RefreshReport, EngineError> {
    let mut report = RefreshReport::default();
    for name in &plan.order {
        let def = catalog.get(name).ok_or_else(|| EngineError::UnknownView(name.clone()))?;
        let prev = views.artifacts.remove(name);
        let input = ViewInput { view: name, snapshot, changed: &plan.changed, materialized: &views.artifacts };
        let start = Instant::now();
        let (procedure, result) = match prev {
            None => match registry.get(&def.create) {
                Some(Procedure::Create(f)) => (&def.create, f(&input)),
                _ => return Err(EngineError::UnknownProcedure(def.create.clone())),
            },
            Some(prev) => match registry.get(&def.update) {
                Some(Procedure::Update(f)) => (&def.update, f(&input, prev)),
                _ => return Err(EngineError::UnknownProcedure(def.update.clone())),
            },
        };
        let artifact = result.map_err(|reason| EngineError::ViewProcedure { view: name.clone(), reason })?;
        report.runs.push(ViewRun {
            view: name.clone(),
            procedure: procedure.clone(),
            target_store: def.target_store,
            changed: plan.changed.len(),
            elapsed: start.elapsed(),
        });
        log::debug!("view {name} refreshed in {:?}", start.elapsed());
        views.artifacts.insert(name.clone(), artifact);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::plan_refresh;
    use crate::kg::{ExtendedTriple, Object};

    fn g(s: &str) -> EntityId {
        EntityId::graph(s)
    }

    fn fact(s: &str, p: &str, o: Object) -> ExtendedTriple {
        ExtendedTriple::simple(g(s), p, o, "src1", 0.9)
    }

    fn kg() -> KgSnapshot {
        KgSnapshot::from_triples([
            fact("a", "name", Object::literal("Alice Smith")),
            fact("a", "type", Object::literal("person")),
            fact("a", "knows", Object::Entity(g("b"))),
            fact("b", "name", Object::literal("Bob Smith")),
            fact("b", "type", Object::literal("person")),
            fact("b", "works_for", Object::Entity(g("c"))),
            fact("c", "name", Object::literal("Acme")),
            fact("c", "type", Object::literal("organization")),
        ])
    }

    fn quick() -> ProcedureRegistry {
        ProcedureRegistry::builtin(BuiltinConfig {
            train: TrainConfig { epochs: 3, dim: 4, ..Default::default() },
            ..Default::default()
        })
    }

    fn all(cat: &ViewCatalog) -> Vec<&str> {
        cat.views().map(|v| v.name.as_str()).collect()
    }

    #[test]
    fn full_refresh_materializes_everything() {
        let cat = builtin_catalog();
        let plan = plan_refresh(&cat, &BTreeSet::new(), &all(&cat)).unwrap();
        let mut views = MaterializedViews::default();
        let rep = refresh_views(&plan, &cat, &quick(), &kg(), &mut views).unwrap();
        assert_eq!(rep.runs.len(), 7);
        assert!(rep.runs.iter().all(|r| r.procedure.ends_with(".create")));
        let idx = views.ranked_index().unwrap();
        assert_eq!(idx.lookup("smith").len(), 2);
        assert_eq!(idx.lookup("acme"), &[g("c")]);
        assert_eq!(views.neighborhood().unwrap().neighbors[&g("b")], BTreeSet::from([g("a"), g("c")]));
        let people: Vec<&EntityId> = views.people_vectors().unwrap().keys().collect();
        assert_eq!(people, [&g("a"), &g("b")]);
        assert_eq!(views.nerd_view().unwrap().len(), 3);
    }

    #[test]
    fn empty_change_is_a_no_op() {
        let cat = builtin_catalog();
        let plan = plan_refresh(&cat, &BTreeSet::new(), &all(&cat)).unwrap();
        let mut views = MaterializedViews::default();
        refresh_views(&plan, &cat, &quick(), &kg(), &mut views).unwrap();
        let before = views.clone();
        let rep = refresh_views(&plan, &cat, &quick(), &kg(), &mut views).unwrap();
        assert!(rep.runs.iter().all(|r| r.procedure.ends_with(".update")));
        assert_eq!(views, before);
    }

    #[test]
    fn missing_procedure_and_drop() {
        let cat = shared_features_catalog();
        let plan = plan_refresh(&cat, &BTreeSet::new(), &[ENTITY_FEATURES]).unwrap();
        let err = refresh_views(&plan, &cat, &ProcedureRegistry::default(), &kg(), &mut MaterializedViews::default());
        assert!(matches!(err, Err(EngineError::UnknownProcedure(p)) if p == "entity_features.create"));
        let mut views = MaterializedViews::default();
        refresh_views(&plan, &cat, &quick(), &kg(), &mut views).unwrap();
        views.drop_view(&cat, &quick(), ENTITY_FEATURES).unwrap();
        assert!(views.features().is_none());
    }

    #[test]
    fn failing_procedure_names_the_view() {
        let mut cat = ViewCatalog::default();
        cat.register_view(ViewDefinition::new("broken", &[], StoreKind::Kv)).unwrap();
        let mut reg = ProcedureRegistry::default();
        reg.register_view("broken", |_| Err("boom".into()), |_, p| Ok(p));
        let plan = plan_refresh(&cat, &BTreeSet::new(), &["broken"]).unwrap();
        let err = refresh_views(&plan, &cat, &reg, &kg(), &mut MaterializedViews::default()).unwrap_err();
        assert!(matches!(err, EngineError::ViewProcedure { view, reason } if view == "broken" && reason == "boom"));
    }
}
