use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use saga_core::embed::{build_training_view, train, TrainConfig};
use saga_core::engine::{
    agent_replay, compute_importance, importance_scores, plan_refresh, refresh_views, write_progress, BuiltinConfig,
    MaterializedViews, OperationLog, ProcedureRegistry, StoreAgent, StoreKind, StoreState, DEFAULT_DAMPING,
    DEFAULT_TOLERANCE,
};
use saga_core::fuse::{
    process_source_payloads, update_source_trust, FuseConfig, FusionContext, FusionReport, SourceSettings,
    SourceTrustTable,
};
use saga_core::ingest::{
    align_ontology, compute_delta, import_source, read_delta_dir, transform_entities, write_delta_dir, SourceConfig,
    SourceEntity,
};
use saga_core::kg::{read_triples_jsonl, write_triples_jsonl};
use saga_core::link::MatchContext;
use saga_core::live::{
    apply_curation, build_live_indexes, curate_snapshot, read_curation_stream, read_stream_records, LiveError,
    LiveIndexes, LiveService, LiveState, StreamLinker, StreamRecord,
};
use saga_core::nerd::{EntityView, NerdResolver};
use saga_core::persist::write_atomic;
use saga_core::{EntityId, ExtendedTriple, FactKey, KgSnapshot};

use crate::inspect::{inspect, ProvenanceReport};
use crate::lock::DataDirLock;
use crate::{CliError, PipelineConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Construct,
    Views,
    Embed,
    LiveBuild,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Ingest, Stage::Construct, Stage::Views, Stage::Embed, Stage::LiveBuild];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Construct => "construct",
            Stage::Views => "views",
            Stage::Embed => "embed",
            Stage::LiveBuild => "live-build",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| format!("unknown stage {s}"))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    /// Stages treat this as the LSN they last consumed.
    pub since_lsn: Option<u64>,
    /// Overrides the fusion and embedding seeds.
    pub seed: Option<u64>,
    /// Report path; `<data_dir>/run-report.json` when unset.
    pub report: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub elapsed_ms: u64,
    pub skipped: bool,
    pub counts: BTreeMap<String, u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub stages: Vec<StageReport>,
    pub log_head: u64,
    pub fact_changes: u64,
    #[serde(default)]
    pub fusion: Vec<FusionReport>,
}

impl RunReport {
    pub fn stage(&self, name: &str) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == name)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct SourceState {
    tn: u64,
    volatile_digest: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct KgMeta {
    lsn: u64,
    curations: usize,
    digest: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct StageMeta {
    lsn: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct EmbedMeta {
    lsn: u64,
    config: TrainConfig,
    facts: usize,
    final_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LiveMeta {
    pub freshness_lsn: u64,
    pub inputs: String,
    pub entities: usize,
    pub pending: Vec<(EntityId, String)>,
}

/// File locations under the data directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    fn p(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
    fn source_dir(&self, id: &str) -> PathBuf {
        self.root.join("sources").join(id)
    }
    pub fn deltas(&self) -> PathBuf {
        self.p("deltas")
    }
    pub fn pending(&self) -> PathBuf {
        self.p("pending.json")
    }
    pub fn snapshot(&self) -> PathBuf {
        self.p("kg/snapshot.jsonl")
    }
    fn kg_meta(&self) -> PathBuf {
        self.p("kg/meta.json")
    }
    pub fn trust(&self) -> PathBuf {
        self.p("kg/trust.json")
    }
    pub fn log_dir(&self) -> PathBuf {
        self.p("log")
    }
    pub fn log(&self) -> PathBuf {
        self.p("log/ops.log")
    }
    pub fn stores(&self) -> PathBuf {
        self.p("stores")
    }
    fn views_meta(&self) -> PathBuf {
        self.p("views/meta.json")
    }
    pub fn views_report(&self) -> PathBuf {
        self.p("views/report.json")
    }
    pub fn importance(&self) -> PathBuf {
        self.p("views/importance.json")
    }
    pub fn model(&self) -> PathBuf {
        self.p("embed/model.kge")
    }
    fn embed_meta(&self) -> PathBuf {
        self.p("embed/meta.json")
    }
    pub fn live_triples(&self) -> PathBuf {
        self.p("live/triples.jsonl")
    }
    fn live_blocked(&self) -> PathBuf {
        self.p("live/blocked.json")
    }
    pub fn live_meta(&self) -> PathBuf {
        self.p("live/meta.json")
    }
    pub fn curation(&self) -> PathBuf {
        self.p("curation.jsonl")
    }
    pub fn report(&self) -> PathBuf {
        self.p("run-report.json")
    }
}

fn read_json_or_default<T: DeserializeOwned + Default>(path: &Path) -> Result<T, String> {
    if !path.exists() {
        return Ok(T::default());
    }
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_slice(&bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), String> {
    let bytes = serde_json::to_vec_pretty(v).map_err(|e| e.to_string())?;
    write_atomic(path, &bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn triples_bytes<'a>(ts: impl IntoIterator<Item = &'a ExtendedTriple>) -> Vec<u8> {
    let mut buf = Vec::new();
    write_triples_jsonl(&mut buf, ts).expect("writing to a Vec cannot fail");
    buf
}

fn sha_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

pub fn load_snapshot(path: &Path) -> Result<KgSnapshot, String> {
    if !path.exists() {
        return Ok(KgSnapshot::empty());
    }
    let f = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    KgSnapshot::read_jsonl(BufReader::new(f)).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_source_entities(path: &Path) -> Result<Vec<SourceEntity>, String> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| format!("{}: {e}", path.display())))
        .collect()
}

fn source_entities_bytes(es: &[SourceEntity]) -> Vec<u8> {
    let mut buf = Vec::new();
    for e in es {
        serde_json::to_writer(&mut buf, e).expect("entities serialize");
        buf.push(b'\n');
    }
    buf
}

fn nerd_importance(snap: &KgSnapshot) -> BTreeMap<EntityId, f64> {
    importance_scores(&compute_importance(snap, DEFAULT_DAMPING, DEFAULT_TOLERANCE))
}

/// Entities whose fact lists differ between two snapshots.
fn changed_entities(before: &KgSnapshot, after: &KgSnapshot) -> Vec<EntityId> {
    let ids: BTreeSet<&EntityId> = before.entities().chain(after.entities()).collect();
    ids.into_iter().filter(|id| before.get_entity(id) != after.get_entity(id)).cloned().collect()
}

const STORES: [(&str, StoreKind); 4] = [
    ("analytics", StoreKind::Analytics),
    ("inverted_index", StoreKind::InvertedIndex),
    ("kv", StoreKind::Kv),
    ("vector", StoreKind::Vector),
];

/// One pipeline over one data directory.
#[derive(Debug)]
pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub opts: RunOptions,
    pub layout: Layout,
}

type Counts = BTreeMap<String, u64>;

struct Outcome {
    skipped: bool,
    counts: Counts,
}

impl Outcome {
    fn ran(counts: Counts) -> Self {
        Self { skipped: false, counts }
    }
    fn skipped(counts: Counts) -> Self {
        Self { skipped: true, counts }
    }
}

fn counts<const N: usize>(kv: [(&str, u64); N]) -> Counts {
    kv.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, opts: RunOptions) -> Self {
        let layout = Layout { root: cfg.data_dir() };
        Self { cfg, opts, layout }
    }

    pub fn load(config: &Path, opts: RunOptions) -> Result<Self, CliError> {
        Ok(Self::new(PipelineConfig::load(config)?, opts))
    }

    fn seed(&self) -> u64 {
        self.opts.seed.unwrap_or(self.cfg.seed)
    }

    fn open_log(&self) -> Result<OperationLog, String> {
        std::fs::create_dir_all(self.layout.log_dir().join("payloads")).map_err(|e| e.to_string())?;
        OperationLog::open(&self.layout.log(), self.layout.log_dir()).map_err(|e| e.to_string())
    }

    /// Runs `stages` in order under the data-directory lock and writes the
    /// run report. The first failing stage aborts the run.
    pub fn run(&self, stages: &[Stage]) -> Result<RunReport, CliError> {
        let _lock = DataDirLock::acquire(&self.layout.root)?;
        let mut report = RunReport::default();
        for &stage in stages {
            let start = Instant::now();
            log::info!("stage {stage}");
            let out = match stage {
                Stage::Ingest => self.ingest(),
                Stage::Construct => self.construct(&mut report),
                Stage::Views => self.views(),
                Stage::Embed => self.embed(),
                Stage::LiveBuild => self.live_build(),
            }
            .map_err(|m| CliError::stage(stage.name(), m))?;
            report.stages.push(StageReport {
                stage: stage.name().to_string(),
                elapsed_ms: start.elapsed().as_millis() as u64,
                skipped: out.skipped,
                counts: out.counts,
            });
        }
        report.log_head = self.open_log().map_err(|m| CliError::stage("report", m))?.head();
        let path = self.opts.report.clone().unwrap_or_else(|| self.layout.report());
        write_json(&path, &report).map_err(|m| CliError::stage("report", m))?;
        Ok(report)
    }

    fn ingest(&self) -> Result<Outcome, String> {
        let mut c = Counts::new();
        let mut pending: Vec<String> = read_json_or_default(&self.layout.pending())?;
        for (src, dir) in self.cfg.source_configs().map_err(|e| e.to_string())? {
            let id = &src.source_id;
            let rows = import_source(id, &src.format, &src.artifacts, &src.multi_value_separator, &dir)
                .map_err(|e| format!("{id}: {e}"))?;
            let ents = transform_entities(&rows, &src.transform_spec()).map_err(|e| format!("{id}: {e}"))?;
            let aligned = align_ontology(&ents, &src.pgf()).map_err(|e| format!("{id}: {e}"))?;
            let sdir = self.layout.source_dir(id);
            let state: SourceState = read_json_or_default(&sdir.join("state.json"))?;
            let prev = read_source_entities(&sdir.join("entities.jsonl"))?;
            let tn = state.tn + 1;
            let delta = compute_delta(&prev, &aligned, &src.volatile_predicates, &src.export_settings(), state.tn, tn)
                .map_err(|e| format!("{id}: {e}"))?;
            let vdigest = sha_hex(&[&triples_bytes(&delta.volatile_dump)]);
            *c.entry("entities".into()).or_default() += aligned.len() as u64;
            if delta.is_stable() && vdigest == state.volatile_digest {
                *c.entry("sources_unchanged".into()).or_default() += 1;
                continue;
            }
            *c.entry("added".into()).or_default() += delta.added.len() as u64;
            *c.entry("deleted".into()).or_default() += delta.deleted.len() as u64;
            *c.entry("updated".into()).or_default() += delta.updated.len() as u64;
            *c.entry("volatile_facts".into()).or_default() += delta.volatile_dump.len() as u64;
            *c.entry("deltas_written".into()).or_default() += 1;
            let written = write_delta_dir(&self.layout.deltas(), &delta).map_err(|e| format!("{id}: {e}"))?;
            let rel = written.strip_prefix(&self.layout.root).unwrap_or(&written).to_string_lossy().into_owned();
            if !pending.contains(&rel) {
                pending.push(rel);
            }
            write_json(&self.layout.pending(), &pending)?;
            write_atomic(&sdir.join("entities.jsonl"), &source_entities_bytes(&aligned)).map_err(|e| e.to_string())?;
            write_json(&sdir.join("state.json"), &SourceState { tn, volatile_digest: vdigest })?;
        }
        let skipped = !c.contains_key("deltas_written");
        c.insert("pending".into(), pending.len() as u64);
        Ok(Outcome { skipped, counts: c })
    }

    fn source_settings(&self) -> Result<BTreeMap<String, SourceConfig>, String> {
        Ok(self
            .cfg
            .source_configs()
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|(s, _)| (s.source_id.clone(), s))
            .collect())
    }

    fn construct(&self, report: &mut RunReport) -> Result<Outcome, String> {
        let pending: Vec<String> = read_json_or_default(&self.layout.pending())?;
        let curations = read_curation_stream(&self.layout.curation()).map_err(|e| e.to_string())?;
        let meta: KgMeta = read_json_or_default(&self.layout.kg_meta())?;
        if pending.is_empty() && curations.len() == meta.curations {
            return Ok(Outcome::skipped(counts([("fact_changes", 0)])));
        }
        let snap = load_snapshot(&self.layout.snapshot())?;
        let ontology = self.cfg.ontology().map_err(|e| e.to_string())?;
        let mut fuse_cfg = FuseConfig::new(ontology.clone());
        fuse_cfg.link = self.cfg.link_configs().map_err(|e| e.to_string())?;
        if let Some(t) = self.cfg.thresholds.theta_rel {
            fuse_cfg.theta_rel = t;
        }
        fuse_cfg.seed = self.seed();
        let weights = self.cfg.nerd_weights().map_err(|e| e.to_string())?;
        let sources = self.source_settings()?;
        let matching = MatchContext::default();

        let mut next = snap.clone();
        let mut fact_changes = 0u64;
        for rel in &pending {
            let delta = read_delta_dir(&self.layout.root.join(rel)).map_err(|e| format!("{rel}: {e}"))?;
            let src = sources
                .get(&delta.source_id)
                .ok_or_else(|| format!("{rel}: source {} is no longer configured", delta.source_id))?;
            let view = EntityView::build(&next, &nerd_importance(&next));
            let resolver = NerdResolver { view: &view, weights: &weights, theta_reject: weights.theta_reject };
            let ctx = FusionContext { cfg: &fuse_cfg, matching: &matching, resolver: &resolver };
            let settings = SourceSettings { export: src.export_settings(), volatile: src.volatile_predicates.clone() };
            let out = process_source_payloads(&next, &delta, &settings, &ctx).map_err(|e| format!("{rel}: {e}"))?;
            fact_changes += out.report.fact_changes() as u64;
            report.fusion.push(out.report);
            next = out.snapshot;
        }
        let (next, missed) = curate_snapshot(&next, &curations);
        let changed = changed_entities(&snap, &next);

        let mut log = self.open_log()?;
        if !changed.is_empty() {
            let lsn = log.head() + 1;
            let payload_ref = format!("payloads/{lsn}.jsonl");
            let facts = changed.iter().flat_map(|id| next.get_entity(id));
            write_atomic(&self.layout.log_dir().join(&payload_ref), &triples_bytes(facts))
                .map_err(|e| e.to_string())?;
            log.append_op(&payload_ref, changed.clone()).map_err(|e| e.to_string())?;
        }
        write_atomic(&self.layout.snapshot(), &triples_bytes(next.triples())).map_err(|e| e.to_string())?;
        let trust = update_source_trust(&next, &ontology.functional_predicates(), &self.cfg.trust);
        write_json(&self.layout.trust(), &trust)?;
        write_json(
            &self.layout.kg_meta(),
            &KgMeta { lsn: log.head(), curations: curations.len(), digest: next.digest() },
        )?;
        write_json(&self.layout.pending(), &Vec::<String>::new())?;
        report.fact_changes += fact_changes;
        Ok(Outcome::ran(counts([
            ("deltas", pending.len() as u64),
            ("fact_changes", fact_changes),
            ("changed_entities", changed.len() as u64),
            ("curations_missed", missed as u64),
            ("entities", next.entity_count() as u64),
            ("facts", next.len() as u64),
            ("lsn", log.head()),
        ])))
    }

    fn replay_agents(&self, log: &OperationLog) -> Result<Vec<StoreAgent>, String> {
        std::fs::create_dir_all(self.layout.stores()).map_err(|e| e.to_string())?;
        let mut agents = Vec::new();
        for (id, kind) in STORES {
            let mut a = StoreAgent::open(id, kind, &self.layout.stores()).map_err(|e| e.to_string())?;
            agent_replay(&mut a, log, usize::MAX).map_err(|e| e.to_string())?;
            agents.push(a);
        }
        write_progress(&self.layout.stores().join("progress.json"), &agents).map_err(|e| e.to_string())?;
        Ok(agents)
    }

    fn recorded_lsn(&self, meta_lsn: u64) -> u64 {
        self.opts.since_lsn.unwrap_or(meta_lsn)
    }

    fn views(&self) -> Result<Outcome, String> {
        let log = self.open_log()?;
        let agents = self.replay_agents(&log)?;
        let head = log.head();
        let meta: StageMeta = read_json_or_default(&self.layout.views_meta())?;
        let since = self.recorded_lsn(meta.lsn);
        let mut c = counts([("log_head", head), ("stores", agents.len() as u64)]);
        if since >= head && self.layout.views_report().exists() {
            return Ok(Outcome::skipped(c));
        }
        let changed: BTreeSet<EntityId> =
            log.entries_after(since, usize::MAX).iter().flat_map(|e| e.changed_entities.iter().cloned()).collect();
        let snap = load_snapshot(&self.layout.snapshot())?;
        let catalog = self.cfg.catalog().map_err(|e| e.to_string())?;
        let targets: Vec<String> = if self.cfg.view_targets.is_empty() {
            let deps: BTreeSet<&str> = catalog.views().flat_map(|v| v.deps.iter().map(String::as_str)).collect();
            catalog.views().filter(|v| !deps.contains(v.name.as_str())).map(|v| v.name.clone()).collect()
        } else {
            self.cfg.view_targets.clone()
        };
        let target_refs: Vec<&str> = targets.iter().map(String::as_str).collect();
        let plan = plan_refresh(&catalog, &changed, &target_refs).map_err(|e| e.to_string())?;
        let mut builtin = BuiltinConfig::default();
        if let Some(t) = &self.cfg.embedding {
            builtin.train = t.clone();
        }
        if let Some(s) = self.opts.seed {
            builtin.train.seed = s;
        }
        let registry = ProcedureRegistry::builtin(builtin);
        let mut views = MaterializedViews::default();
        let rep = refresh_views(&plan, &catalog, &registry, &snap, &mut views).map_err(|e| e.to_string())?;
        if let Some(imp) = views.importance() {
            let scores: BTreeMap<&EntityId, f64> = imp.iter().map(|(k, r)| (k, r.aggregate)).collect();
            write_json(&self.layout.importance(), &scores)?;
        }
        write_json(&self.layout.views_report(), &rep)?;
        write_json(&self.layout.views_meta(), &StageMeta { lsn: head })?;
        c.insert("views_run".into(), rep.runs.len() as u64);
        c.insert("changed_entities".into(), changed.len() as u64);
        Ok(Outcome::ran(c))
    }

    fn embed(&self) -> Result<Outcome, String> {
        let Some(base) = &self.cfg.embedding else {
            return Ok(Outcome::skipped(Counts::new()));
        };
        let mut tc = base.clone();
        if let Some(s) = self.opts.seed {
            tc.seed = s;
        }
        let head = self.open_log()?.head();
        let meta: Option<EmbedMeta> = read_json_or_default(&self.layout.embed_meta())?;
        let since = self.recorded_lsn(meta.as_ref().map_or(0, |m| m.lsn));
        let fresh = meta.as_ref().is_some_and(|m| m.config == tc) && self.layout.model().exists();
        if fresh && since >= head {
            return Ok(Outcome::skipped(counts([("log_head", head)])));
        }
        let snap = load_snapshot(&self.layout.snapshot())?;
        let view = build_training_view(&snap).map_err(|e| e.to_string())?;
        let out = train(&view, &tc).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        out.model.write_to(&mut buf).map_err(|e| e.to_string())?;
        write_atomic(&self.layout.model(), &buf).map_err(|e| e.to_string())?;
        write_json(
            &self.layout.embed_meta(),
            &EmbedMeta { lsn: head, config: tc, facts: view.facts.len(), final_loss: out.epoch_losses.last().copied() },
        )?;
        Ok(Outcome::ran(counts([
            ("log_head", head),
            ("training_facts", view.facts.len() as u64),
            ("epochs", out.epoch_losses.len() as u64),
        ])))
    }

    fn read_streams(&self) -> Result<(Vec<StreamRecord>, Vec<u8>), String> {
        let mut records = Vec::new();
        let mut raw = Vec::new();
        for p in &self.cfg.live.streams {
            let path = self.cfg.resolve(p);
            let bytes = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            records.extend(read_stream_records(&bytes[..]).map_err(|e| format!("{}: {e}", path.display()))?);
            raw.extend_from_slice(&bytes);
        }
        Ok((records, raw))
    }

    fn live_build(&self) -> Result<Outcome, String> {
        let log = self.open_log()?;
        std::fs::create_dir_all(self.layout.stores()).map_err(|e| e.to_string())?;
        let mut analytics =
            StoreAgent::open("analytics", StoreKind::Analytics, &self.layout.stores()).map_err(|e| e.to_string())?;
        agent_replay(&mut analytics, &log, usize::MAX).map_err(|e| e.to_string())?;
        let (streams, stream_bytes) = self.read_streams()?;
        let curation_bytes = std::fs::read(self.layout.curation()).unwrap_or_default();
        let weights = self.cfg.nerd_weights().map_err(|e| e.to_string())?;
        let weight_bytes = serde_json::to_vec(&weights).map_err(|e| e.to_string())?;
        let inputs = sha_hex(&[
            &analytics.replay_lsn.to_le_bytes(),
            analytics.digest().as_bytes(),
            &stream_bytes,
            &curation_bytes,
            &weight_bytes,
        ]);
        let meta: LiveMeta = read_json_or_default(&self.layout.live_meta())?;
        let forced = self.opts.since_lsn.is_some_and(|s| s < log.head());
        if !forced && meta.inputs == inputs && self.layout.live_triples().exists() {
            return Ok(Outcome::skipped(counts([
                ("freshness_lsn", meta.freshness_lsn),
                ("entities", meta.entities as u64),
            ])));
        }
        let StoreState::Analytics { facts } = &analytics.state else {
            return Err("analytics store holds the wrong state".into());
        };
        let stable: Vec<ExtendedTriple> = facts.values().flatten().cloned().collect();
        let stable_snap = KgSnapshot::from_triples(stable.iter().cloned());
        let view = EntityView::build(&stable_snap, &nerd_importance(&stable_snap));
        let linker = StreamLinker { view: &view, weights: &weights };
        let mut idx = build_live_indexes(stable, &streams, Some(&linker)).map_err(|e| e.to_string())?;
        let curations = read_curation_stream(&self.layout.curation()).map_err(|e| e.to_string())?;
        let (mut applied, mut missed) = (0u64, 0u64);
        for r in &curations {
            match apply_curation(&mut idx, r) {
                Ok(()) => applied += 1,
                Err(LiveError::UnknownTarget(_)) => missed += 1,
                Err(e) => return Err(e.to_string()),
            }
        }
        idx.freshness_lsn = analytics.replay_lsn;
        let entities: Vec<&EntityId> = idx.entities().collect();
        let triples = triples_bytes(entities.iter().flat_map(|id| idx.raw_facts(id)));
        write_atomic(&self.layout.live_triples(), &triples).map_err(|e| e.to_string())?;
        let blocked: Vec<&FactKey> = idx.blocked_facts().iter().collect();
        write_json(&self.layout.live_blocked(), &blocked)?;
        let meta = LiveMeta {
            freshness_lsn: idx.freshness_lsn,
            inputs,
            entities: idx.len(),
            pending: idx.pending_references().cloned().collect(),
        };
        write_json(&self.layout.live_meta(), &meta)?;
        Ok(Outcome::ran(counts([
            ("freshness_lsn", meta.freshness_lsn),
            ("entities", meta.entities as u64),
            ("stream_records", streams.len() as u64),
            ("pending_references", meta.pending.len() as u64),
            ("curations_applied", applied),
            ("curations_missed", missed),
        ])))
    }

    /// Live indexes from the last live-build.
    pub fn load_live_indexes(&self) -> Result<LiveIndexes, CliError> {
        let err = |m: String| CliError::stage("serve", m);
        let path = self.layout.live_triples();
        if !path.exists() || !self.layout.live_meta().exists() {
            return Err(err(format!("no live indexes under {}; run live-build first", self.layout.root.display())));
        }
        let f = File::open(&path).map_err(|e| err(e.to_string()))?;
        let triples = read_triples_jsonl(BufReader::new(f)).map_err(|e| err(e.to_string()))?;
        let mut idx = LiveIndexes::from_triples(triples);
        let blocked: Vec<FactKey> = read_json_or_default(&self.layout.live_blocked()).map_err(err)?;
        for k in blocked {
            idx.block_fact(k);
        }
        let meta: LiveMeta = read_json_or_default(&self.layout.live_meta()).map_err(err)?;
        idx.freshness_lsn = meta.freshness_lsn;
        Ok(idx)
    }

    /// Service over the published live indexes. Accepted curations are
    /// appended to the data directory's curation stream.
    pub fn live_service(&self) -> Result<LiveService, CliError> {
        let mut state = LiveState::new(self.load_live_indexes()?, self.cfg.operators()?, self.cfg.intents()?);
        state.max_depth = self.cfg.live.max_depth;
        Ok(LiveService::new(state).with_curation_stream(self.layout.curation()))
    }

    /// Provenance of `id` in the stable graph, falling back to the live
    /// indexes for stream entities.
    pub fn inspect(&self, id: &str) -> Result<ProvenanceReport, CliError> {
        let err = |m: String| CliError::stage("inspect", m);
        let snap = load_snapshot(&self.layout.snapshot()).map_err(err)?;
        let trust: Option<SourceTrustTable> = if self.layout.trust().exists() {
            Some(read_json_or_default(&self.layout.trust()).map_err(err)?)
        } else {
            None
        };
        match inspect(&snap, trust.as_ref(), id) {
            Err(CliError::UnknownEntity(_)) if self.layout.live_triples().exists() => {
                let f = File::open(self.layout.live_triples()).map_err(|e| err(e.to_string()))?;
                let live = read_triples_jsonl(BufReader::new(f)).map_err(|e| err(e.to_string()))?;
                let mut r = inspect(&KgSnapshot::from_triples(live), trust.as_ref(), id)?;
                r.origin = "live".into();
                Ok(r)
            }
            other => other,
        }
    }
}

/// Runs one stage, or every stage for `None`.
pub fn run_stage(config: &Path, stage: Option<Stage>, opts: RunOptions) -> Result<RunReport, CliError> {
    let p = Pipeline::load(config, opts)?;
    match stage {
        Some(s) => p.run(&[s]),
        None => p.run(&Stage::ALL),
    }
}

/// Binds `bind` (the configured address when `None`) and serves until the
/// process ends. `on_ready` receives the bound address.
pub fn serve(config: &Path, bind: Option<&str>, on_ready: impl FnOnce(std::net::SocketAddr)) -> Result<(), CliError> {
    let p = Pipeline::load(config, RunOptions::default())?;
    let svc = Arc::new(p.live_service()?);
    let addr = bind.unwrap_or(&p.cfg.live.bind);
    let listener = TcpListener::bind(addr).map_err(|e| CliError::stage("serve", format!("{addr}: {e}")))?;
    let local = listener.local_addr().map_err(|e| CliError::stage("serve", e))?;
    on_ready(local);
    let _ = std::io::stdout().flush();
    svc.serve(listener).map_err(|e| CliError::stage("serve", e))
}
