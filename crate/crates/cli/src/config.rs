use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use saga_core::embed::TrainConfig;
use saga_core::engine::{builtin_catalog, ViewCatalog};
use saga_core::fuse::TrustConfig;
use saga_core::ingest::SourceConfig;
use saga_core::link::LinkConfig;
use saga_core::live::{IntentRegistry, OperatorRegistry, DEFAULT_MAX_DEPTH};
use saga_core::nerd::DisambiguationWeights;
use saga_core::Ontology;

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Override the per-type linkage thresholds when set.
    #[serde(default)]
    pub tau_pos: Option<f64>,
    #[serde(default)]
    pub tau_neg: Option<f64>,
    #[serde(default)]
    pub theta_rel: Option<f64>,
    #[serde(default)]
    pub theta_reject: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiveSettings {
    #[serde(default)]
    pub streams: Vec<PathBuf>,
    #[serde(default)]
    pub intents: Option<PathBuf>,
    /// One virtual operator definition per non-empty line; `#` starts a comment.
    #[serde(default)]
    pub operators: Option<PathBuf>,
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default = "default_max_depth")]
    pub max_depth: u32,
}

fn default_bind() -> String {
    "127.0.0.1:7878".into()
}

fn default_max_depth() -> u32 {
    DEFAULT_MAX_DEPTH
}

impl Default for LiveSettings {
    fn default() -> Self {
        Self {
            streams: Vec::new(),
            intents: None,
            operators: None,
            bind: default_bind(),
            max_depth: default_max_depth(),
        }
    }
}

/// `saga.json`. Relative paths resolve against the file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub data_dir: PathBuf,
    pub sources: Vec<PathBuf>,
    pub ontology: PathBuf,
    /// JSON list of per-type link configs.
    #[serde(default)]
    pub link: Option<PathBuf>,
    #[serde(default)]
    pub thresholds: Thresholds,
    /// View catalog; the built-in catalog when unset.
    #[serde(default)]
    pub views: Option<PathBuf>,
    /// Views to refresh; every leaf of the catalog when empty.
    #[serde(default)]
    pub view_targets: Vec<String>,
    #[serde(default)]
    pub embedding: Option<TrainConfig>,
    #[serde(default)]
    pub nerd_weights: Option<PathBuf>,
    #[serde(default)]
    pub trust: TrustConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub live: LiveSettings,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn config_err(msg: impl std::fmt::Display) -> CliError {
    CliError::Config(msg.to_string())
}

fn in_unit(name: &str, v: Option<f64>) -> Result<(), CliError> {
    match v {
        Some(x) if !(0.0..=1.0).contains(&x) => Err(config_err(format!("{name} = {x} is outside [0, 1]"))),
        _ => Ok(()),
    }
}

impl PipelineConfig {
    /// Parses and validates: every referenced file exists and every
    /// threshold is in range.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        cfg.validate_contents()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.resolve(&self.data_dir)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let mut files: Vec<&PathBuf> = self.sources.iter().collect();
        files.push(&self.ontology);
        files.extend(self.link.iter());
        files.extend(self.views.iter());
        files.extend(self.nerd_weights.iter());
        files.extend(self.live.streams.iter());
        files.extend(self.live.intents.iter());
        files.extend(self.live.operators.iter());
        for f in files {
            if !self.resolve(f).is_file() {
                return Err(config_err(format!("missing file {}", self.resolve(f).display())));
            }
        }
        if self.sources.is_empty() {
            return Err(config_err("no sources"));
        }
        let t = &self.thresholds;
        for (n, v) in [
            ("tau_pos", t.tau_pos),
            ("tau_neg", t.tau_neg),
            ("theta_rel", t.theta_rel),
            ("theta_reject", t.theta_reject),
        ] {
            in_unit(n, v)?;
        }
        if let (Some(p), Some(n)) = (t.tau_pos, t.tau_neg) {
            if n >= p {
                return Err(config_err(format!("tau_neg {n} must be below tau_pos {p}")));
            }
        }
        if let Some(e) = &self.embedding {
            e.check().map_err(config_err)?;
        }
        if self.live.max_depth == 0 {
            return Err(config_err("live.max_depth must be at least 1"));
        }
        Ok(())
    }

    /// Parses every referenced file: source configs and their artifacts,
    /// alignment rules against the ontology, link configs, the view catalog,
    /// intents and operators.
    pub fn validate_contents(&self) -> Result<(), CliError> {
        let ontology = self.ontology()?;
        for (src, dir) in self.source_configs()? {
            for a in &src.artifacts {
                let p = dir.join(&a.path);
                if !p.is_file() {
                    return Err(config_err(format!("source {}: missing artifact {}", src.source_id, p.display())));
                }
            }
            src.pgf().validate(&ontology).map_err(|e| config_err(format!("source {}: {e}", src.source_id)))?;
        }
        self.link_configs()?;
        let catalog = self.catalog()?;
        for t in &self.view_targets {
            if catalog.get(t).is_none() {
                return Err(config_err(format!("unknown view target {t}")));
            }
        }
        self.nerd_weights()?;
        self.intents()?;
        self.operators()?;
        Ok(())
    }

    pub fn ontology(&self) -> Result<Ontology, CliError> {
        read_json(&self.resolve(&self.ontology))
    }

    pub fn source_configs(&self) -> Result<Vec<(SourceConfig, PathBuf)>, CliError> {
        let mut out: Vec<(SourceConfig, PathBuf)> = Vec::new();
        for p in &self.sources {
            let path = self.resolve(p);
            let cfg = SourceConfig::load(&path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            if out.iter().any(|(c, _)| c.source_id == cfg.source_id) {
                return Err(config_err(format!("source {} is configured twice", cfg.source_id)));
            }
            let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
            out.push((cfg, dir));
        }
        Ok(out)
    }

    /// Link configs with the threshold overrides applied.
    pub fn link_configs(&self) -> Result<Vec<LinkConfig>, CliError> {
        let Some(p) = &self.link else {
            return Ok(Vec::new());
        };
        let mut cfgs: Vec<LinkConfig> = read_json(&self.resolve(p))?;
        for c in &mut cfgs {
            if let Some(v) = self.thresholds.tau_pos {
                c.tau_pos = v;
            }
            if let Some(v) = self.thresholds.tau_neg {
                c.tau_neg = v;
            }
            if c.tau_neg >= c.tau_pos {
                return Err(config_err(format!("{}: tau_neg must be below tau_pos", c.entity_type)));
            }
        }
        Ok(cfgs)
    }

    pub fn catalog(&self) -> Result<ViewCatalog, CliError> {
        match &self.views {
            Some(p) => ViewCatalog::load(&self.resolve(p)).map_err(config_err),
            None => Ok(builtin_catalog()),
        }
    }

    pub fn nerd_weights(&self) -> Result<DisambiguationWeights, CliError> {
        let mut w = match &self.nerd_weights {
            Some(p) => DisambiguationWeights::load(&self.resolve(p)).map_err(config_err)?,
            None => DisambiguationWeights::default(),
        };
        if let Some(t) = self.thresholds.theta_reject {
            w.theta_reject = t;
        }
        w.check().map_err(config_err)?;
        Ok(w)
    }

    pub fn intents(&self) -> Result<IntentRegistry, CliError> {
        match &self.live.intents {
            Some(p) => IntentRegistry::load(&self.resolve(p)).map_err(config_err),
            None => Ok(IntentRegistry::default()),
        }
    }

    pub fn operators(&self) -> Result<OperatorRegistry, CliError> {
        let mut reg = OperatorRegistry::default();
        let Some(p) = &self.live.operators else {
            return Ok(reg);
        };
        let path = self.resolve(p);
        let text = std::fs::read_to_string(&path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            reg.define(line).map_err(|e| config_err(format!("{}:{}: {e}", path.display(), i + 1)))?;
        }
        Ok(reg)
    }
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| config_err(format!("{}: {e}", path.display())))
}
