use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::align::{PgfConfig, PgfRule};
use super::export::ExportSettings;
use super::transform::{JoinSpec, TransformSpec};
use super::IngestError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub group: String,
    /// Overrides the source-level format.
    #[serde(default)]
    pub format: Option<String>,
}

/// One JSON file per source describing import, transform, alignment and export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub source_id: String,
    pub format: String,
    pub artifacts: Vec<Artifact>,
    pub id_column: String,
    /// Group holding one row per entity; the first artifact's group if unset.
    #[serde(default)]
    pub primary_group: Option<String>,
    #[serde(default)]
    pub joins: Vec<JoinSpec>,
    #[serde(default)]
    pub schema: Vec<String>,
    #[serde(default)]
    pub pgf_rules: Vec<PgfRule>,
    #[serde(default)]
    pub required_predicates: Vec<String>,
    #[serde(default)]
    pub volatile_predicates: BTreeSet<String>,
    /// Aligned predicates whose values are source-namespace entity ids.
    #[serde(default)]
    pub entity_ref_predicates: BTreeSet<String>,
    pub default_trust: f64,
    #[serde(default)]
    pub locale: Option<String>,
    #[serde(default = "default_separator")]
    pub multi_value_separator: String,
}

fn default_separator() -> String {
    "|".into()
}

impl SourceConfig {
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: SourceConfig =
            serde_json::from_str(&text).map_err(|e| IngestError::Config(format!("{}: {e}", path.display())))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), IngestError> {
        if self.source_id.is_empty() || self.source_id.contains(':') {
            return Err(IngestError::Config(format!("bad source_id `{}`", self.source_id)));
        }
        if !(0.0..=1.0).contains(&self.default_trust) {
            return Err(IngestError::Config(format!("default_trust {} outside [0,1]", self.default_trust)));
        }
        if self.artifacts.is_empty() {
            return Err(IngestError::Config("no artifacts".into()));
        }
        self.pgf().check_shape()
    }

    pub fn transform_spec(&self) -> TransformSpec {
        TransformSpec {
            id_column: self.id_column.clone(),
            primary_group: self.primary_group.clone().unwrap_or_else(|| self.artifacts[0].group.clone()),
            joins: self.joins.clone(),
            schema: self.schema.clone(),
        }
    }

    pub fn pgf(&self) -> PgfConfig {
        PgfConfig { rules: self.pgf_rules.clone(), required_predicates: self.required_predicates.clone() }
    }

    pub fn export_settings(&self) -> ExportSettings {
        ExportSettings {
            source_id: self.source_id.clone(),
            default_trust: self.default_trust,
            locale: self.locale.clone(),
            entity_ref_predicates: self.entity_ref_predicates.clone(),
        }
    }
}
