use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{IngestError, SourceEntity};
use crate::kg::{Ontology, TYPE_PREDICATE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PgfKind {
    Rename,
    Combine,
    ConstantType,
}

/// A predicate generation function. `combiner` is a `{predicate}` template for
/// `combine` and the type name for `constant_type`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PgfRule {
    pub kind: PgfKind,
    #[serde(default)]
    pub source_predicates: Vec<String>,
    pub target_predicate: String,
    #[serde(default)]
    pub combiner: Option<String>,
}

impl PgfRule {
    pub fn rename(from: &str, to: &str) -> Self {
        Self {
            kind: PgfKind::Rename,
            source_predicates: vec![from.into()],
            target_predicate: to.into(),
            combiner: None,
        }
    }

    pub fn combine(from: &[&str], to: &str, template: &str) -> Self {
        Self {
            kind: PgfKind::Combine,
            source_predicates: from.iter().map(|s| s.to_string()).collect(),
            target_predicate: to.into(),
            combiner: Some(template.into()),
        }
    }

    pub fn constant_type(type_name: &str) -> Self {
        Self {
            kind: PgfKind::ConstantType,
            source_predicates: Vec::new(),
            target_predicate: TYPE_PREDICATE.into(),
            combiner: Some(type_name.into()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PgfConfig {
    pub rules: Vec<PgfRule>,
    /// Target predicates every aligned entity must have a value for.
    #[serde(default)]
    pub required_predicates: Vec<String>,
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn parse_template(t: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = t;
    while let Some(open) = rest.find('{') {
        let Some(close) = rest[open..].find('}') else {
            break;
        };
        if open > 0 {
            out.push(Piece::Text(&rest[..open]));
        }
        out.push(Piece::Slot(&rest[open + 1..open + close]));
        rest = &rest[open + close + 1..];
    }
    if !rest.is_empty() {
        out.push(Piece::Text(rest));
    }
    out
}

fn placeholders(t: &str) -> BTreeSet<String> {
    parse_template(t)
        .into_iter()
        .filter_map(|p| match p {
            Piece::Slot(s) => Some(s.to_string()),
            Piece::Text(_) => None,
        })
        .collect()
}

impl PgfConfig {
    /// Structural checks that need no ontology.
    pub fn check_shape(&self) -> Result<(), IngestError> {
        for r in &self.rules {
            match r.kind {
                PgfKind::Rename if r.source_predicates.len() != 1 => {
                    return Err(IngestError::RenameArity(r.target_predicate.clone()))
                }
                PgfKind::Rename => {}
                PgfKind::Combine => {
                    let t =
                        r.combiner.as_deref().ok_or_else(|| IngestError::IncompleteRule(r.target_predicate.clone()))?;
                    let used = placeholders(t);
                    let listed: BTreeSet<String> = r.source_predicates.iter().cloned().collect();
                    if used != listed || used.is_empty() {
                        return Err(IngestError::CombinerArityMismatch {
                            target: r.target_predicate.clone(),
                            placeholders: used.into_iter().collect(),
                            sources: r.source_predicates.clone(),
                        });
                    }
                }
                PgfKind::ConstantType => {
                    if r.combiner.as_deref().is_none_or(str::is_empty) {
                        return Err(IngestError::IncompleteRule(r.target_predicate.clone()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Shape checks plus: every target predicate is registered in the ontology.
    pub fn validate(&self, ontology: &Ontology) -> Result<(), IngestError> {
        self.check_shape()?;
        for r in &self.rules {
            if !ontology.has_predicate(&r.target_predicate) {
                return Err(IngestError::UnknownTargetPredicate(r.target_predicate.clone()));
            }
            if r.kind == PgfKind::ConstantType && !ontology.has_type(r.combiner.as_deref().unwrap_or_default()) {
                return Err(IngestError::Config(format!(
                    "constant type `{}` is not in the ontology",
                    r.combiner.as_deref().unwrap_or_default()
                )));
            }
        }
        for p in &self.required_predicates {
            if !ontology.has_predicate(p) {
                return Err(IngestError::UnknownTargetPredicate(p.clone()));
            }
        }
        Ok(())
    }
}

/// Renders `template` once per ordinal. Sources with a single value broadcast;
/// otherwise the shortest list bounds the output.
fn render_combine(e: &SourceEntity, sources: &[String], template: &str) -> Vec<String> {
    let lists: Vec<&[String]> = sources.iter().map(|s| e.values(s)).collect();
    if lists.iter().any(|l| l.is_empty()) {
        return Vec::new();
    }
    let max = lists.iter().map(|l| l.len()).max().unwrap_or(0);
    let n = if lists.iter().all(|l| l.len() == 1 || l.len() == max) {
        max
    } else {
        lists.iter().map(|l| l.len()).min().unwrap_or(0)
    };
    let pieces = parse_template(template);
    (0..n)
        .map(|i| {
            let value = |name: &str| {
                let pos = sources.iter().position(|s| s == name).expect("checked placeholder");
                let l = lists[pos];
                l[if l.len() == 1 { 0 } else { i }].as_str()
            };
            if pieces.iter().any(|p| matches!(p, Piece::Slot(s) if value(s).is_empty())) {
                // keeps relationship-node ordinals aligned; export skips it
                return String::new();
            }
            pieces
                .iter()
                .map(|p| match p {
                    Piece::Text(t) => *t,
                    Piece::Slot(s) => value(s),
                })
                .collect()
        })
        .collect()
}

/// Maps source predicates onto KG-ontology predicates. Predicates no rule
/// mentions are dropped; ids stay in the source namespace.
pub fn align_ontology(entities: &[SourceEntity], cfg: &PgfConfig) -> Result<Vec<SourceEntity>, IngestError> {
    cfg.check_shape()?;
    let mut out = Vec::with_capacity(entities.len());
    for e in entities {
        let mut a = SourceEntity::new(e.id.clone());
        for r in &cfg.rules {
            let values = match r.kind {
                PgfKind::Rename => e.values(&r.source_predicates[0]).to_vec(),
                PgfKind::Combine => render_combine(e, &r.source_predicates, r.combiner.as_deref().unwrap_or_default()),
                PgfKind::ConstantType => vec![r.combiner.clone().unwrap_or_default()],
            };
            let slot = a.predicates.entry(r.target_predicate.clone()).or_default();
            for v in values {
                if r.kind == PgfKind::ConstantType && slot.contains(&v) {
                    continue;
                }
                slot.push(v);
            }
        }
        for p in &cfg.required_predicates {
            if a.values(p).iter().all(|v| v.trim().is_empty()) {
                return Err(IngestError::UnmappedRequiredPredicate { entity: e.id.clone(), predicate: p.clone() });
            }
        }
        out.push(a);
    }
    Ok(out)
}
