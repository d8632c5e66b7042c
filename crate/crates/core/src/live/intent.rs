use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::kgq::{parse_kgq, KgqQuery};
use super::{LiveError, LiveIndexes};
use crate::kg::EntityId;

/// Predicate over one argument entity. Empty lists always hold.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guard {
    #[serde(default)]
    pub arg: usize,
    /// The entity has at least one of these types.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub any_type: Vec<String>,
    /// The entity has a visible fact for each of these predicate paths.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub has_facts: Vec<String>,
}

impl Guard {
    pub fn holds(&self, idx: &LiveIndexes, args: &[EntityId]) -> bool {
        let Some(e) = args.get(self.arg) else {
            return false;
        };
        idx.contains(e)
            && (self.any_type.is_empty() || self.any_type.iter().any(|t| idx.has_type(e, t)))
            && self.has_facts.iter().all(|p| !idx.values(e, p).is_empty())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentAlternative {
    pub guard: Guard,
    /// KGQ text; `$0`, `$1`, ... stand for the quoted argument ids.
    pub template: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentDef {
    pub name: String,
    /// Required type per argument slot; empty means unconstrained.
    #[serde(default)]
    pub arg_types: Vec<String>,
    pub alternatives: Vec<IntentAlternative>,
}

impl IntentDef {
    pub fn arity(&self) -> usize {
        self.arg_types.len().max(1)
    }

    pub fn slot_type(&self, i: usize) -> Option<&str> {
        self.arg_types.get(i).map(String::as_str).filter(|t| !t.is_empty())
    }
}

/// Fills `$i` placeholders with JSON-quoted ids, highest index first so `$1`
/// never eats the prefix of `$10`.
pub fn instantiate(template: &str, args: &[EntityId]) -> String {
    let mut out = template.to_string();
    for (i, a) in args.iter().enumerate().rev() {
        let quoted = serde_json::Value::String(a.to_string()).to_string();
        out = out.replace(&format!("${i}"), &quoted);
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentRegistry {
    intents: BTreeMap<String, IntentDef>,
}

impl IntentRegistry {
    /// Adds or replaces an intent after checking every template parses.
    pub fn register(&mut self, def: IntentDef) -> Result<(), LiveError> {
        if def.alternatives.is_empty() {
            return Err(LiveError::BadIntent(format!("{} has no alternatives", def.name)));
        }
        let probe: Vec<EntityId> = (0..def.arity()).map(|i| EntityId::graph(format!("arg{i}"))).collect();
        for alt in &def.alternatives {
            parse_kgq(&instantiate(&alt.template, &probe))
                .map_err(|e| LiveError::BadIntent(format!("{}: {e}", def.name)))?;
        }
        self.intents.insert(def.name.clone(), def);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&IntentDef> {
        self.intents.get(name)
    }

    pub fn intents(&self) -> impl Iterator<Item = &IntentDef> {
        self.intents.values()
    }

    /// Reads a JSON array of intent definitions.
    pub fn load(path: &Path) -> Result<Self, LiveError> {
        let defs: Vec<IntentDef> = serde_json::from_slice(&std::fs::read(path)?)?;
        let mut reg = Self::default();
        for d in defs {
            reg.register(d)?;
        }
        Ok(reg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutedIntent {
    pub intent: String,
    pub alternative: usize,
    pub query: KgqQuery,
}

/// Instantiates the first alternative whose guard holds over the arguments.
pub fn route_intent(
    intent: &str,
    args: &[EntityId],
    idx: &LiveIndexes,
    registry: &IntentRegistry,
) -> Result<RoutedIntent, LiveError> {
    let def = registry.get(intent).ok_or_else(|| LiveError::UnknownIntent(intent.to_string()))?;
    if args.len() != def.arity() {
        return Err(LiveError::BadIntent(format!("{intent} takes {} argument(s), got {}", def.arity(), args.len())));
    }
    for (i, alt) in def.alternatives.iter().enumerate() {
        if alt.guard.holds(idx, args) {
            return Ok(RoutedIntent {
                intent: intent.to_string(),
                alternative: i,
                query: parse_kgq(&instantiate(&alt.template, args))?,
            });
        }
    }
    Err(LiveError::NoApplicableAlternative(intent.to_string()))
}
