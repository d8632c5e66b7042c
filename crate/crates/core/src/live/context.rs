use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::intent::IntentRegistry;
use super::{LiveError, LiveIndexes};
use crate::kg::EntityId;

pub const GENDER_PREDICATE: &str = "sex_or_gender";
pub const DEFAULT_CONTEXT_CAPACITY: usize = 8;

/// An entity as remembered by the context: its id plus the types and gender
/// it had when the interaction happened.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextEntity {
    pub id: EntityId,
    #[serde(default)]
    pub types: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<String>,
}

impl ContextEntity {
    pub fn describe(idx: &LiveIndexes, id: &EntityId) -> Self {
        Self { id: id.clone(), types: idx.types_of(id), gender: idx.values(id, GENDER_PREDICATE).into_iter().next() }
    }

    fn satisfies(&self, type_name: Option<&str>, gender: Option<&str>) -> bool {
        type_name.is_none_or(|t| self.types.contains(t))
            && gender.is_none_or(|g| self.gender.as_deref().is_some_and(|x| x.eq_ignore_ascii_case(g)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub intent: String,
    pub args: Vec<ContextEntity>,
    pub answers: Vec<ContextEntity>,
    #[serde(default)]
    pub salient: Vec<ContextEntity>,
}

impl Interaction {
    /// Builds an interaction, describing each entity from the indexes.
    pub fn observe(idx: &LiveIndexes, intent: &str, args: &[EntityId], answers: &[EntityId]) -> Self {
        Self {
            intent: intent.to_string(),
            args: args.iter().map(|a| ContextEntity::describe(idx, a)).collect(),
            answers: answers.iter().map(|a| ContextEntity::describe(idx, a)).collect(),
            salient: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextGraph {
    interactions: VecDeque<Interaction>,
    capacity: usize,
}

impl Default for ContextGraph {
    fn default() -> Self {
        Self::with_capacity(DEFAULT_CONTEXT_CAPACITY)
    }
}

impl ContextGraph {
    pub fn with_capacity(capacity: usize) -> Self {
        Self { interactions: VecDeque::new(), capacity: capacity.max(1) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    /// Oldest first.
    pub fn interactions(&self) -> impl DoubleEndedIterator<Item = &Interaction> {
        self.interactions.iter()
    }

    pub fn latest(&self) -> Option<&Interaction> {
        self.interactions.back()
    }
}

/// Appends an interaction, evicting the oldest ones beyond capacity.
pub fn update_context(ctx: &mut ContextGraph, interaction: Interaction) {
    ctx.interactions.push_back(interaction);
    while ctx.interactions.len() > ctx.capacity {
        ctx.interactions.pop_front();
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgSlot {
    Entity(EntityId),
    /// A pronoun or other reference with optional constraints.
    Ref {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gender: Option<String>,
        #[serde(default, rename = "type", skip_serializing_if = "Option::is_none")]
        type_name: Option<String>,
    },
}

impl ArgSlot {
    pub fn pronoun() -> Self {
        ArgSlot::Ref { gender: None, type_name: None }
    }
}

/// An annotated query with possibly missing pieces.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialIntent {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub args: Vec<ArgSlot>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompleteIntent {
    pub name: String,
    pub args: Vec<EntityId>,
}

/// Completes a follow-up from the context. A missing name comes from the most
/// recent interaction, missing arguments from its arguments. A reference
/// binds to the most recent entity, answers before arguments before salient
/// ones within an interaction, meeting the reference's constraints and the
/// slot type declared by the intent.
pub fn resolve_followup(
    partial: &PartialIntent,
    ctx: &ContextGraph,
    intents: Option<&IntentRegistry>,
) -> Result<CompleteIntent, LiveError> {
    let name = match &partial.name {
        Some(n) => n.clone(),
        None => ctx
            .latest()
            .map(|i| i.intent.clone())
            .ok_or_else(|| LiveError::UnresolvableReference("no previous intent".into()))?,
    };
    if partial.args.is_empty() {
        let last = ctx.latest().ok_or_else(|| LiveError::UnresolvableReference("no previous arguments".into()))?;
        return Ok(CompleteIntent { name, args: last.args.iter().map(|a| a.id.clone()).collect() });
    }
    let def = intents.and_then(|r| r.get(&name));
    let mut args = Vec::with_capacity(partial.args.len());
    for (i, slot) in partial.args.iter().enumerate() {
        match slot {
            ArgSlot::Entity(e) => args.push(e.clone()),
            ArgSlot::Ref { gender, type_name } => {
                let slot_type = def.and_then(|d| d.slot_type(i));
                let found = ctx
                    .interactions()
                    .rev()
                    .flat_map(|it| it.answers.iter().chain(&it.args).chain(&it.salient))
                    .find(|c| c.satisfies(type_name.as_deref(), gender.as_deref()) && c.satisfies(slot_type, None))
                    .ok_or_else(|| LiveError::UnresolvableReference(format!("argument {i} of {name}")))?;
                args.push(found.id.clone());
            }
        }
    }
    Ok(CompleteIntent { name, args })
}
