use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{LiveError, LiveIndexes};
use crate::kg::{EntityId, ExtendedTriple, Object};
use crate::nerd::{resolve_object, DisambiguationWeights, EntityView};

/// Trust given to facts from live streams.
pub const STREAM_TRUST: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityReference {
    pub field: String,
    pub surface: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub type_hint: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamRecord {
    pub stream: String,
    pub natural_key: String,
    #[serde(default)]
    pub fields: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub entity_references: Vec<EntityReference>,
}

impl StreamRecord {
    /// `<stream>:<natural_key>`; records with the same key overwrite each other.
    pub fn entity_id(&self) -> Result<EntityId, LiveError> {
        EntityId::new(self.stream.clone(), self.natural_key.clone())
            .map_err(|e| LiveError::BadRecord(format!("{}: {e}", self.natural_key)))
    }
}

fn render(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::Null => None,
        serde_json::Value::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

pub fn read_stream_records<R: BufRead>(r: R) -> Result<Vec<StreamRecord>, LiveError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| LiveError::BadRecord(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

/// How stream references are linked to graph entities.
pub struct StreamLinker<'a> {
    pub view: &'a EntityView,
    pub weights: &'a DisambiguationWeights,
}

/// Upserts one stream record as an entity of its own. Plain fields become
/// literal facts; referenced fields are linked through NERD when a match
/// clears the threshold and otherwise stay literal and are listed as pending.
/// Returns the number of references left pending.
pub fn ingest_stream_record(
    idx: &mut LiveIndexes,
    record: &StreamRecord,
    linker: Option<&StreamLinker<'_>>,
) -> Result<usize, LiveError> {
    let id = record.entity_id()?;
    let fact = |p: &str, o: Object| ExtendedTriple::simple(id.clone(), p, o, record.stream.clone(), STREAM_TRUST);
    let mut facts: Vec<ExtendedTriple> =
        record.fields.iter().filter_map(|(k, v)| render(v).map(|s| fact(k, Object::literal(s)))).collect();
    let mut pending = Vec::new();
    let context = facts.clone();
    for r in &record.entity_references {
        let resolved = linker.and_then(|l| {
            resolve_object(
                l.view,
                &r.surface,
                &context,
                r.type_hint.as_deref().unwrap_or(""),
                l.weights,
                l.weights.theta_reject,
            )
        });
        let object = match resolved {
            Some(e) => Object::Entity(e),
            None => {
                pending.push(r.field.clone());
                Object::literal(r.surface.clone())
            }
        };
        facts.retain(|t| !(t.predicate == r.field && t.object.as_literal() == Some(r.surface.as_str())));
        facts.push(fact(&r.field, object));
    }
    idx.put_entity(&id, facts);
    let n = pending.len();
    for f in pending {
        idx.pending.insert((id.clone(), f));
    }
    Ok(n)
}

/// Indexes the stable-graph view, then applies stream records in order.
pub fn build_live_indexes(
    stable_view: impl IntoIterator<Item = ExtendedTriple>,
    streams: &[StreamRecord],
    linker: Option<&StreamLinker<'_>>,
) -> Result<LiveIndexes, LiveError> {
    let mut idx = LiveIndexes::from_triples(stable_view);
    for r in streams {
        ingest_stream_record(&mut idx, r, linker)?;
    }
    Ok(idx)
}
