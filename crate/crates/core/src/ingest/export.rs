use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};

use super::{IngestError, SourceEntity};
use crate::kg::{validate_triple, EntityId, ExtendedTriple, ObjectKind, RawTriple};

#[derive(Clone, Debug, PartialEq)]
pub struct ExportSettings {
    pub source_id: String,
    pub default_trust: f64,
    pub locale: Option<String>,
    /// Predicate paths whose values name source entities. Bare values are
    /// taken as local ids in the source namespace.
    pub entity_ref_predicates: BTreeSet<String>,
}

impl ExportSettings {
    pub fn new(source_id: &str, default_trust: f64) -> Self {
        Self { source_id: source_id.into(), default_trust, locale: None, entity_ref_predicates: BTreeSet::new() }
    }
}

/// Stable relationship-node id for the `ordinal`-th `predicate` node of `entity`.
pub fn mint_r_id(entity: &EntityId, predicate: &str, ordinal: usize) -> String {
    let mut h = Sha256::new();
    h.update(entity.to_string().as_bytes());
    h.update([0x1f]);
    h.update(predicate.as_bytes());
    h.update([0x1f]);
    h.update(ordinal.to_string().as_bytes());
    format!("r{}", &hex::encode(h.finalize())[..16])
}

fn triple(
    e: &SourceEntity,
    s: &ExportSettings,
    predicate: &str,
    node: Option<(String, &str)>,
    value: &str,
) -> Result<ExtendedTriple, IngestError> {
    let path = match &node {
        Some((_, rp)) => format!("{predicate}.{rp}"),
        None => predicate.to_string(),
    };
    let is_ref = s.entity_ref_predicates.contains(&path);
    let object = if is_ref && !value.contains(':') { format!("{}:{value}", s.source_id) } else { value.to_string() };
    let (r_id, r_predicate) = match node {
        Some((r, rp)) => (Some(r), Some(rp.to_string())),
        None => (None, None),
    };
    Ok(validate_triple(RawTriple {
        subject: e.id.to_string(),
        predicate: predicate.to_string(),
        r_id,
        r_predicate,
        object,
        object_kind: if is_ref { ObjectKind::EntityRef } else { ObjectKind::Literal },
        locale: if is_ref { None } else { s.locale.clone() },
        sources: vec![s.source_id.clone()],
        trust: vec![s.default_trust],
    })?)
}

/// One triple per non-empty value; dotted predicates become relationship nodes
/// whose i-th values share an r_id.
pub fn export_extended_triples(
    entities: &[SourceEntity],
    settings: &ExportSettings,
) -> Result<Vec<ExtendedTriple>, IngestError> {
    let mut out = Vec::new();
    for e in entities {
        let mut seen = BTreeSet::new();
        let mut nodes: BTreeMap<&str, Vec<(&str, &[String])>> = BTreeMap::new();
        for (p, values) in &e.predicates {
            if let Some((head, field)) = p.split_once('.') {
                nodes.entry(head).or_default().push((field, values));
                continue;
            }
            for v in values.iter().filter(|v| !v.trim().is_empty()) {
                let t = triple(e, settings, p, None, v)?;
                if seen.insert(t.key()) {
                    out.push(t);
                }
            }
        }
        for (head, fields) in nodes {
            let n = fields.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
            for i in 0..n {
                let r_id = mint_r_id(&e.id, head, i);
                for (field, values) in &fields {
                    match values.get(i) {
                        Some(v) if !v.trim().is_empty() => {
                            let t = triple(e, settings, head, Some((r_id.clone(), field)), v)?;
                            if seen.insert(t.key()) {
                                out.push(t);
                            }
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Object;

    fn e1() -> SourceEntity {
        SourceEntity::new(EntityId::new("src1", "e1").unwrap())
            .with("name", &["J. Smith"])
            .with("educated_at.school", &["UW"])
            .with("educated_at.degree", &["PhD"])
            .with("educated_at.year", &["2005"])
            .with("nickname", &[])
    }

    #[test]
    fn education_node_shares_one_r_id() {
        let ts = export_extended_triples(&[e1()], &ExportSettings::new("src1", 0.9)).unwrap();
        assert_eq!(ts.len(), 4);
        let comp: Vec<_> = ts.iter().filter(|t| t.is_composite()).collect();
        assert_eq!(comp.len(), 3);
        assert!(comp.iter().all(|t| t.r_id == comp[0].r_id && t.predicate == "educated_at"));
        let rps: BTreeSet<_> = comp.iter().map(|t| t.r_predicate.clone().unwrap()).collect();
        assert_eq!(rps, ["degree", "school", "year"].iter().map(|s| s.to_string()).collect());
        assert!(ts.iter().all(|t| t.predicate != "nickname"));
    }

    #[test]
    fn default_trust_on_every_row() {
        let ts = export_extended_triples(&[e1()], &ExportSettings::new("src2", 0.8)).unwrap();
        assert!(ts.iter().all(|t| t.trust == [0.8] && t.sources == ["src2"]));
    }

    #[test]
    fn r_id_is_stable_and_ordinal_sensitive() {
        let id = EntityId::new("src1", "e1").unwrap();
        assert_eq!(mint_r_id(&id, "educated_at", 0), mint_r_id(&id, "educated_at", 0));
        assert_ne!(mint_r_id(&id, "educated_at", 0), mint_r_id(&id, "educated_at", 1));
    }

    #[test]
    fn entity_ref_values_get_source_namespace() {
        let mut s = ExportSettings::new("imdb", 0.9);
        s.entity_ref_predicates.insert("directed_by".into());
        let e = SourceEntity::new(EntityId::new("imdb", "m1").unwrap()).with("directed_by", &["p7"]);
        let ts = export_extended_triples(&[e], &s).unwrap();
        assert_eq!(ts[0].object, Object::Entity(EntityId::new("imdb", "p7").unwrap()));
    }

    #[test]
    fn bad_trust_is_a_validation_error() {
        assert!(matches!(
            export_extended_triples(&[e1()], &ExportSettings::new("s", 1.2)),
            Err(IngestError::Validation(_))
        ));
    }
}
