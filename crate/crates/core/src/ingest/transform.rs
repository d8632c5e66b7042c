use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{IngestError, RawRow, RawRowSet, SourceEntity};
use crate::kg::EntityId;

/// Rows of `group` attach to the entity whose id equals their `key` column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinSpec {
    pub group: String,
    pub key: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub id_column: String,
    pub primary_group: String,
    pub joins: Vec<JoinSpec>,
    /// Predicates every entity must carry (possibly with no values).
    pub schema: Vec<String>,
}

fn check_row(row: &RawRow, group: &str) -> Result<(), IngestError> {
    let mut seen = BTreeSet::new();
    for (name, _) in &row.cells {
        if name.trim().is_empty() {
            return Err(IngestError::EmptyPredicateName { group: group.into() });
        }
        if !seen.insert(name.as_str()) {
            return Err(IngestError::DuplicatePredicateName { group: group.into(), predicate: name.clone() });
        }
    }
    Ok(())
}

fn single_id<'a>(row: &'a RawRow, column: &str, group: &str, idx: usize) -> Result<&'a str, IngestError> {
    match row.get(column) {
        Some([id]) if !id.trim().is_empty() => Ok(id.trim()),
        _ => Err(IngestError::MissingIdPredicate { group: group.into(), row: idx + 1, column: column.into() }),
    }
}

/// Builds one entity per primary row and applies the joins. Enforces: ID
/// present, IDs unique, predicate names non-empty and unique per row, and every
/// schema predicate present.
pub fn transform_entities(rows: &RawRowSet, spec: &TransformSpec) -> Result<Vec<SourceEntity>, IngestError> {
    let primary =
        rows.group(&spec.primary_group).ok_or_else(|| IngestError::UnknownGroup(spec.primary_group.clone()))?;
    let mut entities: BTreeMap<String, SourceEntity> = BTreeMap::new();
    for (i, row) in primary.rows.iter().enumerate() {
        check_row(row, &primary.name)?;
        let local = single_id(row, &spec.id_column, &primary.name, i)?;
        let id = EntityId::new(rows.source_id.clone(), local)?;
        let mut e = SourceEntity::new(id);
        for (name, values) in &row.cells {
            if name != &spec.id_column {
                e.predicates.insert(name.clone(), values.clone());
            }
        }
        if entities.insert(local.to_string(), e).is_some() {
            return Err(IngestError::DuplicateEntityId(local.to_string()));
        }
    }
    for join in &spec.joins {
        let group = rows.group(&join.group).ok_or_else(|| IngestError::UnknownGroup(join.group.clone()))?;
        for (i, row) in group.rows.iter().enumerate() {
            check_row(row, &group.name)?;
            let key = single_id(row, &join.key, &group.name, i)?;
            let Some(e) = entities.get_mut(key) else {
                log::debug!("join row {} of `{}` has no entity `{key}`", i + 1, group.name);
                continue;
            };
            for (name, values) in &row.cells {
                if name != &join.key {
                    e.predicates.entry(name.clone()).or_default().extend(values.iter().cloned());
                }
            }
        }
    }
    for p in &spec.schema {
        if !entities.is_empty() && entities.values().all(|e| !e.predicates.contains_key(p)) {
            return Err(IngestError::MissingSchemaPredicate(p.clone()));
        }
        for e in entities.values_mut() {
            e.predicates.entry(p.clone()).or_default();
        }
    }
    Ok(entities.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::RowGroup;

    fn row(cells: &[(&str, &[&str])]) -> RawRow {
        RawRow {
            cells: cells.iter().map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect())).collect(),
        }
    }

    fn spec() -> TransformSpec {
        TransformSpec {
            id_column: "id".into(),
            primary_group: "artists".into(),
            joins: vec![JoinSpec { group: "popularity".into(), key: "artist_id".into() }],
            schema: vec!["name".into()],
        }
    }

    fn set(artists: Vec<RawRow>, pop: Vec<RawRow>) -> RawRowSet {
        RawRowSet {
            source_id: "music".into(),
            groups: vec![
                RowGroup { name: "artists".into(), rows: artists },
                RowGroup { name: "popularity".into(), rows: pop },
            ],
        }
    }

    #[test]
    fn joins_popularity_onto_artists() {
        let rs = set(
            vec![row(&[("id", &["a1"]), ("name", &["Beyonce"])]), row(&[("id", &["a2"]), ("name", &[])])],
            vec![row(&[("artist_id", &["a1"]), ("popularity", &["97"])])],
        );
        let es = transform_entities(&rs, &spec()).unwrap();
        assert_eq!(es.len(), 2);
        assert_eq!(es[0].id.to_string(), "music:a1");
        assert_eq!(es[0].values("popularity"), ["97"]);
        assert!(es[1].values("name").is_empty());
        assert!(es[1].predicates.contains_key("name"));
    }

    #[test]
    fn duplicate_ids() {
        let rs = set(vec![row(&[("id", &["m1"])]), row(&[("id", &["m1"])])], vec![]);
        let mut s = spec();
        s.schema.clear();
        assert!(matches!(transform_entities(&rs, &s), Err(IngestError::DuplicateEntityId(id)) if id == "m1"));
    }

    #[test]
    fn missing_id_column() {
        let rs = set(vec![row(&[("name", &["x"])])], vec![]);
        assert!(matches!(transform_entities(&rs, &spec()), Err(IngestError::MissingIdPredicate { row: 1, .. })));
    }

    #[test]
    fn empty_and_duplicate_names() {
        let rs = set(vec![row(&[("id", &["a"]), ("", &["x"])])], vec![]);
        assert!(matches!(transform_entities(&rs, &spec()), Err(IngestError::EmptyPredicateName { .. })));
        let rs = set(vec![row(&[("id", &["a"]), ("name", &["x"]), ("name", &["y"])])], vec![]);
        assert!(matches!(transform_entities(&rs, &spec()), Err(IngestError::DuplicatePredicateName { .. })));
    }

    #[test]
    fn schema_predicate_absent_everywhere() {
        let rs = set(vec![row(&[("id", &["a"]), ("title", &["x"])])], vec![]);
        assert!(matches!(transform_entities(&rs, &spec()), Err(IngestError::MissingSchemaPredicate(p)) if p == "name"));
    }
}
