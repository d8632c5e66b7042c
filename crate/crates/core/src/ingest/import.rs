use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use serde::de::{Deserializer, MapAccess, Visitor};
use serde::{Deserialize, Serialize};

use super::config::Artifact;
use super::{IngestError, RawRow, RawRowSet, RowGroup};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Tsv,
    Csv,
}

impl FromStr for Format {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json_lines" | "ndjson" => Ok(Format::Jsonl),
            "tsv" => Ok(Format::Tsv),
            "csv" => Ok(Format::Csv),
            other => Err(IngestError::UnknownFormat(other.to_string())),
        }
    }
}

/// Reads every artifact into its row group. Relative artifact paths resolve
/// against `base_dir`.
pub fn import_source(
    source_id: &str,
    default_format: &str,
    artifacts: &[Artifact],
    multi_value_separator: &str,
    base_dir: &Path,
) -> Result<RawRowSet, IngestError> {
    let mut set = RawRowSet { source_id: source_id.to_string(), groups: Vec::new() };
    for a in artifacts {
        let format: Format = a.format.as_deref().unwrap_or(default_format).parse()?;
        let path = base_dir.join(&a.path);
        let file = std::fs::File::open(&path)?;
        let rows = import_reader(format, BufReader::new(file), multi_value_separator, &path.display().to_string())?;
        match set.groups.iter_mut().find(|g| g.name == a.group) {
            Some(g) => g.rows.extend(rows),
            None => set.groups.push(RowGroup { name: a.group.clone(), rows }),
        }
    }
    Ok(set)
}

/// Parses one artifact. `label` names it in errors.
pub fn import_reader<R: Read>(
    format: Format,
    reader: R,
    multi_value_separator: &str,
    label: &str,
) -> Result<Vec<RawRow>, IngestError> {
    match format {
        Format::Jsonl => read_jsonl(BufReader::new(reader), label),
        Format::Tsv => read_delimited(reader, b'\t', multi_value_separator, label),
        Format::Csv => read_delimited(reader, b',', multi_value_separator, label),
    }
}

fn read_delimited<R: Read>(reader: R, delimiter: u8, sep: &str, label: &str) -> Result<Vec<RawRow>, IngestError> {
    let mut rdr =
        csv::ReaderBuilder::new().delimiter(delimiter).has_headers(true).quoting(delimiter == b',').from_reader(reader);
    let fmt_err = |e: csv::Error| IngestError::FormatError {
        path: label.to_string(),
        line: e.position().map(|p| p.line() as usize).unwrap_or(0),
        message: e.to_string(),
    };
    let headers: Vec<String> = rdr.headers().map_err(fmt_err)?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(fmt_err)?;
        let cells = headers
            .iter()
            .zip(rec.iter())
            .map(|(h, v)| {
                let values = if v.is_empty() {
                    Vec::new()
                } else if sep.is_empty() {
                    vec![v.to_string()]
                } else {
                    v.split(sep).map(str::to_string).collect()
                };
                (h.clone(), values)
            })
            .collect();
        rows.push(RawRow { cells });
    }
    Ok(rows)
}

/// A JSON object read without collapsing repeated keys.
struct OrderedObject(Vec<(String, serde_json::Value)>);

impl<'de> Deserialize<'de> for OrderedObject {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = OrderedObject;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, serde_json::Value>()? {
                    out.push((k, v));
                }
                Ok(OrderedObject(out))
            }
        }
        d.deserialize_map(V)
    }
}

fn scalar(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::Null => None,
        serde_json::Value::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

fn read_jsonl<R: BufRead>(reader: R, label: &str) -> Result<Vec<RawRow>, IngestError> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| IngestError::FormatError { path: label.to_string(), line: i + 1, message };
        let obj: OrderedObject = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        let mut cells = Vec::new();
        for (k, v) in obj.0 {
            match v {
                serde_json::Value::Array(items) if items.iter().any(|x| x.is_object()) => {
                    // array of relationship nodes -> parallel `k.field` columns
                    let mut fields: Vec<String> = Vec::new();
                    for item in &items {
                        let node = item.as_object().ok_or_else(|| err(format!("`{k}` mixes nodes and scalars")))?;
                        for f in node.keys() {
                            if !fields.contains(f) {
                                fields.push(f.clone());
                            }
                        }
                    }
                    for f in fields {
                        let values =
                            items.iter().map(|item| item.get(&f).and_then(scalar).unwrap_or_default()).collect();
                        cells.push((format!("{k}.{f}"), values));
                    }
                }
                serde_json::Value::Array(items) => cells.push((k, items.iter().filter_map(scalar).collect())),
                serde_json::Value::Object(_) => return Err(err(format!("`{k}` must be a scalar or an array"))),
                other => cells.push((k, scalar(&other).into_iter().collect())),
            }
        }
        rows.push(RawRow { cells });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_with_header_and_two_rows() {
        let data = "id\ttitle\nm1\tAlien\nm2\tHeat|Heat (1995)\n";
        let rows = import_reader(Format::Tsv, data.as_bytes(), "|", "t.tsv").unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].get("title").unwrap(), ["Heat", "Heat (1995)"]);
    }

    #[test]
    fn malformed_tsv_line_reports_its_number() {
        let mut data = String::from("id\ttitle\n");
        for i in 2..=6 {
            data.push_str(&format!("m{i}\tT{i}\n"));
        }
        data.push_str("m7\tT7\textra\n");
        match import_reader(Format::Tsv, data.as_bytes(), "|", "t.tsv") {
            Err(IngestError::FormatError { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_jsonl_line_reports_its_number() {
        let data = "{\"id\":\"a\"}\n{\"id\":\"b\"}\n{oops\n";
        match import_reader(Format::Jsonl, data.as_bytes(), "|", "a.jsonl") {
            Err(IngestError::FormatError { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn jsonl_nodes_become_parallel_columns() {
        let data = r#"{"id":"p1","education":[{"school":"UW","year":2005},{"school":"MIT","degree":"BS"}],"tags":["a","b"],"x":null}"#;
        let rows = import_reader(Format::Jsonl, data.as_bytes(), "|", "p.jsonl").unwrap();
        let r = &rows[0];
        assert_eq!(r.get("education.school").unwrap(), ["UW", "MIT"]);
        assert_eq!(r.get("education.year").unwrap(), ["2005", ""]);
        assert_eq!(r.get("education.degree").unwrap(), ["", "BS"]);
        assert_eq!(r.get("tags").unwrap(), ["a", "b"]);
        assert!(r.get("x").unwrap().is_empty());
    }

    #[test]
    fn jsonl_keeps_duplicate_keys() {
        let rows = import_reader(Format::Jsonl, r#"{"id":"a","n":"x","n":"y"}"#.as_bytes(), "|", "d").unwrap();
        assert_eq!(rows[0].cells.len(), 3);
    }

    #[test]
    fn unknown_format() {
        assert!(matches!("parquet".parse::<Format>(), Err(IngestError::UnknownFormat(_))));
    }
}
