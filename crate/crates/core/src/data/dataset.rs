//! Raw dataset storage and CSV ingestion.

use crate::data::schema::{ColumnKind, TabularSchema};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

/// One raw cell, prior to any encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawValue {
    Num(f64),
    Cat(String),
}

impl RawValue {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            RawValue::Num(v) => Some(*v),
            RawValue::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            RawValue::Cat(s) => Some(s),
            RawValue::Num(_) => None,
        }
    }
}

/// A raw row, aligned with the schema's column order.
pub type RawRow = Vec<RawValue>;

/// Parsed rows plus class labels, with a fully resolved schema (every
/// category list and the class list populated).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: TabularSchema,
    pub rows: Vec<RawRow>,
    /// Class code per row, indexing `schema.target.classes`.
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows selected by index, preserving order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.schema.class_count()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

/// Parse a CSV file against a schema. Headers are matched by name
/// (order-insensitive); extra columns are ignored. Numeric cells must parse
/// as decimals, categorical cells must be members of the category list, and
/// empty cells are rejected — there is no imputation.
///
/// Columns with an omitted category list (and an omitted class list) get
/// their levels inferred from the data in alphabetical order.
pub fn load_csv(path: &Path, schema: &TabularSchema) -> Result<Dataset> {
    schema.validate_names()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let headers = reader.headers()?.clone();
    let position = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("CSV header is missing column `{name}`")))
    };
    let col_pos: Vec<usize> = schema
        .columns
        .iter()
        .map(|c| position(&c.name))
        .collect::<Result<_>>()?;
    let target_pos = position(&schema.target.name)?;

    // First pass: raw string cells.
    let mut cells: Vec<Vec<String>> = Vec::new();
    let mut target_cells: Vec<String> = Vec::new();
    for (ri, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(schema.columns.len());
        for (ci, &pos) in col_pos.iter().enumerate() {
            let cell = record.get(pos).unwrap_or("");
            if cell.is_empty() {
                return Err(Error::Ingestion {
                    row: ri,
                    column: schema.columns[ci].name.clone(),
                    message: "missing value".into(),
                });
            }
            row.push(cell.to_string());
        }
        let t = record.get(target_pos).unwrap_or("");
        if t.is_empty() {
            return Err(Error::Ingestion {
                row: ri,
                column: schema.target.name.clone(),
                message: "missing target value".into(),
            });
        }
        target_cells.push(t.to_string());
        cells.push(row);
    }

    // Resolve omitted category/class lists alphabetically from the data.
    let mut resolved = schema.clone();
    for (ci, col) in resolved.columns.iter_mut().enumerate() {
        if col.kind.is_categorical() && col.categories.is_none() {
            let levels: BTreeSet<String> = cells.iter().map(|r| r[ci].clone()).collect();
            col.categories = Some(levels.into_iter().collect());
        }
    }
    if resolved.target.classes.is_none() {
        let levels: BTreeSet<String> = target_cells.iter().cloned().collect();
        resolved.target.classes = Some(levels.into_iter().collect());
    }
    resolved.validate_resolved()?;

    // Second pass: typed values.
    let classes = resolved.target.classes.as_ref().unwrap();
    let mut rows = Vec::with_capacity(cells.len());
    let mut labels = Vec::with_capacity(cells.len());
    for (ri, (row, target)) in cells.into_iter().zip(&target_cells).enumerate() {
        let mut typed = Vec::with_capacity(row.len());
        for (ci, cell) in row.into_iter().enumerate() {
            let col = &resolved.columns[ci];
            match col.kind {
                ColumnKind::Numeric => {
                    let v: f64 = cell.parse().map_err(|_| Error::Ingestion {
                        row: ri,
                        column: col.name.clone(),
                        message: format!("cannot parse `{cell}` as a number"),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Ingestion {
                            row: ri,
                            column: col.name.clone(),
                            message: format!("non-finite numeric value `{cell}`"),
                        });
                    }
                    typed.push(RawValue::Num(v));
                }
                ColumnKind::Categorical | ColumnKind::Binary => {
                    let cats = col.categories.as_ref().unwrap();
                    if !cats.iter().any(|c| c == &cell) {
                        return Err(Error::Ingestion {
                            row: ri,
                            column: col.name.clone(),
                            message: format!("unknown category `{cell}`"),
                        });
                    }
                    typed.push(RawValue::Cat(cell));
                }
            }
        }
        let y = classes
            .iter()
            .position(|c| c == target)
            .ok_or_else(|| Error::Ingestion {
                row: ri,
                column: resolved.target.name.clone(),
                message: format!("unknown class `{target}`"),
            })?;
        rows.push(typed);
        labels.push(y);
    }

    Ok(Dataset {
        schema: resolved,
        rows,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn schema() -> TabularSchema {
        TabularSchema::from_json(
            r#"{
                "columns": [
                    {"name": "age", "kind": "numeric"},
                    {"name": "job", "kind": "categorical", "categories": ["clerk", "miner"]}
                ],
                "target": {"name": "label", "classes": ["no", "yes"]}
            }"#,
        )
        .unwrap()
    }

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_three_rows() {
        let f = write_csv("age,job,label\n30,clerk,no\n40,miner,yes\n50,clerk,no\n");
        let ds = load_csv(f.path(), &schema()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.labels, vec![0, 1, 0]);
        assert_eq!(ds.rows[1][0], RawValue::Num(40.0));
        assert_eq!(ds.rows[1][1], RawValue::Cat("miner".into()));
    }

    #[test]
    fn header_order_is_insensitive() {
        let f = write_csv("label,job,age\nno,clerk,30\n");
        let ds = load_csv(f.path(), &schema()).unwrap();
        assert_eq!(ds.rows[0][0], RawValue::Num(30.0));
    }

    #[test]
    fn unknown_category_names_row_and_column() {
        let f = write_csv("age,job,label\n30,unknownCat,no\n");
        match load_csv(f.path(), &schema()) {
            Err(Error::Ingestion { row, column, .. }) => {
                assert_eq!(row, 0);
                assert_eq!(column, "job");
            }
            other => panic!("expected ingestion error, got {other:?}"),
        }
    }

    #[test]
    fn unparsable_numeric_is_rejected() {
        let f = write_csv("age,job,label\nabc,clerk,no\n");
        assert!(matches!(
            load_csv(f.path(), &schema()),
            Err(Error::Ingestion { .. })
        ));
    }

    #[test]
    fn missing_column_is_rejected() {
        let f = write_csv("age,label\n30,no\n");
        assert!(matches!(
            load_csv(f.path(), &schema()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn missing_value_is_rejected() {
        let f = write_csv("age,job,label\n30,,no\n");
        assert!(matches!(
            load_csv(f.path(), &schema()),
            Err(Error::Ingestion { .. })
        ));
    }

    #[test]
    fn infers_alphabetical_categories_when_omitted() {
        let json = r#"{
            "columns": [{"name": "job", "kind": "categorical"}],
            "target": {"name": "label"}
        }"#;
        let s = TabularSchema::from_json(json).unwrap();
        let f = write_csv("job,label\nminer,yes\nclerk,no\nclerk,yes\n");
        let ds = load_csv(f.path(), &s).unwrap();
        assert_eq!(
            ds.schema.columns[0].categories.as_deref().unwrap(),
            ["clerk".to_string(), "miner".to_string()]
        );
        assert_eq!(
            ds.schema.target.classes.as_deref().unwrap(),
            ["no".to_string(), "yes".to_string()]
        );
    }
}
