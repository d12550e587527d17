//! Dataset schema: column typing and target classes.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Binary,
}

impl ColumnKind {
    pub fn is_categorical(self) -> bool {
        matches!(self, ColumnKind::Categorical | ColumnKind::Binary)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Ordered category list for categorical/binary columns. When omitted,
    /// categories are inferred from the data in alphabetical order at load
    /// time, which keeps label codes deterministic across runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetSpec {
    pub name: String,
    /// Ordered class list; inferred alphabetically when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<String>>,
}

/// Column typing for a tabular dataset, loaded from a JSON document
/// `{columns: [{name, kind, categories?}], target: {name, classes}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabularSchema {
    pub columns: Vec<ColumnSpec>,
    pub target: TargetSpec,
}

impl TabularSchema {
    pub fn from_json(json: &str) -> Result<Self> {
        let schema: TabularSchema = serde_json::from_str(json)?;
        schema.validate_names()?;
        Ok(schema)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Name uniqueness and target/feature disjointness. Cardinalities are
    /// checked once categories are resolved.
    pub fn validate_names(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for col in &self.columns {
            if !seen.insert(col.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", col.name)));
            }
            if col.kind == ColumnKind::Numeric && col.categories.is_some() {
                return Err(Error::Schema(format!(
                    "numeric column `{}` must not list categories",
                    col.name
                )));
            }
        }
        if seen.contains(self.target.name.as_str()) {
            return Err(Error::Schema(format!(
                "target `{}` must not appear among feature columns",
                self.target.name
            )));
        }
        Ok(())
    }

    /// Cardinality rules once every category list is present: categorical
    /// needs at least two levels, binary exactly two.
    pub fn validate_resolved(&self) -> Result<()> {
        self.validate_names()?;
        for col in &self.columns {
            match col.kind {
                ColumnKind::Numeric => {}
                ColumnKind::Categorical | ColumnKind::Binary => {
                    let cats = col.categories.as_ref().ok_or_else(|| {
                        Error::Schema(format!("column `{}` has unresolved categories", col.name))
                    })?;
                    if cats.len() < 2 {
                        return Err(Error::Schema(format!(
                            "column `{}` needs cardinality >= 2, got {}",
                            col.name,
                            cats.len()
                        )));
                    }
                    if col.kind == ColumnKind::Binary && cats.len() != 2 {
                        return Err(Error::Schema(format!(
                            "binary column `{}` needs exactly 2 categories, got {}",
                            col.name,
                            cats.len()
                        )));
                    }
                    let mut seen = HashSet::new();
                    for c in cats {
                        if !seen.insert(c.as_str()) {
                            return Err(Error::Schema(format!(
                                "column `{}` lists duplicate category `{c}`",
                                col.name
                            )));
                        }
                    }
                }
            }
        }
        let classes = self
            .target
            .classes
            .as_ref()
            .ok_or_else(|| Error::Schema("target has unresolved classes".into()))?;
        if classes.len() < 2 {
            return Err(Error::Schema(format!(
                "target needs at least 2 classes, got {}",
                classes.len()
            )));
        }
        Ok(())
    }

    /// Indices of numeric columns, in schema order.
    pub fn numeric_columns(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ColumnKind::Numeric)
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of categorical (including binary) columns, in schema order.
    pub fn categorical_columns(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind.is_categorical())
            .map(|(i, _)| i)
            .collect()
    }

    /// Cardinality per categorical column, in schema order.
    pub fn cardinalities(&self) -> Vec<usize> {
        self.categorical_columns()
            .iter()
            .map(|&i| self.columns[i].categories.as_ref().map_or(0, Vec::len))
            .collect()
    }

    pub fn class_count(&self) -> usize {
        self.target.classes.as_ref().map_or(0, Vec::len)
    }
}
