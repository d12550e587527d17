//! Z-score standardisation and label encoding, fitted on the training split
//! only, plus the inverse transform back to raw rows.

use crate::data::dataset::{Dataset, RawRow, RawValue};
use crate::data::schema::TabularSchema;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

/// Per-column statistics and code maps. The z-score uses the population
/// standard deviation (no Bessel correction), fixed for reproducibility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Preprocessor {
    /// (schema column index, mean, std, observed min, observed max) per
    /// numeric column, in schema order.
    pub numeric: Vec<NumericStats>,
    /// (schema column index, ordered categories) per categorical column.
    pub categorical: Vec<CategoryMap>,
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NumericStats {
    pub column: usize,
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryMap {
    pub column: usize,
    pub name: String,
    pub categories: Vec<String>,
}

/// Encoded view of a split: z-scored numerics, integer label codes per
/// categorical column (binary columns encode as {0, 1}), class indices.
#[derive(Debug, Clone)]
pub struct EncodedDataset {
    /// `n × d` z-scored numeric matrix.
    pub num: Tensor,
    /// `n` rows of `m` category codes.
    pub cat: Vec<Vec<usize>>,
    pub y: Vec<usize>,
    pub split: SplitTag,
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn num_dim(&self) -> usize {
        self.num.shape()[1]
    }

    pub fn cat_dim(&self) -> usize {
        self.cat.first().map_or(0, Vec::len)
    }

    /// Rows selected by position within this split.
    pub fn subset(&self, indices: &[usize]) -> Result<EncodedDataset> {
        let d = self.num_dim();
        let mut num = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            num.extend_from_slice(&self.num.row(i));
        }
        Ok(EncodedDataset {
            num: Tensor::new(vec![indices.len(), d], num)?,
            cat: indices.iter().map(|&i| self.cat[i].clone()).collect(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            split: self.split,
        })
    }
}

impl Preprocessor {
    /// Fit statistics on the training split. Constant numeric columns are a
    /// fit error: their z-score is undefined.
    pub fn fit(train: &Dataset) -> Result<Self> {
        let schema = &train.schema;
        if train.is_empty() {
            return Err(Error::Fit("cannot fit on an empty training split".into()));
        }
        let mut numeric = Vec::new();
        for &ci in &schema.numeric_columns() {
            let values: Vec<f64> = train
                .rows
                .iter()
                .map(|r| r[ci].as_num().expect("schema-typed numeric cell"))
                .collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            if std <= 0.0 {
                return Err(Error::Fit(format!(
                    "numeric column `{}` is constant on the training split",
                    schema.columns[ci].name
                )));
            }
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            numeric.push(NumericStats {
                column: ci,
                name: schema.columns[ci].name.clone(),
                mean,
                std,
                min,
                max,
            });
        }
        let categorical = schema
            .categorical_columns()
            .iter()
            .map(|&ci| CategoryMap {
                column: ci,
                name: schema.columns[ci].name.clone(),
                categories: schema.columns[ci].categories.clone().unwrap(),
            })
            .collect();
        Ok(Self {
            numeric,
            categorical,
            classes: schema.target.classes.clone().unwrap(),
        })
    }

    pub fn num_dim(&self) -> usize {
        self.numeric.len()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.categorical
            .iter()
            .map(|c| c.categories.len())
            .collect()
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// Encode a dataset with the fitted statistics.
    pub fn transform(&self, data: &Dataset, split: SplitTag) -> Result<EncodedDataset> {
        let n = data.len();
        let d = self.numeric.len();
        let mut num = Vec::with_capacity(n * d);
        let mut cat = Vec::with_capacity(n);
        for row in &data.rows {
            let (nums, cats) = self.encode_row(row)?;
            num.extend(nums);
            cat.push(cats);
        }
        Ok(EncodedDataset {
            num: Tensor::new(vec![n, d], num)?,
            cat,
            y: data.labels.clone(),
            split,
        })
    }

    /// Encode one raw row into (z-scored numerics, category codes).
    pub fn encode_row(&self, row: &RawRow) -> Result<(Vec<f64>, Vec<usize>)> {
        let mut nums = Vec::with_capacity(self.numeric.len());
        for stat in &self.numeric {
            let v = row[stat.column].as_num().ok_or_else(|| {
                Error::Fit(format!("column `{}` holds a non-numeric cell", stat.name))
            })?;
            nums.push((v - stat.mean) / stat.std);
        }
        let mut cats = Vec::with_capacity(self.categorical.len());
        for map in &self.categorical {
            let s = row[map.column].as_cat().ok_or_else(|| {
                Error::Fit(format!(
                    "column `{}` holds a non-categorical cell",
                    map.name
                ))
            })?;
            let code = map.categories.iter().position(|c| c == s).ok_or_else(|| {
                Error::Decode(format!("unknown category `{s}` in `{}`", map.name))
            })?;
            cats.push(code);
        }
        Ok((nums, cats))
    }

    /// Map z-scored numerics and category codes back to a raw row in schema
    /// column order.
    pub fn inverse_row(&self, nums: &[f64], cats: &[usize]) -> Result<RawRow> {
        if nums.len() != self.numeric.len() || cats.len() != self.categorical.len() {
            return Err(Error::Decode(format!(
                "inverse_row: got {}/{} values for {}/{} columns",
                nums.len(),
                cats.len(),
                self.numeric.len(),
                self.categorical.len()
            )));
        }
        let width = self.numeric.len() + self.categorical.len();
        let mut row: RawRow = vec![RawValue::Num(0.0); width];
        for (stat, &z) in self.numeric.iter().zip(nums) {
            row[stat.column] = RawValue::Num(z * stat.std + stat.mean);
        }
        for (map, &code) in self.categorical.iter().zip(cats) {
            let cat = map.categories.get(code).ok_or_else(|| {
                Error::Decode(format!(
                    "code {code} out of range [0, {}) for `{}`",
                    map.categories.len(),
                    map.name
                ))
            })?;
            row[map.column] = RawValue::Cat(cat.clone());
        }
        Ok(row)
    }

    /// Inverse transform of a whole encoded split.
    pub fn inverse_transform(&self, encoded: &EncodedDataset) -> Result<Vec<RawRow>> {
        (0..encoded.len())
            .map(|i| self.inverse_row(&encoded.num.row(i), &encoded.cat[i]))
            .collect()
    }
}

/// Fit on the training split and immediately encode it.
pub fn fit_transform(train: &Dataset) -> Result<(Preprocessor, EncodedDataset)> {
    let prep = Preprocessor::fit(train)?;
    let encoded = prep.transform(train, SplitTag::Train)?;
    Ok((prep, encoded))
}

/// Schema apartness check used before mixing artifacts trained separately.
pub fn check_compatible(prep: &Preprocessor, schema: &TabularSchema) -> Result<()> {
    let num_cols = schema.numeric_columns();
    let cat_cols = schema.categorical_columns();
    if prep.numeric.len() != num_cols.len() || prep.categorical.len() != cat_cols.len() {
        return Err(Error::Config(
            "preprocessor does not match the schema's column layout".into(),
        ));
    }
    Ok(())
}
