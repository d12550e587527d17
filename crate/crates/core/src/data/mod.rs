//! Dataset schema, CSV ingestion, preprocessing, stratified splitting, and
//! inverse transforms back to raw rows.
//!
//! Statistics are fitted on the training split only; validation and test
//! splits reuse them. Missing values are rejected at ingestion — there is no
//! imputation.

mod dataset;
mod preprocess;
mod schema;
mod split;

pub use dataset::{load_csv, Dataset, RawRow, RawValue};
pub use preprocess::{
    check_compatible, fit_transform, CategoryMap, EncodedDataset, NumericStats, Preprocessor,
    SplitTag,
};
pub use schema::{ColumnKind, ColumnSpec, TabularSchema, TargetSpec};
pub use split::{allocate_class, stratified_split, SplitManifest};

#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    fn dataset(class_sizes: Vec<usize>) -> Dataset {
        let classes: Vec<String> = (0..class_sizes.len()).map(|c| format!("c{c}")).collect();
        let schema = TabularSchema::from_json(&format!(
            r#"{{
                "columns": [{{"name": "x", "kind": "numeric"}}],
                "target": {{"name": "y", "classes": {}}}
            }}"#,
            serde_json::to_string(&classes).unwrap()
        ))
        .unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, &n) in class_sizes.iter().enumerate() {
            for i in 0..n {
                rows.push(vec![RawValue::Num(i as f64 + c as f64 * 1000.0)]);
                labels.push(c);
            }
        }
        Dataset {
            schema,
            rows,
            labels,
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn split_is_partition_and_stratified(
            sizes in proptest::collection::vec(3usize..120, 1..4),
            seed in any::<u64>(),
        ) {
            let ds = dataset(sizes.clone());
            let m = stratified_split(&ds, (0.70, 0.10, 0.20), seed).unwrap();
            let mut all: Vec<usize> = m.train.iter().chain(&m.val).chain(&m.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
            // Per-class proportions within one sample of the global ratio.
            for (c, &n) in sizes.iter().enumerate() {
                let got = [
                    m.train.iter().filter(|&&i| ds.labels[i] == c).count(),
                    m.val.iter().filter(|&&i| ds.labels[i] == c).count(),
                    m.test.iter().filter(|&&i| ds.labels[i] == c).count(),
                ];
                for (share, got) in [0.70, 0.10, 0.20].iter().zip(got) {
                    prop_assert!((got as f64 - share * n as f64).abs() < 1.0);
                }
            }
        }

        #[test]
        fn transform_round_trip(
            values in proptest::collection::vec(-1e6f64..1e6, 3..40),
            codes in proptest::collection::vec(0usize..3, 3..40),
        ) {
            let n = values.len().min(codes.len());
            let schema = TabularSchema::from_json(
                r#"{
                    "columns": [
                        {"name": "x", "kind": "numeric"},
                        {"name": "c", "kind": "categorical", "categories": ["a", "b", "c"]}
                    ],
                    "target": {"name": "y", "classes": ["n", "p"]}
                }"#,
            ).unwrap();
            let cats = ["a", "b", "c"];
            let rows: Vec<RawRow> = (0..n)
                .map(|i| vec![RawValue::Num(values[i]), RawValue::Cat(cats[codes[i]].into())])
                .collect();
            let ds = Dataset { schema, rows, labels: vec![0; n] };
            match fit_transform(&ds) {
                Ok((prep, enc)) => {
                    let back = prep.inverse_transform(&enc).unwrap();
                    for (orig, rec) in ds.rows.iter().zip(&back) {
                        let (a, b) = (orig[0].as_num().unwrap(), rec[0].as_num().unwrap());
                        let scale = a.abs().max(1.0);
                        prop_assert!((a - b).abs() / scale < 1e-9);
                        prop_assert_eq!(&orig[1], &rec[1]);
                    }
                }
                // Constant numeric columns are legitimately rejected.
                Err(crate::error::Error::Fit(_)) => {}
                Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
            }
        }
    }
}
