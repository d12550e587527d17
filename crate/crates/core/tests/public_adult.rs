//! Optional ingestion check against the public census-income dataset.
//!
//! Run with the CSV prepared as described in configs/README.md:
//!
//! ```sh
//! TABATTACK_ADULT_CSV=/path/to/adult.csv \
//!     cargo test -p tabattack --test public_adult -- --ignored
//! ```

use std::path::PathBuf;
use tabattack::data::{load_csv, TabularSchema};

#[test]
#[ignore = "needs the externally downloaded census CSV"]
fn adult_csv_loads_with_expected_row_count() {
    let Ok(path) = std::env::var("TABATTACK_ADULT_CSV") else {
        panic!("set TABATTACK_ADULT_CSV to the prepared CSV");
    };
    let schema_path: PathBuf = [
        env!("CARGO_MANIFEST_DIR"),
        "../../configs/adult/schema.json",
    ]
    .iter()
    .collect();
    let schema = TabularSchema::from_path(&schema_path).unwrap();
    let ds = load_csv(PathBuf::from(path).as_path(), &schema).unwrap();
    // The standard incomplete-rows-dropped variant.
    assert_eq!(ds.len(), 30_162);
    assert_eq!(ds.schema.numeric_columns().len(), 4);
    assert_eq!(ds.schema.categorical_columns().len(), 8);
    assert_eq!(ds.schema.class_count(), 2);
}
