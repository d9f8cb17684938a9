use std::path::PathBuf;

use crate::microdata::Table;

pub use crate::synthetic::{random_table, RandomTableSpec};

pub fn clinic_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/clinic")
}

pub fn clinic_table() -> Table {
    let dir = clinic_dir();
    Table::load(&dir.join("data.csv"), &dir.join("mask.csv"), &dir.join("schema.csv")).expect("clinic fixture loads")
}
