//! Inputs shared by the benchmarks.

use lgb_core::synthetic::census_table;
use lgb_core::Table;

pub const SEED: u64 = 2024;

/// Census-like table with 20% of the semi-sensitive cells flagged.
pub fn census(rows: usize) -> Table {
    census_table(rows, 0.2, SEED).expect("census generator")
}
