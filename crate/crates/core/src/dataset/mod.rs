//! Labeled dataset: entries, line-delimited JSON storage, distribution
//! statistics and seed-disjoint splits.

mod entry;
mod io;
mod split;
mod stats;

use thiserror::Error;

pub use entry::{build_entry, build_success_entry, DatasetEntry, Provenance, SCHEMA_VERSION};
pub use io::{
    dataset_stats, read_dataset, read_dataset_tolerant, sort_entries, to_jsonl, write_atomic, write_dataset,
    TolerantRead,
};
pub use split::split_by_seeds;
pub use stats::DatasetStats;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: schema version {found}, expected {expected}")]
    Version { line: usize, found: u64, expected: u32 },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("window would end at step {step}, before a full window is available")]
    WindowTooShort { step: usize },
}
