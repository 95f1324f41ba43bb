use std::collections::BTreeSet;

use super::DatasetEntry;

/// Partitions entries into (train, test) by scene seed.
pub fn split_by_seeds(
    entries: Vec<DatasetEntry>,
    test_seeds: &BTreeSet<u64>,
) -> (Vec<DatasetEntry>, Vec<DatasetEntry>) {
    entries.into_iter().partition(|e| !test_seeds.contains(&e.provenance.seed))
}
