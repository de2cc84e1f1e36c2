//! Labeled activation datasets, split isolation and per-dimension
//! standardization.

mod isolation;
mod record;
mod standardize;

pub use isolation::{
    check_access, enforce_over, enforce_split_isolation, AccessEntry, AccessTrace,
    IsolationReport, Purpose,
};
pub use record::{
    load_records, read_records, write_records, ActivationRecord, Dataset, MultiLayerDump, Split,
    SplitCounts,
};
pub use standardize::{Standardizer, DEFAULT_EPSILON};
