//! Datasets, scenario construction for the three continual federated
//! learning settings, and IDX image ingestion.

mod blobs;
mod dataset;
mod idx;
mod partition;

pub use blobs::{blob_class_centers, make_blobs, BLOB_NOISE_SIGMA};
pub use dataset::{Dataset, Example};
pub use idx::{downsample_avgpool, load_idx};
pub use partition::{
    partition_class_inc_iid, partition_class_inc_noniid, partition_domain_inc,
    partition_domain_inc_with_order, train_test_split, verify_schedule, ClientSchedule, Scenario,
};

use thiserror::Error;

/// Errors produced by dataset construction and partitioning.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("format error in {field}: {message}")]
    Format { field: &'static str, message: String },
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
