//! Drug data sources: NDC category search, prescription rates and label
//! documents.

mod labels;
mod ndc;
mod rates;

use thiserror::Error;

pub use labels::{DrugLabel, LabelSource};
pub use ndc::{NdcDirectory, NdcDrugRecord};
pub use rates::{PrescriptionRate, PrescriptionRates};

#[derive(Debug, Error)]
pub enum DrugDataError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("upstream error (status {status:?}): {message}")]
    Upstream { status: Option<u16>, message: String },
    #[error("no label found for {0}")]
    NotFound(String),
    #[error("prescriptions dataset missing: {0}")]
    DatasetMissing(String),
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Trim, case-fold and collapse internal whitespace.
pub fn normalize_name(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// File-system friendly form of a normalized name.
pub fn name_slug(name: &str) -> String {
    normalize_name(name)
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { '_' })
        .collect()
}
