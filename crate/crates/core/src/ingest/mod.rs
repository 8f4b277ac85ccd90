//! Readers and writers for the on-disk formats.
//!
//! * prediction logs: UTF-8 CSV with header `example_id,true_label,pred_label`
//!   and optional `# model_id=...` / `# n_classes=...` lines before it;
//! * tensors: native `ACT1` files and a subset of NPY v1.0;
//! * population directories: every `*.csv` file, in file-name order;
//! * reports: `biascope-report/1` JSON, scatter CSVs and regression CSVs.
//!
//! All writers go through a temporary file in the destination directory
//! followed by a rename, so a failed write never leaves a partial file.
//! Readers never panic on malformed input; every failure is an
//! [`IngestError`].

mod population;
mod predictions;
mod report;
mod tensor;

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use population::{read_population, read_population_files};
pub use predictions::{
    format_predictions, harmonize_n_classes, parse_predictions, read_prediction_file, read_predictions,
    write_predictions, PredictionLogFile, PREDICTION_HEADER,
};
pub use report::{
    csv_field, format_number, read_report, regression_csv, report_from_json, report_to_json, scatter_csv, write_report,
    REGRESSION_HEADER, SCATTER_HEADER,
};
pub use tensor::{
    encode_act1, parse_act1, parse_npy, parse_tensor, read_tensor, tensor_to_activation, write_act1, DType, Tensor,
    TensorData, ACT1_MAGIC, NPY_MAGIC,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{origin}:{line}: {message}")]
    Parse { origin: String, line: usize, message: String },
    #[error("{origin}:{line}: label {label} is out of range for {n_classes} classes")]
    LabelRange { origin: String, line: usize, label: usize, n_classes: usize },
    #[error("{origin}:{line}: duplicate example id `{example_id}`")]
    DuplicateExample { origin: String, line: usize, example_id: String },
    #[error("{origin}: log has no records")]
    EmptyLog { origin: String },
    #[error("{origin}: cannot write {what}: {reason}")]
    Unwritable { origin: String, what: String, reason: String },
    #[error("{origin}: unrecognized magic bytes (expected ACT1 or NPY)")]
    BadMagic { origin: String },
    #[error("{origin}: unsupported NPY version {major}.{minor} (only 1.0)")]
    UnsupportedVersion { origin: String, major: u8, minor: u8 },
    #[error("{origin}: unsupported dtype {dtype}")]
    UnsupportedDtype { origin: String, dtype: String },
    #[error("{origin}: unsupported layout: {detail}")]
    UnsupportedLayout { origin: String, detail: String },
    #[error("{origin}: malformed header: {detail}")]
    BadHeader { origin: String, detail: String },
    #[error("{origin}: payload truncated: expected {expected} bytes, found {actual}")]
    TruncatedPayload { origin: String, expected: usize, actual: usize },
    #[error("{origin}: {extra} unexpected bytes after the payload")]
    TrailingBytes { origin: String, extra: usize },
    #[error("{origin}: non-finite value at element {index}")]
    NonFiniteValue { origin: String, index: usize },
    #[error("{origin}: unsupported layout: {ndim}-axis tensor; expected 2 axes (datapoints, neurons) or 4 axes (N, C, H, W)")]
    ActivationLayout { origin: String, ndim: usize },
    #[error("{origin}: {source}")]
    Activation { origin: String, source: crate::svcca::SvccaError },
    #[error("{}: misaligned population member: {reason}", file.display())]
    MisalignedPopulation { file: PathBuf, reason: String },
    #[error("{}: directory contains no prediction logs", dir.display())]
    EmptyPopulation { dir: PathBuf },
    #[error("{origin}: invalid JSON: {message}")]
    Json { origin: String, message: String },
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io { path: path.to_path_buf(), source }
    }
}

/// Writes `bytes` to `path` through a temporary sibling file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IngestError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".biascope-")
        .suffix(".tmp")
        .tempfile_in(dir)
        .map_err(|e| IngestError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| IngestError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| IngestError::io(path, e))?;
    tmp.persist(path).map_err(|e| IngestError::io(path, e.error))?;
    Ok(())
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>, IngestError> {
    std::fs::read(path).map_err(|e| IngestError::io(path, e))
}
