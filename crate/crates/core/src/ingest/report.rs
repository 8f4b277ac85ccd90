use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{read_bytes, write_atomic, IngestError};
use crate::analysis::{BiasReport, LayerRegression, ModelReport};
use crate::scalar::Real;

pub const SCATTER_HEADER: &str = "class,delta_fpr,delta_fnr";
pub const REGRESSION_HEADER: &str = "model_id,layer,svcca_distance,cev,sde";

/// Shortest decimal form that reads back to the same `f64`.
pub fn format_number<T: Real>(x: T) -> String {
    format!("{}", x.as_f64())
}

/// Pretty-printed JSON with a trailing newline.
pub fn report_to_json<T: Serialize>(report: &BiasReport<T>) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
    s.push('\n');
    s
}

pub fn report_from_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<BiasReport<T>, IngestError> {
    serde_json::from_str(text).map_err(|e| IngestError::Json { origin: origin.to_string(), message: e.to_string() })
}

pub fn write_report<T: Serialize>(report: &BiasReport<T>, path: &Path) -> Result<(), IngestError> {
    write_atomic(path, report_to_json(report).as_bytes())
}

pub fn read_report<T: DeserializeOwned>(path: &Path) -> Result<BiasReport<T>, IngestError> {
    let origin = path.display().to_string();
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| IngestError::Json { origin: origin.clone(), message: e.to_string() })?;
    report_from_json(text, &origin)
}

/// `class,delta_fpr,delta_fnr` rows of one baseline/model pair.
pub fn scatter_csv<T: Real>(model: &ModelReport<T>) -> String {
    let mut out = String::from(SCATTER_HEADER);
    out.push('\n');
    for (class, d) in model.deltas.iter().enumerate() {
        let _ = writeln!(out, "{class},{},{}", format_number(d.delta_fpr), format_number(d.delta_fnr));
    }
    out
}

/// Quotes a text field when it contains a separator, quote or line break.
pub fn csv_field(s: &str) -> std::borrow::Cow<'_, str> {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\"")).into()
    } else {
        s.into()
    }
}

/// `model_id,layer,svcca_distance,cev,sde` rows of one layer.
pub fn regression_csv<T: Real>(layer: &LayerRegression<T>) -> String {
    let mut out = String::from(REGRESSION_HEADER);
    out.push('\n');
    for p in &layer.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            csv_field(&p.model_id),
            csv_field(&p.layer),
            format_number(p.svcca_distance),
            format_number(p.cev),
            format_number(p.sde)
        );
    }
    out
}
