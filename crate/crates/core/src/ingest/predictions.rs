use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{read_bytes, write_atomic, IngestError};
use crate::log::{PredictionLog, Record};

pub const PREDICTION_HEADER: &str = "example_id,true_label,pred_label";

/// A parsed prediction-log file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionLogFile {
    pub path: Option<PathBuf>,
    /// `None` when the file had no `# n_classes=` line and the count was
    /// inferred from the largest label.
    pub declared_n_classes: Option<usize>,
    pub log: PredictionLog,
}

fn parse_label(field: &str) -> Option<usize> {
    if field.is_empty() || !field.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    field.parse().ok()
}

/// Parses a prediction log from raw bytes.
///
/// `origin` names the source in error messages; `default_model_id` is used
/// when the file has no `# model_id=` line.
pub fn parse_predictions(bytes: &[u8], origin: &str, default_model_id: &str) -> Result<PredictionLogFile, IngestError> {
    let parse_err = |line: usize, message: String| IngestError::Parse { origin: origin.to_string(), line, message };
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = 1 + bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count();
        parse_err(line, "invalid UTF-8".to_string())
    })?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);

    let mut model_id: Option<String> = None;
    let mut declared: Option<usize> = None;
    let mut header_seen = false;
    let mut records = Vec::new();
    let mut lines_of_records = Vec::new();
    let mut last_line = 0;

    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        if !header_seen {
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim_start();
                if let Some(value) = comment.strip_prefix("model_id=") {
                    if model_id.is_some() {
                        return Err(parse_err(line_no, "model_id given twice".into()));
                    }
                    if value.is_empty() {
                        return Err(parse_err(line_no, "empty model_id".into()));
                    }
                    model_id = Some(value.to_string());
                } else if let Some(value) = comment.strip_prefix("n_classes=") {
                    if declared.is_some() {
                        return Err(parse_err(line_no, "n_classes given twice".into()));
                    }
                    match parse_label(value.trim()) {
                        Some(n) if n > 0 => declared = Some(n),
                        _ => return Err(parse_err(line_no, format!("invalid n_classes `{value}`"))),
                    }
                }
                continue;
            }
            if line != PREDICTION_HEADER {
                return Err(parse_err(line_no, format!("expected header `{PREDICTION_HEADER}`")));
            }
            header_seen = true;
            continue;
        }

        let mut fields = line.split(',');
        let (Some(id), Some(t), Some(p), None) = (fields.next(), fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(line_no, "expected 3 comma-separated fields".into()));
        };
        if id.is_empty() {
            return Err(parse_err(line_no, "empty example_id".into()));
        }
        let t = parse_label(t).ok_or_else(|| parse_err(line_no, format!("invalid true_label `{t}`")))?;
        let p = parse_label(p).ok_or_else(|| parse_err(line_no, format!("invalid pred_label `{p}`")))?;
        records.push(Record::new(id, t, p));
        lines_of_records.push(line_no);
    }

    if !header_seen {
        return Err(parse_err(last_line.max(1), format!("missing header `{PREDICTION_HEADER}`")));
    }
    if records.is_empty() {
        return Err(IngestError::EmptyLog { origin: origin.to_string() });
    }

    let max_label = records.iter().map(|r| r.true_label.max(r.pred_label)).max().unwrap_or(0);
    let n_classes = match declared {
        Some(n) => n,
        None => max_label.checked_add(1).ok_or_else(|| parse_err(last_line, "label too large".into()))?,
    };

    let mut seen = HashSet::with_capacity(records.len());
    for (r, &line) in records.iter().zip(&lines_of_records) {
        for label in [r.true_label, r.pred_label] {
            if label >= n_classes {
                return Err(IngestError::LabelRange { origin: origin.to_string(), line, label, n_classes });
            }
        }
        if !seen.insert(r.example_id.as_str()) {
            return Err(IngestError::DuplicateExample {
                origin: origin.to_string(),
                line,
                example_id: r.example_id.clone(),
            });
        }
    }

    let log = PredictionLog {
        model_id: model_id.unwrap_or_else(|| default_model_id.to_string()),
        n_classes,
        records,
    };
    Ok(PredictionLogFile { path: None, declared_n_classes: declared, log })
}

pub fn read_prediction_file(path: &Path) -> Result<PredictionLogFile, IngestError> {
    let bytes = read_bytes(path)?;
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut file = parse_predictions(&bytes, &path.display().to_string(), &stem)?;
    file.path = Some(path.to_path_buf());
    Ok(file)
}

/// Reads a prediction log; the model id defaults to the file stem.
pub fn read_predictions(path: &Path) -> Result<PredictionLog, IngestError> {
    Ok(read_prediction_file(path)?.log)
}

/// Serializes a log. Always emits both metadata lines.
pub fn format_predictions(log: &PredictionLog) -> Result<String, IngestError> {
    let unwritable = |what: String, reason: &str| IngestError::Unwritable {
        origin: log.model_id.clone(),
        what,
        reason: reason.to_string(),
    };
    log.validate().map_err(|e| unwritable("log".into(), &e.to_string()))?;
    if log.model_id.is_empty() || log.model_id.contains(['\n', '\r']) {
        return Err(unwritable("model_id".into(), "must be non-empty and single-line"));
    }
    let mut out = String::with_capacity(32 + log.records.len() * 16);
    let _ = writeln!(out, "# model_id={}", log.model_id);
    let _ = writeln!(out, "# n_classes={}", log.n_classes);
    out.push_str(PREDICTION_HEADER);
    out.push('\n');
    for r in &log.records {
        if r.example_id.contains([',', '\n', '\r']) {
            return Err(unwritable(
                format!("example id `{}`", r.example_id.escape_debug()),
                "must not contain commas or line breaks",
            ));
        }
        let _ = writeln!(out, "{},{},{}", r.example_id, r.true_label, r.pred_label);
    }
    Ok(out)
}

pub fn write_predictions(log: &PredictionLog, path: &Path) -> Result<(), IngestError> {
    write_atomic(path, format_predictions(log)?.as_bytes())
}

/// Raises inferred class counts to the largest count among `files`.
///
/// Files with an explicit `# n_classes=` line must agree; on conflict the
/// index of the offending file is returned along with a reason.
pub fn harmonize_n_classes(files: &mut [PredictionLogFile]) -> Result<(), (usize, String)> {
    let declared: Vec<(usize, usize)> =
        files.iter().enumerate().filter_map(|(i, f)| f.declared_n_classes.map(|n| (i, n))).collect();
    if let Some(&(_, first)) = declared.first() {
        if let Some(&(i, n)) = declared.iter().find(|(_, n)| *n != first) {
            return Err((i, format!("declares {n} classes, another file declares {first}")));
        }
    }
    let target = match declared.first() {
        Some(&(_, n)) => n,
        None => files.iter().map(|f| f.log.n_classes).max().unwrap_or(0),
    };
    for (i, f) in files.iter_mut().enumerate() {
        if f.log.n_classes > target {
            return Err((i, format!("uses {} classes, more than the declared {target}", f.log.n_classes)));
        }
        f.log.n_classes = target;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_valid_file() {
        let text = "example_id,true_label,pred_label\na,0,1\nb,1,1\nc,2,0\n";
        let f = parse_predictions(text.as_bytes(), "t.csv", "t").unwrap();
        assert_eq!(f.log.records.len(), 3);
        assert_eq!(f.log.model_id, "t");
        assert_eq!(f.log.n_classes, 3);
        assert_eq!(f.declared_n_classes, None);
    }

    #[test]
    fn metadata_and_crlf() {
        let text = "\u{feff}# model_id=resnet-45\r\n# n_classes=10\r\n# free comment\r\nexample_id,true_label,pred_label\r\nx,9,0\r\n\r\n";
        let f = parse_predictions(text.as_bytes(), "t.csv", "t").unwrap();
        assert_eq!(f.log.model_id, "resnet-45");
        assert_eq!(f.log.n_classes, 10);
        assert_eq!(f.declared_n_classes, Some(10));
        assert_eq!(f.log.records, vec![Record::new("x", 9, 0)]);
    }

    #[test]
    fn label_range_names_the_line() {
        let text = "# n_classes=3\nexample_id,true_label,pred_label\na,0,1\nb,1,3\n";
        match parse_predictions(text.as_bytes(), "t.csv", "t") {
            Err(IngestError::LabelRange { line: 4, label: 3, n_classes: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors() {
        let cases: &[(&str, usize)] = &[
            ("", 1),
            ("a,b,c\n", 1),
            ("example_id,true_label,pred_label\na,0\n", 2),
            ("example_id,true_label,pred_label\na,0,1,2\n", 2),
            ("example_id,true_label,pred_label\na,-1,1\n", 2),
            ("example_id,true_label,pred_label\na,+1,1\n", 2),
            ("example_id,true_label,pred_label\n,0,1\n", 2),
            ("# n_classes=0\nexample_id,true_label,pred_label\na,0,0\n", 1),
            ("# n_classes=x\nexample_id,true_label,pred_label\na,0,0\n", 1),
            ("example_id,true_label,pred_label\na,0,99999999999999999999999\n", 2),
        ];
        for (text, line) in cases {
            match parse_predictions(text.as_bytes(), "t", "t") {
                Err(IngestError::Parse { line: l, .. }) => assert_eq!(l, *line, "{text:?}"),
                other => panic!("{text:?}: unexpected {other:?}"),
            }
        }
        assert!(matches!(
            parse_predictions(b"example_id,true_label,pred_label\n", "t", "t"),
            Err(IngestError::EmptyLog { .. })
        ));
        assert!(matches!(
            parse_predictions(b"example_id,true_label,pred_label\na,0,0\na,1,1\n", "t", "t"),
            Err(IngestError::DuplicateExample { line: 3, .. })
        ));
        assert!(matches!(parse_predictions(b"\xff\xfe", "t", "t"), Err(IngestError::Parse { line: 1, .. })));
    }

    #[test]
    fn writer_rejects_unrepresentable_ids() {
        let log = PredictionLog::from_triples("m", 2, [("a,b", 0, 0)]).unwrap();
        assert!(matches!(format_predictions(&log), Err(IngestError::Unwritable { .. })));
        let log = PredictionLog::from_triples("m\nx", 2, [("a", 0, 0)]).unwrap();
        assert!(matches!(format_predictions(&log), Err(IngestError::Unwritable { .. })));
    }

    #[test]
    fn harmonize() {
        let mk = |n, declared| PredictionLogFile {
            path: None,
            declared_n_classes: declared,
            log: PredictionLog::from_triples("m", n, [("a", 0, n - 1)]).unwrap(),
        };
        let mut files = vec![mk(3, None), mk(5, None)];
        harmonize_n_classes(&mut files).unwrap();
        assert!(files.iter().all(|f| f.log.n_classes == 5));

        let mut files = vec![mk(3, None), mk(4, Some(4))];
        harmonize_n_classes(&mut files).unwrap();
        assert!(files.iter().all(|f| f.log.n_classes == 4));

        let mut files = vec![mk(3, Some(3)), mk(4, Some(4))];
        assert_eq!(harmonize_n_classes(&mut files).unwrap_err().0, 1);
    }
}
