//! Per-example prediction records of one model on one evaluation set.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Record {
    pub example_id: String,
    pub true_label: usize,
    pub pred_label: usize,
}

impl Record {
    pub fn new(example_id: impl Into<String>, true_label: usize, pred_label: usize) -> Self {
        Self { example_id: example_id.into(), true_label, pred_label }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LogError {
    #[error("log `{model_id}` has no records")]
    Empty { model_id: String },
    #[error("log `{model_id}` declares zero classes")]
    NoClasses { model_id: String },
    #[error("log `{model_id}`: record {index} (`{example_id}`) has label {label} >= n_classes {n_classes}")]
    LabelRange { model_id: String, index: usize, example_id: String, label: usize, n_classes: usize },
    #[error("log `{model_id}`: example `{example_id}` appears more than once")]
    DuplicateExample { model_id: String, example_id: String },
}

/// Predictions of one model, in file order.
///
/// Invariants (checked by [`PredictionLog::new`] and [`PredictionLog::validate`]):
/// records are non-empty, example ids are unique and every label is below
/// `n_classes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionLog {
    pub model_id: String,
    pub n_classes: usize,
    pub records: Vec<Record>,
}

impl PredictionLog {
    pub fn new(model_id: impl Into<String>, n_classes: usize, records: Vec<Record>) -> Result<Self, LogError> {
        let log = Self { model_id: model_id.into(), n_classes, records };
        log.validate()?;
        Ok(log)
    }

    /// Builds a log from `(example_id, true, pred)` triples.
    pub fn from_triples<S: Into<String>>(
        model_id: impl Into<String>,
        n_classes: usize,
        triples: impl IntoIterator<Item = (S, usize, usize)>,
    ) -> Result<Self, LogError> {
        let records = triples.into_iter().map(|(id, t, p)| Record::new(id, t, p)).collect();
        Self::new(model_id, n_classes, records)
    }

    pub fn validate(&self) -> Result<(), LogError> {
        if self.n_classes == 0 {
            return Err(LogError::NoClasses { model_id: self.model_id.clone() });
        }
        if self.records.is_empty() {
            return Err(LogError::Empty { model_id: self.model_id.clone() });
        }
        let mut seen = HashSet::with_capacity(self.records.len());
        for (index, r) in self.records.iter().enumerate() {
            for label in [r.true_label, r.pred_label] {
                if label >= self.n_classes {
                    return Err(LogError::LabelRange {
                        model_id: self.model_id.clone(),
                        index,
                        example_id: r.example_id.clone(),
                        label,
                        n_classes: self.n_classes,
                    });
                }
            }
            if !seen.insert(r.example_id.as_str()) {
                return Err(LogError::DuplicateExample {
                    model_id: self.model_id.clone(),
                    example_id: r.example_id.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Fraction of records whose prediction matches the true label.
    pub fn accuracy(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let correct = self.records.iter().filter(|r| r.true_label == r.pred_label).count();
        correct as f64 / self.records.len() as f64
    }

    /// Checks that `other` covers exactly the same example ids.
    pub fn same_examples(&self, other: &PredictionLog) -> bool {
        if self.records.len() != other.records.len() {
            return false;
        }
        let ids: HashSet<&str> = self.records.iter().map(|r| r.example_id.as_str()).collect();
        other.records.iter().all(|r| ids.contains(r.example_id.as_str()))
    }
}
