//! Model populations, modal labels and pruning identified exemplars (PIEs).

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log::{LogError, PredictionLog};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PopulationError {
    #[error("population `{population_id}` has no member logs")]
    Empty { population_id: String },
    #[error("malformed member log: {0}")]
    MalformedLog(#[from] LogError),
    #[error("misaligned population: member `{member}` {reason}")]
    MisalignedPopulation { member: String, reason: String },
}

/// Logs of several models over one evaluation set, with their per-example
/// plurality vote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPopulation {
    pub population_id: String,
    pub logs: Vec<PredictionLog>,
    /// Plurality prediction per example id.
    pub modal_labels: BTreeMap<String, usize>,
    /// Examples whose plurality was tied; the smallest tied class won.
    pub tie_examples: BTreeSet<String>,
}

impl ModelPopulation {
    /// Validates alignment of `logs` and computes modal labels.
    pub fn new(population_id: impl Into<String>, logs: Vec<PredictionLog>) -> Result<Self, PopulationError> {
        let mut population = Self {
            population_id: population_id.into(),
            logs,
            modal_labels: BTreeMap::new(),
            tie_examples: BTreeSet::new(),
        };
        modal_labels(&mut population)?;
        Ok(population)
    }

    /// Population with a single member, for direct model-to-model comparison.
    pub fn singleton(log: PredictionLog) -> Result<Self, PopulationError> {
        let id = log.model_id.clone();
        Self::new(id, vec![log])
    }

    pub fn len(&self) -> usize {
        self.logs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logs.is_empty()
    }
}

/// Checks that every member covers the same example ids and class count as
/// the first one.
pub(crate) fn check_alignment(population_id: &str, logs: &[PredictionLog]) -> Result<(), PopulationError> {
    let first = logs.first().ok_or_else(|| PopulationError::Empty { population_id: population_id.to_string() })?;
    first.validate()?;
    for log in &logs[1..] {
        log.validate()?;
        if log.n_classes != first.n_classes {
            return Err(PopulationError::MisalignedPopulation {
                member: log.model_id.clone(),
                reason: format!("has {} classes, `{}` has {}", log.n_classes, first.model_id, first.n_classes),
            });
        }
        if !first.same_examples(log) {
            return Err(PopulationError::MisalignedPopulation {
                member: log.model_id.clone(),
                reason: format!("covers a different example set than `{}`", first.model_id),
            });
        }
    }
    Ok(())
}

/// Fills `modal_labels` and `tie_examples` with the per-example plurality
/// vote of the member logs. Ties go to the smallest class index.
pub fn modal_labels(population: &mut ModelPopulation) -> Result<(), PopulationError> {
    check_alignment(&population.population_id, &population.logs)?;
    let first = &population.logs[0];
    let n_classes = first.n_classes;
    let index: HashMap<&str, usize> =
        first.records.iter().enumerate().map(|(i, r)| (r.example_id.as_str(), i)).collect();

    let mut votes = vec![0u32; first.records.len() * n_classes];
    for log in &population.logs {
        for r in &log.records {
            let row = index[r.example_id.as_str()];
            votes[row * n_classes + r.pred_label] += 1;
        }
    }

    let mut modal = BTreeMap::new();
    let mut ties = BTreeSet::new();
    for (row, r) in first.records.iter().enumerate() {
        let counts = &votes[row * n_classes..(row + 1) * n_classes];
        let best = *counts.iter().max().expect("n_classes > 0");
        let label = counts.iter().position(|&c| c == best).expect("max is present");
        if counts.iter().filter(|&&c| c == best).count() > 1 {
            ties.insert(r.example_id.clone());
        }
        modal.insert(r.example_id.clone(), label);
    }
    population.modal_labels = modal;
    population.tie_examples = ties;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PieResult {
    pub reference_id: String,
    pub compressed_id: String,
    pub pie_flags: BTreeMap<String, bool>,
    pub pie_count: usize,
}

impl PieResult {
    /// Flagged example ids in sorted order.
    pub fn flagged(&self) -> Vec<&str> {
        self.pie_flags.iter().filter(|(_, &f)| f).map(|(id, _)| id.as_str()).collect()
    }
}

/// Flags every example whose modal label differs between the populations.
pub fn find_pies(reference: &ModelPopulation, compressed: &ModelPopulation) -> Result<PieResult, PopulationError> {
    if reference.modal_labels.len() != compressed.modal_labels.len()
        || !reference.modal_labels.keys().eq(compressed.modal_labels.keys())
    {
        return Err(PopulationError::MisalignedPopulation {
            member: compressed.population_id.clone(),
            reason: format!("covers a different example set than population `{}`", reference.population_id),
        });
    }
    let pie_flags: BTreeMap<String, bool> = reference
        .modal_labels
        .iter()
        .zip(compressed.modal_labels.values())
        .map(|((id, r), c)| (id.clone(), r != c))
        .collect();
    let pie_count = pie_flags.values().filter(|&&f| f).count();
    Ok(PieResult {
        reference_id: reference.population_id.clone(),
        compressed_id: compressed.population_id.clone(),
        pie_flags,
        pie_count,
    })
}
