use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ellipse::{ellipse, DegenerateShape, EllipseMode, EllipseSpec};
use super::regression::{ols_fit, RegressionFit};
use super::AnalysisError;
use crate::log::PredictionLog;
use crate::metrics::{bias_scores, confusion_stats, error_deltas, BiasScores, ClassDelta, MetricsError};
use crate::population::{find_pies, ModelPopulation, PopulationError};
use crate::scalar::Real;
use crate::svcca::{svcca_distance, ActivationMatrix, SvccaError, SvccaOptions, SvccaResult, RIDGE_RELATIVE};

pub const REPORT_SCHEMA: &str = "biascope-report/1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model `{0}` appears more than once")]
    DuplicateModel(String),
    #[error("model `{model_id}` is not aligned with baseline `{baseline_id}`: {reason}")]
    Misaligned { model_id: String, baseline_id: String, reason: String },
    #[error("model `{model_id}`: {source}")]
    Metrics { model_id: String, source: MetricsError },
    #[error("model `{model_id}` populations: {source}")]
    Population { model_id: String, source: PopulationError },
    #[error("model `{model_id}` has no activations for layer `{layer_id}`")]
    MissingLayer { model_id: String, layer_id: String },
    #[error("model `{model_id}`, layer `{layer_id}`: {source}")]
    Layer { model_id: String, layer_id: String, source: SvccaError },
}

impl ReportError {
    /// True for failures of the numerical routines rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            ReportError::Layer {
                source: SvccaError::IllConditioned { .. } | SvccaError::DegenerateLayer { .. },
                ..
            }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig<T> {
    pub epsilon: T,
    pub svcca: SvccaOptions<T>,
    pub ellipse: EllipseMode<T>,
}

impl<T: Real> Default for ReportConfig<T> {
    fn default() -> Self {
        Self {
            epsilon: T::lit(crate::DEFAULT_EPSILON),
            svcca: SvccaOptions::default(),
            ellipse: EllipseMode::Coverage { coverage: T::lit(crate::DEFAULT_COVERAGE) },
        }
    }
}

impl<T: Real> ReportConfig<T> {
    pub fn validate(&self) -> Result<(), ReportError> {
        if !self.epsilon.is_finite() || self.epsilon < T::zero() {
            return Err(ReportError::InvalidConfig(format!("epsilon {} is not a non-negative real", self.epsilon.as_f64())));
        }
        let t = self.svcca.variance_threshold;
        if !(t > T::zero() && t <= T::one()) {
            return Err(ReportError::InvalidConfig(format!("variance threshold {} not in (0, 1]", t.as_f64())));
        }
        if self.svcca.top_k == Some(0) {
            return Err(ReportError::InvalidConfig("top-k must be at least 1".into()));
        }
        if let EllipseMode::Coverage { coverage } = self.ellipse {
            if !(coverage > T::zero() && coverage < T::one()) {
                return Err(ReportError::InvalidConfig(format!("coverage {} not in (0, 1)", coverage.as_f64())));
            }
        }
        Ok(())
    }
}

/// A layer compared between the baseline and every model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub layer_id: String,
    /// Layers sharing a block label are averaged together.
    pub block: String,
}

pub struct ModelInput<'a, T: Real> {
    pub log: &'a PredictionLog,
    /// Free-form grouping label such as a sparsity level.
    pub tag: Option<String>,
    /// `(reference, compressed)` populations for PIE counting.
    pub populations: Option<(&'a ModelPopulation, &'a ModelPopulation)>,
    /// Activations keyed by layer id.
    pub activations: BTreeMap<String, &'a ActivationMatrix<T>>,
}

impl<'a, T: Real> ModelInput<'a, T> {
    pub fn new(log: &'a PredictionLog) -> Self {
        Self { log, tag: None, populations: None, activations: BTreeMap::new() }
    }
}

pub struct ReportInput<'a, T: Real> {
    pub baseline: &'a PredictionLog,
    pub models: Vec<ModelInput<'a, T>>,
    /// Layers to compare, in report order. Empty when no activations are used.
    pub layers: Vec<LayerSpec>,
    pub baseline_activations: BTreeMap<String, &'a ActivationMatrix<T>>,
}

impl<'a, T: Real> ReportInput<'a, T> {
    pub fn new(baseline: &'a PredictionLog) -> Self {
        Self { baseline, models: Vec::new(), layers: Vec::new(), baseline_activations: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EllipseOutcome<T> {
    Ellipse { spec: EllipseSpec<T>, containment: f64 },
    Degenerate { shape: DegenerateShape },
    Unavailable { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PieSummary {
    pub reference_id: String,
    pub compressed_id: String,
    pub pie_count: usize,
    /// Sorted example ids.
    pub flagged: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDistance<T> {
    pub block: String,
    pub layers: Vec<String>,
    pub mean_distance: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport<T> {
    pub model_id: String,
    pub tag: Option<String>,
    pub accuracy: f64,
    pub scores: BiasScores<T>,
    /// Scatter points indexed by class.
    pub deltas: Vec<ClassDelta<T>>,
    pub smoothed_classes: Vec<usize>,
    /// Classes with a zero rate denominator in the baseline or the model.
    pub zero_denominator_classes: Vec<usize>,
    pub ellipse: EllipseOutcome<T>,
    pub pies: Option<PieSummary>,
    pub svcca: Vec<SvccaResult<T>>,
    pub block_distances: Vec<BlockDistance<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionPoint<T> {
    pub model_id: String,
    pub tag: Option<String>,
    pub layer: String,
    pub svcca_distance: T,
    pub cev: T,
    pub sde: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRegression<T> {
    pub layer_id: String,
    pub block: String,
    pub points: Vec<RegressionPoint<T>>,
    pub cev_fit: Option<RegressionFit<T>>,
    pub sde_fit: Option<RegressionFit<T>>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rankings {
    pub by_cev: Vec<String>,
    pub by_sde: Vec<String>,
    /// Present when every model has a PIE count.
    pub by_pie_count: Option<Vec<String>>,
    /// Descending; informational only.
    pub by_accuracy: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub block_averaging: String,
    pub variance_estimator: String,
    pub zero_rate_convention: String,
    pub cca_ridge_relative: f64,
    pub ranking_ties: String,
}

impl Default for ReportMetadata {
    fn default() -> Self {
        Self {
            block_averaging: "arithmetic mean of the SVCCA distances of all layers sharing a block label".into(),
            variance_estimator: "population (divide by n)".into(),
            zero_rate_convention: "rate = 0 when its denominator is 0".into(),
            cca_ridge_relative: RIDGE_RELATIVE,
            ranking_ties: "model_id ascending".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport<T> {
    pub schema: String,
    pub baseline_id: String,
    pub baseline_accuracy: f64,
    pub model_ids: Vec<String>,
    pub config: ReportConfig<T>,
    pub metadata: ReportMetadata,
    pub models: Vec<ModelReport<T>>,
    pub regressions: Vec<LayerRegression<T>>,
    pub rankings: Rankings,
}

impl<T> BiasReport<T> {
    pub fn model(&self, model_id: &str) -> Option<&ModelReport<T>> {
        self.models.iter().find(|m| m.model_id == model_id)
    }
}

fn ellipse_outcome<T: Real>(points: &[(T, T)], mode: EllipseMode<T>) -> EllipseOutcome<T> {
    match ellipse(points, mode) {
        Ok(spec) => EllipseOutcome::Ellipse { containment: spec.containment(points), spec },
        Err(AnalysisError::DegenerateCloud(shape)) => EllipseOutcome::Degenerate { shape },
        Err(e) => EllipseOutcome::Unavailable { reason: e.to_string() },
    }
}

fn model_report<T: Real>(
    input: &ReportInput<'_, T>,
    model: &ModelInput<'_, T>,
    baseline_stats: &crate::metrics::ClassErrorStats<T>,
    config: &ReportConfig<T>,
) -> Result<ModelReport<T>, ReportError> {
    let model_id = model.log.model_id.clone();
    let baseline = input.baseline;
    if model.log.n_classes != baseline.n_classes || !baseline.same_examples(model.log) {
        return Err(ReportError::Misaligned {
            model_id,
            baseline_id: baseline.model_id.clone(),
            reason: format!(
                "{} records over {} classes vs {} over {}, or a different example set",
                model.log.len(),
                model.log.n_classes,
                baseline.len(),
                baseline.n_classes
            ),
        });
    }
    let metrics_err = |source| ReportError::Metrics { model_id: model_id.clone(), source };
    let stats = confusion_stats::<T>(model.log).map_err(metrics_err)?;
    let deltas = error_deltas(baseline_stats, &stats, config.epsilon).map_err(metrics_err)?;
    let scores = bias_scores(&deltas).map_err(metrics_err)?;

    let zero_denominator_classes: BTreeSet<usize> = baseline_stats
        .zero_denominator_classes
        .iter()
        .chain(&stats.zero_denominator_classes)
        .copied()
        .collect();

    let pies = match model.populations {
        Some((reference, compressed)) => {
            let pies = find_pies(reference, compressed)
                .map_err(|source| ReportError::Population { model_id: model_id.clone(), source })?;
            Some(PieSummary {
                reference_id: pies.reference_id.clone(),
                compressed_id: pies.compressed_id.clone(),
                pie_count: pies.pie_count,
                flagged: pies.flagged().into_iter().map(String::from).collect(),
            })
        }
        None => None,
    };

    let mut svcca = Vec::with_capacity(input.layers.len());
    for layer in &input.layers {
        let missing = |who: &str| ReportError::MissingLayer { model_id: who.to_string(), layer_id: layer.layer_id.clone() };
        let base = input.baseline_activations.get(&layer.layer_id).ok_or_else(|| missing(&baseline.model_id))?;
        let acts = model.activations.get(&layer.layer_id).ok_or_else(|| missing(&model_id))?;
        let result = svcca_distance(*base, *acts, &config.svcca).map_err(|source| ReportError::Layer {
            model_id: model_id.clone(),
            layer_id: layer.layer_id.clone(),
            source,
        })?;
        svcca.push(result);
    }

    let mut blocks: Vec<(String, Vec<String>, Vec<T>)> = Vec::new();
    for (layer, result) in input.layers.iter().zip(&svcca) {
        match blocks.iter_mut().find(|(b, _, _)| *b == layer.block) {
            Some((_, layers, ds)) => {
                layers.push(layer.layer_id.clone());
                ds.push(result.distance);
            }
            None => blocks.push((layer.block.clone(), vec![layer.layer_id.clone()], vec![result.distance])),
        }
    }
    let block_distances = blocks
        .into_iter()
        .map(|(block, layers, ds)| BlockDistance {
            block,
            layers,
            mean_distance: crate::scalar::mean(ds.into_iter()).expect("block has a layer"),
        })
        .collect();

    Ok(ModelReport {
        model_id: model_id.clone(),
        tag: model.tag.clone(),
        accuracy: model.log.accuracy(),
        scores,
        ellipse: ellipse_outcome(&deltas.points(), config.ellipse),
        deltas: deltas.deltas,
        smoothed_classes: deltas.smoothed_classes,
        zero_denominator_classes: zero_denominator_classes.into_iter().collect(),
        pies,
        svcca,
        block_distances,
    })
}

fn ranking<T, K: PartialOrd>(models: &[ModelReport<T>], key: impl Fn(&ModelReport<T>) -> K) -> Vec<String> {
    let mut order: Vec<&ModelReport<T>> = models.iter().collect();
    order.sort_by(|a, b| {
        key(a).partial_cmp(&key(b)).unwrap_or(Ordering::Equal).then_with(|| a.model_id.cmp(&b.model_id))
    });
    order.into_iter().map(|m| m.model_id.clone()).collect()
}

fn layer_regressions<T: Real>(layers: &[LayerSpec], models: &[ModelReport<T>]) -> Vec<LayerRegression<T>> {
    layers
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            let points: Vec<RegressionPoint<T>> = models
                .iter()
                .map(|m| RegressionPoint {
                    model_id: m.model_id.clone(),
                    tag: m.tag.clone(),
                    layer: layer.layer_id.clone(),
                    svcca_distance: m.svcca[i].distance,
                    cev: m.scores.cev,
                    sde: m.scores.sde,
                })
                .collect();
            let xs: Vec<T> = points.iter().map(|p| p.svcca_distance).collect();
            let cev: Vec<T> = points.iter().map(|p| p.cev).collect();
            let sde: Vec<T> = points.iter().map(|p| p.sde).collect();
            let (cev_fit, sde_fit, note) = match (ols_fit(&xs, &cev), ols_fit(&xs, &sde)) {
                (Ok(c), Ok(s)) => (Some(c), Some(s), None),
                (Err(e), _) | (_, Err(e)) => (None, None, Some(e.to_string())),
            };
            LayerRegression { layer_id: layer.layer_id.clone(), block: layer.block.clone(), points, cev_fit, sde_fit, note }
        })
        .collect()
}

/// Scores every model against the baseline and assembles the report.
///
/// Models are processed in parallel; the output depends only on the inputs
/// and `config`.
pub fn build_report<T: Real>(input: &ReportInput<'_, T>, config: &ReportConfig<T>) -> Result<BiasReport<T>, ReportError> {
    config.validate()?;
    let mut seen = BTreeSet::new();
    for m in &input.models {
        if !seen.insert(m.log.model_id.as_str()) {
            return Err(ReportError::DuplicateModel(m.log.model_id.clone()));
        }
    }
    let baseline_stats = confusion_stats::<T>(input.baseline).map_err(|source| ReportError::Metrics {
        model_id: input.baseline.model_id.clone(),
        source,
    })?;

    let models: Vec<ModelReport<T>> = input
        .models
        .par_iter()
        .map(|m| model_report(input, m, &baseline_stats, config))
        .collect::<Result<_, _>>()?;

    let by_pie_count = models
        .iter()
        .all(|m| m.pies.is_some())
        .then(|| ranking(&models, |m| m.pies.as_ref().map(|p| p.pie_count)));
    let rankings = Rankings {
        by_cev: ranking(&models, |m| m.scores.cev),
        by_sde: ranking(&models, |m| m.scores.sde),
        by_pie_count,
        by_accuracy: ranking(&models, |m| -m.accuracy),
    };

    Ok(BiasReport {
        schema: REPORT_SCHEMA.to_string(),
        baseline_id: input.baseline.model_id.clone(),
        baseline_accuracy: input.baseline.accuracy(),
        model_ids: models.iter().map(|m| m.model_id.clone()).collect(),
        config: *config,
        metadata: ReportMetadata::default(),
        regressions: layer_regressions(&input.layers, &models),
        models,
        rankings,
    })
}
