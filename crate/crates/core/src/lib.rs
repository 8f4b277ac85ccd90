//! Quantifies compression-induced bias in classifiers.
//!
//! The crate works on two kinds of evidence produced by a model and its
//! compressed variants:
//!
//! * prediction logs, from which per-class error rates, normalized error
//!   deltas, the combined error variance (CEV), the symmetric distance error
//!   (SDE) and pruning identified exemplars (PIEs) are computed;
//! * layer activations, compared with SVCCA distances.
//!
//! [`analysis`] turns those into coverage ellipses, regressions and a
//! serializable [`analysis::BiasReport`]; [`ingest`] reads and writes the
//! on-disk formats and [`synth`] generates logs with analytically known
//! bias.
//!
//! Numeric code is generic over [`Real`] (`f32`/`f64`); the aliases at the
//! crate root fix the scalar to `f64`, which is what the CLI uses.

pub mod analysis;
pub mod ingest;
pub mod log;
pub mod metrics;
pub mod population;
pub mod scalar;
pub mod svcca;
pub mod synth;

pub use log::{LogError, PredictionLog, Record};
pub use metrics::{bias_scores, confusion_stats, error_deltas, MetricsError};
pub use population::{find_pies, modal_labels, ModelPopulation, PieResult, PopulationError};
pub use scalar::Real;
pub use svcca::{cca_correlations, flatten_conv, svcca_distance, svd_reduce, SvccaError};

/// Default smoothing floor for zero baseline error rates.
pub const DEFAULT_EPSILON: f64 = 1e-4;
/// Default cumulative squared-singular-value mass kept by the SVD step.
pub const DEFAULT_VARIANCE_THRESHOLD: f64 = 0.99;
/// Default coverage of the error ellipses.
pub const DEFAULT_COVERAGE: f64 = 0.95;

pub type ClassErrorStats = metrics::ClassErrorStats<f64>;
pub type ErrorDeltaSet = metrics::ErrorDeltaSet<f64>;
pub type BiasScores = metrics::BiasScores<f64>;
pub type ActivationMatrix = svcca::ActivationMatrix<f64>;
pub type ReducedLayer = svcca::ReducedLayer<f64>;
pub type SvccaResult = svcca::SvccaResult<f64>;
pub type EllipseSpec = analysis::EllipseSpec<f64>;
pub type RegressionFit = analysis::RegressionFit<f64>;
pub type BiasReport = analysis::BiasReport<f64>;

pub type ActivationMatrixF32 = svcca::ActivationMatrix<f32>;
pub type SvccaResultF32 = svcca::SvccaResult<f32>;
