//! Error ellipses, regressions, rankings and the combined bias report.

mod ellipse;
mod regression;
mod report;

use thiserror::Error;

pub use ellipse::{chi_square_2dof_quantile, coverage_ellipse, ellipse, DegenerateShape, EllipseMode, EllipseSpec};
pub use regression::{ols_fit, RegressionFit};
pub use report::{
    build_report, BiasReport, BlockDistance, EllipseOutcome, LayerRegression, LayerSpec, ModelInput, ModelReport,
    PieSummary, Rankings, RegressionPoint, ReportConfig, ReportError, ReportInput, ReportMetadata, REPORT_SCHEMA,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("coverage must lie in (0, 1), got {0}")]
    InvalidCoverage(f64),
    #[error("point cloud has rank < 2: {0:?}")]
    DegenerateCloud(DegenerateShape),
    #[error("x values are constant; the regression slope is undefined")]
    DegenerateX,
    #[error("{xs} x values but {ys} y values")]
    LengthMismatch { xs: usize, ys: usize },
    #[error("non-finite input value")]
    NonFinite,
}
