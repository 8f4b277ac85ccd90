use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::scalar::Real;

/// Simple least-squares line `y = slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit<T> {
    pub slope: T,
    pub intercept: T,
    pub pearson_r: T,
    pub r_squared: T,
    pub n_points: usize,
}

impl<T: Real> RegressionFit<T> {
    pub fn predict(&self, x: T) -> T {
        self.slope * x + self.intercept
    }
}

/// Ordinary least squares on centered sums.
///
/// When every `y` is equal the correlation is undefined; `pearson_r` is
/// then reported as 0.
pub fn ols_fit<T: Real>(xs: &[T], ys: &[T]) -> Result<RegressionFit<T>, AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch { xs: xs.len(), ys: ys.len() });
    }
    if xs.len() < 2 {
        return Err(AnalysisError::TooFewPoints { needed: 2, got: xs.len() });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let n = T::from_count(xs.len());
    let mx = xs.iter().fold(T::zero(), |a, &x| a + x) / n;
    let my = ys.iter().fold(T::zero(), |a, &y| a + y) / n;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == T::zero() {
        return Err(AnalysisError::DegenerateX);
    }
    let slope = sxy / sxx;
    let pearson_r = if syy == T::zero() {
        T::zero()
    } else {
        (sxy / (sxx.sqrt() * syy.sqrt())).max(-T::one()).min(T::one())
    };
    Ok(RegressionFit {
        slope,
        intercept: my - slope * mx,
        pearson_r,
        r_squared: pearson_r * pearson_r,
        n_points: xs.len(),
    })
}
