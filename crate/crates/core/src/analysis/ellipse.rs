use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::scalar::Real;

/// Quantile of the chi-square distribution with 2 degrees of freedom.
///
/// The CDF is `1 - exp(-q/2)`, so the quantile is `-2·ln(1 - p)`.
pub fn chi_square_2dof_quantile<T: Real>(p: T) -> T {
    -T::lit(2.0) * (T::one() - p).ln()
}

/// How the ellipse size is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EllipseMode<T> {
    /// Gaussian coverage ellipse holding the given fraction of the mass.
    Coverage { coverage: T },
    /// Two standard deviations along each principal axis (`q = 4`).
    TwoSigma,
}

impl<T: Real> EllipseMode<T> {
    pub fn quantile(&self) -> T {
        match *self {
            EllipseMode::Coverage { coverage } => chi_square_2dof_quantile(coverage),
            EllipseMode::TwoSigma => T::lit(4.0),
        }
    }

    pub fn coverage_target(&self) -> T {
        match *self {
            EllipseMode::Coverage { coverage } => coverage,
            EllipseMode::TwoSigma => T::one() - (-T::lit(2.0)).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseSpec<T> {
    pub center: (T, T),
    /// `(major, minor)`, major ≥ minor.
    pub semi_axes: (T, T),
    /// Angle of the major axis from the x axis, in `[0, π)`.
    pub rotation_radians: T,
    pub coverage_target: T,
    /// Squared Mahalanobis radius of the boundary.
    pub quantile: T,
}

impl<T: Real> EllipseSpec<T> {
    pub fn contains(&self, (x, y): (T, T)) -> bool {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (sin, cos) = self.rotation_radians.sin_cos();
        let u = dx * cos + dy * sin;
        let v = -dx * sin + dy * cos;
        let (a, b) = self.semi_axes;
        (u / a) * (u / a) + (v / b) * (v / b) <= T::one()
    }

    /// Fraction of `points` inside the ellipse.
    pub fn containment(&self, points: &[(T, T)]) -> f64 {
        if points.is_empty() {
            return 0.0;
        }
        points.iter().filter(|&&p| self.contains(p)).count() as f64 / points.len() as f64
    }
}

/// Shape of a point cloud whose covariance has rank < 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DegenerateShape {
    Point { center: (f64, f64) },
    Segment { center: (f64, f64), half_length: f64, rotation_radians: f64 },
}

fn wrap_angle<T: Real>(theta: T) -> T {
    let pi = T::pi();
    let mut t = theta % pi;
    if t < T::zero() {
        t += pi;
    }
    if t >= pi {
        t -= pi;
    }
    t
}

/// Sample mean and covariance `(sxx, sxy, syy)` with divisor `n - 1`.
fn moments<T: Real>(points: &[(T, T)]) -> ((T, T), (T, T, T)) {
    let n = T::from_count(points.len());
    let (sx, sy) = points.iter().fold((T::zero(), T::zero()), |(a, b), &(x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for &(x, y) in points {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let d = n - T::one();
    ((mx, my), (sxx / d, sxy / d, syy / d))
}

/// Covariance ellipse of `points` scaled by `mode`.
pub fn ellipse<T: Real>(points: &[(T, T)], mode: EllipseMode<T>) -> Result<EllipseSpec<T>, AnalysisError> {
    if let EllipseMode::Coverage { coverage } = mode {
        if !(coverage > T::zero() && coverage < T::one()) {
            return Err(AnalysisError::InvalidCoverage(coverage.as_f64()));
        }
    }
    if points.len() < 3 {
        return Err(AnalysisError::TooFewPoints { needed: 3, got: points.len() });
    }
    if points.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let (center, (a, b, c)) = moments(points);
    let half_trace = (a + c) / T::lit(2.0);
    let radius = (((a - c) / T::lit(2.0)).powi(2) + b * b).sqrt();
    let major = half_trace + radius;
    let det = a * c - b * b;
    let minor = if major > T::zero() { (det / major).max(T::zero()) } else { T::zero() };
    let rotation = wrap_angle(T::lit(0.5) * (T::lit(2.0) * b).atan2(a - c));

    let c64 = (center.0.as_f64(), center.1.as_f64());
    if major <= T::zero() {
        return Err(AnalysisError::DegenerateCloud(DegenerateShape::Point { center: c64 }));
    }
    if minor <= T::lit(1e-12) * major {
        // all spread along one line: report the extent of the projections
        let (sin, cos) = rotation.sin_cos();
        let half_length = points
            .iter()
            .map(|&(x, y)| ((x - center.0) * cos + (y - center.1) * sin).abs())
            .fold(T::zero(), |m, v| m.max(v));
        return Err(AnalysisError::DegenerateCloud(DegenerateShape::Segment {
            center: c64,
            half_length: half_length.as_f64(),
            rotation_radians: rotation.as_f64(),
        }));
    }

    let q = mode.quantile();
    Ok(EllipseSpec {
        center,
        semi_axes: ((q * major).sqrt(), (q * minor).sqrt()),
        rotation_radians: rotation,
        coverage_target: mode.coverage_target(),
        quantile: q,
    })
}

/// Gaussian ellipse expected to contain `coverage` of the points.
pub fn coverage_ellipse<T: Real>(points: &[(T, T)], coverage: T) -> Result<EllipseSpec<T>, AnalysisError> {
    ellipse(points, EllipseMode::Coverage { coverage })
}
