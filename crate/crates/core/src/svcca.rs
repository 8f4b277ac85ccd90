//! SVCCA: SVD truncation of two layer representations followed by canonical
//! correlation analysis of the retained subspaces.
//!
//! A layer is a `(datapoints × neurons)` matrix. Columns are mean-centered
//! before both steps. Canonical correlations are the singular values of
//! `Ua' Ub`, where `Ua`, `Ub` are orthonormal bases of the two centered
//! subspaces, each direction weighted by `s / sqrt(s² + r)` with the ridge
//! `r = 1e-12 · s_max²` (the covariance ridge expressed on singular values).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// Ridge relative to the largest covariance eigenvalue.
pub const RIDGE_RELATIVE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SvccaError {
    #[error("variance threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("top-k override must be at least 1")]
    InvalidTopK,
    #[error("layer `{layer}` needs at least 2 datapoints and 1 neuron, got {rows}×{cols}")]
    TooSmall { layer: String, rows: usize, cols: usize },
    #[error("layer `{layer}` has a non-finite value at ({row}, {col})")]
    NonFinite { layer: String, row: usize, col: usize },
    #[error("tensor shape {shape:?} does not match {len} values")]
    BadShape { shape: Vec<usize>, len: usize },
    #[error("layer `{layer}` is constant across datapoints; nothing to correlate")]
    DegenerateLayer { layer: String },
    #[error("layers `{layer_a}` and `{layer_b}` have {rows_a} and {rows_b} datapoints")]
    DatapointMismatch { layer_a: String, layer_b: String, rows_a: usize, rows_b: usize },
    #[error("{n_datapoints} datapoints cannot support {dims} retained dimensions")]
    InsufficientDatapoints { n_datapoints: usize, dims: usize },
    #[error("layer `{layer}` has a singular covariance beyond the regularization floor")]
    IllConditioned { layer: String },
}

/// Responses of every neuron of one layer over a fixed evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix<T: Real> {
    pub layer_id: String,
    /// Row = datapoint, column = neuron.
    pub values: DMatrix<T>,
}

impl<T: Real> ActivationMatrix<T> {
    pub fn new(layer_id: impl Into<String>, values: DMatrix<T>) -> Result<Self, SvccaError> {
        let layer_id = layer_id.into();
        let (rows, cols) = values.shape();
        if rows < 2 || cols < 1 {
            return Err(SvccaError::TooSmall { layer: layer_id, rows, cols });
        }
        for col in 0..cols {
            for row in 0..rows {
                if !values[(row, col)].is_finite() {
                    return Err(SvccaError::NonFinite { layer: layer_id, row, col });
                }
            }
        }
        Ok(Self { layer_id, values })
    }

    /// Builds a matrix from row-major values.
    pub fn from_row_major(layer_id: impl Into<String>, rows: usize, cols: usize, data: &[T]) -> Result<Self, SvccaError> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(SvccaError::BadShape { shape: vec![rows, cols], len: data.len() });
        }
        Self::new(layer_id, DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn n_datapoints(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_neurons(&self) -> usize {
        self.values.ncols()
    }
}

/// Flattens an `(examples, channels, height, width)` row-major tensor into
/// an `(examples·height·width) × channels` matrix: every spatial position of
/// every example is a datapoint and every channel a neuron.
pub fn flatten_conv<T: Real>(
    layer_id: impl Into<String>,
    shape: [usize; 4],
    data: &[T],
) -> Result<ActivationMatrix<T>, SvccaError> {
    let [n, c, h, w] = shape;
    let len = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    if shape.contains(&0) || len != Some(data.len()) {
        return Err(SvccaError::BadShape { shape: shape.to_vec(), len: data.len() });
    }
    let rows = n * h * w;
    let values = DMatrix::from_fn(rows, c, |row, ch| {
        let (example, pos) = (row / (h * w), row % (h * w));
        data[(example * c + ch) * h * w + pos]
    });
    ActivationMatrix::new(layer_id, values)
}

fn center_columns<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let rows = T::from_count(m.nrows());
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / rows;
        col.add_scalar_mut(-mean);
    }
    out
}

/// Thin SVD of `m` with singular triplets sorted by descending singular value.
fn sorted_svd<T: Real>(m: DMatrix<T>) -> (DMatrix<T>, Vec<T>) {
    let svd = m.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).expect("finite singular values").then(i.cmp(&j)));
    let u_sorted = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let s_sorted = order.iter().map(|&i| s[i]).collect();
    (u_sorted, s_sorted)
}

/// A layer projected onto its leading singular directions.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedLayer<T: Real> {
    pub layer_id: String,
    /// `datapoints × kept_dims`, centered, columns ordered by singular value.
    pub values: DMatrix<T>,
    pub kept_dims: usize,
    pub n_neurons: usize,
    /// All singular values of the centered layer, descending.
    pub singular_values: Vec<T>,
    /// Fraction of the squared singular value mass that was kept.
    pub retained_mass: T,
}

fn check_threshold<T: Real>(threshold: T) -> Result<(), SvccaError> {
    if !(threshold > T::zero() && threshold <= T::one()) {
        return Err(SvccaError::InvalidThreshold(threshold.as_f64()));
    }
    Ok(())
}

/// Centers the columns of `acts` and keeps the fewest leading singular
/// directions whose cumulative squared singular values reach `threshold` of
/// the total. Directions below the ridge floor are never kept.
pub fn svd_reduce<T: Real>(acts: &ActivationMatrix<T>, threshold: T) -> Result<ReducedLayer<T>, SvccaError> {
    check_threshold(threshold)?;
    let centered = center_columns(&acts.values);
    if centered.iter().all(|v| *v == T::zero()) {
        return Err(SvccaError::DegenerateLayer { layer: acts.layer_id.clone() });
    }
    let (u, s) = sorted_svd(centered);
    let floor = T::lit(RIDGE_RELATIVE) * s[0] * s[0];
    let numerical_rank = s.iter().take_while(|&&v| v * v > floor).count();
    if numerical_rank == 0 {
        return Err(SvccaError::DegenerateLayer { layer: acts.layer_id.clone() });
    }

    let mut cumulative = Vec::with_capacity(s.len());
    let mut acc = T::zero();
    for v in &s {
        acc += *v * *v;
        cumulative.push(acc);
    }
    let total = acc;
    let target = threshold * total;
    let wanted = cumulative.iter().position(|&c| c >= target).map_or(s.len(), |i| i + 1);
    let kept = wanted.min(numerical_rank).max(1);

    let values = DMatrix::from_fn(u.nrows(), kept, |r, c| u[(r, c)] * s[c]);
    Ok(ReducedLayer {
        layer_id: acts.layer_id.clone(),
        values,
        kept_dims: kept,
        n_neurons: acts.n_neurons(),
        retained_mass: cumulative[kept - 1] / total,
        singular_values: s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvccaOptions<T> {
    pub variance_threshold: T,
    /// Average only the `k` largest canonical correlations.
    pub top_k: Option<usize>,
}

impl<T: Real> Default for SvccaOptions<T> {
    fn default() -> Self {
        Self { variance_threshold: T::lit(crate::DEFAULT_VARIANCE_THRESHOLD), top_k: None }
    }
}

impl<T: Real> SvccaOptions<T> {
    pub fn with_threshold(variance_threshold: T) -> Self {
        Self { variance_threshold, top_k: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvccaResult<T> {
    pub layer_a: String,
    pub layer_b: String,
    pub kept_dims_a: usize,
    pub kept_dims_b: usize,
    /// Canonical correlations, descending, clamped to `[0, 1]`.
    pub correlations: Vec<T>,
    pub mean_rho: T,
    /// `1 - mean_rho`.
    pub distance: T,
    pub top_k: Option<usize>,
    /// Fewer than ten datapoints per retained dimension.
    pub low_sample_warning: bool,
}

/// Weighted orthonormal basis of a centered matrix.
fn whitened_basis<T: Real>(layer: &str, m: &DMatrix<T>) -> Result<DMatrix<T>, SvccaError> {
    let ill = || SvccaError::IllConditioned { layer: layer.to_string() };
    let (u, s) = sorted_svd(center_columns(m));
    let s_max = *s.first().ok_or_else(ill)?;
    let ridge = T::lit(RIDGE_RELATIVE) * s_max * s_max;
    if s_max == T::zero() || s.iter().any(|&v| v * v <= ridge) {
        return Err(ill());
    }
    let weights = DVector::from_iterator(s.len(), s.iter().map(|&v| v / (v * v + ridge).sqrt()));
    Ok(u * DMatrix::from_diagonal(&weights))
}

pub fn cca_correlations<T: Real>(
    a: &ReducedLayer<T>,
    b: &ReducedLayer<T>,
    top_k: Option<usize>,
) -> Result<SvccaResult<T>, SvccaError> {
    if top_k == Some(0) {
        return Err(SvccaError::InvalidTopK);
    }
    let (rows_a, rows_b) = (a.values.nrows(), b.values.nrows());
    if rows_a != rows_b {
        return Err(SvccaError::DatapointMismatch {
            layer_a: a.layer_id.clone(),
            layer_b: b.layer_id.clone(),
            rows_a,
            rows_b,
        });
    }
    let dims = a.values.ncols().max(b.values.ncols());
    if rows_a <= dims {
        return Err(SvccaError::InsufficientDatapoints { n_datapoints: rows_a, dims });
    }

    let wa = whitened_basis(&a.layer_id, &a.values)?;
    let wb = whitened_basis(&b.layer_id, &b.values)?;
    let cross = wa.transpose() * wb;
    let mut correlations: Vec<T> = cross
        .singular_values()
        .iter()
        .map(|&r| r.max(T::zero()).min(T::one()))
        .collect();
    correlations.sort_by(|x, y| y.partial_cmp(x).expect("finite correlations"));

    let used = top_k.map_or(correlations.len(), |k| k.min(correlations.len()));
    let mean_rho = crate::scalar::mean(correlations[..used].iter().copied()).expect("at least one correlation");
    Ok(SvccaResult {
        layer_a: a.layer_id.clone(),
        layer_b: b.layer_id.clone(),
        kept_dims_a: a.kept_dims,
        kept_dims_b: b.kept_dims,
        correlations,
        mean_rho,
        distance: T::one() - mean_rho,
        top_k,
        low_sample_warning: rows_a < 10 * dims,
    })
}

/// SVD-reduces both layers and returns their SVCCA distance.
pub fn svcca_distance<T: Real>(
    a: &ActivationMatrix<T>,
    b: &ActivationMatrix<T>,
    options: &SvccaOptions<T>,
) -> Result<SvccaResult<T>, SvccaError> {
    check_threshold(options.variance_threshold)?;
    if a.n_datapoints() != b.n_datapoints() {
        return Err(SvccaError::DatapointMismatch {
            layer_a: a.layer_id.clone(),
            layer_b: b.layer_id.clone(),
            rows_a: a.n_datapoints(),
            rows_b: b.n_datapoints(),
        });
    }
    let ra = svd_reduce(a, options.variance_threshold)?;
    let rb = svd_reduce(b, options.variance_threshold)?;
    cca_correlations(&ra, &rb, options.top_k)
}

/// [`svcca_distance`] over independent layer pairs, evaluated in parallel.
pub fn svcca_batch<T: Real>(
    pairs: &[(&ActivationMatrix<T>, &ActivationMatrix<T>)],
    options: &SvccaOptions<T>,
) -> Vec<Result<SvccaResult<T>, SvccaError>> {
    pairs.par_iter().map(|(a, b)| svcca_distance(a, b, options)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_unit_spatial_dims() {
        let data: Vec<f64> = (0..6).map(f64::from).collect();
        let m = flatten_conv("l", [2, 3, 1, 1], &data).unwrap();
        assert_eq!(m.values, DMatrix::from_row_slice(2, 3, &data));
    }

    #[test]
    fn flatten_constant_channels() {
        // channel c holds value c
        let data: Vec<f64> = (0..2).flat_map(|c| std::iter::repeat_n(c as f64, 4)).collect();
        let m = flatten_conv("l", [1, 2, 2, 2], &data).unwrap();
        assert_eq!(m.values.shape(), (4, 2));
        assert!(m.values.column(0).iter().all(|&v| v == 0.0));
        assert!(m.values.column(1).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn flatten_rejects_bad_length() {
        assert!(matches!(flatten_conv("l", [1, 2, 2, 2], &[0.0f64; 7]), Err(SvccaError::BadShape { .. })));
        assert!(matches!(flatten_conv::<f64>("l", [0, 2, 2, 2], &[]), Err(SvccaError::BadShape { .. })));
    }

    #[test]
    fn activation_validation() {
        assert!(matches!(
            ActivationMatrix::from_row_major("l", 1, 2, &[1.0, 2.0]),
            Err(SvccaError::TooSmall { .. })
        ));
        assert!(matches!(
            ActivationMatrix::from_row_major("l", 2, 1, &[1.0, f64::NAN]),
            Err(SvccaError::NonFinite { row: 1, col: 0, .. })
        ));
    }

    #[test]
    fn rank_one_keeps_one_dimension() {
        let v: Vec<f64> = vec![1.0, -2.0, 0.5, 3.0, -1.0, 4.0];
        let data: Vec<f64> = v.iter().flat_map(|x| [*x, 2.0 * x + 1.0, -0.5 * x]).collect();
        let m = ActivationMatrix::from_row_major("l", 6, 3, &data).unwrap();
        assert_eq!(svd_reduce(&m, 0.99).unwrap().kept_dims, 1);
    }

    #[test]
    fn explicit_factorization_thresholds() {
        // Zero-mean orthonormal left vectors, singular values (3, 1): squared mass (0.9, 0.1).
        let n = 8;
        let u1: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } / (n as f64).sqrt()).collect();
        let u2: Vec<f64> = (0..n).map(|i| if (i / 2) % 2 == 0 { 1.0 } else { -1.0 } / (n as f64).sqrt()).collect();
        let v1 = [1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt(), 0.0];
        let v2 = [0.0, 0.0, 1.0];
        let m = DMatrix::from_fn(n, 3, |r, c| 3.0 * u1[r] * v1[c] + u2[r] * v2[c]);
        let acts = ActivationMatrix::new("l", m).unwrap();
        assert_eq!(svd_reduce(&acts, 0.89).unwrap().kept_dims, 1);
        assert_eq!(svd_reduce(&acts, 0.91).unwrap().kept_dims, 2);
        let r = svd_reduce(&acts, 0.89).unwrap();
        assert!((r.retained_mass - 0.9).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        let m = ActivationMatrix::from_row_major("l", 3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap();
        assert!(matches!(svd_reduce(&m, 0.99), Err(SvccaError::DegenerateLayer { .. })));
        let m = ActivationMatrix::from_row_major("l", 3, 1, &[1.0, 2.0, 4.0]).unwrap();
        assert!(matches!(svd_reduce(&m, 0.0), Err(SvccaError::InvalidThreshold(_))));
        assert!(matches!(svd_reduce(&m, 1.5), Err(SvccaError::InvalidThreshold(_))));
    }

    #[test]
    fn cca_shape_errors() {
        let a = ActivationMatrix::from_row_major("a", 3, 1, &[1.0, 2.0, 4.0]).unwrap();
        let b = ActivationMatrix::from_row_major("b", 4, 1, &[1.0, 2.0, 4.0, 0.0]).unwrap();
        let (ra, rb) = (svd_reduce(&a, 1.0).unwrap(), svd_reduce(&b, 1.0).unwrap());
        assert!(matches!(cca_correlations(&ra, &rb, None), Err(SvccaError::DatapointMismatch { .. })));
        assert!(matches!(cca_correlations(&ra, &ra, Some(0)), Err(SvccaError::InvalidTopK)));

        // centering caps the rank at n - 1, so build the layer directly
        let rc = ReducedLayer {
            layer_id: "c".to_string(),
            values: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            kept_dims: 2,
            n_neurons: 2,
            singular_values: vec![],
            retained_mass: 1.0,
        };
        assert!(matches!(
            cca_correlations(&rc, &rc, None),
            Err(SvccaError::InsufficientDatapoints { n_datapoints: 2, dims: 2 })
        ));
    }

    #[test]
    fn ill_conditioned_direct_input() {
        // second column duplicates the first: singular within-set covariance
        let values = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 2.0, 2.0, -1.0, -1.0, 5.0, 5.0]);
        let fake = ReducedLayer {
            layer_id: "dup".to_string(),
            values,
            kept_dims: 2,
            n_neurons: 2,
            singular_values: vec![],
            retained_mass: 1.0,
        };
        assert!(matches!(cca_correlations(&fake, &fake, None), Err(SvccaError::IllConditioned { .. })));
    }

    #[test]
    fn self_similarity_small() {
        let m = ActivationMatrix::from_row_major(
            "l",
            6,
            2,
            &[1.0, 0.3, -2.0, 1.1, 0.5, -0.7, 3.0, 2.2, -1.0, 0.1, 4.0, -3.0],
        )
        .unwrap();
        let r = svcca_distance(&m, &m, &SvccaOptions::default()).unwrap();
        assert!(r.distance <= 1e-6);
        assert_eq!(r.distance, 1.0 - r.mean_rho);
        assert_eq!(r.correlations.len(), r.kept_dims_a.min(r.kept_dims_b));
        assert!(r.low_sample_warning);
    }

    #[test]
    fn top_k_override() {
        let m = ActivationMatrix::from_row_major(
            "a",
            6,
            2,
            &[1.0, 0.3, -2.0, 1.1, 0.5, -0.7, 3.0, 2.2, -1.0, 0.1, 4.0, -3.0],
        )
        .unwrap();
        let n = ActivationMatrix::from_row_major(
            "b",
            6,
            2,
            &[1.0, 5.0, -2.0, 0.0, 0.5, 2.0, 3.0, -1.0, -1.0, 0.4, 4.0, 1.0],
        )
        .unwrap();
        let opts = SvccaOptions { variance_threshold: 1.0, top_k: Some(1) };
        let r = svcca_distance(&m, &n, &opts).unwrap();
        assert_eq!(r.mean_rho, r.correlations[0]);
        assert_eq!(r.top_k, Some(1));
    }
}
