//! Per-class error statistics, normalized error deltas, CEV and SDE.
//!
//! Rates follow one-vs-rest accounting over the full confusion matrix. A
//! rate whose denominator is zero (the class never appears as a negative, or
//! never as a positive) is defined as 0 and the class is listed in
//! [`ClassErrorStats::zero_denominator_classes`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log::{LogError, PredictionLog};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("malformed log: {0}")]
    MalformedLog(#[from] LogError),
    #[error("shape mismatch between `{baseline}` and `{target}`: {detail}")]
    ShapeMismatch { baseline: String, target: String, detail: String },
    #[error("epsilon must be finite and non-negative, got {0}")]
    InvalidEpsilon(f64),
    #[error("class {class} has a zero baseline {rate} rate and epsilon is 0; the normalized change is unbounded")]
    UnboundedDelta { class: usize, rate: &'static str },
    #[error("no classes to score")]
    Empty,
}

/// One-vs-rest counts and rates for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts<T> {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
    pub fpr: T,
    pub fnr: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassErrorStats<T> {
    pub model_id: String,
    pub total: u64,
    pub classes: Vec<ClassCounts<T>>,
    /// Classes where `fp + tn == 0` or `fn + tp == 0`.
    pub zero_denominator_classes: Vec<usize>,
}

impl<T> ClassErrorStats<T> {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }
}

fn rate<T: Real>(num: u64, den: u64) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::lit(num as f64) / T::lit(den as f64)
    }
}

pub fn confusion_stats<T: Real>(log: &PredictionLog) -> Result<ClassErrorStats<T>, MetricsError> {
    log.validate()?;
    let n = log.n_classes;
    // row = true label, column = predicted label
    let mut confusion = vec![0u64; n * n];
    for r in &log.records {
        confusion[r.true_label * n + r.pred_label] += 1;
    }
    let total = log.records.len() as u64;
    let mut classes = Vec::with_capacity(n);
    let mut zero_denominator_classes = Vec::new();
    for i in 0..n {
        let tp = confusion[i * n + i];
        let row: u64 = confusion[i * n..(i + 1) * n].iter().sum();
        let col: u64 = (0..n).map(|t| confusion[t * n + i]).sum();
        let fn_ = row - tp;
        let fp = col - tp;
        let tn = total - tp - fn_ - fp;
        if fp + tn == 0 || fn_ + tp == 0 {
            zero_denominator_classes.push(i);
        }
        classes.push(ClassCounts {
            true_pos: tp,
            false_pos: fp,
            false_neg: fn_,
            true_neg: tn,
            fpr: rate(fp, fp + tn),
            fnr: rate(fn_, fn_ + tp),
        });
    }
    Ok(ClassErrorStats { model_id: log.model_id.clone(), total, classes, zero_denominator_classes })
}

/// Percent changes of one class's error rates relative to the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassDelta<T> {
    pub delta_fpr: T,
    pub delta_fnr: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDeltaSet<T> {
    pub baseline_model_id: String,
    pub target_model_id: String,
    pub epsilon: T,
    pub deltas: Vec<ClassDelta<T>>,
    /// Classes where a zero (or sub-epsilon) baseline rate was replaced by
    /// the floor to compute a nonzero change.
    pub smoothed_classes: Vec<usize>,
}

impl<T: Real> ErrorDeltaSet<T> {
    pub fn n_classes(&self) -> usize {
        self.deltas.len()
    }

    /// `(delta_fpr, delta_fnr)` points, indexed by class.
    pub fn points(&self) -> Vec<(T, T)> {
        self.deltas.iter().map(|d| (d.delta_fpr, d.delta_fnr)).collect()
    }
}

/// `(target - baseline) / max(baseline, epsilon) * 100`, plus whether the floor engaged.
fn normalized_change<T: Real>(baseline: T, target: T, epsilon: T) -> Option<(T, bool)> {
    if target == baseline {
        return Some((T::zero(), false));
    }
    let floored = baseline < epsilon;
    let denom = if floored { epsilon } else { baseline };
    if denom == T::zero() {
        return None;
    }
    Some(((target - baseline) / denom * T::lit(100.0), floored))
}

pub fn error_deltas<T: Real>(
    baseline: &ClassErrorStats<T>,
    target: &ClassErrorStats<T>,
    epsilon: T,
) -> Result<ErrorDeltaSet<T>, MetricsError> {
    if !epsilon.is_finite() || epsilon < T::zero() {
        return Err(MetricsError::InvalidEpsilon(epsilon.as_f64()));
    }
    let mismatch = |detail: String| MetricsError::ShapeMismatch {
        baseline: baseline.model_id.clone(),
        target: target.model_id.clone(),
        detail,
    };
    if baseline.n_classes() != target.n_classes() {
        return Err(mismatch(format!("{} vs {} classes", baseline.n_classes(), target.n_classes())));
    }
    if baseline.total != target.total {
        return Err(mismatch(format!("{} vs {} records", baseline.total, target.total)));
    }
    if baseline.classes.is_empty() {
        return Err(MetricsError::Empty);
    }

    let mut deltas = Vec::with_capacity(baseline.n_classes());
    let mut smoothed_classes = Vec::new();
    for (class, (b, t)) in baseline.classes.iter().zip(&target.classes).enumerate() {
        let (delta_fpr, s_fpr) = normalized_change(b.fpr, t.fpr, epsilon)
            .ok_or(MetricsError::UnboundedDelta { class, rate: "FPR" })?;
        let (delta_fnr, s_fnr) = normalized_change(b.fnr, t.fnr, epsilon)
            .ok_or(MetricsError::UnboundedDelta { class, rate: "FNR" })?;
        if s_fpr || s_fnr {
            smoothed_classes.push(class);
        }
        deltas.push(ClassDelta { delta_fpr, delta_fnr });
    }
    Ok(ErrorDeltaSet {
        baseline_model_id: baseline.model_id.clone(),
        target_model_id: target.model_id.clone(),
        epsilon,
        deltas,
        smoothed_classes,
    })
}

/// CEV, SDE and the mean delta of one baseline/target pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasScores<T> {
    /// Mean squared Euclidean distance of the per-class delta pairs from
    /// their mean pair, in percent².
    pub cev: T,
    /// Mean distance of the per-class delta pairs from the line
    /// `delta_fnr == delta_fpr`, in percent.
    pub sde: T,
    /// Component-wise mean `(delta_fpr, delta_fnr)`.
    pub mean_delta: (T, T),
    /// Population variance of `delta_fpr`.
    pub variance_fpr: T,
    /// Population variance of `delta_fnr`.
    pub variance_fnr: T,
}

pub fn bias_scores<T: Real>(deltas: &ErrorDeltaSet<T>) -> Result<BiasScores<T>, MetricsError> {
    let n = deltas.deltas.len();
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    let count = T::from_count(n);
    let (sum_fpr, sum_fnr) = deltas
        .deltas
        .iter()
        .fold((T::zero(), T::zero()), |(a, b), d| (a + d.delta_fpr, b + d.delta_fnr));
    let mean = (sum_fpr / count, sum_fnr / count);

    let mut ss_fpr = T::zero();
    let mut ss_fnr = T::zero();
    let mut balance = T::zero();
    for d in &deltas.deltas {
        let dx = mean.0 - d.delta_fpr;
        let dy = mean.1 - d.delta_fnr;
        ss_fpr += dx * dx;
        ss_fnr += dy * dy;
        balance += (d.delta_fnr - d.delta_fpr).abs();
    }
    let variance_fpr = ss_fpr / count;
    let variance_fnr = ss_fnr / count;
    Ok(BiasScores {
        cev: (ss_fpr + ss_fnr) / count,
        sde: balance / count / T::lit(2.0).sqrt(),
        mean_delta: mean,
        variance_fpr,
        variance_fnr,
    })
}

/// Convenience: stats, deltas and scores for one baseline/target pair.
pub fn compare_logs<T: Real>(
    baseline: &PredictionLog,
    target: &PredictionLog,
    epsilon: T,
) -> Result<(ErrorDeltaSet<T>, BiasScores<T>), MetricsError> {
    let b = confusion_stats(baseline)?;
    let t = confusion_stats(target)?;
    let deltas = error_deltas(&b, &t, epsilon)?;
    let scores = bias_scores(&deltas)?;
    Ok((deltas, scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deltas(points: &[(f64, f64)]) -> ErrorDeltaSet<f64> {
        ErrorDeltaSet {
            baseline_model_id: "b".into(),
            target_model_id: "t".into(),
            epsilon: 1e-4,
            deltas: points.iter().map(|&(f, n)| ClassDelta { delta_fpr: f, delta_fnr: n }).collect(),
            smoothed_classes: vec![],
        }
    }

    fn stats_with(fpr: f64, fnr: f64) -> ClassErrorStats<f64> {
        ClassErrorStats {
            model_id: "m".into(),
            total: 10,
            classes: vec![ClassCounts { true_pos: 0, false_pos: 0, false_neg: 0, true_neg: 0, fpr, fnr }],
            zero_denominator_classes: vec![],
        }
    }

    #[test]
    fn two_class_hand_enumeration() {
        let log = PredictionLog::from_triples("m", 2, [("e0", 0, 0), ("e1", 0, 1), ("e2", 1, 1), ("e3", 1, 1)]).unwrap();
        let s = confusion_stats::<f64>(&log).unwrap();
        let c0 = s.classes[0];
        assert_eq!((c0.true_pos, c0.false_neg, c0.false_pos, c0.true_neg), (1, 1, 0, 2));
        assert_eq!((c0.fnr, c0.fpr), (0.5, 0.0));
        let c1 = s.classes[1];
        assert_eq!((c1.true_pos, c1.false_neg, c1.false_pos, c1.true_neg), (2, 0, 1, 1));
        assert_eq!((c1.fnr, c1.fpr), (0.0, 0.5));
        assert!(s.zero_denominator_classes.is_empty());
    }

    #[test]
    fn three_class_full_grid() {
        let mut triples = vec![];
        for t in 0..3 {
            for p in 0..3 {
                triples.push((format!("e{t}{p}"), t, p));
            }
        }
        let s = confusion_stats::<f64>(&PredictionLog::from_triples("m", 3, triples).unwrap()).unwrap();
        for c in &s.classes {
            assert_eq!((c.true_pos, c.false_neg, c.false_pos, c.true_neg), (1, 2, 2, 4));
            assert_eq!(c.fnr, 2.0 / 3.0);
            assert_eq!(c.fpr, 1.0 / 3.0);
        }
    }

    #[test]
    fn perfect_predictor_and_absent_class() {
        let log = PredictionLog::from_triples("m", 3, [("a", 0, 0), ("b", 1, 1)]).unwrap();
        let s = confusion_stats::<f64>(&log).unwrap();
        assert!(s.classes.iter().all(|c| c.fpr == 0.0 && c.fnr == 0.0));
        assert_eq!(s.zero_denominator_classes, vec![2]);
        for c in &s.classes {
            assert_eq!(c.true_pos + c.false_pos + c.false_neg + c.true_neg, 2);
        }
    }

    #[test]
    fn malformed_log_rejected() {
        let log = PredictionLog { model_id: "m".into(), n_classes: 2, records: vec![crate::Record::new("a", 0, 5)] };
        assert!(matches!(confusion_stats::<f64>(&log), Err(MetricsError::MalformedLog(_))));
        let empty = PredictionLog { model_id: "m".into(), n_classes: 2, records: vec![] };
        assert!(matches!(confusion_stats::<f64>(&empty), Err(MetricsError::MalformedLog(_))));
    }

    #[test]
    fn delta_examples() {
        let d = error_deltas(&stats_with(0.2, 0.5), &stats_with(0.2, 0.75), 1e-4).unwrap();
        assert_eq!(d.deltas[0].delta_fnr, 50.0);
        assert_eq!(d.deltas[0].delta_fpr, 0.0);
        assert!(d.smoothed_classes.is_empty());

        let d = error_deltas(&stats_with(0.2, 0.0), &stats_with(0.2, 0.1), 1e-4).unwrap();
        assert!((d.deltas[0].delta_fnr - 100000.0).abs() < 1e-9);
        assert_eq!(d.smoothed_classes, vec![0]);

        let same = stats_with(0.0, 0.0);
        let d = error_deltas(&same, &same, 1e-4).unwrap();
        assert_eq!(d.deltas[0], ClassDelta { delta_fpr: 0.0, delta_fnr: 0.0 });
        assert!(d.smoothed_classes.is_empty());
    }

    #[test]
    fn delta_errors() {
        let a = stats_with(0.0, 0.1);
        let mut b = stats_with(0.0, 0.1);
        b.classes.push(b.classes[0]);
        assert!(matches!(error_deltas(&a, &b, 1e-4), Err(MetricsError::ShapeMismatch { .. })));
        let mut c = stats_with(0.0, 0.1);
        c.total = 11;
        assert!(matches!(error_deltas(&a, &c, 1e-4), Err(MetricsError::ShapeMismatch { .. })));
        assert!(matches!(error_deltas(&a, &a, -1.0), Err(MetricsError::InvalidEpsilon(_))));
        assert!(matches!(error_deltas(&a, &a, f64::NAN), Err(MetricsError::InvalidEpsilon(_))));
        let d = stats_with(0.3, 0.1);
        assert!(matches!(error_deltas(&a, &d, 0.0), Err(MetricsError::UnboundedDelta { class: 0, rate: "FPR" })));
    }

    #[test]
    fn score_examples() {
        let s = bias_scores(&deltas(&[(10.0, 10.0), (10.0, 10.0), (10.0, 10.0)])).unwrap();
        assert_eq!((s.cev, s.sde, s.mean_delta), (0.0, 0.0, (10.0, 10.0)));

        let s = bias_scores(&deltas(&[(0.0, 0.0), (10.0, 10.0)])).unwrap();
        assert_eq!(s.cev, 50.0);
        assert_eq!(s.sde, 0.0);
        assert_eq!((s.variance_fpr, s.variance_fnr), (25.0, 25.0));

        let s = bias_scores(&deltas(&[(0.0, 20.0), (20.0, 0.0)])).unwrap();
        assert_eq!(s.cev, 200.0);
        assert!((s.sde - 14.142135623730951).abs() < 1e-12);

        assert!(matches!(bias_scores(&deltas(&[])), Err(MetricsError::Empty)));
    }

    #[test]
    fn works_in_f32() {
        let log = PredictionLog::from_triples("m", 2, [("e0", 0, 0), ("e1", 0, 1), ("e2", 1, 1), ("e3", 1, 1)]).unwrap();
        let s = confusion_stats::<f32>(&log).unwrap();
        assert_eq!(s.classes[0].fnr, 0.5f32);
    }
}
