//! Naive reference implementations used to check the library.
//!
//! Nothing here calls into the metric code paths; rates are counted record
//! by record and CEV uses the pairwise form of the variance,
//! `1/(2n²) Σᵢ Σⱼ ‖δᵢ − δⱼ‖²`.
#![allow(dead_code)]

use biascope_core::PredictionLog;

/// `(fpr, fnr)` per class, counting one class at a time.
pub fn naive_rates(log: &PredictionLog) -> Vec<(f64, f64)> {
    (0..log.n_classes)
        .map(|class| {
            let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
            for r in &log.records {
                match (r.true_label == class, r.pred_label == class) {
                    (true, true) => tp += 1,
                    (true, false) => fn_ += 1,
                    (false, true) => fp += 1,
                    (false, false) => tn += 1,
                }
            }
            let fpr = if fp + tn == 0 { 0.0 } else { fp as f64 / (fp + tn) as f64 };
            let fnr = if fn_ + tp == 0 { 0.0 } else { fn_ as f64 / (fn_ + tp) as f64 };
            (fpr, fnr)
        })
        .collect()
}

fn change(base: f64, target: f64, epsilon: f64) -> f64 {
    if base == target {
        0.0
    } else {
        (target - base) / base.max(epsilon) * 100.0
    }
}

/// Per-class `(delta_fpr, delta_fnr)` in percent.
pub fn naive_deltas(baseline: &PredictionLog, target: &PredictionLog, epsilon: f64) -> Vec<(f64, f64)> {
    naive_rates(baseline)
        .into_iter()
        .zip(naive_rates(target))
        .map(|((bf, bn), (tf, tn))| (change(bf, tf, epsilon), change(bn, tn, epsilon)))
        .collect()
}

/// CEV via the pairwise identity and SDE as a plain mean.
pub fn naive_cev_sde(deltas: &[(f64, f64)]) -> (f64, f64) {
    let n = deltas.len() as f64;
    let mut pair_sum = 0.0;
    for a in deltas {
        for b in deltas {
            pair_sum += (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
        }
    }
    let cev = pair_sum / (2.0 * n * n);
    let sde = deltas.iter().map(|(f, n_)| (n_ - f).abs() / 2f64.sqrt()).sum::<f64>() / n;
    (cev, sde)
}

/// Relative difference, treating two exact zeros as equal.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Brute-force plurality vote with ties to the smallest label.
pub fn vote(predictions: &[usize]) -> usize {
    let max_label = *predictions.iter().max().unwrap();
    let mut best = (0usize, 0usize);
    for label in 0..=max_label {
        let count = predictions.iter().filter(|&&p| p == label).count();
        if count > best.1 {
            best = (label, count);
        }
    }
    best.0
}
