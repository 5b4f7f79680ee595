use std::collections::{BTreeMap, BTreeSet};

use super::EvalError;

const SUM_TOLERANCE: f64 = 1e-9;

fn check(p: &[f64]) -> Result<(), EvalError> {
    if let Some(x) = p.iter().find(|x| x.is_nan() || **x < 0.0) {
        return Err(EvalError::Negative(x.to_string()));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SUM_TOLERANCE {
        return Err(EvalError::NotNormalized(s.to_string()));
    }
    Ok(())
}

/// KL(p || m) with 0 log 0 = 0; `m` is positive wherever `p` is.
fn kl(p: &[f64], m: &[f64], base: f64) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, mi)| pi * (pi / mi).log(base))
        .sum()
}

/// Jensen-Shannon divergence of two distributions over the same support,
/// with logarithms in `base` (base 2 bounds it by 1).
pub fn js_divergence(p: &[f64], q: &[f64], base: f64) -> Result<f64, EvalError> {
    if p.len() != q.len() {
        return Err(EvalError::SupportMismatch(p.len(), q.len()));
    }
    check(p)?;
    check(q)?;
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let d = 0.5 * kl(p, &m, base) + 0.5 * kl(q, &m, base);
    Ok(d.max(0.0))
}

/// JSD of two keyed distributions; keys missing on one side have
/// probability 0 there.
pub fn js_divergence_maps(
    p: &BTreeMap<String, f64>,
    q: &BTreeMap<String, f64>,
    base: f64,
) -> Result<f64, EvalError> {
    let keys: BTreeSet<&String> = p.keys().chain(q.keys()).collect();
    let pv: Vec<f64> = keys
        .iter()
        .map(|k| p.get(*k).copied().unwrap_or(0.0))
        .collect();
    let qv: Vec<f64> = keys
        .iter()
        .map(|k| q.get(*k).copied().unwrap_or(0.0))
        .collect();
    js_divergence(&pv, &qv, base)
}

/// Counts to probabilities. An empty table stays empty.
pub fn normalize_counts(counts: &BTreeMap<String, usize>) -> BTreeMap<String, f64> {
    let total: usize = counts.values().sum();
    counts
        .iter()
        .filter(|(_, c)| total > 0 && **c > 0)
        .map(|(k, c)| (k.clone(), *c as f64 / total as f64))
        .collect()
}
