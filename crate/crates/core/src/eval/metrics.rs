use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Root mean squared difference between true and estimated effects.
pub fn pehe(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::input(format!("pehe: {} true vs {} estimated effects", truth.len(), estimate.len())));
    }
    if truth.is_empty() {
        return Err(Error::input("pehe of an empty set"));
    }
    let mse = truth.iter().zip(estimate).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / truth.len() as f64;
    Ok(mse.sqrt())
}

/// Pearson correlation; `None` when fewer than two samples or either side
/// is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Largest absolute Pearson correlation between any column of `estimate`
/// and `truth`. Constant columns are skipped; `None` when nothing is
/// defined.
pub fn exposure_correlation(estimate: &Tensor, truth: &[f64]) -> Result<Option<f64>> {
    if estimate.rows() != truth.len() {
        return Err(Error::input(format!("correlation: {} estimated rows vs {} true values", estimate.rows(), truth.len())));
    }
    let mut best: Option<f64> = None;
    let mut column = vec![0.0; estimate.rows()];
    for c in 0..estimate.cols() {
        for (r, v) in column.iter_mut().enumerate() {
            *v = estimate.get(r, c);
        }
        if let Some(r) = pearson(&column, truth) {
            best = Some(best.map_or(r.abs(), |b| b.max(r.abs())));
        }
    }
    Ok(best)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    Some((mean, sd))
}
