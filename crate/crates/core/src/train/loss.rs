//! Softmax cross-entropy over score rows.

use crate::error::{GrdlError, Result};
use crate::tensor::Tensor;

/// Mean `-log softmax(s_i)[y_i]` over rows, with the row softmax.
pub fn softmax_cross_entropy(scores: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if scores.rows() != labels.len() {
        return Err(GrdlError::shape(
            "softmax_cross_entropy",
            format!("{} score rows for {} labels", scores.rows(), labels.len()),
        ));
    }
    if scores.rows() == 0 {
        return Err(GrdlError::EmptyBatch);
    }
    let k = scores.cols();
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(GrdlError::shape(
            "softmax_cross_entropy",
            format!("label {bad} with {k} classes"),
        ));
    }
    let mut probs = Tensor::zeros(scores.rows(), k);
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = scores.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|s| (s - max).exp()).sum();
        let log_z = z.ln() + max;
        total += log_z - row[y];
        for (p, s) in probs.row_mut(i).iter_mut().zip(row) {
            *p = (s - log_z).exp();
        }
    }
    Ok((total / labels.len() as f64, probs))
}

/// Gradient of the mean loss: `(softmax - onehot) / N`.
pub fn softmax_cross_entropy_grad(probs: &Tensor, labels: &[usize]) -> Tensor {
    let n = labels.len() as f64;
    let mut g = probs.scale(1.0 / n);
    for (i, &y) in labels.iter().enumerate() {
        let v = g.get(i, y) - 1.0 / n;
        g.set(i, y, v);
    }
    g
}
