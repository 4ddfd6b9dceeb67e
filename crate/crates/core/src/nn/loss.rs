use ndarray::{Array2, ArrayView2};

use crate::{Error, Result};

/// Mean softmax cross-entropy and its gradient `(softmax - onehot) / batch`.
pub fn softmax_xent(logits: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (n, k) = logits.dim();
    if n == 0 {
        return Err(Error::param("empty batch"));
    }
    if labels.len() != n {
        return Err(Error::param(format!("{} labels for a batch of {n}", labels.len())));
    }
    let mut grad = Array2::<f64>::zeros((n, k));
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::param(format!("label {y} out of range for {k} classes")));
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[y];
        for j in 0..k {
            grad[[i, j]] = (row[j] - log_z).exp();
        }
        grad[[i, y]] -= 1.0;
    }
    grad /= n as f64;
    Ok((loss / n as f64, grad))
}
