use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Mean squared error over all elements and its gradient with respect to
/// `prediction`.
pub fn mse(prediction: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if prediction.len() != target.len() || prediction.is_empty() {
        return Err(Error::Shape(format!(
            "mse between {:?} and {:?}",
            prediction.shape(),
            target.shape()
        )));
    }
    let count = prediction.len() as f64;
    let mut loss = 0.0;
    let grad = prediction
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / count
        })
        .collect();
    Ok((loss / count, Tensor::from_vec(prediction.shape(), grad)?))
}

/// Mean softmax cross-entropy of `[batch, classes]` logits against class
/// labels, and the gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (batch, classes) = logits.rows_cols()?;
    if labels.len() != batch || batch == 0 {
        return Err(Error::Shape(format!(
            "{} labels for {batch} rows of logits",
            labels.len()
        )));
    }
    let mut grad = vec![0.0; batch * classes];
    let mut loss = 0.0;
    for (s, (row, &label)) in logits.data().chunks_exact(classes).zip(labels).enumerate() {
        if label >= classes {
            return Err(Error::Shape(format!("label {label} >= {classes} classes")));
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        loss += sum.ln() + max - row[label];
        for (j, e) in exps.iter().enumerate() {
            let p = e / sum;
            grad[s * classes + j] = (p - if j == label { 1.0 } else { 0.0 }) / batch as f64;
        }
    }
    Ok((loss / batch as f64, Tensor::from_vec(&[batch, classes], grad)?))
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}
