use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spectral::FeatureMatrix;

/// Gradient-norm threshold at which the probe stops early.
pub const PROBE_TOL: f64 = 1e-6;
pub const PROBE_MAX_ITERS: usize = 5000;
const PROBE_STEP: f64 = 1.0;

/// Multinomial logistic regression (with bias) fitted by full-batch gradient
/// descent from zero weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    /// `classes x (d + 1)`, last column is the bias.
    pub weights: DMatrix<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
}

fn augmented(z: &FeatureMatrix) -> DMatrix<f64> {
    let (d, n) = z.data().shape();
    DMatrix::from_fn(d + 1, n, |r, c| if r < d { z.data()[(r, c)] } else { 1.0 })
}

fn softmax_columns(logits: &mut DMatrix<f64>) {
    for mut col in logits.column_iter_mut() {
        let max = col.max();
        col.apply(|v| *v = (*v - max).exp());
        let sum = col.sum();
        col /= sum;
    }
}

impl LinearProbe {
    pub fn fit(z: &FeatureMatrix, labels: &[usize], classes: usize) -> Result<Self> {
        if labels.len() != z.batch() {
            return Err(Error::SizeMismatch {
                left: z.batch(),
                right: labels.len(),
            });
        }
        for c in 0..classes {
            if !labels.contains(&c) {
                return Err(Error::DegenerateLabels(c));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::DegenerateLabels(bad));
        }
        let x = augmented(z);
        let n = z.batch() as f64;
        let onehot = DMatrix::from_fn(classes, labels.len(), |r, c| if labels[c] == r { 1.0 } else { 0.0 });
        let mut weights = DMatrix::zeros(classes, x.nrows());
        let mut grad_norm = f64::INFINITY;
        let mut iterations = 0;
        while iterations < PROBE_MAX_ITERS {
            let mut p = &weights * &x;
            softmax_columns(&mut p);
            let grad = (p - &onehot) * x.transpose() / n;
            grad_norm = grad.norm();
            if grad_norm < PROBE_TOL {
                break;
            }
            weights -= grad * PROBE_STEP;
            iterations += 1;
        }
        Ok(Self {
            weights,
            iterations,
            grad_norm,
        })
    }

    pub fn predict(&self, z: &FeatureMatrix) -> Vec<usize> {
        let logits = &self.weights * augmented(z);
        logits.column_iter().map(|col| col.argmax().0).collect()
    }

    pub fn accuracy(&self, z: &FeatureMatrix, labels: &[usize]) -> f64 {
        let pred = self.predict(z);
        let hits = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
        hits as f64 / labels.len() as f64
    }
}

/// Fits on the training features and returns test accuracy in `[0, 1]`.
pub fn linear_probe(
    z_train: &FeatureMatrix,
    labels_train: &[usize],
    z_test: &FeatureMatrix,
    labels_test: &[usize],
) -> Result<f64> {
    if z_train.dim() != z_test.dim() {
        return Err(Error::SizeMismatch {
            left: z_train.dim(),
            right: z_test.dim(),
        });
    }
    let classes = labels_train
        .iter()
        .chain(labels_test)
        .max()
        .map(|m| m + 1)
        .unwrap_or(0);
    let probe = LinearProbe::fit(z_train, labels_train, classes)?;
    Ok(probe.accuracy(z_test, labels_test))
}
