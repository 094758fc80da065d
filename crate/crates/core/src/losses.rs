//! Self-supervised objectives and their analytic gradients.
//!
//! All losses are batch sums. Gradients are taken with respect to the raw
//! feature matrices (columns are samples); callers that normalize their
//! features backpropagate through the normalization themselves.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::tcr_features;
use crate::spectral::{batch_normalize, row_moments, FeatureMatrix, MaskVector};

/// A scalar loss and its named components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    pub terms: BTreeMap<String, f64>,
}

impl LossValue {
    fn new(total: f64, terms: &[(&str, f64)]) -> Self {
        Self {
            total,
            terms: terms.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.get(name).copied()
    }

    /// Total divided by the batch size.
    pub fn per_sample(&self, batch: usize) -> f64 {
        self.total / batch as f64
    }
}

/// Loss together with gradients for both branches.
#[derive(Debug, Clone)]
pub struct PairGradient {
    pub loss: LossValue,
    pub grad1: DMatrix<f64>,
    pub grad2: DMatrix<f64>,
}

fn same_shape(z1: &FeatureMatrix, z2: &FeatureMatrix) -> Result<()> {
    if z1.data().shape() != z2.data().shape() {
        return Err(Error::ShapeMismatch {
            left: z1.data().shape(),
            right: z2.data().shape(),
        });
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::BadLambda(lambda));
    }
    Ok(())
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::BadMu(mu));
    }
    Ok(())
}

/// Row-wise softmax and log-sum-exp of `s`.
fn softmax_rows(s: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let mut p = s.clone();
    let mut lse = Vec::with_capacity(s.nrows());
    for i in 0..s.nrows() {
        let max = s.row(i).iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let sum: f64 = s.row(i).iter().map(|&x| (x - max).exp()).sum();
        let l = max + sum.ln();
        for j in 0..s.ncols() {
            p[(i, j)] = (s[(i, j)] - l).exp();
        }
        lse.push(l);
    }
    (p, lse)
}

/// Symmetric InfoNCE with logits `z1_i . z2_j / temperature`.
///
/// `total = (forward + backward) / 2`, where `forward` sums the
/// cross-entropy of each branch-1 sample against all branch-2 samples and
/// `backward` the reverse.
pub fn infonce(z1: &FeatureMatrix, z2: &FeatureMatrix, temperature: f64) -> Result<LossValue> {
    Ok(infonce_grad(z1, z2, temperature)?.loss)
}

pub fn infonce_grad(z1: &FeatureMatrix, z2: &FeatureMatrix, temperature: f64) -> Result<PairGradient> {
    same_shape(z1, z2)?;
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::BadTemperature(temperature));
    }
    let b = z1.batch();
    let s = z1.data().transpose() * z2.data() / temperature;
    let (p, lse_fwd) = softmax_rows(&s);
    let st = s.transpose();
    let (q, lse_bwd) = softmax_rows(&st);
    let forward: f64 = (0..b).map(|i| lse_fwd[i] - s[(i, i)]).sum();
    let backward: f64 = (0..b).map(|i| lse_bwd[i] - st[(i, i)]).sum();
    let total = 0.5 * (forward + backward);

    let eye = DMatrix::<f64>::identity(b, b);
    let d_s = ((&p - &eye) + (&q - &eye).transpose()) * 0.5;
    let grad1 = z2.data() * d_s.transpose() / temperature;
    let grad2 = z1.data() * &d_s / temperature;
    Ok(PairGradient {
        loss: LossValue::new(total, &[("forward", forward), ("backward", backward)]),
        grad1,
        grad2,
    })
}

/// `sum_i |z1_i - z2_i|^2 + lambda * sum_{i != j} (z1_i . z2_j)^2`.
pub fn spectral_contrastive(z1: &FeatureMatrix, z2: &FeatureMatrix, lambda: f64) -> Result<LossValue> {
    Ok(spectral_contrastive_grad(z1, z2, lambda)?.loss)
}

pub fn spectral_contrastive_grad(
    z1: &FeatureMatrix,
    z2: &FeatureMatrix,
    lambda: f64,
) -> Result<PairGradient> {
    same_shape(z1, z2)?;
    check_lambda(lambda)?;
    let diff = z1.data() - z2.data();
    let alignment = diff.norm_squared();
    let mut s = z1.data().transpose() * z2.data();
    s.fill_diagonal(0.0);
    let uniformity = s.norm_squared();
    let total = alignment + lambda * uniformity;

    let d_s = s * (2.0 * lambda);
    let grad1 = &diff * 2.0 + z2.data() * d_s.transpose();
    let grad2 = &diff * -2.0 + z1.data() * &d_s;
    Ok(PairGradient {
        loss: LossValue::new(total, &[("alignment", alignment), ("uniformity", uniformity)]),
        grad1,
        grad2,
    })
}

/// `d x d` cross-correlation between batch-normalized branch outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCorrelation {
    data: DMatrix<f64>,
}

impl CrossCorrelation {
    pub fn new(z1: &FeatureMatrix, z2: &FeatureMatrix) -> Result<Self> {
        same_shape(z1, z2)?;
        if z1.batch() < 2 {
            return Err(Error::InvalidShape(format!(
                "cross-correlation needs at least 2 samples, got {}",
                z1.batch()
            )));
        }
        let n1 = batch_normalize(z1)?;
        let n2 = batch_normalize(z2)?;
        Ok(Self {
            data: &n1 * n2.transpose() / z1.batch() as f64,
        })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }
}

/// Barlow Twins: `sum_i (1 - C_ii)^2 + lambda * sum_i sum_{j != i} C_ij^2`,
/// summed over feature dimensions.
pub fn barlow_twins(z1: &FeatureMatrix, z2: &FeatureMatrix, lambda: f64) -> Result<LossValue> {
    Ok(barlow_twins_grad(z1, z2, lambda)?.loss)
}

pub fn barlow_twins_grad(z1: &FeatureMatrix, z2: &FeatureMatrix, lambda: f64) -> Result<PairGradient> {
    same_shape(z1, z2)?;
    check_lambda(lambda)?;
    if z1.batch() < 2 {
        return Err(Error::InvalidShape(format!(
            "Barlow Twins needs at least 2 samples, got {}",
            z1.batch()
        )));
    }
    let b = z1.batch() as f64;
    let n1 = batch_normalize(z1)?;
    let n2 = batch_normalize(z2)?;
    let c = &n1 * n2.transpose() / b;
    let d = c.nrows();

    let mut invariance = 0.0;
    let mut redundancy = 0.0;
    let mut d_c = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let v = c[(i, j)];
            if i == j {
                invariance += (1.0 - v).powi(2);
                d_c[(i, j)] = -2.0 * (1.0 - v);
            } else {
                redundancy += v * v;
                d_c[(i, j)] = 2.0 * lambda * v;
            }
        }
    }
    let total = invariance + lambda * redundancy;

    let d_n1 = &d_c * &n2 / b;
    let d_n2 = d_c.transpose() * &n1 / b;
    Ok(PairGradient {
        loss: LossValue::new(total, &[("invariance", invariance), ("redundancy", redundancy)]),
        grad1: batch_norm_backward(z1.data(), &n1, &d_n1),
        grad2: batch_norm_backward(z2.data(), &n2, &d_n2),
    })
}

/// Pulls a gradient through per-row standardization `xbar = (x - mean) / std`.
fn batch_norm_backward(x: &DMatrix<f64>, xbar: &DMatrix<f64>, upstream: &DMatrix<f64>) -> DMatrix<f64> {
    let b = x.ncols() as f64;
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for (r, (_, std)) in row_moments(x).into_iter().enumerate() {
        let g = upstream.row(r);
        let nb = xbar.row(r);
        let mean_g = g.sum() / b;
        let mean_gx = g.dot(&nb) / b;
        for c in 0..x.ncols() {
            out[(r, c)] = (g[c] - mean_g - nb[c] * mean_gx) / std;
        }
    }
    out
}

/// A flat sample split into `n` equal patches, with its visibility mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchedSample {
    values: DVector<f64>,
    patch_size: usize,
    mask: MaskVector,
}

impl PatchedSample {
    pub fn new(values: DVector<f64>, mask: MaskVector) -> Result<Self> {
        let n = mask.len();
        if n == 0 || !values.len().is_multiple_of(n) {
            return Err(Error::IndivisibleLength {
                len: values.len(),
                patches: n,
            });
        }
        let patch_size = values.len() / n;
        Ok(Self {
            values,
            patch_size,
            mask,
        })
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn mask(&self) -> &MaskVector {
        &self.mask
    }

    pub fn patch_count(&self) -> usize {
        self.mask.len()
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    /// 1.0 where the entry belongs to a visible patch.
    pub fn visible_weights(&self) -> DVector<f64> {
        DVector::from_fn(self.values.len(), |i, _| {
            if self.mask.is_visible(i / self.patch_size) {
                1.0
            } else {
                0.0
            }
        })
    }

    /// `x ∘ m`, the encoder's view.
    pub fn visible_view(&self) -> DVector<f64> {
        self.values.component_mul(&self.visible_weights())
    }

    /// `x ∘ (1 - m)`, the reconstruction target.
    pub fn hidden_view(&self) -> DVector<f64> {
        &self.values - self.visible_view()
    }

    pub fn hidden_entry_count(&self) -> usize {
        (self.mask.len() - self.mask.visible_count()) * self.patch_size
    }
}

/// Number of visible patches for a given mask ratio, kept inside `[1, n-1]`.
pub fn visible_patch_count(n: usize, ratio: f64) -> usize {
    let raw = ((1.0 - ratio) * n as f64).round() as usize;
    raw.clamp(1, n - 1)
}

/// Splits `x` into `n` patches and hides a `ratio` fraction of them, seeded.
pub fn mask_sample(x: &[f64], n: usize, ratio: f64, seed: u64) -> Result<PatchedSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mask_sample_with(x, n, ratio, &mut rng)
}

/// Same as [`mask_sample`] but draws from a caller-owned generator.
pub fn mask_sample_with<R: Rng + ?Sized>(
    x: &[f64],
    n: usize,
    ratio: f64,
    rng: &mut R,
) -> Result<PatchedSample> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::BadRatio(ratio));
    }
    if n < 2 || !x.len().is_multiple_of(n) {
        return Err(Error::IndivisibleLength {
            len: x.len(),
            patches: n,
        });
    }
    let visible = visible_patch_count(n, ratio);
    let mut bits = vec![false; n];
    for i in index::sample(rng, n, visible) {
        bits[i] = true;
    }
    PatchedSample::new(DVector::from_column_slice(x), MaskVector::new(bits)?)
}

/// How reconstruction error is aggregated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Sum over the batch and over hidden entries.
    #[default]
    Sum,
    /// Mean over all hidden entries in the batch.
    Mean,
}

/// Reconstruction loss `sum_i |g(z_i) - x_i ∘ (1 - m_i)|^2` over hidden entries.
///
/// `predicted` holds one decoded full-length vector per column.
pub fn mae_loss(predicted: &DMatrix<f64>, samples: &[PatchedSample], reduction: Reduction) -> Result<LossValue> {
    Ok(mae_grad(predicted, samples, reduction)?.0)
}

/// MAE loss and its gradient with respect to `predicted`.
pub fn mae_grad(
    predicted: &DMatrix<f64>,
    samples: &[PatchedSample],
    reduction: Reduction,
) -> Result<(LossValue, DMatrix<f64>)> {
    let len = samples.first().map(|s| s.values().len()).unwrap_or(0);
    if predicted.ncols() != samples.len() || predicted.nrows() != len {
        return Err(Error::ShapeMismatch {
            left: predicted.shape(),
            right: (len, samples.len()),
        });
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut grad = DMatrix::zeros(predicted.nrows(), predicted.ncols());
    for (i, s) in samples.iter().enumerate() {
        if s.values().len() != len {
            return Err(Error::ShapeMismatch {
                left: predicted.shape(),
                right: (s.values().len(), samples.len()),
            });
        }
        let w = s.visible_weights();
        for r in 0..len {
            if w[r] == 0.0 {
                let e = predicted[(r, i)] - s.values()[r];
                sum += e * e;
                grad[(r, i)] = 2.0 * e;
            }
        }
        count += s.hidden_entry_count();
    }
    let total = match reduction {
        Reduction::Sum => sum,
        Reduction::Mean => {
            grad /= count as f64;
            sum / count as f64
        }
    };
    Ok((LossValue::new(total, &[("reconstruction", total)]), grad))
}

/// `2 (mu I_d + Z Z^T)^{-1} Z`, the gradient of `ln det(mu I_d + Z Z^T)`.
pub fn tcr_gradient(z: &FeatureMatrix, mu: f64) -> Result<DMatrix<f64>> {
    check_mu(mu)?;
    let d = z.dim();
    let m = DMatrix::identity(d, d) * mu + z.data() * z.data().transpose();
    let chol = m.cholesky().ok_or(Error::NotPsd {
        min: f64::NAN,
        max: f64::NAN,
    })?;
    Ok(chol.solve(z.data()) * 2.0)
}

/// M-MAE: `recon - lambda * TCR_mu(Z)`.
pub fn mmae_loss(recon: &LossValue, z: &FeatureMatrix, lambda: f64, mu: f64) -> Result<LossValue> {
    check_lambda(lambda)?;
    let tcr = tcr_features(z, mu)?.value;
    Ok(LossValue::new(
        recon.total - lambda * tcr,
        &[("reconstruction", recon.total), ("tcr", tcr)],
    ))
}

/// Gradient of the `-lambda * TCR_mu(Z)` term.
pub fn mmae_regularizer_grad(z: &FeatureMatrix, lambda: f64, mu: f64) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    Ok(tcr_gradient(z, mu)? * -lambda)
}

fn off_diagonal_gram(z: &FeatureMatrix) -> DMatrix<f64> {
    let mut g = z.data().transpose() * z.data();
    g.fill_diagonal(0.0);
    g
}

/// U-MAE: `recon + lambda / (2 mu^2) * sum_{i != j} (z_i . z_j)^2`.
///
/// The penalty is the non-constant second-order Taylor term of M-MAE's
/// `-lambda ln det(I_B + Z^T Z / mu)` for unit columns.
pub fn umae_loss(recon: &LossValue, z: &FeatureMatrix, lambda: f64, mu: f64) -> Result<LossValue> {
    check_lambda(lambda)?;
    check_mu(mu)?;
    let uniformity = off_diagonal_gram(z).norm_squared();
    Ok(LossValue::new(
        recon.total + lambda / (2.0 * mu * mu) * uniformity,
        &[("reconstruction", recon.total), ("uniformity", uniformity)],
    ))
}

/// Gradient of the U-MAE uniformity penalty, `(2 lambda / mu^2) Z G_off`.
pub fn umae_regularizer_grad(z: &FeatureMatrix, lambda: f64, mu: f64) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    check_mu(mu)?;
    Ok(z.data() * off_diagonal_gram(z) * (2.0 * lambda / (mu * mu)))
}

/// `|ln det(I_B + W^T W / mu) - [tr(W^T W)/mu - tr((W^T W)^2)/(2 mu^2)]|` with `W = sZ`,
/// for each scale `s`.
pub fn taylor_residual(z: &FeatureMatrix, mu: f64, scales: &[f64]) -> Result<Vec<f64>> {
    check_mu(mu)?;
    let gram = z.data().transpose() * z.data();
    let eig = crate::spectral::symmetric_eig(&gram)?;
    scales
        .iter()
        .map(|&s| {
            if !(s > 0.0 && s <= 1.0) {
                return Err(Error::InvalidShape(format!("scale {s} outside (0, 1]")));
            }
            let s2 = s * s;
            let exact: f64 = eig.values.iter().map(|&l| (s2 * l.max(0.0) / mu).ln_1p()).sum();
            let g = &gram * s2;
            let second = g.trace() / mu - g.norm_squared() / (2.0 * mu * mu);
            Ok((exact - second).abs())
        })
        .collect()
}

/// Least-squares slope of `ln residual` against `ln scale`.
pub fn log_log_slope(scales: &[f64], residuals: &[f64]) -> f64 {
    let xs: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = residuals.iter().map(|r| r.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
