//! Matrix information measures.
//!
//! Every entropy-type quantity is a function of the normalized spectrum
//! `lambda_i / n` of a unit-diagonal kernel, so all of them read the cached
//! eigenvalues of [`KernelMatrix`]. Values are in nats.
//!
//! | Function | Quantity |
//! |----------|----------|
//! | [`renyi_entropy`] | `1/(1-a) ln tr((K/n)^a)` |
//! | [`von_neumann_entropy`] | `-tr(K/n ln K/n)` |
//! | [`mutual_information`] | `H(K1) + H(K2) - H(K1 ∘ K2)` |
//! | [`joint_entropy`] | `H(K1 ∘ K2)` |
//! | [`matrix_kl`] | `tr[K1 (ln K1 - ln K2)]` |
//! | [`matrix_js`] | `H((K1+K2)/2) - (H(K1)+H(K2))/2` |
//! | [`eigen_js`] | classical JS between normalized spectra |
//! | [`tcr_kernel`], [`tcr_features`] | `ln det(mu I + K)` |
//! | [`effective_rank`] | `exp` of the entropy of normalized singular values |

use nalgebra::{DMatrix, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{
    covariance_kernel, gram_kernel, hadamard, matrix_log, same_size, symmetric_eig, FeatureMatrix, KernelKind,
    KernelMatrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    RenyiEntropy,
    VonNeumannEntropy,
    MutualInfo,
    JointEntropy,
    MatrixKl,
    MatrixJs,
    EigenJs,
    Tcr,
    EffectiveRank,
}

impl MeasureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MeasureKind::RenyiEntropy => "renyi_entropy",
            MeasureKind::VonNeumannEntropy => "von_neumann_entropy",
            MeasureKind::MutualInfo => "mutual_info",
            MeasureKind::JointEntropy => "joint_entropy",
            MeasureKind::MatrixKl => "matrix_kl",
            MeasureKind::MatrixJs => "matrix_js",
            MeasureKind::EigenJs => "eigen_js",
            MeasureKind::Tcr => "tcr",
            MeasureKind::EffectiveRank => "effective_rank",
        }
    }
}

/// A named measure with the order/regularizer it was computed at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureValue {
    pub name: MeasureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    pub value: f64,
}

impl MeasureValue {
    fn plain(name: MeasureKind, value: f64) -> Self {
        Self {
            name,
            alpha: None,
            mu: None,
            value,
        }
    }

    fn with_alpha(name: MeasureKind, alpha: f64, value: f64) -> Self {
        Self {
            name,
            alpha: Some(alpha),
            mu: None,
            value,
        }
    }

    /// Label such as `mutual_info[alpha=1]`, used for TSV output.
    pub fn label(&self) -> String {
        match (self.alpha, self.mu) {
            (Some(a), _) => format!("{}[alpha={a}]", self.name.as_str()),
            (None, Some(m)) => format!("{}[mu={m}]", self.name.as_str()),
            (None, None) => self.name.as_str().to_string(),
        }
    }
}

/// A discrete probability distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    weights: Vec<f64>,
}

impl ProbVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidShape("empty probability vector".into()));
        }
        if let Some(&w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidShape(format!("invalid probability weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidShape(format!(
                "probability weights sum to {total}"
            )));
        }
        Ok(Self { weights })
    }

    /// Normalized eigen distribution `lambda_k / n`, descending.
    pub fn from_kernel(k: &KernelMatrix) -> Self {
        let n = k.size() as f64;
        Self {
            weights: k.spectrum().eigenvalues().iter().map(|l| l / n).collect(),
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Shannon entropy with `0 ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        shannon(&self.weights)
    }

    /// Jensen-Shannon divergence `KL(p||m)/2 + KL(q||m)/2` with `m = (p+q)/2`.
    pub fn js_divergence(&self, other: &ProbVector) -> Result<f64> {
        if self.weights.len() != other.weights.len() {
            return Err(Error::SizeMismatch {
                left: self.weights.len(),
                right: other.weights.len(),
            });
        }
        let mut js = 0.0;
        for (&p, &q) in self.weights.iter().zip(&other.weights) {
            let m = 0.5 * (p + q);
            if p > 0.0 {
                js += 0.5 * p * (p / m).ln();
            }
            if q > 0.0 {
                js += 0.5 * q * (q / m).ln();
            }
        }
        Ok(js.max(0.0))
    }
}

fn shannon(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::BadAlpha(alpha));
    }
    Ok(())
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::BadMu(mu));
    }
    Ok(())
}

/// Entropy of order `alpha` from a kernel's spectrum, `alpha = 1` meaning von Neumann.
pub(crate) fn entropy_of(k: &KernelMatrix, alpha: f64) -> f64 {
    let n = k.size() as f64;
    let eig = k.spectrum().eigenvalues();
    if alpha == 1.0 {
        shannon(&eig.iter().map(|l| l / n).collect::<Vec<_>>())
    } else {
        let s: f64 = eig
            .iter()
            .filter(|&&l| l > 0.0)
            .map(|&l| (l / n).powf(alpha))
            .sum();
        s.ln() / (1.0 - alpha)
    }
}

/// Matrix Rényi entropy of order `alpha`; `alpha = 1` returns the von Neumann entropy.
pub fn renyi_entropy(k: &KernelMatrix, alpha: f64) -> Result<MeasureValue> {
    check_alpha(alpha)?;
    if alpha == 1.0 {
        return Ok(von_neumann_entropy(k));
    }
    Ok(MeasureValue::with_alpha(
        MeasureKind::RenyiEntropy,
        alpha,
        entropy_of(k, alpha),
    ))
}

pub fn von_neumann_entropy(k: &KernelMatrix) -> MeasureValue {
    MeasureValue::plain(MeasureKind::VonNeumannEntropy, entropy_of(k, 1.0))
}

/// `H_a(K1) + H_a(K2) - H_a(K1 ∘ K2)`.
pub fn mutual_information(k1: &KernelMatrix, k2: &KernelMatrix, alpha: f64) -> Result<MeasureValue> {
    check_alpha(alpha)?;
    let joint = hadamard(k1, k2)?;
    let value = entropy_of(k1, alpha) + entropy_of(k2, alpha) - entropy_of(&joint, alpha);
    Ok(MeasureValue::with_alpha(MeasureKind::MutualInfo, alpha, value))
}

/// `H_a(K1 ∘ K2)`.
pub fn joint_entropy(k1: &KernelMatrix, k2: &KernelMatrix, alpha: f64) -> Result<MeasureValue> {
    check_alpha(alpha)?;
    let joint = hadamard(k1, k2)?;
    Ok(MeasureValue::with_alpha(
        MeasureKind::JointEntropy,
        alpha,
        entropy_of(&joint, alpha),
    ))
}

/// `tr[K1 (ln K1 - ln K2)]`, without trace normalization.
///
/// `K1` may be singular (`tr[K1 ln K1] = sum lambda ln lambda` with `0 ln 0 = 0`);
/// `K2` must be strictly positive definite.
pub fn matrix_kl(k1: &KernelMatrix, k2: &DMatrix<f64>) -> Result<MeasureValue> {
    if k2.nrows() != k1.size() || k2.ncols() != k1.size() {
        return Err(Error::SizeMismatch {
            left: k1.size(),
            right: k2.nrows(),
        });
    }
    let log_k2 = matrix_log(k2).map_err(|e| match e {
        Error::SingularLog { eigenvalue } => Error::SingularSecondArgument { eigenvalue },
        other => other,
    })?;
    let self_term: f64 = k1
        .spectrum()
        .eigenvalues()
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| l * l.ln())
        .sum();
    let cross_term = k1.data().component_mul(&log_k2).sum();
    Ok(MeasureValue::plain(MeasureKind::MatrixKl, self_term - cross_term))
}

/// Matrix Jensen-Shannon divergence between two kernels.
pub fn matrix_js(k1: &KernelMatrix, k2: &KernelMatrix) -> Result<MeasureValue> {
    let mid = k1.midpoint(k2)?;
    let value = entropy_of(&mid, 1.0) - 0.5 * (entropy_of(k1, 1.0) + entropy_of(k2, 1.0));
    Ok(MeasureValue::plain(MeasureKind::MatrixJs, value))
}

/// Jensen-Shannon divergence between the descending normalized spectra.
pub fn eigen_js(k1: &KernelMatrix, k2: &KernelMatrix) -> Result<MeasureValue> {
    same_size(k1, k2)?;
    let value = ProbVector::from_kernel(k1).js_divergence(&ProbVector::from_kernel(k2))?;
    Ok(MeasureValue::plain(MeasureKind::EigenJs, value))
}

fn tcr_value(mu: f64, mu_label: f64, eigenvalues: impl Iterator<Item = f64>) -> MeasureValue {
    let value = eigenvalues.map(|l| (mu + l.max(0.0)).ln()).sum();
    MeasureValue {
        name: MeasureKind::Tcr,
        alpha: None,
        mu: Some(mu_label),
        value,
    }
}

/// Total coding rate `ln det(mu I + K)` of a kernel.
pub fn tcr_kernel(k: &KernelMatrix, mu: f64) -> Result<MeasureValue> {
    check_mu(mu)?;
    Ok(tcr_value(mu, mu, k.spectrum().eigenvalues().iter().copied()))
}

/// Total coding rate `ln det(mu I_d + Z Z^T)` of raw features.
pub fn tcr_features(z: &FeatureMatrix, mu: f64) -> Result<MeasureValue> {
    check_mu(mu)?;
    let zz = z.data() * z.data().transpose();
    let eig = symmetric_eig(&zz)?;
    Ok(tcr_value(mu, mu, eig.values.into_iter()))
}

/// `ln det(M)` for a symmetric positive definite `M`, through a Cholesky factor.
pub fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m.clone().cholesky().ok_or(Error::NotPsd {
        min: f64::NAN,
        max: f64::NAN,
    })?;
    Ok(2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

/// Effective rank `exp(H(p))`, `p_i = sigma_i / sum sigma`, over singular values of `a`.
pub fn effective_rank(a: &DMatrix<f64>) -> Result<MeasureValue> {
    if a.is_empty() {
        return Err(Error::AllZeroMatrix);
    }
    let svd = SVD::try_new(a.clone(), false, false, f64::EPSILON, 0).ok_or(Error::EigFailure)?;
    let sigma = svd.singular_values;
    let total: f64 = sigma.iter().sum();
    if !(total > 0.0) {
        return Err(Error::AllZeroMatrix);
    }
    let p: Vec<f64> = sigma.iter().map(|s| s / total).collect();
    Ok(MeasureValue::plain(MeasureKind::EffectiveRank, shannon(&p).exp()))
}

/// Numerical rank of a kernel.
pub fn numerical_rank(k: &KernelMatrix) -> usize {
    k.spectrum().numerical_rank()
}

/// Measures of one or two feature matrices, grouped by what they describe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub branch1: Vec<MeasureValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch2: Option<Vec<MeasureValue>>,
    /// Two-input measures; empty for a single input.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pair: Vec<MeasureValue>,
}

impl MeasureReport {
    /// `(scope, label, value)` triples in report order.
    pub fn rows(&self) -> Vec<(&'static str, String, f64)> {
        let mut out: Vec<_> = self.branch1.iter().map(|m| ("branch1", m.label(), m.value)).collect();
        if let Some(b2) = &self.branch2 {
            out.extend(b2.iter().map(|m| ("branch2", m.label(), m.value)));
        }
        out.extend(self.pair.iter().map(|m| ("pair", m.label(), m.value)));
        out
    }
}

/// Builds the kernel of the requested kind from features.
pub fn kernel_of(z: &FeatureMatrix, kind: KernelKind) -> Result<KernelMatrix> {
    match kind {
        KernelKind::Covariance => covariance_kernel(z),
        KernelKind::Gram => gram_kernel(z),
        KernelKind::Generic => Err(Error::Config {
            field: "kernel".into(),
            message: "features need a covariance or gram kernel".into(),
        }),
    }
}

fn single_report(k: &KernelMatrix, alphas: &[f64], mus: &[f64]) -> Result<Vec<MeasureValue>> {
    let mut out = Vec::with_capacity(alphas.len() + mus.len() + 1);
    for &a in alphas {
        out.push(renyi_entropy(k, a)?);
    }
    for &mu in mus {
        out.push(tcr_kernel(k, mu)?);
    }
    out.push(effective_rank(k.data())?);
    Ok(out)
}

/// Every applicable measure: entropies at each order, TCR at each `mu` and the
/// effective rank per input; with two inputs also mutual information and joint
/// entropy at each order, matrix JS and eigen JS.
pub fn feature_report(
    z1: &FeatureMatrix,
    z2: Option<&FeatureMatrix>,
    alphas: &[f64],
    mus: &[f64],
    kind: KernelKind,
) -> Result<MeasureReport> {
    let k1 = kernel_of(z1, kind)?;
    let branch1 = single_report(&k1, alphas, mus)?;
    let Some(z2) = z2 else {
        return Ok(MeasureReport {
            branch1,
            branch2: None,
            pair: Vec::new(),
        });
    };
    let k2 = kernel_of(z2, kind)?;
    same_size(&k1, &k2)?;
    let branch2 = single_report(&k2, alphas, mus)?;
    let mut pair = Vec::with_capacity(2 * alphas.len() + 2);
    for &a in alphas {
        pair.push(mutual_information(&k1, &k2, a)?);
    }
    for &a in alphas {
        pair.push(joint_entropy(&k1, &k2, a)?);
    }
    pair.push(matrix_js(&k1, &k2)?);
    pair.push(eigen_js(&k1, &k2)?);
    Ok(MeasureReport {
        branch1,
        branch2: Some(branch2),
        pair,
    })
}
