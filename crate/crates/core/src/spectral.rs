//! Dense symmetric linear algebra underneath every measure.
//!
//! Kernels are built from feature matrices (covariance or Gram), sanitized
//! into [`KernelMatrix`] values that carry their eigendecomposition, and then
//! consumed by the functions in [`crate::measures`]. The eigensolver itself is
//! nalgebra's symmetric QR iteration; this module adds ordering, tolerance
//! policy and the `0^a = 0` / `0 ln 0 = 0` conventions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Asymmetry tolerance accepted by the eigensolver, relative to `max(1, |M|_max)`.
pub const SYMMETRY_TOL: f64 = 1e-8;
/// Negative eigenvalues down to `-CLAMP_TOL * lambda_max` are treated as noise.
pub const CLAMP_TOL: f64 = 1e-8;
/// Maximum deviation of a diagonal entry from 1 that sanitation will repair.
pub const DIAGONAL_TOL: f64 = 1e-6;
/// Relative threshold used for numerical rank.
pub const RANK_TOL: f64 = 1e-8;
/// Relative threshold below which the matrix logarithm is refused.
pub const LOG_TOL: f64 = 1e-12;

/// A `d x B` matrix whose columns are sample representations.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: DMatrix<f64>,
}

impl FeatureMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidShape(format!(
                "feature matrix must be at least 1x1, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        for c in 0..data.ncols() {
            for r in 0..data.nrows() {
                if !data[(r, c)].is_finite() {
                    return Err(Error::NonFinite { row: r, col: c });
                }
            }
        }
        Ok(Self { data })
    }

    /// Builds a feature matrix from row-major values (`dim` rows, `batch` columns).
    pub fn from_row_slice(dim: usize, batch: usize, values: &[f64]) -> Result<Self> {
        if values.len() != dim * batch {
            return Err(Error::InvalidShape(format!(
                "expected {} values for a {dim}x{batch} matrix, got {}",
                dim * batch,
                values.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(dim, batch, values))
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Batch size `B`.
    pub fn batch(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    /// Errors unless every column has Euclidean norm `1 ± 1e-10`.
    pub fn check_unit_columns(&self) -> Result<()> {
        for (index, col) in self.data.column_iter().enumerate() {
            let norm = col.norm();
            if (norm - 1.0).abs() > 1e-10 {
                return Err(Error::NotUnitColumns { index, norm });
            }
        }
        Ok(())
    }

    /// Returns a copy with every column scaled to unit Euclidean norm.
    pub fn normalize_columns(&self) -> Result<Self> {
        let mut data = self.data.clone();
        for (index, mut col) in data.column_iter_mut().enumerate() {
            let norm = col.norm();
            if norm == 0.0 {
                return Err(Error::ZeroColumn(index));
            }
            col /= norm;
        }
        Ok(Self { data })
    }
}

/// Which construction produced a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `d x d` batch-normalized sample covariance.
    Covariance,
    /// `B x B` Gram matrix of normalized columns.
    Gram,
    /// Anything else (Hadamard products, averages, hand-built matrices).
    Generic,
}

/// Descending, nonnegative eigenvalues of a sanitized kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    clamped_count: usize,
    trace: f64,
}

impl Spectrum {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Number of slightly negative eigenvalues that were set to zero.
    pub fn clamped_count(&self) -> usize {
        self.clamped_count
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    /// Count of eigenvalues above `RANK_TOL * lambda_max`.
    pub fn numerical_rank(&self) -> usize {
        let cut = RANK_TOL * self.max();
        self.eigenvalues.iter().filter(|&&l| l > cut).count()
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, aligned with `values`.
    pub vectors: DMatrix<f64>,
}

impl SymmetricEigen {
    /// `V diag(f(lambda)) V^T`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        reconstruct(&self.vectors, self.values.iter().map(|&l| f(l)))
    }
}

fn reconstruct(vectors: &DMatrix<f64>, values: impl Iterator<Item = f64>) -> DMatrix<f64> {
    let mut scaled = vectors.clone();
    for (mut col, v) in scaled.column_iter_mut().zip(values) {
        col *= v;
    }
    let out = &scaled * vectors.transpose();
    symmetrize(out)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()))
}

/// Largest `|M_ij - M_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::InvalidShape(format!(
            "expected a nonempty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if !m[(r, c)].is_finite() {
                return Err(Error::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix.
///
/// The input must be symmetric to within `1e-8 * max(1, |M|_max)`; it is
/// exactly symmetrized before being handed to the solver.
pub fn symmetric_eig(m: &DMatrix<f64>) -> Result<SymmetricEigen> {
    check_square(m)?;
    let asym = asymmetry(m);
    if asym > SYMMETRY_TOL * max_abs(m).max(1.0) {
        return Err(Error::NonSymmetric { asymmetry: asym });
    }
    let sym = symmetrize(m.clone());
    let n = sym.nrows();
    let eig = sym
        .try_symmetric_eigen(f64::EPSILON, 0)
        .ok_or(Error::EigFailure)?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigFailure);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SymmetricEigen { values, vectors })
}

/// A symmetric PSD matrix with unit diagonal and a cached eigendecomposition.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    data: DMatrix<f64>,
    kind: KernelKind,
    spectrum: Spectrum,
    vectors: DMatrix<f64>,
}

impl KernelMatrix {
    pub fn identity(n: usize) -> Self {
        Self::from_matrix(DMatrix::identity(n, n), KernelKind::Generic)
            .expect("identity is a valid kernel")
    }

    /// The all-ones matrix `J_n`.
    pub fn ones(n: usize) -> Self {
        Self::from_matrix(DMatrix::from_element(n, n, 1.0), KernelKind::Generic)
            .expect("all-ones is a valid kernel")
    }

    /// Sanitizes `m` and tags it with `kind`.
    pub fn from_matrix(m: DMatrix<f64>, kind: KernelKind) -> Result<Self> {
        let mut k = psd_sanitize(&m)?;
        k.kind = kind;
        Ok(k)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.data.nrows()
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Entrywise mean `(self + other) / 2`, which keeps the unit diagonal.
    pub fn midpoint(&self, other: &KernelMatrix) -> Result<KernelMatrix> {
        same_size(self, other)?;
        psd_sanitize(&((&self.data + &other.data) * 0.5))
    }
}

pub(crate) fn same_size(a: &KernelMatrix, b: &KernelMatrix) -> Result<()> {
    if a.size() != b.size() {
        return Err(Error::SizeMismatch {
            left: a.size(),
            right: b.size(),
        });
    }
    Ok(())
}

/// Enforces the kernel preconditions on an empirical estimate.
///
/// Diagonal entries within `1e-6` of one are reset to exactly one, and
/// negative eigenvalues no lower than `-1e-8 * lambda_max` are clamped to zero.
/// Eigenvalues whose magnitude is below the solver's accuracy floor
/// (`n * eps * lambda_max`) are reported as exact zeros.
pub fn psd_sanitize(m: &DMatrix<f64>) -> Result<KernelMatrix> {
    check_square(m)?;
    let asym = asymmetry(m);
    if asym > SYMMETRY_TOL * max_abs(m).max(1.0) {
        return Err(Error::NonSymmetric { asymmetry: asym });
    }
    let mut data = symmetrize(m.clone());
    let n = data.nrows();
    for i in 0..n {
        let v = data[(i, i)];
        if (v - 1.0).abs() > DIAGONAL_TOL {
            return Err(Error::BadDiagonal { index: i, value: v });
        }
        data[(i, i)] = 1.0;
    }

    let eig = symmetric_eig(&data)?;
    let max = eig.values[0];
    let min = eig.values[n - 1];
    if min < -CLAMP_TOL * max.max(0.0) {
        return Err(Error::NotPsd { min, max });
    }
    let floor = n as f64 * f64::EPSILON * max;
    let mut clamped_count = 0;
    let eigenvalues: Vec<f64> = eig
        .values
        .iter()
        .map(|&l| {
            if l < 0.0 {
                clamped_count += 1;
                0.0
            } else if l <= floor {
                0.0
            } else {
                l
            }
        })
        .collect();
    let trace = eigenvalues.iter().sum();
    Ok(KernelMatrix {
        data,
        kind: KernelKind::Generic,
        spectrum: Spectrum {
            eigenvalues,
            clamped_count,
            trace,
        },
        vectors: eig.vectors,
    })
}

/// Population mean and standard deviation of each row.
pub(crate) fn row_moments(z: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let b = z.ncols() as f64;
    z.row_iter()
        .map(|row| {
            let mean = row.iter().sum::<f64>() / b;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / b;
            (mean, var.sqrt())
        })
        .collect()
}

/// Standardizes every row of `z` over the batch (zero mean, unit population variance).
pub fn batch_normalize(z: &FeatureMatrix) -> Result<DMatrix<f64>> {
    let data = z.data();
    let mut out = data.clone();
    for (dim, (mean, std)) in row_moments(data).into_iter().enumerate() {
        let scale = data.row(dim).iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        if std == 0.0 || std <= 1e-12 * scale {
            return Err(Error::ZeroVariance(dim));
        }
        for c in 0..out.ncols() {
            out[(dim, c)] = (data[(dim, c)] - mean) / std;
        }
    }
    Ok(out)
}

/// Batch-normalized sample covariance `(1/B) Zbar Zbar^T`, a `d x d` kernel.
pub fn covariance_kernel(z: &FeatureMatrix) -> Result<KernelMatrix> {
    if z.batch() < 2 {
        return Err(Error::InvalidShape(format!(
            "covariance kernel needs at least 2 samples, got {}",
            z.batch()
        )));
    }
    let zbar = batch_normalize(z)?;
    let k = (&zbar * zbar.transpose()) / z.batch() as f64;
    KernelMatrix::from_matrix(k, KernelKind::Covariance)
}

/// Gram matrix of the column-normalized features, a `B x B` kernel.
pub fn gram_kernel(z: &FeatureMatrix) -> Result<KernelMatrix> {
    let zn = z.normalize_columns()?;
    let k = zn.data().transpose() * zn.data();
    KernelMatrix::from_matrix(k, KernelKind::Gram)
}

/// Entrywise product of two kernels; PSD by the Schur product theorem.
pub fn hadamard(k1: &KernelMatrix, k2: &KernelMatrix) -> Result<KernelMatrix> {
    same_size(k1, k2)?;
    let kind = if k1.kind() == k2.kind() {
        k1.kind()
    } else {
        KernelKind::Generic
    };
    KernelMatrix::from_matrix(k1.data().component_mul(k2.data()), kind)
}

/// `K^alpha` through the cached eigendecomposition, with `0^alpha = 0`.
pub fn matrix_power(k: &KernelMatrix, alpha: f64) -> Result<DMatrix<f64>> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::BadAlpha(alpha));
    }
    let values = k.spectrum().eigenvalues().iter().map(|&l| {
        if l == 0.0 {
            0.0
        } else {
            l.powf(alpha)
        }
    });
    Ok(reconstruct(k.eigenvectors(), values))
}

/// Principal logarithm of a symmetric positive definite matrix.
pub fn matrix_log(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = symmetric_eig(m)?;
    let max = eig.values[0];
    let min = *eig.values.last().expect("nonempty");
    if !(max > 0.0) || min <= LOG_TOL * max {
        return Err(Error::SingularLog { eigenvalue: min });
    }
    Ok(eig.map(f64::ln))
}

/// `V diag(lambda) V^T - M`, largest absolute entry.
pub fn reconstruction_error(m: &DMatrix<f64>, eig: &SymmetricEigen) -> f64 {
    max_abs(&(eig.map(|l| l) - m))
}

/// Largest absolute entry of `V^T V - I`.
pub fn orthogonality_error(v: &DMatrix<f64>) -> f64 {
    let n = v.ncols();
    max_abs(&(v.transpose() * v - DMatrix::identity(n, n)))
}

/// Binary patch mask; ones mark visible patches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskVector {
    bits: Vec<bool>,
    visible_count: usize,
}

impl MaskVector {
    /// Requires at least one visible and one hidden entry.
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        let visible_count = bits.iter().filter(|&&b| b).count();
        if visible_count == 0 || visible_count == bits.len() {
            return Err(Error::InvalidShape(format!(
                "mask must have both visible and hidden patches ({visible_count} of {} visible)",
                bits.len()
            )));
        }
        Ok(Self {
            bits,
            visible_count,
        })
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn visible_count(&self) -> usize {
        self.visible_count
    }

    pub fn is_visible(&self, patch: usize) -> bool {
        self.bits[patch]
    }
}
