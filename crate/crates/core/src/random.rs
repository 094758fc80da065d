//! Random test objects: unit-diagonal PSD kernels and feature matrices.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::spectral::{FeatureMatrix, KernelKind, KernelMatrix};

/// Matrix of i.i.d. standard normal entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn gaussian_features<R: Rng + ?Sized>(dim: usize, batch: usize, rng: &mut R) -> FeatureMatrix {
    FeatureMatrix::new(gaussian_matrix(dim, batch, rng)).expect("gaussian entries are finite")
}

/// Random unit-diagonal PSD kernel of size `n`.
///
/// Built as the Gram matrix of `n` random unit vectors in `R^r`, with the
/// ambient rank `r` drawn from `1..=n+2`, so low-rank and full-rank kernels
/// both show up. Vectors get random anisotropic scaling per coordinate so the
/// spectra are not all near-uniform.
pub fn random_kernel<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<KernelMatrix> {
    let r = rng.random_range(1..=n + 2);
    let mut v = gaussian_matrix(r, n, rng);
    for mut row in v.row_iter_mut() {
        let s: f64 = rng.random_range(0.05..2.0);
        row *= s;
    }
    for mut col in v.column_iter_mut() {
        let norm = col.norm();
        col /= norm;
    }
    let k = v.transpose() * v;
    KernelMatrix::from_matrix(k, KernelKind::Generic)
}
