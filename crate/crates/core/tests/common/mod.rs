//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the library's numerics.

#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::DMatrix;

pub mod naive;

pub type Rows = Vec<Vec<f64>>;

pub fn to_rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
/// Returns eigenvalues (descending) and eigenvectors as columns of `v`.
pub fn jacobi(a: &Rows) -> (Vec<f64>, Rows) {
    let n = a.len();
    let mut a = a.clone();
    let mut v: Rows = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap());
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = (0..n).map(|r| order.iter().map(|&c| v[r][c]).collect()).collect();
    (values, vectors)
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    jacobi(&to_rows(m)).0
}

/// `V diag(f(lambda)) V^T` from the Jacobi oracle.
pub fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> Rows {
    let (vals, v) = jacobi(&to_rows(m));
    let n = vals.len();
    let fl: Vec<f64> = vals.iter().map(|&l| f(l)).collect();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| v[i][k] * fl[k] * v[j][k]).sum()).collect())
        .collect()
}

/// Entropy of order `alpha` from raw eigenvalues of an `n x n` unit-diagonal kernel.
///
/// Eigenvalues below `n * eps * lambda_max` are rounding noise and count as zero;
/// orders below one would otherwise amplify them.
pub fn entropy_from_eigs(eigs: &[f64], alpha: f64) -> f64 {
    let n = eigs.len() as f64;
    let floor = n * f64::EPSILON * eigs.iter().cloned().fold(0.0, f64::max);
    let p: Vec<f64> = eigs.iter().map(|&l| if l > floor { l / n } else { 0.0 }).collect();
    if alpha == 1.0 {
        -p.iter().filter(|&&x| x > 1e-300).map(|&x| x * x.ln()).sum::<f64>()
    } else {
        p.iter().filter(|&&x| x > 1e-300).map(|&x| x.powf(alpha)).sum::<f64>().ln() / (1.0 - alpha)
    }
}

pub fn entropy(m: &DMatrix<f64>, alpha: f64) -> f64 {
    entropy_from_eigs(&eigenvalues(m), alpha)
}

pub fn hadamard(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * b[(i, j)])
}

pub fn shannon(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Relative error between two gradients, measured on their norms.
pub fn grad_rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Central finite-difference gradient of `f` at `x`.
pub fn fd_gradient(x: &DMatrix<f64>, h: f64, mut f: impl FnMut(&DMatrix<f64>) -> f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    let mut xp = x.clone();
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let orig = xp[(i, j)];
            xp[(i, j)] = orig + h;
            let fp = f(&xp);
            xp[(i, j)] = orig - h;
            let fm = f(&xp);
            xp[(i, j)] = orig;
            g[(i, j)] = (fp - fm) / (2.0 * h);
        }
    }
    g
}
