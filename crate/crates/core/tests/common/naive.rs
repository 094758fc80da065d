//! Scalar-loop versions of the losses, written without the library's matrix code.

use matinfo::losses::PatchedSample;
use nalgebra::DMatrix;

pub type Cols = Vec<Vec<f64>>;

pub fn cols(m: &DMatrix<f64>) -> Cols {
    (0..m.ncols()).map(|c| m.column(c).iter().copied().collect()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn naive_infonce(z1: &Cols, z2: &Cols, t: f64) -> f64 {
    let b = z1.len();
    let mut total = 0.0;
    for i in 0..b {
        let fwd: Vec<f64> = (0..b).map(|j| dot(&z1[i], &z2[j]) / t).collect();
        let bwd: Vec<f64> = (0..b).map(|j| dot(&z2[i], &z1[j]) / t).collect();
        for row in [fwd, bwd] {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            total += 0.5 * (lse - row[i]);
        }
    }
    total
}

pub fn naive_spectral(z1: &Cols, z2: &Cols, lambda: f64) -> f64 {
    let b = z1.len();
    let mut align = 0.0;
    let mut unif = 0.0;
    for i in 0..b {
        for k in 0..z1[i].len() {
            align += (z1[i][k] - z2[i][k]).powi(2);
        }
        for j in 0..b {
            if i != j {
                unif += dot(&z1[i], &z2[j]).powi(2);
            }
        }
    }
    align + lambda * unif
}

/// Per-dimension standardization with population variance, then `C_ij = mean_b a_ib c_jb`.
pub fn naive_cross_correlation(z1: &DMatrix<f64>, z2: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let (d, b) = z1.shape();
    let standardize = |z: &DMatrix<f64>| -> Vec<Vec<f64>> {
        (0..d)
            .map(|i| {
                let row: Vec<f64> = (0..b).map(|c| z[(i, c)]).collect();
                let mean = row.iter().sum::<f64>() / b as f64;
                let mut var = 0.0;
                for x in &row {
                    var += (x - mean) * (x - mean);
                }
                let sd = (var / b as f64).sqrt();
                row.iter().map(|x| (x - mean) / sd).collect()
            })
            .collect()
    };
    let (a, c) = (standardize(z1), standardize(z2));
    (0..d)
        .map(|i| (0..d).map(|j| dot(&a[i], &c[j]) / b as f64).collect())
        .collect()
}

pub fn naive_barlow(z1: &DMatrix<f64>, z2: &DMatrix<f64>, lambda: f64) -> f64 {
    let c = naive_cross_correlation(z1, z2);
    let mut total = 0.0;
    for i in 0..c.len() {
        for j in 0..c.len() {
            if i == j {
                total += (1.0 - c[i][j]).powi(2);
            } else {
                total += lambda * c[i][j] * c[i][j];
            }
        }
    }
    total
}

pub fn naive_mae(pred: &DMatrix<f64>, samples: &[PatchedSample], mean: bool) -> f64 {
    let mut sum = 0.0;
    let mut count = 0;
    for (i, s) in samples.iter().enumerate() {
        let size = s.patch_size();
        for p in 0..s.patch_count() {
            if s.mask().is_visible(p) {
                continue;
            }
            for k in p * size..(p + 1) * size {
                sum += (pred[(k, i)] - s.values()[k]).powi(2);
                count += 1;
            }
        }
    }
    if mean {
        sum / count as f64
    } else {
        sum
    }
}

/// `ln det` by Gaussian elimination with partial pivoting.
pub fn naive_log_det(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut out = 0.0;
    for k in 0..n {
        let p = (k..n).max_by(|&x, &y| a[x][k].abs().total_cmp(&a[y][k].abs())).unwrap();
        a.swap(k, p);
        let pivot = a[k][k];
        out += pivot.abs().ln();
        for r in k + 1..n {
            let f = a[r][k] / pivot;
            for c in k..n {
                a[r][c] -= f * a[k][c];
            }
        }
    }
    out
}

pub fn naive_tcr(z: &DMatrix<f64>, mu: f64) -> f64 {
    let (d, b) = z.shape();
    let m = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let s: f64 = (0..b).map(|c| z[(i, c)] * z[(j, c)]).sum();
                    s + if i == j { mu } else { 0.0 }
                })
                .collect()
        })
        .collect();
    naive_log_det(m)
}

pub fn naive_uniformity(z: &Cols) -> f64 {
    let mut s = 0.0;
    for i in 0..z.len() {
        for j in 0..z.len() {
            if i != j {
                s += dot(&z[i], &z[j]).powi(2);
            }
        }
    }
    s
}
