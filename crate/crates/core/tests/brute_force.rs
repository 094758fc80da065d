//! Every loss against a naive scalar-loop recomputation.

mod common;

use std::collections::BTreeMap;

use common::naive::*;
use matinfo::losses::*;
use matinfo::random::gaussian_matrix;
use matinfo::sandbox::rng_stream;
use matinfo::spectral::{FeatureMatrix, MaskVector};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const INSTANCES: u64 = 100;
const TOL: f64 = 1e-10;

fn feat(m: &DMatrix<f64>) -> FeatureMatrix {
    FeatureMatrix::new(m.clone()).unwrap()
}

fn close(name: &str, got: f64, want: f64) {
    assert!(
        (got - want).abs() <= TOL * want.abs().max(1.0),
        "{name}: {got} vs {want}"
    );
}

fn shape(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.random_range(2..=8), rng.random_range(2..=8))
}

fn recon(total: f64) -> LossValue {
    LossValue {
        total,
        terms: BTreeMap::new(),
    }
}

#[test]
fn infonce_matches_scalar_loops() {
    for seed in 0..INSTANCES {
        let mut rng = rng_stream(seed, 100);
        let (d, b) = shape(&mut rng);
        let z1 = gaussian_matrix(d, b, &mut rng);
        let z2 = gaussian_matrix(d, b, &mut rng);
        let t = rng.random_range(0.1..2.0);
        let got = infonce(&feat(&z1), &feat(&z2), t).unwrap().total;
        close("infonce", got, naive_infonce(&cols(&z1), &cols(&z2), t));
    }
}

#[test]
fn spectral_contrastive_matches_scalar_loops() {
    for seed in 0..INSTANCES {
        let mut rng = rng_stream(seed, 101);
        let (d, b) = shape(&mut rng);
        let z1 = gaussian_matrix(d, b, &mut rng);
        let z2 = gaussian_matrix(d, b, &mut rng);
        let lambda = rng.random_range(0.0..2.0);
        let got = spectral_contrastive(&feat(&z1), &feat(&z2), lambda).unwrap().total;
        close("spectral", got, naive_spectral(&cols(&z1), &cols(&z2), lambda));
    }
}

#[test]
fn barlow_twins_matches_scalar_loops() {
    for seed in 0..INSTANCES {
        let mut rng = rng_stream(seed, 102);
        let (d, b) = shape(&mut rng);
        let z1 = gaussian_matrix(d, b, &mut rng);
        let z2 = &z1 + gaussian_matrix(d, b, &mut rng) * 0.5;
        let lambda = rng.random_range(0.0..1.0);
        let got = barlow_twins(&feat(&z1), &feat(&z2), lambda).unwrap().total;
        close("barlow", got, naive_barlow(&z1, &z2, lambda));

        let c = CrossCorrelation::new(&feat(&z1), &feat(&z2)).unwrap();
        let naive = naive_cross_correlation(&z1, &z2);
        for (i, row) in naive.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                close("cross-correlation", c.data()[(i, j)], v);
            }
        }
    }
}

#[test]
fn mae_matches_scalar_loops() {
    for seed in 0..INSTANCES {
        let mut rng = rng_stream(seed, 103);
        let (patches, batch) = shape(&mut rng);
        let size = rng.random_range(1..=3);
        let x = gaussian_matrix(patches * size, batch, &mut rng);
        let samples: Vec<PatchedSample> = (0..batch)
            .map(|c| {
                let col: Vec<f64> = x.column(c).iter().copied().collect();
                mask_sample_with(&col, patches, 0.5, &mut rng).unwrap()
            })
            .collect();
        let pred = gaussian_matrix(patches * size, batch, &mut rng);
        let sum = mae_loss(&pred, &samples, Reduction::Sum).unwrap().total;
        close("mae sum", sum, naive_mae(&pred, &samples, false));
        let mean = mae_loss(&pred, &samples, Reduction::Mean).unwrap().total;
        close("mae mean", mean, naive_mae(&pred, &samples, true));
    }
}

#[test]
fn regularized_mae_variants_match_scalar_loops() {
    for seed in 0..INSTANCES {
        let mut rng = rng_stream(seed, 104);
        let (d, b) = shape(&mut rng);
        let z = gaussian_matrix(d, b, &mut rng);
        let r = rng.random_range(0.0..5.0);
        let lambda = rng.random_range(0.0..1.0);
        let mu = rng.random_range(0.1..3.0);

        let u = umae_loss(&recon(r), &feat(&z), lambda, mu).unwrap().total;
        close("umae", u, r + lambda / (2.0 * mu * mu) * naive_uniformity(&cols(&z)));

        let m = mmae_loss(&recon(r), &feat(&z), lambda, mu).unwrap().total;
        close("mmae", m, r - lambda * naive_tcr(&z, mu));
    }
}

#[test]
fn infonce_orthonormal_closed_form() {
    for b in 2..=8 {
        let z = DMatrix::<f64>::identity(b, b);
        let got = infonce(&feat(&z), &feat(&z), 1.0).unwrap().total;
        let e = std::f64::consts::E;
        close("infonce closed form", got, b as f64 * ((e + b as f64 - 1.0) / e).ln());
    }
}

#[test]
fn spectral_alignment_of_opposite_unit_columns() {
    let mut rng = rng_stream(7, 105);
    let z1 = feat(&gaussian_matrix(4, 6, &mut rng)).normalize_columns().unwrap();
    let z2 = feat(&(z1.data() * -1.0));
    let loss = spectral_contrastive(&z1, &z2, 1.0).unwrap();
    assert!((loss.term("alignment").unwrap() - 24.0).abs() < 1e-12);
}

#[test]
fn spectral_two_sample_hand_example() {
    let z1 = FeatureMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 2.0]).unwrap();
    let z2 = FeatureMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, -1.0]).unwrap();
    // columns: a1 = (1, .5), a2 = (0, 2), b1 = (0, 1), b2 = (1, -1)
    // alignment 1 + .25 + 1 + 9, cross terms (a1.b2)^2 = .25, (a2.b1)^2 = 4
    let got = spectral_contrastive(&z1, &z2, 0.5).unwrap().total;
    assert!((got - (11.25 + 0.5 * 4.25)).abs() < 1e-12);
}

#[test]
fn barlow_swapped_decorrelated_dims() {
    let z1 = FeatureMatrix::from_row_slice(2, 4, &[1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0, -1.0]).unwrap();
    let z2 = FeatureMatrix::from_row_slice(2, 4, &[1.0, 1.0, -1.0, -1.0, 1.0, -1.0, 1.0, -1.0]).unwrap();
    let loss = barlow_twins(&z1, &z2, 0.1).unwrap();
    assert!((loss.term("invariance").unwrap() - 2.0).abs() < 1e-12);
    assert!((loss.total - (2.0 + 0.1 * 2.0)).abs() < 1e-12);

    let same = CrossCorrelation::new(&z1, &z1).unwrap();
    assert!((same.data()[(0, 0)] - 1.0).abs() < 1e-12);
    assert!((same.data()[(1, 1)] - 1.0).abs() < 1e-12);
}

#[test]
fn umae_identical_unit_columns() {
    let z = FeatureMatrix::from_row_slice(2, 2, &[0.6, 0.6, 0.8, 0.8]).unwrap();
    let loss = umae_loss(&recon(0.0), &z, 1.0, 1.0).unwrap();
    assert!((loss.total - 1.0).abs() < 1e-12);
}

#[test]
fn mae_two_sample_hand_example() {
    let s1 = PatchedSample::new(
        nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]),
        MaskVector::new(vec![true, false]).unwrap(),
    )
    .unwrap();
    let s2 = PatchedSample::new(
        nalgebra::DVector::from_vec(vec![-1.0, 0.0, 5.0, 1.0]),
        MaskVector::new(vec![false, true]).unwrap(),
    )
    .unwrap();
    let pred = DMatrix::from_column_slice(4, 2, &[9.0, 9.0, 2.0, 4.0, 0.0, 1.0, 9.0, 9.0]);
    // hidden: s1 entries 2,3 -> (2-3)^2 + 0; s2 entries 0,1 -> 1 + 1
    let loss = mae_loss(&pred, &[s1, s2], Reduction::Sum).unwrap();
    assert!((loss.total - 3.0).abs() < 1e-12);
}
