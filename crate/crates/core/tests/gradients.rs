//! Analytic gradients against central finite differences (h = 1e-5).

mod common;

use std::collections::BTreeMap;

use common::{fd_gradient, grad_rel_err};
use matinfo::losses::*;
use matinfo::measures::tcr_features;
use matinfo::random::gaussian_matrix;
use matinfo::sandbox::*;
use matinfo::spectral::FeatureMatrix;
use nalgebra::DMatrix;
use rand::Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const INSTANCES: u64 = 24;

fn feat(m: &DMatrix<f64>) -> FeatureMatrix {
    FeatureMatrix::new(m.clone()).unwrap()
}

fn zero_recon() -> LossValue {
    LossValue {
        total: 0.0,
        terms: BTreeMap::new(),
    }
}

fn check(name: &str, analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) {
    let err = grad_rel_err(analytic, numeric);
    assert!(err <= TOL, "{name}: relative error {err:e}");
}

/// Checks both branch gradients of a two-input loss.
fn check_pair(
    name: &str,
    z1: &DMatrix<f64>,
    z2: &DMatrix<f64>,
    loss: impl Fn(&FeatureMatrix, &FeatureMatrix) -> f64,
    grads: PairGradient,
) {
    let g1 = fd_gradient(z1, H, |z| loss(&feat(z), &feat(z2)));
    let g2 = fd_gradient(z2, H, |z| loss(&feat(z1), &feat(z)));
    check(name, &grads.grad1, &g1);
    check(name, &grads.grad2, &g2);
}

#[test]
fn tcr_gradient_matches() {
    for seed in 0..INSTANCES {
        let mut rng = rng_stream(seed, 10);
        let z = gaussian_matrix(4, 6, &mut rng);
        let mu = [0.5, 1.0, 3.0][seed as usize % 3];
        let g = tcr_gradient(&feat(&z), mu).unwrap();
        let fd = fd_gradient(&z, H, |z| tcr_features(&feat(z), mu).unwrap().value);
        check("tcr", &g, &fd);

        // directional derivative along a random direction
        let e = gaussian_matrix(4, 6, &mut rng);
        let f = |z: &DMatrix<f64>| tcr_features(&feat(z), mu).unwrap().value;
        let dir = (f(&(&z + &e * H)) - f(&(&z - &e * H))) / (2.0 * H);
        let analytic = g.component_mul(&e).sum();
        assert!((dir - analytic).abs() <= TOL * analytic.abs().max(1.0));
    }
}

#[test]
fn barlow_twins_gradient_matches() {
    for seed in 0..INSTANCES {
        let mut rng = rng_stream(seed, 11);
        let (d, b) = (rng.random_range(2..=5), rng.random_range(3..=8));
        let z1 = gaussian_matrix(d, b, &mut rng);
        let z2 = &z1 + gaussian_matrix(d, b, &mut rng) * 0.5;
        let lambda = [0.005, 0.1, 1.0][seed as usize % 3];
        let grads = barlow_twins_grad(&feat(&z1), &feat(&z2), lambda).unwrap();
        check_pair("barlow", &z1, &z2, |a, b| barlow_twins(a, b, lambda).unwrap().total, grads);
    }
}

#[test]
fn spectral_contrastive_gradient_matches() {
    for seed in 0..INSTANCES {
        let mut rng = rng_stream(seed, 12);
        let (d, b) = (rng.random_range(2..=5), rng.random_range(2..=8));
        let z1 = gaussian_matrix(d, b, &mut rng);
        let z2 = gaussian_matrix(d, b, &mut rng);
        let lambda = [0.5, 1.0, 2.0][seed as usize % 3];
        let grads = spectral_contrastive_grad(&feat(&z1), &feat(&z2), lambda).unwrap();
        check_pair("spectral", &z1, &z2, |a, b| spectral_contrastive(a, b, lambda).unwrap().total, grads);
    }
}

#[test]
fn infonce_gradient_matches() {
    for seed in 0..INSTANCES {
        let mut rng = rng_stream(seed, 13);
        let (d, b) = (rng.random_range(2..=5), rng.random_range(2..=8));
        let z1 = gaussian_matrix(d, b, &mut rng);
        let z2 = gaussian_matrix(d, b, &mut rng);
        let t = [0.2, 0.5, 1.0][seed as usize % 3];
        let grads = infonce_grad(&feat(&z1), &feat(&z2), t).unwrap();
        check_pair("infonce", &z1, &z2, |a, b| infonce(a, b, t).unwrap().total, grads);
    }
}

fn random_samples<R: Rng>(patches: usize, size: usize, batch: usize, rng: &mut R) -> (DMatrix<f64>, Vec<PatchedSample>) {
    let x = gaussian_matrix(patches * size, batch, rng);
    let samples = mask_batch(&x, patches, 0.5, rng).unwrap();
    (x, samples)
}

#[test]
fn mae_gradient_matches() {
    for seed in 0..INSTANCES {
        let mut rng = rng_stream(seed, 14);
        let (_, samples) = random_samples(4, 2, 5, &mut rng);
        let pred = gaussian_matrix(8, 5, &mut rng);
        for reduction in [Reduction::Sum, Reduction::Mean] {
            let (_, g) = mae_grad(&pred, &samples, reduction).unwrap();
            let fd = fd_gradient(&pred, H, |p| mae_loss(p, &samples, reduction).unwrap().total);
            check("mae", &g, &fd);
        }
    }
}

#[test]
fn umae_regularizer_gradient_matches() {
    for seed in 0..INSTANCES {
        let mut rng = rng_stream(seed, 15);
        let z = gaussian_matrix(rng.random_range(2..=5), rng.random_range(2..=8), &mut rng);
        let (lambda, mu) = (0.3, [0.5, 1.0, 3.0][seed as usize % 3]);
        let g = umae_regularizer_grad(&feat(&z), lambda, mu).unwrap();
        let fd = fd_gradient(&z, H, |z| umae_loss(&zero_recon(), &feat(z), lambda, mu).unwrap().total);
        check("umae", &g, &fd);
    }
}

#[test]
fn mmae_regularizer_gradient_matches() {
    for seed in 0..INSTANCES {
        let mut rng = rng_stream(seed, 16);
        let z = gaussian_matrix(rng.random_range(2..=5), rng.random_range(2..=8), &mut rng);
        let (lambda, mu) = (0.3, [0.5, 1.0, 3.0][seed as usize % 3]);
        let g = mmae_regularizer_grad(&feat(&z), lambda, mu).unwrap();
        let fd = fd_gradient(&z, H, |z| mmae_loss(&zero_recon(), &feat(z), lambda, mu).unwrap().total);
        check("mmae", &g, &fd);
    }
}

fn params_fd(p: &Params, mut f: impl FnMut(&Params) -> f64) -> Vec<f64> {
    let base = p.to_vec();
    let mut v = base.clone();
    (0..base.len())
        .map(|i| {
            v[i] = base[i] + H;
            let fp = f(&p.with_values(&v));
            v[i] = base[i] - H;
            let fm = f(&p.with_values(&v));
            v[i] = base[i];
            (fp - fm) / (2.0 * H)
        })
        .collect()
}

fn vec_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let a = DMatrix::from_column_slice(a.len(), 1, a);
    let b = DMatrix::from_column_slice(b.len(), 1, b);
    grad_rel_err(&a, &b)
}

fn small_encoder<R: Rng>(kind: EncoderKind, input: usize, rng: &mut R) -> Encoder {
    let cfg = EncoderConfig {
        kind,
        hidden: 5,
        out_dim: 3,
    };
    Encoder::new(&cfg, input, rng)
}

#[test]
fn siamese_objectives_backprop_through_encoder() {
    let families = [LossFamily::BarlowTwins, LossFamily::SpectralContrastive, LossFamily::InfoNce];
    for seed in 0..INSTANCES {
        let mut rng = rng_stream(seed, 17);
        let kind = if seed % 2 == 0 { EncoderKind::Mlp } else { EncoderKind::Affine };
        let enc = small_encoder(kind, 6, &mut rng);
        let x1 = gaussian_matrix(6, 7, &mut rng);
        let x2 = &x1 + gaussian_matrix(6, 7, &mut rng) * 0.3;
        let config = SandboxConfig {
            loss: families[seed as usize % 3],
            temperature: 0.5,
            ..SandboxConfig::default()
        };
        let step = siamese_objective(&enc, &x1, &x2, &config).unwrap();
        let fd = params_fd(&enc.params, |p| {
            let e = Encoder { params: p.clone() };
            siamese_objective(&e, &x1, &x2, &config).unwrap().loss.total
        });
        let err = vec_rel_err(&step.grad.to_vec(), &fd);
        assert!(err <= TOL, "{:?}: relative error {err:e}", config.loss);
    }
}

#[test]
fn masked_objectives_backprop_through_encoder_and_decoder() {
    let families = [LossFamily::Mae, LossFamily::Umae, LossFamily::Mmae];
    for seed in 0..INSTANCES {
        let mut rng = rng_stream(seed, 18);
        let (_, samples) = random_samples(4, 2, 6, &mut rng);
        let enc = small_encoder(EncoderKind::Mlp, 8, &mut rng);
        let dec = Decoder::new(3, 8, &mut rng);
        let family = families[seed as usize % 3];
        let reduction = if seed % 2 == 0 { Reduction::Sum } else { Reduction::Mean };
        let (lambda, mu) = (0.5, 1.0);
        let step = masked_objective(&enc, &dec, &samples, family, lambda, mu, reduction).unwrap();

        let fd_enc = params_fd(&enc.params, |p| {
            let e = Encoder { params: p.clone() };
            masked_objective(&e, &dec, &samples, family, lambda, mu, reduction).unwrap().loss.total
        });
        let err = vec_rel_err(&step.encoder_grad.to_vec(), &fd_enc);
        assert!(err <= TOL, "{family:?} encoder: relative error {err:e}");

        let fd_dec = params_fd(&dec.params, |p| {
            let d = Decoder { params: p.clone() };
            masked_objective(&enc, &d, &samples, family, lambda, mu, reduction).unwrap().loss.total
        });
        let err = vec_rel_err(&step.decoder_grad.to_vec(), &fd_dec);
        assert!(err <= TOL, "{family:?} decoder: relative error {err:e}");
    }
}
