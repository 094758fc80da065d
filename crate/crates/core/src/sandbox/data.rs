use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{AugmentationKind, DatasetConfig, DatasetKind};
use super::rng_stream;
use crate::losses::mask_sample_with;

/// Synthetic inputs (one column per sample) with downstream labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub kind: DatasetKind,
    pub seed: u64,
    pub train: DMatrix<f64>,
    pub train_labels: Vec<usize>,
    pub test: DMatrix<f64>,
    pub test_labels: Vec<usize>,
    pub classes: usize,
}

impl SyntheticDataset {
    /// Deterministic in `(config, seed)`.
    ///
    /// LatentLinear labels threshold the first latent coordinate at zero;
    /// ClusterMixture labels are the cluster index.
    pub fn generate(config: &DatasetConfig, seed: u64) -> Self {
        let mut rng = rng_stream(seed, 1);
        let dim = config.input_dim();
        let total = config.samples + config.test_samples;
        let (inputs, labels, classes) = match config.kind {
            DatasetKind::LatentLinear => {
                let l = config.latent_dim;
                let mixing = DMatrix::from_fn(dim, l, |_, _| {
                    rng.sample::<f64, _>(StandardNormal) / (l as f64).sqrt()
                });
                let mut latent = DMatrix::from_fn(l, total, |_, _| rng.sample::<f64, _>(StandardNormal));
                for (k, mut row) in latent.row_iter_mut().enumerate() {
                    row *= config.latent_decay.powi(k as i32);
                }
                let noise = DMatrix::from_fn(dim, total, |_, _| rng.sample::<f64, _>(StandardNormal));
                let x = &mixing * &latent + noise * config.noise;
                let labels = (0..total).map(|i| usize::from(latent[(0, i)] > 0.0)).collect();
                (x, labels, 2)
            }
            DatasetKind::ClusterMixture => {
                let k = config.clusters;
                let centers = DMatrix::from_fn(dim, k, |_, _| {
                    rng.sample::<f64, _>(StandardNormal) * config.cluster_spread / (dim as f64).sqrt()
                });
                let labels: Vec<usize> = (0..total).map(|_| rng.random_range(0..k)).collect();
                let mut x = DMatrix::from_fn(dim, total, |_, _| rng.sample::<f64, _>(StandardNormal));
                x *= config.noise;
                for (i, &c) in labels.iter().enumerate() {
                    let mut col = x.column_mut(i);
                    col += centers.column(c);
                }
                (x, labels, k)
            }
        };
        let train = inputs.columns(0, config.samples).into_owned();
        let test = inputs.columns(config.samples, config.test_samples).into_owned();
        Self {
            kind: config.kind,
            seed,
            train,
            train_labels: labels[..config.samples].to_vec(),
            test,
            test_labels: labels[config.samples..].to_vec(),
            classes,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.train.nrows()
    }
}

/// Produces two independently augmented views of the same batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationPair {
    pub kind: AugmentationKind,
    pub patches: usize,
}

impl AugmentationPair {
    pub fn new(kind: AugmentationKind, patches: usize) -> Self {
        Self { kind, patches }
    }

    pub fn apply<R: Rng + ?Sized>(&self, x: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
        match self.kind {
            AugmentationKind::AdditiveNoise(sigma) => {
                x + DMatrix::from_fn(x.nrows(), x.ncols(), |_, _| {
                    sigma * rng.sample::<f64, _>(StandardNormal)
                })
            }
            AugmentationKind::RandomCoordinateDropout(q) => {
                DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| {
                    if rng.random::<f64>() < q {
                        0.0
                    } else {
                        x[(r, c)]
                    }
                })
            }
            AugmentationKind::PatchMask(ratio) => {
                let mut out = x.clone();
                for c in 0..x.ncols() {
                    let col: Vec<f64> = x.column(c).iter().copied().collect();
                    let sample = mask_sample_with(&col, self.patches, ratio, rng)
                        .expect("validated mask configuration");
                    out.set_column(c, &sample.visible_view());
                }
                out
            }
        }
    }

    /// Two draws `(T1(x), T2(x))`.
    pub fn draw<R: Rng + ?Sized>(&self, x: &DMatrix<f64>, rng: &mut R) -> (DMatrix<f64>, DMatrix<f64>) {
        let a = self.apply(x, rng);
        let b = self.apply(x, rng);
        (a, b)
    }
}

/// Columns of `x` selected by `idx`.
pub(crate) fn select_columns(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), idx.len(), |r, c| x[(r, idx[c])])
}

pub(crate) fn column_vec(x: &DMatrix<f64>, c: usize) -> DVector<f64> {
    x.column(c).into_owned()
}
