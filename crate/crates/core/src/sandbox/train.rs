use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{LossFamily, SandboxConfig};
use super::data::{column_vec, select_columns, AugmentationPair, SyntheticDataset};
use super::model::{Decoder, Encoder, Params};
use super::rng_stream;
use crate::error::{Error, Result};
use crate::losses::{
    barlow_twins_grad, infonce_grad, mae_grad, mask_sample_with, mmae_loss, mmae_regularizer_grad,
    spectral_contrastive_grad, umae_loss, umae_regularizer_grad, LossValue, PatchedSample, Reduction,
};
use crate::measures::{
    effective_rank, eigen_js, joint_entropy, matrix_js, mutual_information, tcr_features, tcr_kernel,
    MeasureKind, MeasureValue,
};
use crate::spectral::{covariance_kernel, gram_kernel, FeatureMatrix, KernelKind, KernelMatrix};

/// One recorded training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    pub loss: LossValue,
    /// `loss.total` divided by the batch size.
    pub loss_per_sample: f64,
    pub measures: Vec<MeasureValue>,
}

impl TrainRecord {
    pub fn measure(&self, name: MeasureKind) -> Option<f64> {
        self.measures.iter().find(|m| m.name == name).map(|m| m.value)
    }
}

/// Representations captured at a record step.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub branch1: FeatureMatrix,
    /// Second branch for Siamese runs.
    pub branch2: Option<FeatureMatrix>,
}

/// Output of a training run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<TrainRecord>,
    pub snapshots: Vec<Snapshot>,
    pub encoder: Encoder,
    pub decoder: Option<Decoder>,
    pub dataset: SyntheticDataset,
}

impl Trajectory {
    pub fn last(&self) -> &TrainRecord {
        self.records.last().expect("trajectories hold at least one record")
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }
}

fn build_kernel(z: &FeatureMatrix, kind: KernelKind) -> Result<KernelMatrix> {
    match kind {
        KernelKind::Gram => gram_kernel(z),
        _ => covariance_kernel(z),
    }
}

/// Siamese measures: MI and joint entropy at order 1, matrix and eigen JS,
/// effective rank and TCR of the first branch's kernel.
pub fn siamese_measures(z1: &FeatureMatrix, z2: &FeatureMatrix, kind: KernelKind, mu: f64) -> Result<Vec<MeasureValue>> {
    let k1 = build_kernel(z1, kind)?;
    let k2 = build_kernel(z2, kind)?;
    Ok(vec![
        mutual_information(&k1, &k2, 1.0)?,
        joint_entropy(&k1, &k2, 1.0)?,
        matrix_js(&k1, &k2)?,
        eigen_js(&k1, &k2)?,
        effective_rank(k1.data())?,
        tcr_kernel(&k1, mu)?,
    ])
}

/// Masked-run measures: TCR of the raw features and effective rank of their Gram kernel.
pub fn masked_measures(z: &FeatureMatrix, mu: f64) -> Result<Vec<MeasureValue>> {
    let gram = gram_kernel(z)?;
    Ok(vec![tcr_features(z, mu)?, effective_rank(gram.data())?])
}

/// Loss and encoder gradient for one pair of views.
pub struct SiameseStep {
    pub loss: LossValue,
    pub grad: Params,
    pub z1: FeatureMatrix,
    pub z2: FeatureMatrix,
}

pub fn siamese_objective(
    encoder: &Encoder,
    x1: &DMatrix<f64>,
    x2: &DMatrix<f64>,
    config: &SandboxConfig,
) -> Result<SiameseStep> {
    let (z1, c1) = encoder.forward(x1)?;
    let (z2, c2) = encoder.forward(x2)?;
    let pair = match config.loss {
        LossFamily::BarlowTwins => barlow_twins_grad(&z1, &z2, config.lambda())?,
        LossFamily::SpectralContrastive => spectral_contrastive_grad(&z1, &z2, config.lambda())?,
        LossFamily::InfoNce => infonce_grad(&z1, &z2, config.temperature)?,
        other => {
            return Err(Error::Config {
                field: "loss".into(),
                message: format!("{other:?} is not a Siamese objective"),
            })
        }
    };
    let mut grad = encoder.backward(&c1, &pair.grad1);
    grad.add_scaled(&encoder.backward(&c2, &pair.grad2), 1.0);
    Ok(SiameseStep {
        loss: pair.loss,
        grad,
        z1,
        z2,
    })
}

/// Loss and gradients for one masked batch.
pub struct MaskedStep {
    pub loss: LossValue,
    pub encoder_grad: Params,
    pub decoder_grad: Params,
    pub z: FeatureMatrix,
}

/// Reconstruction plus the family's regularizer, differentiated through decoder and encoder.
#[allow(clippy::too_many_arguments)]
pub fn masked_objective(
    encoder: &Encoder,
    decoder: &Decoder,
    samples: &[PatchedSample],
    family: LossFamily,
    lambda: f64,
    mu: f64,
    reduction: Reduction,
) -> Result<MaskedStep> {
    let mut visible = DMatrix::zeros(samples[0].values().len(), samples.len());
    for (c, s) in samples.iter().enumerate() {
        visible.set_column(c, &s.visible_view());
    }
    let (z, cache) = encoder.forward(&visible)?;
    let predicted = decoder.forward(z.data());
    let (recon, grad_pred) = mae_grad(&predicted, samples, reduction)?;
    let (decoder_grad, mut grad_z) = decoder.backward(z.data(), &grad_pred);
    let loss = match family {
        LossFamily::Mae => recon,
        LossFamily::Mmae => {
            grad_z += mmae_regularizer_grad(&z, lambda, mu)?;
            mmae_loss(&recon, &z, lambda, mu)?
        }
        LossFamily::Umae => {
            grad_z += umae_regularizer_grad(&z, lambda, mu)?;
            umae_loss(&recon, &z, lambda, mu)?
        }
        other => {
            return Err(Error::Config {
                field: "loss".into(),
                message: format!("{other:?} is not a masked objective"),
            })
        }
    };
    let encoder_grad = encoder.backward(&cache, &grad_z);
    Ok(MaskedStep {
        loss,
        encoder_grad,
        decoder_grad,
        z,
    })
}

fn batch_indices<R: Rng + ?Sized>(n: usize, batch: usize, rng: &mut R) -> Vec<usize> {
    if batch == n {
        (0..n).collect()
    } else {
        let mut idx = index::sample(rng, n, batch).into_vec();
        idx.sort_unstable();
        idx
    }
}

fn should_record(step: usize, config: &SandboxConfig) -> bool {
    step.is_multiple_of(config.record_every) || step == config.steps
}

fn diverged(step: usize, records: Vec<TrainRecord>) -> Error {
    Error::DivergedLoss {
        step,
        partial: records,
    }
}

/// Two-branch training with shared weights and plain SGD.
///
/// Records at step 0, every `record_every` steps and at the final step; each
/// record holds the loss and measures evaluated on the views used at that step
/// (before the update).
pub fn train_siamese(config: &SandboxConfig) -> Result<Trajectory> {
    config.validate()?;
    if !config.loss.is_siamese() {
        return Err(Error::Config {
            field: "loss".into(),
            message: format!("{:?} needs train_masked", config.loss),
        });
    }
    let dataset = SyntheticDataset::generate(&config.dataset, config.seed);
    let mut init_rng = rng_stream(config.seed, 2);
    let mut rng = rng_stream(config.seed, 3);
    let mut encoder = Encoder::new(&config.encoder, dataset.input_dim(), &mut init_rng);
    let aug = AugmentationPair::new(config.augmentation, config.dataset.patches);

    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    for step in 0..=config.steps {
        let idx = batch_indices(dataset.train.ncols(), config.batch_size, &mut rng);
        let x = select_columns(&dataset.train, &idx);
        let (x1, x2) = aug.draw(&x, &mut rng);
        let out = match siamese_objective(&encoder, &x1, &x2, config) {
            Ok(out) => out,
            Err(Error::ZeroVariance(_)) | Err(Error::ZeroColumn(_)) => return Err(diverged(step, records)),
            Err(e) => return Err(e),
        };
        if !out.loss.total.is_finite() {
            return Err(diverged(step, records));
        }
        if should_record(step, config) {
            let measures = siamese_measures(&out.z1, &out.z2, config.kernel, config.mu)?;
            records.push(TrainRecord {
                step,
                loss: out.loss.clone(),
                loss_per_sample: out.loss.per_sample(config.batch_size),
                measures,
            });
            snapshots.push(Snapshot {
                step,
                branch1: out.z1.clone(),
                branch2: Some(out.z2.clone()),
            });
        }
        if step < config.steps {
            encoder.params.add_scaled(&out.grad, -config.learning_rate);
        }
    }
    Ok(Trajectory {
        records,
        snapshots,
        encoder,
        decoder: None,
        dataset,
    })
}

/// Masks every column of `x` independently.
pub fn mask_batch<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    patches: usize,
    ratio: f64,
    rng: &mut R,
) -> Result<Vec<PatchedSample>> {
    (0..x.ncols())
        .map(|c| {
            let col = column_vec(x, c);
            mask_sample_with(col.as_slice(), patches, ratio, rng)
        })
        .collect()
}

/// Encoder-decoder training on masked views (MAE, U-MAE or M-MAE).
///
/// Records hold the loss (with its reconstruction term), `TCR_mu(Z)` and the
/// effective rank of the Gram kernel of `Z`.
pub fn train_masked(config: &SandboxConfig) -> Result<Trajectory> {
    config.validate()?;
    if config.loss.is_siamese() {
        return Err(Error::Config {
            field: "loss".into(),
            message: format!("{:?} needs train_siamese", config.loss),
        });
    }
    let dataset = SyntheticDataset::generate(&config.dataset, config.seed);
    let mut init_rng = rng_stream(config.seed, 2);
    let mut rng = rng_stream(config.seed, 3);
    let mut encoder = Encoder::new(&config.encoder, dataset.input_dim(), &mut init_rng);
    let mut decoder = Decoder::new(config.encoder.out_dim, dataset.input_dim(), &mut init_rng);

    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    for step in 0..=config.steps {
        let idx = batch_indices(dataset.train.ncols(), config.batch_size, &mut rng);
        let x = select_columns(&dataset.train, &idx);
        let samples = mask_batch(&x, config.dataset.patches, config.mask_ratio, &mut rng)?;
        let out = match masked_objective(
            &encoder,
            &decoder,
            &samples,
            config.loss,
            config.lambda(),
            config.mu,
            config.reduction,
        ) {
            Ok(out) => out,
            Err(Error::ZeroColumn(_)) | Err(Error::NotPsd { .. }) => return Err(diverged(step, records)),
            Err(e) => return Err(e),
        };
        if !out.loss.total.is_finite() {
            return Err(diverged(step, records));
        }
        if should_record(step, config) {
            records.push(TrainRecord {
                step,
                loss: out.loss.clone(),
                loss_per_sample: out.loss.per_sample(config.batch_size),
                measures: masked_measures(&out.z, config.mu)?,
            });
            snapshots.push(Snapshot {
                step,
                branch1: out.z.clone(),
                branch2: None,
            });
        }
        if step < config.steps {
            encoder.params.add_scaled(&out.encoder_grad, -config.learning_rate);
            decoder.params.add_scaled(&out.decoder_grad, -config.learning_rate);
        }
    }
    Ok(Trajectory {
        records,
        snapshots,
        encoder,
        decoder: Some(decoder),
        dataset,
    })
}

/// Dispatches on the loss family.
pub fn train(config: &SandboxConfig) -> Result<Trajectory> {
    if config.loss.is_siamese() {
        train_siamese(config)
    } else {
        train_masked(config)
    }
}
