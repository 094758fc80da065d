use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::SandboxConfig;
use super::probe::linear_probe;
use super::train::{train_masked, Trajectory};
use crate::error::{Error, Result};
use crate::measures::MeasureKind;

/// Default grid of `mu` values for sweeps.
pub const DEFAULT_MUS: [f64; 7] = [0.1, 0.5, 0.75, 1.0, 1.25, 1.5, 3.0];

/// Final metrics of one masked run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mu: f64,
    pub final_erank: f64,
    pub final_tcr: f64,
    pub final_recon: f64,
    pub probe_accuracy: f64,
}

/// Linear-probe test accuracy of a trained encoder on unmasked inputs.
pub fn probe_accuracy(traj: &Trajectory) -> Result<f64> {
    let ds = &traj.dataset;
    let train = traj.encoder.encode(&ds.train)?;
    let test = traj.encoder.encode(&ds.test)?;
    linear_probe(&train, &ds.train_labels, &test, &ds.test_labels)
}

/// One masked run per `mu`, all sharing `config.seed`; runs execute in parallel
/// and rows come back in input order.
pub fn mu_sweep(config: &SandboxConfig, mus: &[f64]) -> Result<Vec<SweepRow>> {
    if let Some(&bad) = mus.iter().find(|m| !(**m > 0.0) || !m.is_finite()) {
        return Err(Error::BadMu(bad));
    }
    mus.par_iter()
        .map(|&mu| {
            let cfg = SandboxConfig {
                mu,
                ..config.clone()
            };
            let traj = train_masked(&cfg)?;
            let last = traj.last();
            Ok(SweepRow {
                mu,
                final_erank: last.measure(MeasureKind::EffectiveRank).unwrap_or(f64::NAN),
                final_tcr: last.measure(MeasureKind::Tcr).unwrap_or(f64::NAN),
                final_recon: last.loss.term("reconstruction").unwrap_or(last.loss.total),
                probe_accuracy: probe_accuracy(&traj)?,
            })
        })
        .collect()
}
