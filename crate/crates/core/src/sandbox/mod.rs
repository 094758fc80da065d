//! Desk-scale training harness: synthetic data, a small encoder/decoder,
//! plain SGD and trajectory recording.

mod config;
mod data;
mod model;
mod probe;
mod sweep;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{
    AugmentationKind, DatasetConfig, DatasetKind, EncoderConfig, EncoderKind, LossFamily, SandboxConfig,
};
pub use data::{AugmentationPair, SyntheticDataset};
pub use model::{Decoder, Dense, Encoder, EncoderCache, Params};
pub use probe::{linear_probe, LinearProbe, PROBE_MAX_ITERS, PROBE_TOL};
pub use sweep::{mu_sweep, probe_accuracy, SweepRow, DEFAULT_MUS};
pub use train::{
    mask_batch, masked_measures, masked_objective, siamese_measures, siamese_objective, train, train_masked,
    train_siamese, MaskedStep, SiameseStep, Snapshot, TrainRecord, Trajectory,
};

/// Independent deterministic generator for `(seed, stream)`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
