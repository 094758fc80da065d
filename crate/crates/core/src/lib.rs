//! # matinfo
//!
//! Matrix information theory for self-supervised representations.
//!
//! - [`spectral`]: symmetric eigendecomposition, PSD sanitation, kernel
//!   construction from features (batch-normalized covariance or Gram).
//! - [`measures`]: matrix Rényi/von Neumann entropy, mutual information,
//!   joint entropy, KL and JS divergences, total coding rate, effective rank.
//! - [`losses`]: InfoNCE, spectral contrastive, Barlow Twins, MAE, U-MAE and
//!   M-MAE with analytic gradients.
//! - [`sandbox`]: synthetic data and a small encoder for training runs that
//!   track the measures above.
//! - [`verify`]: randomized checks of the inequalities and identities
//!   relating the measures.
//!
//! ```
//! use matinfo::spectral::KernelMatrix;
//! use matinfo::measures::mutual_information;
//!
//! let i = KernelMatrix::identity(8);
//! let mi = mutual_information(&i, &i, 1.0).unwrap();
//! assert!((mi.value - 8f64.ln()).abs() < 1e-12);
//! ```

// Range checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod io;
pub mod losses;
pub mod measures;
pub mod random;
pub mod sandbox;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
