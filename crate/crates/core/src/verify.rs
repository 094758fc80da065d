//! Randomized property suite for the information measures.
//!
//! Every trial draws its inputs from its own generator, seeded from the
//! master seed, the property index and the trial index, so reports do not
//! depend on how trials are scheduled across threads.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{log_log_slope, taylor_residual};
use crate::measures::{
    effective_rank, entropy_of, joint_entropy, log_det_spd, matrix_js, matrix_kl, mutual_information,
    numerical_rank, tcr_kernel,
};
use crate::random::{gaussian_features, random_kernel};
use crate::sandbox::rng_stream;
use crate::spectral::{hadamard, max_abs, KernelKind, KernelMatrix};

/// Scales used for the Taylor-residual slope.
pub const TAYLOR_SCALES: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

/// Suite parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub alphas: Vec<f64>,
    pub mus: Vec<f64>,
    pub seed: u64,
    /// Feed a deliberately indefinite matrix through the sanitizer and report
    /// whether it was rejected.
    pub inject_non_psd: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            sizes: vec![2, 4, 8, 16],
            trials: 1000,
            alphas: vec![0.5, 1.0, 2.0],
            mus: vec![0.5, 1.0, 3.0],
            seed: 0,
            inject_non_psd: false,
        }
    }
}

/// Outcome for one property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub name: String,
    pub description: String,
    pub trials: usize,
    /// Largest violation seen (0 when the property held with room to spare).
    pub max_violation: f64,
    pub tolerance: f64,
    /// Trials that broke the property beyond the tolerance.
    pub failures: usize,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub properties: Vec<PropertyReport>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn property(&self, name: &str) -> Option<&PropertyReport> {
        self.properties.iter().find(|p| p.name == name)
    }
}

/// Per-trial result: the worst violation and whether the trial failed outright.
#[derive(Debug, Clone, Copy)]
struct TrialOutcome {
    violation: f64,
    failed: bool,
}

impl TrialOutcome {
    fn within(violation: f64, tol: f64) -> Self {
        Self {
            violation,
            failed: !(violation <= tol),
        }
    }
}

/// Context handed to each trial.
struct Trial<'a> {
    n: usize,
    rng: ChaCha8Rng,
    config: &'a VerifyConfig,
}

type TrialFn = fn(&mut Trial<'_>, f64) -> Result<TrialOutcome>;

struct Property {
    name: &'static str,
    description: &'static str,
    tolerance: f64,
    run: TrialFn,
}

fn upper_violation(value: f64, bound: f64) -> f64 {
    (value - bound).max(0.0)
}

fn pair(t: &mut Trial<'_>) -> Result<(KernelMatrix, KernelMatrix)> {
    Ok((random_kernel(t.n, &mut t.rng)?, random_kernel(t.n, &mut t.rng)?))
}

/// `I(K1; K2) <= ln n` for unit-diagonal kernels.
fn mi_bound(t: &mut Trial<'_>, tol: f64) -> Result<TrialOutcome> {
    let (k1, k2) = pair(t)?;
    let ln_n = (t.n as f64).ln();
    let mut worst = 0.0f64;
    for &alpha in &t.config.alphas {
        let mi = mutual_information(&k1, &k2, alpha)?.value;
        worst = worst.max(upper_violation(mi, ln_n));
    }
    Ok(TrialOutcome::within(worst, tol))
}

/// `H_1(K1 ∘ K2) <= ln rank(K1 ∘ K2) <= ln rank K1 + ln rank K2`.
fn rank_chain(t: &mut Trial<'_>, tol: f64) -> Result<TrialOutcome> {
    let (k1, k2) = pair(t)?;
    let joint = hadamard(&k1, &k2)?;
    let h = entropy_of(&joint, 1.0);
    let r12 = (numerical_rank(&joint) as f64).ln();
    let r1 = (numerical_rank(&k1) as f64).ln();
    let r2 = (numerical_rank(&k2) as f64).ln();
    let worst = upper_violation(h, r12).max(upper_violation(r12, r1 + r2));
    Ok(TrialOutcome::within(worst, tol))
}

/// `max(H_a(K1), H_a(K2)) <= H_a(K1 ∘ K2)` at orders 1 and 2.
fn joint_entropy_lower(t: &mut Trial<'_>, tol: f64) -> Result<TrialOutcome> {
    let (k1, k2) = pair(t)?;
    let mut worst = 0.0f64;
    for alpha in [1.0, 2.0] {
        let h = entropy_of(&k1, alpha).max(entropy_of(&k2, alpha));
        worst = worst.max(upper_violation(h, joint_entropy(&k1, &k2, alpha)?.value));
    }
    Ok(TrialOutcome::within(worst, tol))
}

fn subadditivity_at(t: &mut Trial<'_>, alpha: f64, tol: f64) -> Result<TrialOutcome> {
    let (k1, k2) = pair(t)?;
    let hj = joint_entropy(&k1, &k2, alpha)?.value;
    let v = upper_violation(hj, entropy_of(&k1, alpha) + entropy_of(&k2, alpha));
    Ok(TrialOutcome::within(v, tol))
}

/// `H_1(K1 ∘ K2) <= H_1(K1) + H_1(K2)`.
fn subadditivity_order1(t: &mut Trial<'_>, tol: f64) -> Result<TrialOutcome> {
    subadditivity_at(t, 1.0, tol)
}

/// `H_2(K1 ∘ K2) <= H_2(K1) + H_2(K2)`.
///
/// This does not hold in general: with `H_2(K) = -ln(|K|_F^2 / n^2)` it reads
/// `n^2 sum a_ij^2 b_ij^2 >= sum a_ij^2 sum b_ij^2`, which fails when the
/// off-diagonal mass of the two kernels sits in different places (see
/// [`subadditivity_counterexample`]). The check is kept so the report shows it.
fn subadditivity_order2(t: &mut Trial<'_>, tol: f64) -> Result<TrialOutcome> {
    subadditivity_at(t, 2.0, tol)
}

/// Two rank-2 block kernels on four points whose order-2 joint entropy,
/// `ln(8/3)`, exceeds the sum of their order-2 entropies, `2 ln 1.6`.
pub fn subadditivity_counterexample() -> (DMatrix<f64>, DMatrix<f64>) {
    let block = |group: [usize; 3]| {
        DMatrix::from_fn(4, 4, |i, j| {
            if i == j || (group.contains(&i) && group.contains(&j)) {
                1.0
            } else {
                0.0
            }
        })
    };
    (block([0, 1, 2]), block([0, 1, 3]))
}

/// `H_1(K) = ln n - KL(K, I) / n` and
/// `TCR_mu(K) = n ln(1 + mu) - KL(I, (mu I + K) / (1 + mu))`.
fn kl_identities(t: &mut Trial<'_>, tol: f64) -> Result<TrialOutcome> {
    let n = t.n;
    let nf = n as f64;
    let k = random_kernel(n, &mut t.rng)?;
    let eye = DMatrix::<f64>::identity(n, n);
    let kl_k_i = matrix_kl(&k, &eye)?.value;
    let mut worst = (entropy_of(&k, 1.0) - (nf.ln() - kl_k_i / nf)).abs();
    let id = KernelMatrix::identity(n);
    for &mu in &t.config.mus {
        let m = (&eye * mu + k.data()) / (1.0 + mu);
        let kl = matrix_kl(&id, &m)?.value;
        let tcr = tcr_kernel(&k, mu)?.value;
        worst = worst.max((tcr - (nf * (1.0 + mu).ln() - kl)).abs());
    }
    Ok(TrialOutcome::within(worst, tol))
}

/// The two KL forms above and the matrix JS divergence are nonnegative.
fn nonnegativity(t: &mut Trial<'_>, tol: f64) -> Result<TrialOutcome> {
    let n = t.n;
    let (k1, k2) = pair(t)?;
    let eye = DMatrix::<f64>::identity(n, n);
    let id = KernelMatrix::identity(n);
    let mut worst = upper_violation(0.0, matrix_kl(&k1, &eye)?.value);
    for &mu in &t.config.mus {
        let m = (&eye * mu + k1.data()) / (1.0 + mu);
        worst = worst.max(upper_violation(0.0, matrix_kl(&id, &m)?.value));
    }
    worst = worst.max(upper_violation(0.0, matrix_js(&k1, &k2)?.value));
    Ok(TrialOutcome::within(worst, tol))
}

/// `TCR_{mu^2 + 2 mu}(K1 ∘ K2) >= TCR_mu(K1) + TCR_mu(K2)`.
fn hadamard_tcr(t: &mut Trial<'_>, tol: f64) -> Result<TrialOutcome> {
    let (k1, k2) = pair(t)?;
    let joint = hadamard(&k1, &k2)?;
    let mut worst = 0.0f64;
    for &mu in &t.config.mus {
        let lhs = tcr_kernel(&joint, mu * mu + 2.0 * mu)?.value;
        let rhs = tcr_kernel(&k1, mu)?.value + tcr_kernel(&k2, mu)?.value;
        worst = worst.max(upper_violation(rhs, lhs));
    }
    Ok(TrialOutcome::within(worst, tol))
}

/// `(K1 + mu I) ∘ (K2 + mu I) = K1 ∘ K2 + (mu^2 + 2 mu) I`, entrywise.
fn hadamard_shift_identity(t: &mut Trial<'_>, tol: f64) -> Result<TrialOutcome> {
    let n = t.n;
    let (k1, k2) = pair(t)?;
    let eye = DMatrix::<f64>::identity(n, n);
    let mut worst = 0.0f64;
    for &mu in &t.config.mus {
        let lhs = (k1.data() + &eye * mu).component_mul(&(k2.data() + &eye * mu));
        let rhs = k1.data().component_mul(k2.data()) + &eye * (mu * mu + 2.0 * mu);
        worst = worst.max(max_abs(&(lhs - rhs)));
    }
    Ok(TrialOutcome::within(worst, tol))
}

/// Margin required of the strict inequalities against the identity.
const STRICT_GAP: f64 = 1e-9;
/// Kernels closer than this to the identity are exempt from strictness.
const NEAR_IDENTITY: f64 = 1e-4;

/// `H_a(K) < H_a(I)` and `TCR_mu(K) < TCR_mu(I)` for `K != I`.
fn identity_optimality(t: &mut Trial<'_>, tol: f64) -> Result<TrialOutcome> {
    let n = t.n;
    let k = random_kernel(n, &mut t.rng)?;
    let id = KernelMatrix::identity(n);
    let strict = max_abs(&(k.data() - id.data())) > NEAR_IDENTITY;
    let mut worst = 0.0f64;
    let mut failed = false;
    let mut check = |value: f64, optimum: f64| {
        worst = worst.max(upper_violation(value, optimum));
        if value > optimum + tol || (strict && optimum - value <= STRICT_GAP) {
            failed = true;
        }
    };
    for &alpha in &t.config.alphas {
        check(entropy_of(&k, alpha), entropy_of(&id, alpha));
    }
    for &mu in &t.config.mus {
        check(tcr_kernel(&k, mu)?.value, tcr_kernel(&id, mu)?.value);
    }
    Ok(TrialOutcome {
        violation: worst,
        failed,
    })
}

/// `erank(K) = exp(H_1(K))`.
fn erank_identity(t: &mut Trial<'_>, tol: f64) -> Result<TrialOutcome> {
    let k = random_kernel(t.n, &mut t.rng)?;
    let erank = effective_rank(k.data())?.value;
    Ok(TrialOutcome::within((erank - entropy_of(&k, 1.0).exp()).abs(), tol))
}

/// `ln det(I_d + Z Z^T / mu) = ln det(I_B + Z^T Z / mu)` with `d = n` and a random batch.
fn logdet_duality(t: &mut Trial<'_>, tol: f64) -> Result<TrialOutcome> {
    let d = t.n;
    let b = t.rng.random_range(1..=2 * t.n);
    let z = gaussian_features(d, b, &mut t.rng);
    let z = z.data();
    let mut worst = 0.0f64;
    for &mu in &t.config.mus {
        let left = log_det_spd(&(DMatrix::identity(d, d) + z * z.transpose() / mu))?;
        let right = log_det_spd(&(DMatrix::identity(b, b) + z.transpose() * z / mu))?;
        worst = worst.max((left - right).abs());
    }
    Ok(TrialOutcome::within(worst, tol))
}

/// Log-log slope of the second-order Taylor residual is 6.
fn taylor_slope(t: &mut Trial<'_>, tol: f64) -> Result<TrialOutcome> {
    let b = t.rng.random_range(2..=2 * t.n.max(2));
    let z = gaussian_features(t.n, b, &mut t.rng).normalize_columns()?;
    let mut worst = 0.0f64;
    for &mu in &t.config.mus {
        let residuals = taylor_residual(&z, mu, &TAYLOR_SCALES)?;
        worst = worst.max((log_log_slope(&TAYLOR_SCALES, &residuals) - 6.0).abs());
    }
    Ok(TrialOutcome::within(worst, tol))
}

const PROPERTIES: &[Property] = &[
    Property {
        name: "mi_upper_bound",
        description: "I_a(K1;K2) <= ln n",
        tolerance: 1e-7,
        run: mi_bound,
    },
    Property {
        name: "rank_chain",
        description: "H_1(K1∘K2) <= ln rank(K1∘K2) <= ln rank K1 + ln rank K2",
        tolerance: 1e-7,
        run: rank_chain,
    },
    Property {
        name: "joint_entropy_lower_bound",
        description: "max(H_a(K1), H_a(K2)) <= H_a(K1∘K2), a in {1, 2}",
        tolerance: 1e-7,
        run: joint_entropy_lower,
    },
    Property {
        name: "joint_entropy_subadditivity_order1",
        description: "H_1(K1∘K2) <= H_1(K1) + H_1(K2)",
        tolerance: 1e-7,
        run: subadditivity_order1,
    },
    Property {
        name: "joint_entropy_subadditivity_order2",
        description: "H_2(K1∘K2) <= H_2(K1) + H_2(K2)",
        tolerance: 1e-7,
        run: subadditivity_order2,
    },
    Property {
        name: "kl_identities",
        description: "H_1(K) = ln n - KL(K,I)/n and TCR_mu(K) = n ln(1+mu) - KL(I, (mu I + K)/(1+mu))",
        tolerance: 1e-8,
        run: kl_identities,
    },
    Property {
        name: "divergence_nonnegativity",
        description: "KL(K,I), KL(I,(mu I + K)/(1+mu)) and JS(K1,K2) are nonnegative",
        tolerance: 1e-8,
        run: nonnegativity,
    },
    Property {
        name: "hadamard_tcr",
        description: "TCR_{mu^2+2mu}(K1∘K2) >= TCR_mu(K1) + TCR_mu(K2)",
        tolerance: 1e-7,
        run: hadamard_tcr,
    },
    Property {
        name: "hadamard_shift_identity",
        description: "(K1 + mu I)∘(K2 + mu I) = K1∘K2 + (mu^2 + 2mu) I",
        tolerance: 1e-12,
        run: hadamard_shift_identity,
    },
    Property {
        name: "identity_optimality",
        description: "H_a(K) < H_a(I) and TCR_mu(K) < TCR_mu(I) for K != I",
        tolerance: 1e-7,
        run: identity_optimality,
    },
    Property {
        name: "erank_entropy",
        description: "erank(K) = exp(H_1(K))",
        tolerance: 1e-8,
        run: erank_identity,
    },
    Property {
        name: "logdet_duality",
        description: "ln det(I_d + ZZ^T/mu) = ln det(I_B + Z^TZ/mu)",
        tolerance: 1e-8,
        run: logdet_duality,
    },
    Property {
        name: "taylor_slope",
        description: "log-log slope of the second-order log-det residual is 6",
        tolerance: 0.5,
        run: taylor_slope,
    },
];

/// Names of the randomized properties, in report order.
pub fn property_names() -> Vec<&'static str> {
    PROPERTIES.iter().map(|p| p.name).collect()
}

fn run_property(index: usize, p: &Property, config: &VerifyConfig) -> Result<PropertyReport> {
    let outcomes = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let mut ctx = Trial {
                n: config.sizes[trial % config.sizes.len()],
                rng: rng_stream(config.seed, ((index as u64) << 32) | trial as u64),
                config,
            };
            (p.run)(&mut ctx, p.tolerance)
        })
        .collect::<Result<Vec<_>>>()?;
    let max_violation = outcomes.iter().map(|o| o.violation).fold(0.0, f64::max);
    let failures = outcomes.iter().filter(|o| o.failed).count();
    Ok(PropertyReport {
        name: p.name.into(),
        description: p.description.into(),
        trials: config.trials,
        max_violation,
        tolerance: p.tolerance,
        failures,
        passed: failures == 0,
        note: None,
    })
}

/// `I(I_d; I_d)` and `H(I_d, I_d)` both equal `ln d`.
fn identity_construction(config: &VerifyConfig) -> Result<PropertyReport> {
    const TOL: f64 = 1e-9;
    let mut dims: Vec<usize> = vec![2, 8, 32];
    for &n in &config.sizes {
        if !dims.contains(&n) {
            dims.push(n);
        }
    }
    let mut worst = 0.0f64;
    let mut failures = 0;
    for &d in &dims {
        let id = KernelMatrix::identity(d);
        let ln_d = (d as f64).ln();
        let mi = mutual_information(&id, &id, 1.0)?.value;
        let je = joint_entropy(&id, &id, 1.0)?.value;
        let v = (mi - ln_d).abs().max((je - ln_d).abs());
        worst = worst.max(v);
        if !(v <= TOL) {
            failures += 1;
        }
    }
    Ok(PropertyReport {
        name: "identity_construction".into(),
        description: "I_1(I_d;I_d) = H_1(I_d,I_d) = ln d".into(),
        trials: dims.len(),
        max_violation: worst,
        tolerance: TOL,
        failures,
        passed: failures == 0,
        note: None,
    })
}

/// A symmetric unit-diagonal matrix with a clearly negative eigenvalue.
pub fn indefinite_example() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0])
}

fn non_psd_rejection() -> PropertyReport {
    let (passed, note) = match KernelMatrix::from_matrix(indefinite_example(), KernelKind::Generic) {
        Err(e @ Error::NotPsd { .. }) => (true, format!("rejected: {e}")),
        Err(e) => (false, format!("unexpected error: {e}")),
        Ok(_) => (false, "indefinite input was accepted".to_string()),
    };
    PropertyReport {
        name: "non_psd_rejection".into(),
        description: "an injected indefinite matrix is rejected with NotPsd".into(),
        trials: 1,
        max_violation: 0.0,
        tolerance: 0.0,
        failures: usize::from(!passed),
        passed,
        note: Some(note),
    }
}

fn check_config(config: &VerifyConfig) -> Result<()> {
    let bad = |field: &str, message: &str| Error::Config {
        field: field.into(),
        message: message.into(),
    };
    if config.trials == 0 {
        return Err(bad("trials", "must be positive"));
    }
    if config.sizes.is_empty() || config.sizes.contains(&0) {
        return Err(bad("sizes", "need at least one positive size"));
    }
    if config.alphas.is_empty() {
        return Err(bad("alphas", "need at least one order"));
    }
    if let Some(&a) = config.alphas.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
        return Err(Error::BadAlpha(a));
    }
    if config.mus.is_empty() {
        return Err(bad("mus", "need at least one value"));
    }
    if let Some(&m) = config.mus.iter().find(|m| !(**m > 0.0) || !m.is_finite()) {
        return Err(Error::BadMu(m));
    }
    Ok(())
}

/// Runs every property and collects the report.
pub fn run_verify(config: &VerifyConfig) -> Result<VerifyReport> {
    check_config(config)?;
    let mut properties = PROPERTIES
        .iter()
        .enumerate()
        .map(|(i, p)| run_property(i, p, config))
        .collect::<Result<Vec<_>>>()?;
    properties.push(identity_construction(config)?);
    if config.inject_non_psd {
        properties.push(non_psd_rejection());
    }
    let passed = properties.iter().all(|p| p.passed);
    Ok(VerifyReport {
        seed: config.seed,
        properties,
        passed,
    })
}
