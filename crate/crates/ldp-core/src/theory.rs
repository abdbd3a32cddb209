//! Brute-force and analytic oracles for the moment and concentration claims
//! the testers rest on: subset-perturbation moments, the bias-corrected
//! collision statistic's exact moments, and the diagonal structure of the
//! per-mechanism lower-bound matrices.
//!
//! Every closed form is checked against exhaustive enumeration at small
//! sizes; beyond the enumeration cutoffs the oracles degrade to Monte-Carlo
//! with widened tolerances rather than refusing.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::hadamard::HadamardCode;
use crate::mechanisms::{rappor_channel, MechanismKind, PrivacyBudget};

const SUBSET_ENUM_LIMIT: usize = 16;
const PAIR_ENUM_LIMIT: usize = 8;
const MONTE_CARLO_DRAWS: usize = 1_000_000;
const EXACT_TOL: f64 = 1e-10;
const MONTE_CARLO_TOL: f64 = 0.02;

/// Moments of the subset perturbation `Z = sum_i delta_i X_i` together with
/// the closed-form predictions they are checked against.
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub second_moment: f64,
    pub second_moment_predicted: f64,
    pub fourth_moment: f64,
    pub fourth_moment_bound: f64,
    /// `(threshold, P(|Z| > threshold))` pairs.
    pub exceedance: Vec<(f64, f64)>,
    pub second_moment_ok: bool,
    pub fourth_moment_ok: bool,
    pub monte_carlo: bool,
}

fn check_zero_sum(delta: &[f64]) -> Result<()> {
    let total: f64 = delta.iter().sum();
    if total.abs() > 1e-9 {
        return Err(Error::BadParameter {
            name: "sum(delta)",
            value: total,
        });
    }
    Ok(())
}

/// Exact (or Monte-Carlo beyond k = 16) distribution of
/// `Z = sum_{i in S} delta_i` over uniformly random half-size subsets `S`.
///
/// Verifies `E[Z^2] = (E[X1^2] - E[X1 X2]) ||delta||^2` with
/// `E[X1^2] = 1/2`, `E[X1 X2] = (k-2)/(4(k-1))`, and the fourth-moment bound
/// `E[Z^4] <= 19 E[X1^4] ||delta||^4` with `E[X1^4] = 1/2`.
pub fn subset_z_moments(delta: &[f64], thresholds: &[f64]) -> Result<MomentReport> {
    let k = delta.len();
    if !k.is_multiple_of(2) || k == 0 {
        return Err(Error::OddAlphabet(k));
    }
    check_zero_sum(delta)?;
    let norm2: f64 = delta.iter().map(|d| d * d).sum();
    let kf = k as f64;
    let predicted_m2 = (0.5 - (kf - 2.0) / (4.0 * (kf - 1.0))) * norm2;
    let m4_bound = 19.0 * 0.5 * norm2 * norm2;

    let (m2, m4, exceedance, monte_carlo) = if k <= SUBSET_ENUM_LIMIT {
        let mut sum2 = 0.0;
        let mut sum4 = 0.0;
        let mut exceed = vec![0u64; thresholds.len()];
        let mut count = 0u64;
        for_each_half_subset(k, |mask| {
            let z: f64 = (0..k)
                .filter(|&i| mask >> i & 1 == 1)
                .map(|i| delta[i])
                .sum();
            sum2 += z * z;
            sum4 += z * z * z * z;
            for (slot, &t) in exceed.iter_mut().zip(thresholds) {
                *slot += u64::from(z.abs() > t);
            }
            count += 1;
        });
        let cf = count as f64;
        let probs = thresholds
            .iter()
            .zip(&exceed)
            .map(|(&t, &c)| (t, c as f64 / cf))
            .collect();
        (sum2 / cf, sum4 / cf, probs, false)
    } else {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_5b5e);
        let mut idx: Vec<usize> = (0..k).collect();
        let mut sum2 = 0.0;
        let mut sum4 = 0.0;
        let mut exceed = vec![0u64; thresholds.len()];
        for _ in 0..MONTE_CARLO_DRAWS {
            idx.shuffle(&mut rng);
            let z: f64 = idx[..k / 2].iter().map(|&i| delta[i]).sum();
            sum2 += z * z;
            sum4 += z * z * z * z;
            for (slot, &t) in exceed.iter_mut().zip(thresholds) {
                *slot += u64::from(z.abs() > t);
            }
        }
        let cf = MONTE_CARLO_DRAWS as f64;
        let probs = thresholds
            .iter()
            .zip(&exceed)
            .map(|(&t, &c)| (t, c as f64 / cf))
            .collect();
        (sum2 / cf, sum4 / cf, probs, true)
    };

    let tol = if monte_carlo {
        MONTE_CARLO_TOL * predicted_m2.max(1e-12)
    } else {
        EXACT_TOL
    };
    Ok(MomentReport {
        second_moment: m2,
        second_moment_predicted: predicted_m2,
        fourth_moment: m4,
        fourth_moment_bound: m4_bound,
        exceedance,
        second_moment_ok: (m2 - predicted_m2).abs() <= tol,
        fourth_moment_ok: m4 <= m4_bound * if monte_carlo { 1.02 } else { 1.0 } + EXACT_TOL,
        monte_carlo,
    })
}

/// Exceedance probability `P(|p(S) - 1/2| > gamma / sqrt(5k))` for a
/// perturbed distribution, by exhaustive subset enumeration. The worst-case
/// guarantee for any distribution gamma-far from uniform is `> 1/477`.
pub fn half_subset_exceedance(p: &Distribution, gamma: f64) -> Result<f64> {
    let k = p.k();
    let delta: Vec<f64> = p.pmf().iter().map(|&v| v - 1.0 / k as f64).collect();
    let threshold = gamma / (5.0 * k as f64).sqrt();
    let report = subset_z_moments(&delta, &[threshold])?;
    Ok(report.exceedance[0].1)
}

/// Enumerate all weight-k/2 bitmasks of width k (Gosper's hack).
fn for_each_half_subset(k: usize, mut f: impl FnMut(u32)) {
    let target = k / 2;
    let mut mask: u32 = (1 << target) - 1;
    let limit: u32 = 1 << k;
    while mask < limit {
        f(mask);
        let c = mask & mask.wrapping_neg();
        let r = mask + c;
        if r >= limit || c == 0 {
            break;
        }
        mask = (((r ^ mask) >> 2) / c) | r;
    }
}

/// Exact (or Monte-Carlo beyond k = 8) moments of the bivariate perturbation
/// `Z = sum_{ij} delta_ij X_i Y_j` over independent half-size subsets.
///
/// Verifies `E[Z^2] = (1/4) E[(X1-X2)^2] E[(Y1-Y2)^2] ||delta||_F^2` with
/// `E[(X1-X2)^2] = k/(2(k-1))`, and the bracketing
/// `(1/16) ||delta||_F^2 <= E[Z^2] <= (1/4) ||delta||_F^2`.
pub fn joint_z_moments(delta: &[f64], k: usize, thresholds: &[f64]) -> Result<MomentReport> {
    if !k.is_multiple_of(2) || k == 0 {
        return Err(Error::OddAlphabet(k));
    }
    if delta.len() != k * k {
        return Err(Error::SizeMismatch(delta.len(), k * k));
    }
    for i in 0..k {
        let row: f64 = (0..k).map(|j| delta[i * k + j]).sum();
        let col: f64 = (0..k).map(|j| delta[j * k + i]).sum();
        if row.abs() > 1e-9 || col.abs() > 1e-9 {
            return Err(Error::BadParameter {
                name: "row/col sum",
                value: row.abs().max(col.abs()),
            });
        }
    }
    let fro2: f64 = delta.iter().map(|d| d * d).sum();
    let kf = k as f64;
    let factor = kf / (2.0 * (kf - 1.0));
    let predicted_m2 = 0.25 * factor * factor * fro2;

    let (m2, m4, exceedance, monte_carlo) = if k <= PAIR_ENUM_LIMIT {
        let mut masks = Vec::new();
        for_each_half_subset(k, |m| masks.push(m));
        // Precompute row sums for each X-subset: v_j = sum_{i in S1} delta[i][j].
        let mut sum2 = 0.0;
        let mut sum4 = 0.0;
        let mut exceed = vec![0u64; thresholds.len()];
        let mut v = vec![0.0; k];
        for &m1 in &masks {
            for (j, slot) in v.iter_mut().enumerate() {
                *slot = (0..k)
                    .filter(|&i| m1 >> i & 1 == 1)
                    .map(|i| delta[i * k + j])
                    .sum();
            }
            for &m2mask in &masks {
                let z: f64 = (0..k).filter(|&j| m2mask >> j & 1 == 1).map(|j| v[j]).sum();
                sum2 += z * z;
                sum4 += z * z * z * z;
                for (slot, &t) in exceed.iter_mut().zip(thresholds) {
                    *slot += u64::from(z.abs() > t);
                }
            }
        }
        let cf = (masks.len() * masks.len()) as f64;
        let probs = thresholds
            .iter()
            .zip(&exceed)
            .map(|(&t, &c)| (t, c as f64 / cf))
            .collect();
        (sum2 / cf, sum4 / cf, probs, false)
    } else {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_5b5f);
        let mut rows: Vec<usize> = (0..k).collect();
        let mut cols: Vec<usize> = (0..k).collect();
        let mut sum2 = 0.0;
        let mut sum4 = 0.0;
        let mut exceed = vec![0u64; thresholds.len()];
        for _ in 0..MONTE_CARLO_DRAWS {
            rows.shuffle(&mut rng);
            cols.shuffle(&mut rng);
            let mut z = 0.0;
            for &i in &rows[..k / 2] {
                for &j in &cols[..k / 2] {
                    z += delta[i * k + j];
                }
            }
            sum2 += z * z;
            sum4 += z * z * z * z;
            for (slot, &t) in exceed.iter_mut().zip(thresholds) {
                *slot += u64::from(z.abs() > t);
            }
        }
        let cf = MONTE_CARLO_DRAWS as f64;
        let probs = thresholds
            .iter()
            .zip(&exceed)
            .map(|(&t, &c)| (t, c as f64 / cf))
            .collect();
        (sum2 / cf, sum4 / cf, probs, true)
    };

    let tol = if monte_carlo {
        MONTE_CARLO_TOL * predicted_m2.max(1e-12)
    } else {
        EXACT_TOL
    };
    let bracket_lo = fro2 / 16.0 - EXACT_TOL;
    let bracket_hi = fro2 / 4.0 + EXACT_TOL;
    Ok(MomentReport {
        second_moment: m2,
        second_moment_predicted: predicted_m2,
        fourth_moment: m4,
        fourth_moment_bound: f64::NAN,
        exceedance,
        second_moment_ok: (m2 - predicted_m2).abs() <= tol
            && m2 >= bracket_lo
            && m2 <= bracket_hi,
        fourth_moment_ok: true,
        monte_carlo,
    })
}

/// Exact moments of the bias-corrected collision statistic by exhaustive
/// enumeration of the joint (input, message) space, checked against the
/// closed-form expectation, the assembled covariance expression, and the
/// variance bound `4 k n^2 + 8 n E[T]`.
#[derive(Debug, Clone, Serialize)]
pub struct CollisionMomentReport {
    pub expectation: f64,
    pub expectation_predicted: f64,
    pub variance: f64,
    pub variance_closed_form: f64,
    pub variance_bound: f64,
    pub expectation_ok: bool,
    pub covariance_ok: bool,
    pub variance_bound_ok: bool,
}

pub fn rappor_t_moments(
    k: usize,
    n: usize,
    budget: &PrivacyBudget,
    p: &Distribution,
) -> Result<CollisionMomentReport> {
    if p.k() != k {
        return Err(Error::SizeMismatch(p.k(), k));
    }
    if n < 2 {
        return Err(Error::TooFewSamples { need: 2, got: n });
    }
    let masks = 1usize << k;
    let outcomes = (masks as f64).powi(n as i32);
    if outcomes > 2f64.powi(24) {
        return Err(Error::EnumerationTooLarge(format!(
            "(2^k)^n = {outcomes} messages"
        )));
    }
    let beta = budget.beta_rappor();
    let alpha = budget.alpha_rappor();
    let lambda = alpha / k as f64 + beta;
    let nf = n as f64;
    let kf = k as f64;

    // Users are independent, so the statistic's moments only need the
    // per-user message distribution q(z) = sum_x p(x) W(z|x).
    let mut q = vec![0.0; masks];
    for x in 0..k {
        for (z, slot) in q.iter_mut().enumerate() {
            let mut pr = p.prob(x);
            for i in 0..k {
                let bit = z >> i & 1 == 1;
                pr *= if bit == (i == x) { 1.0 - beta } else { beta };
            }
            *slot += pr;
        }
    }

    let mut e_t = 0.0;
    let mut e_t2 = 0.0;
    let mut outcome = vec![0usize; n];
    'outer: loop {
        let mut prob = 1.0;
        let mut counts = vec![0u64; k];
        for &z in &outcome {
            prob *= q[z];
            for (i, slot) in counts.iter_mut().enumerate() {
                *slot += u64::from(z >> i & 1 == 1);
            }
        }
        if prob > 0.0 {
            let centered = (nf - 1.0) * lambda;
            let mut t = kf * (nf - 1.0) * lambda * lambda;
            for &c in &counts {
                let cf = c as f64;
                t += (cf - centered) * (cf - centered) - cf;
            }
            e_t += prob * t;
            e_t2 += prob * t * t;
        }
        let mut pos = 0;
        loop {
            if pos == n {
                break 'outer;
            }
            outcome[pos] += 1;
            if outcome[pos] < masks {
                break;
            }
            outcome[pos] = 0;
            pos += 1;
        }
    }
    let variance = e_t2 - e_t * e_t;

    let u = 1.0 / kf;
    let l2: f64 = p.pmf().iter().map(|&v| (v - u) * (v - u)).sum();
    let expectation_predicted = nf * (nf - 1.0) * alpha * alpha * l2;

    // Assembled closed-form variance: per-position variances plus the exact
    // cross covariances.
    let mut variance_closed = 0.0;
    for x in 0..k {
        let lx = alpha * p.prob(x) + beta;
        variance_closed += 2.0 * nf * (nf - 1.0) * lx * lx * (1.0 - lx) * (1.0 - lx)
            + 4.0 * nf * (nf - 1.0) * (nf - 1.0) * lx * (1.0 - lx) * (lambda - lx) * (lambda - lx);
    }
    for x in 0..k {
        for y in 0..k {
            if x == y {
                continue;
            }
            let (px, py) = (p.prob(x), p.prob(y));
            variance_closed += 2.0
                * alpha.powi(4)
                * nf
                * (nf - 1.0)
                * (px * px * py * py
                    - 2.0 * (nf - 1.0) * px * py * (px - u) * (py - u));
        }
    }

    let variance_bound = 4.0 * kf * nf * nf + 8.0 * nf * e_t;
    Ok(CollisionMomentReport {
        expectation: e_t,
        expectation_predicted,
        variance,
        variance_closed_form: variance_closed,
        variance_bound,
        expectation_ok: (e_t - expectation_predicted).abs() <= EXACT_TOL,
        covariance_ok: (variance - variance_closed).abs() <= EXACT_TOL,
        variance_bound_ok: variance <= variance_bound + EXACT_TOL,
    })
}

/// The `(k/2) x (k/2)` matrix
/// `H(i1,i2) = k sum_m (W(m|a1) - W(m|b1))(W(m|a2) - W(m|b2)) / sum_i W(m|i)`
/// over consecutive input pairs `(a, b) = (2i, 2i+1)`, computed from the
/// explicit channel matrix. Diagonal for the one-hot and Hadamard channels.
#[derive(Debug, Clone, Serialize)]
pub struct LbMatrix {
    pub mechanism: MechanismKind,
    pub epsilon: f64,
    pub k: usize,
    /// Row-major (k/2) x (k/2) entries.
    pub entries: Vec<f64>,
    pub max_off_diagonal: f64,
    pub diagonal: Vec<f64>,
}

impl LbMatrix {
    pub fn entry(&self, i1: usize, i2: usize) -> f64 {
        self.entries[i1 * (self.k / 2) + i2]
    }
}

/// Build the lower-bound matrix for the one-hot or Hadamard-response channel.
///
/// Conventions follow the structure arguments rather than the encoder-side
/// defaults: the one-hot channel uses per-bit flip rate `1/(1+e^eps)` (so the
/// diagonal bound reads `(e^{2 eps}-1)^2 / e^eps`), and the Hadamard channel
/// identifies inputs with matrix rows `0..k-1` directly so that consecutive
/// rows pair up.
pub fn lb_matrix(kind: MechanismKind, k: usize, budget: &PrivacyBudget) -> Result<LbMatrix> {
    if !k.is_multiple_of(2) || k == 0 {
        return Err(Error::OddAlphabet(k));
    }
    // Weight table w[x][m], one row per input. For the one-hot channel every
    // row is a genuine channel row; for the Hadamard channel the inputs are
    // identified with transform rows 0..k-1 (so consecutive rows pair up) and
    // the row-0 weight vector follows the same parity formula even though it
    // is not stochastic on its own.
    let weights: Vec<Vec<f64>> = match kind {
        MechanismKind::Rappor => {
            if k > 10 {
                return Err(Error::EnumerationTooLarge(format!(
                    "one-hot lower-bound matrix needs 2^{k} messages"
                )));
            }
            let flip = 1.0 / (1.0 + budget.epsilon().exp());
            let channel = rappor_channel(k, flip)?;
            (0..k)
                .map(|x| (0..channel.outputs()).map(|m| channel.prob(x, m)).collect())
                .collect()
        }
        MechanismKind::HadamardResponse => {
            if k > 256 {
                return Err(Error::EnumerationTooLarge(format!("k = {k} > 256")));
            }
            let kk = HadamardCode::new(k)?.output_size();
            let e = budget.epsilon().exp();
            let hi = 2.0 / kk as f64 * e / (e + 1.0);
            let lo = 2.0 / kk as f64 / (e + 1.0);
            (0..k)
                .map(|x| {
                    (0..kk)
                        .map(|m| if (m & x).count_ones().is_multiple_of(2) { hi } else { lo })
                        .collect()
                })
                .collect()
        }
        other => {
            return Err(Error::MechanismMismatch {
                expected: "rappor or hr".into(),
                got: other.to_string(),
            })
        }
    };

    let half = k / 2;
    let outputs = weights[0].len();
    let denominators: Vec<f64> = (0..outputs)
        .map(|m| (0..k).map(|i| weights[i][m]).sum())
        .collect();
    let mut entries = vec![0.0; half * half];
    for i1 in 0..half {
        for i2 in i1..half {
            let mut acc = 0.0;
            for m in 0..outputs {
                let d1 = weights[2 * i1][m] - weights[2 * i1 + 1][m];
                let d2 = weights[2 * i2][m] - weights[2 * i2 + 1][m];
                acc += d1 * d2 / denominators[m];
            }
            let v = k as f64 * acc;
            entries[i1 * half + i2] = v;
            entries[i2 * half + i1] = v;
        }
    }
    let mut max_off = 0.0f64;
    let mut diagonal = Vec::with_capacity(half);
    for i1 in 0..half {
        for i2 in 0..half {
            if i1 == i2 {
                diagonal.push(entries[i1 * half + i2]);
            } else {
                max_off = max_off.max(entries[i1 * half + i2].abs());
            }
        }
    }
    Ok(LbMatrix {
        mechanism: kind,
        epsilon: budget.epsilon(),
        k,
        entries,
        max_off_diagonal: max_off,
        diagonal,
    })
}

/// Exact closed form of the Hadamard lower-bound diagonal under the
/// row-identity convention: `2 alpha_H^2`, independent of k and K.
pub fn hr_lb_diagonal(budget: &PrivacyBudget) -> f64 {
    let a = budget.alpha_hadamard();
    2.0 * a * a
}

/// Diagonal bound for the one-hot lower-bound matrix:
/// `(e^{2 eps} - 1)^2 / e^eps`.
pub fn rappor_lb_diagonal_bound(budget: &PrivacyBudget) -> f64 {
    let e2 = (2.0 * budget.epsilon()).exp();
    (e2 - 1.0) * (e2 - 1.0) / budget.epsilon().exp()
}

/// Generate a random zero-sum perturbation vector, for property checks.
pub fn random_zero_sum<R: Rng + ?Sized>(k: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| rng.gen_range(-scale..scale)).collect();
    let mean: f64 = v.iter().sum::<f64>() / k as f64;
    for x in &mut v {
        *x -= mean;
    }
    v
}
