//! Independence testers over `[k]x[k]`: the private-coin pipeline (pair the
//! privatized reports to manufacture product samples, learn the product in
//! chi-square distance, then run a chi-square goodness-of-fit test) and the
//! public-coin bivariate subset-indicator test.

use rand::Rng;
use rand_distr::{Distribution as RandDistribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::hadamard::HadamardCode;
use crate::mechanisms::{raptor2_encode, PrivacyBudget, PublicCoin};
use crate::uniformity::{bias_estimate, Decision, Verdict};

/// Minimum product mass required by the chi-square tester, as a multiple of
/// `1/K^2`.
pub const PRODUCT_MASS_FLOOR: f64 = 1.0 / 50.0;

/// Split a batch of paired reports into synthetic product samples and
/// held-out test samples.
///
/// The first `2 n1` users are consumed pairwise: user `2i`'s first coordinate
/// with user `2i+1`'s second coordinate. Independence across users makes each
/// synthetic pair a draw from the product of the report marginals. The
/// remaining users' own pairs are returned as test samples.
#[allow(clippy::type_complexity)]
pub fn pair_transform_samples(
    pairs: &[(usize, usize)],
    n1: usize,
) -> Result<(Vec<(usize, usize)>, &[(usize, usize)])> {
    if pairs.len() < 2 * n1 + 1 {
        return Err(Error::TooFewSamples {
            need: 2 * n1 + 1,
            got: pairs.len(),
        });
    }
    let product: Vec<(usize, usize)> = (0..n1)
        .map(|i| (pairs[2 * i].0, pairs[2 * i + 1].1))
        .collect();
    Ok((product, &pairs[2 * n1..]))
}

/// Add-1 (Laplace) estimator: `q(z) = (count_z + 1) / (n + K)`.
pub fn add1_estimate(counts: &[u64], n: u64) -> Distribution {
    let k = counts.len();
    let denom = (n + k as u64) as f64;
    Distribution::new(counts.iter().map(|&c| (c as f64 + 1.0) / denom).collect())
        .expect("add-1 output is a valid pmf")
}

/// A learned product distribution over `[K]x[K]`, stored by its marginals.
#[derive(Debug, Clone, Serialize)]
pub struct LearnedProduct {
    pub q1: Distribution,
    pub q2: Distribution,
    pub floored: bool,
    pub target_chi2: f64,
}

impl LearnedProduct {
    pub fn output_size(&self) -> usize {
        self.q1.k()
    }

    pub fn prob(&self, z1: usize, z2: usize) -> f64 {
        self.q1.prob(z1) * self.q2.prob(z2)
    }

    pub fn min_prob(&self) -> f64 {
        let m1 = self.q1.pmf().iter().cloned().fold(f64::INFINITY, f64::min);
        let m2 = self.q2.pmf().iter().cloned().fold(f64::INFINITY, f64::min);
        m1 * m2
    }
}

/// Learn a product distribution over `[K]x[K]` from product samples by
/// running the add-1 estimator on each coordinate marginal.
///
/// Each marginal is clamped below at `1/(6K)` and renormalized, which leaves
/// accurate estimates untouched (the true report marginals are at least
/// `(1-alpha_H)/K`) and guarantees the product minimum `1/(50 K^2)` required
/// by the tester even for degenerate inputs.
pub fn learn_product(
    samples: &[(usize, usize)],
    kk: usize,
    _budget: &PrivacyBudget,
    gamma_learn_sq: f64,
) -> Result<LearnedProduct> {
    let mut counts1 = vec![0u64; kk];
    let mut counts2 = vec![0u64; kk];
    for &(z1, z2) in samples {
        if z1 >= kk {
            return Err(Error::IndexOutOfRange {
                index: z1,
                size: kk,
            });
        }
        if z2 >= kk {
            return Err(Error::IndexOutOfRange {
                index: z2,
                size: kk,
            });
        }
        counts1[z1] += 1;
        counts2[z2] += 1;
    }
    let n = samples.len() as u64;
    let (q1, f1) = floor_and_renormalize(add1_estimate(&counts1, n), kk);
    let (q2, f2) = floor_and_renormalize(add1_estimate(&counts2, n), kk);
    let learned = LearnedProduct {
        q1,
        q2,
        floored: f1 || f2,
        target_chi2: gamma_learn_sq,
    };
    debug_assert!(learned.min_prob() >= PRODUCT_MASS_FLOOR / (kk * kk) as f64);
    Ok(learned)
}

fn floor_and_renormalize(q: Distribution, kk: usize) -> (Distribution, bool) {
    let floor = 1.0 / (6.0 * kk as f64);
    if q.pmf().iter().all(|&v| v >= floor) {
        return (q, false);
    }
    let clamped: Vec<f64> = q.pmf().iter().map(|&v| v.max(floor)).collect();
    let total: f64 = clamped.iter().sum();
    (
        Distribution::new(clamped.into_iter().map(|v| v / total).collect())
            .expect("clamped pmf valid"),
        true,
    )
}

/// Poissonized chi-square goodness-of-fit test of paired samples against an
/// explicit product distribution `q`.
///
/// Statistic `S = sum_z [(N_z - m q(z))^2 - N_z] / (m q(z))` with mean
/// `m * chi2(truth, q)`; far iff `S > m * (3/4) * gamma_prime_sq`.
pub fn adk_chi2_test<R: Rng + ?Sized>(
    samples: &[(usize, usize)],
    q: &LearnedProduct,
    gamma_prime_sq: f64,
    rng: &mut R,
) -> Result<Verdict> {
    let kk = q.output_size();
    let required = PRODUCT_MASS_FLOOR / (kk * kk) as f64;
    let min = q.min_prob();
    if min < required {
        return Err(Error::ProductFloorViolated { min, required });
    }
    if samples.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let m = (0.9 * samples.len() as f64).floor();
    let poisson = Poisson::new(m).map_err(|_| Error::BadParameter {
        name: "m",
        value: m,
    })?;
    let keep = (poisson.sample(rng) as usize).min(samples.len());
    let mut counts = vec![0u64; kk * kk];
    for &(z1, z2) in &samples[..keep] {
        if z1 >= kk || z2 >= kk {
            return Err(Error::IndexOutOfRange {
                index: z1.max(z2),
                size: kk,
            });
        }
        counts[z1 * kk + z2] += 1;
    }
    let mut s = 0.0;
    for z1 in 0..kk {
        for z2 in 0..kk {
            let expected = m * q.prob(z1, z2);
            let c = counts[z1 * kk + z2] as f64;
            s += ((c - expected) * (c - expected) - c) / expected;
        }
    }
    let threshold = m * 0.75 * gamma_prime_sq;
    Ok(Verdict {
        test: "adk_chi2".into(),
        decision: if s > threshold {
            Decision::Far
        } else {
            Decision::Close
        },
        statistic: s,
        threshold,
        n: samples.len(),
        k: kk,
        epsilon: f64::NAN,
        gamma: gamma_prime_sq,
        seed: None,
        insufficient_samples: false,
    })
}

/// Private-coin independence test over paired Hadamard-response reports.
///
/// Pipeline: pair the first `2 n1` users into synthetic product samples,
/// learn the product report distribution to chi-square distance
/// `alpha_H^4 gamma^2 / k^2`, then run the chi-square tester on the held-out
/// users at `gamma'^2 = 2 alpha_H^4 gamma^2 / k^2`.
pub fn hr_independence_test<R: Rng + ?Sized>(
    pairs: &[(usize, usize)],
    k: usize,
    budget: &PrivacyBudget,
    gamma: f64,
    n1: Option<usize>,
    rng: &mut R,
) -> Result<Verdict> {
    let code = HadamardCode::new(k)?;
    let kk = code.output_size();
    let n1 = n1.unwrap_or(pairs.len() / 4);
    let (product_samples, test_samples) = pair_transform_samples(pairs, n1)?;
    let alpha = budget.alpha_hadamard();
    let gamma_learn_sq = alpha.powi(4) * gamma * gamma / (k * k) as f64;
    let learned = learn_product(&product_samples, kk, budget, gamma_learn_sq)?;
    let gamma_prime_sq = 2.0 * gamma_learn_sq;
    let inner = adk_chi2_test(test_samples, &learned, gamma_prime_sq, rng)?;
    Ok(Verdict {
        test: "hr_independence".into(),
        decision: if inner.decision == Decision::Close {
            Decision::Independent
        } else {
            Decision::NotIndependent
        },
        statistic: inner.statistic,
        threshold: inner.threshold,
        n: pairs.len(),
        k,
        epsilon: budget.epsilon(),
        gamma,
        seed: None,
        insufficient_samples: false,
    })
}

/// Estimates of `p(S1 x S2)`, `p1(S1)`, `p2(S2)` from a batch of privatized
/// bit triples, each stream inverted at budget eps/3.
pub fn binary_independence_estimate(
    triples: &[[bool; 3]],
    budget: &PrivacyBudget,
) -> Result<(f64, f64, f64)> {
    if triples.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let third = budget.fraction(3.0);
    let n = triples.len() as u64;
    let ones = |idx: usize| triples.iter().filter(|t| t[idx]).count() as u64;
    let p_joint = bias_estimate(ones(2), n, &third)?;
    let p1 = bias_estimate(ones(0), n, &third)?;
    let p2 = bias_estimate(ones(1), n, &third)?;
    Ok((p_joint, p1, p2))
}

/// Knobs for the public-coin independence test. The deviation threshold and
/// vote fraction ship as calibrated defaults produced by the exhaustive
/// subset-pair oracle (the known guarantee is existential, promising unnamed
/// positive constants).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RaptorIndependenceConfig {
    /// Flag a repetition as dependent when
    /// `|p~ - p1~ p2~| > c_thr * gamma / k`.
    pub c_thr: f64,
    /// Declare not-independent when the dependent fraction exceeds this.
    pub tau_ind: f64,
    /// Number of repetitions, each on a disjoint mini-batch.
    pub repetitions: usize,
}

impl Default for RaptorIndependenceConfig {
    fn default() -> Self {
        Self {
            c_thr: 0.19,
            tau_ind: 0.30,
            repetitions: 24,
        }
    }
}

/// Assemble the final verdict from per-repetition dependent flags.
#[allow(clippy::too_many_arguments)]
pub fn raptor_independence_verdict(
    dependent: &[bool],
    cfg: &RaptorIndependenceConfig,
    n: usize,
    k: usize,
    budget: &PrivacyBudget,
    gamma: f64,
) -> Verdict {
    let fraction = dependent.iter().filter(|&&b| b).count() as f64 / dependent.len() as f64;
    Verdict {
        test: "raptor_independence".into(),
        decision: if fraction > cfg.tau_ind {
            Decision::NotIndependent
        } else {
            Decision::Independent
        },
        statistic: fraction,
        threshold: cfg.tau_ind,
        n,
        k,
        epsilon: budget.epsilon(),
        gamma,
        seed: None,
        insufficient_samples: false,
    }
}

/// Public-coin independence test on raw `(x1, x2)` samples. Each repetition
/// draws fresh subset pairs, privatizes the three indicator bits of its
/// mini-batch, and compares `|p~ - p1~ p2~|` to `c_thr * gamma / k`.
pub fn raptor_independence_test<R: Rng + ?Sized>(
    samples: &[(usize, usize)],
    k: usize,
    budget: &PrivacyBudget,
    gamma: f64,
    cfg: &RaptorIndependenceConfig,
    rng: &mut R,
) -> Result<Verdict> {
    let reps = cfg.repetitions;
    if reps == 0 || !samples.len().is_multiple_of(reps) {
        return Err(Error::IndivisibleBatch {
            n: samples.len(),
            reps,
        });
    }
    let m = samples.len() / reps;
    let threshold = cfg.c_thr * gamma / k as f64;
    let mut dependent = Vec::with_capacity(reps);
    for batch in samples.chunks(m) {
        let s1 = PublicCoin::random(k, rng)?;
        let s2 = PublicCoin::random(k, rng)?;
        let triples: Vec<[bool; 3]> = batch
            .iter()
            .map(|&pair| raptor2_encode(pair, (&s1, &s2), budget, rng))
            .collect();
        let (p_joint, p1, p2) = binary_independence_estimate(&triples, budget)?;
        dependent.push((p_joint - p1 * p2).abs() > threshold);
    }
    Ok(raptor_independence_verdict(
        &dependent,
        cfg,
        samples.len(),
        k,
        budget,
        gamma,
    ))
}
