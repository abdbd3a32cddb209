//! One Monte-Carlo trial: generate user data for the instance, push it
//! through the mechanism, run the test.
//!
//! Synthetic instances use exact sufficient-statistic samplers instead of
//! per-user encoding where the curator-side statistic admits one (set-bit
//! counts, report histograms, per-repetition one-counts); the sampled
//! statistic has exactly the distribution the encoder path induces, at a
//! fraction of the cost. File-backed instances always take the real encoding
//! path. Encoder fidelity itself is covered by the goodness-of-fit tests in
//! the core crate.

use anyhow::{anyhow, bail};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution as RandDistribution};

use ldp_core::dist::{sample, Distribution, JointDistribution};
use ldp_core::independence::{
    binary_independence_estimate, hr_independence_test, raptor_independence_test,
    raptor_independence_verdict,
};
use ldp_core::mechanisms::{hr_encode, rappor_encode, raptor2_encode};
use ldp_core::uniformity::{
    bias_test, hr_uniformity_test, rappor_uniformity_test, raptor_uniformity_test,
    raptor_verdict_from_flags, RapporCounts,
};
use ldp_core::{Decision, HadamardCode, PrivacyBudget, PublicCoin, Verdict};
use rand::SeedableRng;

use crate::config::{ExperimentConfig, InstanceSpec, TestKind};
use crate::instance::Instance;
use crate::seed::trial_seed;

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub verdict: Verdict,
    pub seed: u64,
}

/// The decision a test should reach on its null hypothesis.
pub fn null_decision(test: TestKind) -> Decision {
    if test.is_independence() {
        Decision::Independent
    } else {
        Decision::Uniform
    }
}

/// Run one fully deterministic trial: the stream is seeded from
/// `(base seed, grid index, instance index, trial index)`.
pub fn run_trial(
    config: &ExperimentConfig,
    n: usize,
    grid_index: usize,
    instance_spec: &InstanceSpec,
    instance_index: usize,
    trial_index: usize,
) -> anyhow::Result<TrialOutcome> {
    let seed = trial_seed(
        config.seed,
        grid_index as u64,
        instance_index as u64,
        trial_index as u64,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instance = instance_spec.realize(config.test, config.k, config.gamma, &mut rng)?;
    let budget = PrivacyBudget::new(config.epsilon)?;
    let mut verdict = match (config.test, &instance) {
        (TestKind::RapporUniformity, Instance::Marginal(p)) => {
            rappor_trial_from_pmf(p, n, &budget, config.gamma, &mut rng)?
        }
        (TestKind::RapporUniformity, Instance::Samples(xs)) => {
            let messages: Vec<Vec<bool>> = take_n(xs, n)?
                .iter()
                .map(|&x| rappor_encode(config.k, &budget, x, &mut rng))
                .collect();
            let counts = RapporCounts::from_messages(&messages, config.k)?;
            rappor_uniformity_test(&counts, &budget, config.gamma)?
        }
        (TestKind::HrUniformity, Instance::Marginal(p)) => {
            let code = HadamardCode::new(config.k)?;
            let reports = sample(&code.pushforward(p, &budget)?, n, &mut rng);
            hr_uniformity_test(&reports, config.k, &budget, config.gamma, &mut rng)?
        }
        (TestKind::HrUniformity, Instance::Samples(xs)) => {
            let code = HadamardCode::new(config.k)?;
            let reports: Vec<usize> = take_n(xs, n)?
                .iter()
                .map(|&x| hr_encode(&code, &budget, x, &mut rng))
                .collect();
            hr_uniformity_test(&reports, config.k, &budget, config.gamma, &mut rng)?
        }
        (TestKind::RaptorUniformity, Instance::Marginal(p)) => {
            raptor_trial_from_pmf(p, n, config, &budget, &mut rng)?
        }
        (TestKind::RaptorUniformity, Instance::Samples(xs)) => raptor_uniformity_test(
            take_n(xs, n)?,
            config.k,
            &budget,
            config.gamma,
            &config.constants.raptor_uniformity_config(),
            &mut rng,
        )?,
        (TestKind::HrIndependence, Instance::Joint(p)) => {
            let code = HadamardCode::new(config.k)?;
            let pushed = code.pushforward_joint(p, &budget)?;
            let sampler = pushed.sampler();
            let pairs: Vec<(usize, usize)> = (0..n)
                .map(|_| pushed.unflatten(sampler.draw(&mut rng)))
                .collect();
            let n1 = (n as f64 * config.constants.n1_fraction) as usize;
            hr_independence_test(&pairs, config.k, &budget, config.gamma, Some(n1), &mut rng)?
        }
        (TestKind::HrIndependence, Instance::SamplePairs(xs)) => {
            let code = HadamardCode::new(config.k)?;
            let pairs: Vec<(usize, usize)> = take_n(xs, n)?
                .iter()
                .map(|&(x1, x2)| {
                    (
                        hr_encode(&code, &budget, x1, &mut rng),
                        hr_encode(&code, &budget, x2, &mut rng),
                    )
                })
                .collect();
            let n1 = (n as f64 * config.constants.n1_fraction) as usize;
            hr_independence_test(&pairs, config.k, &budget, config.gamma, Some(n1), &mut rng)?
        }
        (TestKind::RaptorIndependence, Instance::Joint(p)) => {
            raptor2_trial_from_pmf(p, n, config, &budget, &mut rng)?
        }
        (TestKind::RaptorIndependence, Instance::SamplePairs(xs)) => raptor_independence_test(
            take_n(xs, n)?,
            config.k,
            &budget,
            config.gamma,
            &config.constants.raptor_independence_config(),
            &mut rng,
        )?,
        (test, _) => bail!(
            "instance {} does not fit test {}",
            instance_spec.label(),
            test.label()
        ),
    };
    verdict.seed = Some(seed);
    Ok(TrialOutcome { verdict, seed })
}

fn take_n<T>(xs: &[T], n: usize) -> anyhow::Result<&[T]> {
    xs.get(..n)
        .ok_or_else(|| anyhow!("sample file holds {} symbols, trial needs {}", xs.len(), n))
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("p in range").sample(rng)
}

/// Multinomial draw by conditional binomials.
fn multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = Vec::with_capacity(probs.len());
    let mut remaining = n;
    let mut rest = 1.0;
    for (i, &p) in probs.iter().enumerate() {
        if i + 1 == probs.len() {
            out.push(remaining);
            break;
        }
        let cond = if rest > 0.0 { (p / rest).clamp(0.0, 1.0) } else { 0.0 };
        let c = binomial(remaining, cond, rng);
        out.push(c);
        remaining -= c;
        rest -= p;
    }
    out
}

/// One-hot uniformity trial via the exact distribution of the set-bit
/// counts: input counts are multinomial, and given them each position's
/// count is an independent sum of two binomials (bits are independently
/// flipped within a user).
fn rappor_trial_from_pmf<R: Rng + ?Sized>(
    p: &Distribution,
    n: usize,
    budget: &PrivacyBudget,
    gamma: f64,
    rng: &mut R,
) -> ldp_core::Result<Verdict> {
    let beta = budget.beta_rappor();
    let input_counts = multinomial(n as u64, p.pmf(), rng);
    let counts: Vec<u64> = input_counts
        .iter()
        .map(|&c| binomial(c, 1.0 - beta, rng) + binomial(n as u64 - c, beta, rng))
        .collect();
    let counts = RapporCounts::new(counts, n as u64)?;
    rappor_uniformity_test(&counts, budget, gamma)
}

/// Subset-indicator uniformity trial via per-repetition one-counts: the
/// privatized bit of a user is Bernoulli with mean determined by the exact
/// subset mass, so the count of ones in a mini-batch is binomial.
fn raptor_trial_from_pmf<R: Rng + ?Sized>(
    p: &Distribution,
    n: usize,
    config: &ExperimentConfig,
    budget: &PrivacyBudget,
    rng: &mut R,
) -> anyhow::Result<Verdict> {
    let cfg = config.constants.raptor_uniformity_config();
    let reps = cfg.repetitions;
    if reps == 0 || !n.is_multiple_of(reps) {
        bail!("n = {n} not divisible by {reps} repetitions");
    }
    let m = (n / reps) as u64;
    let k = config.k;
    let e = budget.epsilon().exp();
    let gamma_prime = config.gamma / (5.0 * k as f64).sqrt();
    let delta = cfg.delta();
    let mut unbiased = Vec::with_capacity(reps);
    let mut insufficient = false;
    for _ in 0..reps {
        let coin = PublicCoin::random(k, rng)?;
        let mass = coin.mass(p)?;
        let mean = 1.0 / (e + 1.0) + mass * (e - 1.0) / (e + 1.0);
        let ones = binomial(m, mean, rng);
        let v = bias_test(ones, m, budget, gamma_prime, delta)?;
        insufficient |= v.insufficient_samples;
        unbiased.push(!v.biased);
    }
    Ok(raptor_verdict_from_flags(
        &unbiased,
        &cfg,
        n,
        k,
        budget,
        config.gamma,
        insufficient,
    ))
}

/// Bivariate subset-indicator trial via exact truth-class statistics: the
/// four (b1, b2) classes are multinomial with masses computed from the pmf,
/// and given the class counts the three streams' one-counts are independent
/// binomial mixtures.
fn raptor2_trial_from_pmf<R: Rng + ?Sized>(
    joint: &JointDistribution,
    n: usize,
    config: &ExperimentConfig,
    budget: &PrivacyBudget,
    rng: &mut R,
) -> anyhow::Result<Verdict> {
    let cfg = config.constants.raptor_independence_config();
    let reps = cfg.repetitions;
    if reps == 0 || !n.is_multiple_of(reps) {
        bail!("n = {n} not divisible by {reps} repetitions");
    }
    let m = (n / reps) as u64;
    let k = config.k;
    let third = budget.fraction(3.0);
    let e3 = third.epsilon().exp();
    let keep = e3 / (1.0 + e3);
    let flip = 1.0 - keep;
    let (p1, p2) = joint.marginals();
    let threshold = cfg.c_thr * config.gamma / k as f64;
    let mut dependent = Vec::with_capacity(reps);
    for _ in 0..reps {
        let s1 = PublicCoin::random(k, rng)?;
        let s2 = PublicCoin::random(k, rng)?;
        let q11: f64 = s1
            .indices()
            .iter()
            .map(|&i| {
                s2.indices()
                    .iter()
                    .map(|&j| joint.prob(i, j))
                    .sum::<f64>()
            })
            .sum();
        let m1 = s1.mass(&p1)?;
        let m2 = s2.mass(&p2)?;
        let q10 = (m1 - q11).max(0.0);
        let q01 = (m2 - q11).max(0.0);
        let q00 = (1.0 - q11 - q10 - q01).max(0.0);
        let classes = multinomial(m, &[q11, q10, q01, q00], rng);
        let (c11, c10, c01) = (classes[0], classes[1], classes[2]);
        let ones3 = binomial(c11, keep, rng) + binomial(m - c11, flip, rng);
        let b1_true = c11 + c10;
        let ones1 = binomial(b1_true, keep, rng) + binomial(m - b1_true, flip, rng);
        let b2_true = c11 + c01;
        let ones2 = binomial(b2_true, keep, rng) + binomial(m - b2_true, flip, rng);
        let est = |ones: u64| -> ldp_core::Result<f64> {
            ldp_core::uniformity::bias_estimate(ones, m, &third)
        };
        let (pj, p1e, p2e) = (est(ones3)?, est(ones1)?, est(ones2)?);
        dependent.push((pj - p1e * p2e).abs() > threshold);
    }
    Ok(raptor_independence_verdict(
        &dependent,
        &cfg,
        n,
        k,
        budget,
        config.gamma,
    ))
}

/// Sanity check used by tests: the encoding path and the sufficient-statistic
/// path must agree in distribution. Exposed for the calibration module too.
pub fn raptor2_encode_batch<R: Rng + ?Sized>(
    joint: &JointDistribution,
    coins: (&PublicCoin, &PublicCoin),
    budget: &PrivacyBudget,
    m: usize,
    rng: &mut R,
) -> (f64, f64, f64) {
    let sampler = joint.sampler();
    let triples: Vec<[bool; 3]> = (0..m)
        .map(|_| {
            let pair = joint.unflatten(sampler.draw(rng));
            raptor2_encode(pair, coins, budget, rng)
        })
        .collect();
    binary_independence_estimate(&triples, budget).expect("nonempty batch")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{CalibrationConstants, ThetaSpec};

    fn base_config(test: TestKind, k: usize) -> ExperimentConfig {
        ExperimentConfig {
            test,
            k,
            epsilon: 1.0,
            gamma: 0.5,
            null_instance: None,
            instances: vec![if test.is_independence() {
                InstanceSpec::BalancedPaninskiJoint
            } else {
                InstanceSpec::Paninski {
                    theta: ThetaSpec::Random,
                }
            }],
            n_grid: vec![],
            trials: 1,
            target_error: 1.0 / 3.0,
            seed: 99,
            constants: CalibrationConstants::default(),
        }
    }

    #[test]
    fn trials_are_deterministic() {
        for test in [
            TestKind::RapporUniformity,
            TestKind::HrUniformity,
            TestKind::RaptorUniformity,
        ] {
            let config = base_config(test, 8);
            let n = 48 * 40;
            let spec = InstanceSpec::Paninski {
                theta: ThetaSpec::Random,
            };
            let a = run_trial(&config, n, 0, &spec, 1, 7).unwrap();
            let b = run_trial(&config, n, 0, &spec, 1, 7).unwrap();
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.verdict.statistic, b.verdict.statistic);
            assert_eq!(a.verdict.decision, b.verdict.decision);
            let c = run_trial(&config, n, 0, &spec, 1, 8).unwrap();
            assert_ne!(a.seed, c.seed);
        }
    }

    #[test]
    fn coins_differ_across_trials() {
        // Coin collision sanity: distinct trial indices give (almost always)
        // distinct first coins.
        let k = 8;
        let mut distinct = 0;
        let mut prev: Option<Vec<usize>> = None;
        for trial in 0..1000 {
            let seed = trial_seed(5, 0, 0, trial);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let coin = PublicCoin::random(k, &mut rng).unwrap();
            let idx = coin.indices();
            if prev.as_ref() != Some(&idx) {
                distinct += 1;
            }
            prev = Some(idx);
        }
        // C(8,4) = 70 possible coins; adjacent-collision rate ~ 1/70.
        assert!(distinct >= 950, "distinct {distinct}");
    }

    #[test]
    fn rappor_sufficient_statistic_matches_encoding_path() {
        // Compare the distribution of the statistic between the two paths by
        // matching means within Monte-Carlo error.
        let k = 4;
        let n = 400usize;
        let budget = PrivacyBudget::new(1.0).unwrap();
        let p = Distribution::paninski(k, 0.4, &[1, -1]).unwrap();
        let trials = 600;
        let mut mean_fast = 0.0;
        let mut mean_slow = 0.0;
        let mut var_acc = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..trials {
            let v = rappor_trial_from_pmf(&p, n, &budget, 0.4, &mut rng).unwrap();
            mean_fast += v.statistic;
            var_acc += v.statistic * v.statistic;

            let sampler = p.sampler();
            let messages: Vec<Vec<bool>> = (0..n)
                .map(|_| {
                    let x = sampler.draw(&mut rng);
                    rappor_encode(k, &budget, x, &mut rng)
                })
                .collect();
            let counts = RapporCounts::from_messages(&messages, k).unwrap();
            mean_slow += rappor_uniformity_test(&counts, &budget, 0.4)
                .unwrap()
                .statistic;
        }
        mean_fast /= trials as f64;
        mean_slow /= trials as f64;
        let var = var_acc / trials as f64 - mean_fast * mean_fast;
        let tol = 6.0 * (2.0 * var / trials as f64).sqrt();
        assert!(
            (mean_fast - mean_slow).abs() <= tol,
            "fast {mean_fast} slow {mean_slow} tol {tol}"
        );
    }

    #[test]
    fn raptor2_sufficient_statistic_matches_encoding_path() {
        let k = 4;
        let joint = JointDistribution::balanced_paninski(k, 0.45).unwrap();
        let budget = PrivacyBudget::new(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s1 = PublicCoin::random(k, &mut rng).unwrap();
        let s2 = PublicCoin::random(k, &mut rng).unwrap();
        let m = 40_000;
        let (pj, p1e, p2e) = raptor2_encode_batch(&joint, (&s1, &s2), &budget, m, &mut rng);
        // Exact truths.
        let (p1, p2) = joint.marginals();
        let q11: f64 = s1
            .indices()
            .iter()
            .map(|&i| s2.indices().iter().map(|&j| joint.prob(i, j)).sum::<f64>())
            .sum();
        let third = budget.fraction(3.0);
        let e3 = third.epsilon().exp();
        let inv = (e3 + 1.0) / (e3 - 1.0);
        let tol = 4.0 * inv / (m as f64).sqrt();
        assert!((pj - q11).abs() <= tol);
        assert!((p1e - s1.mass(&p1).unwrap()).abs() <= tol);
        assert!((p2e - s2.mass(&p2).unwrap()).abs() <= tol);
    }

    #[test]
    fn multinomial_sums_to_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let probs = [0.1, 0.2, 0.3, 0.4];
        for _ in 0..100 {
            let counts = multinomial(1000, &probs, &mut rng);
            assert_eq!(counts.iter().sum::<u64>(), 1000);
        }
    }
}
