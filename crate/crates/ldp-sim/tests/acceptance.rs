//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Every tolerance is pinned in code. The Monte-Carlo criteria run at the
//! calibrated constants shipped as config defaults; the exact criteria run at
//! 1e-10.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ldp_core::dist::{l2_distance_sq, l2_distance_sq_joint, Distribution, JointDistribution};
use ldp_core::mechanisms::{
    audit_ldp, channel_matrix, MechanismKind, PrivacyBudget, PublicCoin,
};
use ldp_core::theory::{
    hr_lb_diagonal, joint_z_moments, lb_matrix, rappor_lb_diagonal_bound, rappor_t_moments,
    random_zero_sum, subset_z_moments,
};
use ldp_core::HadamardCode;
use ldp_sim::config::{
    round_to_multiple, CalibrationConstants, ExperimentConfig, InstanceSpec, TestKind, ThetaSpec,
};
use ldp_sim::{error_rates, log_log_slope, sample_complexity_curve};

fn criterion(name: &str, ok: bool, detail: &str) {
    println!(
        "ACCEPTANCE {}: {} ({detail})",
        name,
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {name} failed: {detail}");
}

fn random_pmf(k: usize, rng: &mut impl Rng) -> Distribution {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 0.01).collect();
    let total: f64 = raw.iter().sum();
    Distribution::new(raw.into_iter().map(|v| v / total).collect()).unwrap()
}

fn random_joint(k: usize, rng: &mut impl Rng) -> JointDistribution {
    let raw: Vec<f64> = (0..k * k).map(|_| rng.gen::<f64>() + 0.01).collect();
    let total: f64 = raw.iter().sum();
    JointDistribution::new(raw.into_iter().map(|v| v / total).collect(), k).unwrap()
}

fn base_config(test: TestKind, k: usize, gamma: f64, trials: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        test,
        k,
        epsilon: 1.0,
        gamma,
        null_instance: None,
        instances: vec![if test.is_independence() {
            InstanceSpec::BalancedPaninskiJoint
        } else {
            InstanceSpec::Paninski {
                theta: ThetaSpec::Random,
            }
        }],
        n_grid: vec![],
        trials,
        target_error: 1.0 / 3.0,
        seed,
        constants: CalibrationConstants::default(),
    }
}

/// Criterion 1: likelihood-ratio audit for every mechanism.
#[test]
fn c1_privacy_audit() {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for &epsilon in &[0.1, 0.5, 1.0] {
        let budget = PrivacyBudget::new(epsilon).unwrap();
        let e = epsilon.exp();
        for &k in &[2usize, 4, 8] {
            let mut coin_rng = ChaCha8Rng::seed_from_u64(1);
            let coin = PublicCoin::random(k, &mut coin_rng).unwrap();
            for kind in [
                MechanismKind::RandomizedResponse,
                MechanismKind::Rappor,
                MechanismKind::HadamardResponse,
                MechanismKind::Raptor,
                MechanismKind::BivariateRaptor,
            ] {
                let coin_arg = (kind == MechanismKind::Raptor).then_some(&coin);
                let audit = audit_ldp(&channel_matrix(kind, k, &budget, coin_arg).unwrap(), &budget);
                ok &= audit.max_ratio <= e * (1.0 + 1e-9);
                let exact = matches!(
                    kind,
                    MechanismKind::RandomizedResponse
                        | MechanismKind::Rappor
                        | MechanismKind::Raptor
                        | MechanismKind::BivariateRaptor
                );
                if exact {
                    ok &= (audit.max_ratio - e).abs() <= 1e-9 * e;
                }
                worst = worst.max(audit.max_ratio / e);
            }
        }
    }
    criterion("1 privacy audit", ok, &format!("worst ratio/e^eps = {worst:.12}"));
}

/// Criterion 2a: the single-coordinate output identity over 200 random
/// (p, k, eps) at tolerance 1e-10.
#[test]
fn c2a_output_identity_single() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.gen_range(2usize..=64);
        let epsilon = rng.gen_range(0.1..2.0);
        let budget = PrivacyBudget::new(epsilon).unwrap();
        let code = HadamardCode::new(k).unwrap();
        let p = random_pmf(k, &mut rng);
        let lhs = l2_distance_sq(
            &code.pushforward(&p, &budget).unwrap(),
            &code.q_star(&budget),
        )
        .unwrap();
        let alpha = budget.alpha_hadamard();
        let rhs = alpha * alpha / code.output_size() as f64
            * l2_distance_sq(&p, &Distribution::uniform(k)).unwrap();
        worst = worst.max((lhs - rhs).abs());
    }
    criterion(
        "2a single-coordinate output identity",
        worst <= 1e-10,
        &format!("max |lhs-rhs| = {worst:.2e} over 200 draws"),
    );
}

/// Criterion 2b: the three-term paired-output identity at k = 4 over 100
/// random (p, q, eps) at tolerance 1e-10.
#[test]
fn c2b_output_identity_paired() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let code = HadamardCode::new(4).unwrap();
    let kk2 = (code.output_size() * code.output_size()) as f64;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let epsilon = rng.gen_range(0.1..2.0);
        let budget = PrivacyBudget::new(epsilon).unwrap();
        let alpha = budget.alpha_hadamard();
        let p = random_joint(4, &mut rng);
        let q = random_joint(4, &mut rng);
        let lhs = l2_distance_sq_joint(
            &code.pushforward_joint(&p, &budget).unwrap(),
            &code.pushforward_joint(&q, &budget).unwrap(),
        )
        .unwrap();
        let (p1, p2) = p.marginals();
        let (q1, q2) = q.marginals();
        let joint_l2: f64 = p
            .pmf()
            .iter()
            .zip(q.pmf())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let rhs = alpha.powi(4) / kk2 * joint_l2
            + alpha.powi(2) / kk2
                * (l2_distance_sq(&p1, &q1).unwrap() + l2_distance_sq(&p2, &q2).unwrap());
        worst = worst.max((lhs - rhs).abs());
    }
    criterion(
        "2b paired-output identity",
        worst <= 1e-10,
        &format!("max |lhs-rhs| = {worst:.2e} over 100 draws"),
    );
}

/// Criterion 2c: exact collision-statistic moments by exhaustive enumeration
/// at k <= 3, n <= 3, tolerance 1e-10.
#[test]
fn c2c_collision_statistic_moments() {
    let mut ok = true;
    let mut detail = String::new();
    for &(k, n) in &[(2usize, 2usize), (2, 3), (3, 2), (3, 3)] {
        for &epsilon in &[0.5, 1.0] {
            let budget = PrivacyBudget::new(epsilon).unwrap();
            for pmf in [
                vec![1.0 / k as f64; k],
                if k == 2 {
                    vec![0.75, 0.25]
                } else {
                    vec![0.5, 0.3, 0.2]
                },
            ] {
                let p = Distribution::new(pmf).unwrap();
                let report = rappor_t_moments(k, n, &budget, &p).unwrap();
                ok &= report.expectation_ok && report.covariance_ok && report.variance_bound_ok;
                if !(report.expectation_ok && report.covariance_ok) {
                    detail = format!("k={k} n={n} eps={epsilon}");
                }
            }
        }
    }
    criterion("2c collision statistic moments", ok, &detail);
}

/// Criterion 3: concentration oracle suite.
#[test]
fn c3_concentration_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut ok = true;

    // 50 random zero-sum perturbations, k <= 12.
    for i in 0..50 {
        let k = 2 * (2 + (i % 5)); // 4..12
        let delta = random_zero_sum(k, 0.3, &mut rng);
        let report = subset_z_moments(&delta, &[]).unwrap();
        ok &= report.second_moment_ok && report.fourth_moment_ok && !report.monte_carlo;
    }

    // Worst-case exceedance floor: 20 perturbed instances per gamma at k = 10.
    let mut min_exceed = f64::INFINITY;
    for &gamma in &[0.3, 0.4, 0.5] {
        for _ in 0..20 {
            let theta: Vec<i8> = (0..5)
                .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
                .collect();
            let p = Distribution::paninski(10, gamma, &theta).unwrap();
            let prob = ldp_core::theory::half_subset_exceedance(&p, gamma).unwrap();
            min_exceed = min_exceed.min(prob);
            ok &= prob > 1.0 / 477.0;
        }
    }

    // Bivariate bracketing at k in {4, 6, 8}.
    for &k in &[4usize, 6, 8] {
        let joint = JointDistribution::balanced_paninski(k, 0.45).unwrap();
        let (p1, p2) = joint.marginals();
        let mut delta = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                delta[i * k + j] = joint.prob(i, j) - p1.prob(i) * p2.prob(j);
            }
        }
        let fro2: f64 = delta.iter().map(|d| d * d).sum();
        let report = joint_z_moments(&delta, k, &[]).unwrap();
        ok &= report.second_moment_ok;
        ok &= report.second_moment >= fro2 / 16.0 - 1e-10;
        ok &= report.second_moment <= fro2 / 4.0 + 1e-10;
    }

    criterion(
        "3 concentration suite",
        ok,
        &format!("min exceedance = {min_exceed:.4} (needs > {:.4})", 1.0 / 477.0),
    );
}

/// Criterion 4: lower-bound matrix structure.
#[test]
fn c4_lower_bound_structure() {
    let mut ok = true;
    let mut worst_off: f64 = 0.0;
    for &epsilon in &[0.25, 0.5, 1.0] {
        let budget = PrivacyBudget::new(epsilon).unwrap();
        for &k in &[4usize, 8] {
            let lb = lb_matrix(MechanismKind::Rappor, k, &budget).unwrap();
            worst_off = worst_off.max(lb.max_off_diagonal);
            ok &= lb.max_off_diagonal <= 1e-10;
            let bound = rappor_lb_diagonal_bound(&budget);
            ok &= lb.diagonal.iter().all(|&d| d <= bound + 1e-10);
        }
        for &k in &[4usize, 16, 64] {
            let lb = lb_matrix(MechanismKind::HadamardResponse, k, &budget).unwrap();
            worst_off = worst_off.max(lb.max_off_diagonal);
            ok &= lb.max_off_diagonal <= 1e-10;
            let expected = hr_lb_diagonal(&budget);
            ok &= lb
                .diagonal
                .iter()
                .all(|&d| (d - expected).abs() <= 1e-10);
        }
    }
    criterion(
        "4 lower-bound structure",
        ok,
        &format!("max off-diagonal = {worst_off:.2e}"),
    );
}

/// Criterion 5: end-to-end power at the calibrated constants, 500 trials,
/// k = 64, gamma = 0.5, eps = 1; all rates at most 0.40.
#[test]
fn c5_power_at_calibrated_n() {
    let mut detail = String::new();
    let mut ok = true;
    for (test, seed) in [
        (TestKind::RapporUniformity, 50u64),
        (TestKind::HrUniformity, 51),
        (TestKind::RaptorUniformity, 52),
    ] {
        let config = base_config(test, 64, 0.5, 500, seed);
        let report = error_rates(&config).unwrap();
        let p = &report.points[0];
        ok &= p.type1.rate <= 0.40 && p.type2.rate <= 0.40;
        detail.push_str(&format!(
            "{} n={} t1={:.3} t2={:.3}; ",
            test.label(),
            p.n,
            p.type1.rate,
            p.type2.rate
        ));
        if test == TestKind::RapporUniformity {
            // The pinned leading constant: n = 23 k^{3/2} / (alpha_R^2 g^2).
            let budget = PrivacyBudget::new(1.0).unwrap();
            let alpha = budget.alpha_rappor();
            let expect = (23.0 * 512.0 / (alpha * alpha * 0.25)).ceil() as usize;
            assert_eq!(p.n, expect);
        }
    }
    criterion("5 power at calibrated n", ok, detail.trim_end_matches("; "));
}

fn geometric_grid(default_n: usize, multiple: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = (0..13)
        .map(|i| {
            let raw = default_n as f64 * 2f64.powf(i as f64 / 3.0 - 2.0);
            round_to_multiple((raw.ceil() as usize).max(multiple), multiple)
        })
        .collect();
    grid.dedup();
    grid
}

fn minimal_n_for(test: TestKind, k: usize, gamma: f64, epsilon: f64, seed: u64) -> usize {
    let constants = CalibrationConstants::default();
    let default_n = constants.default_n(test, k, gamma, epsilon);
    let multiple = match test {
        TestKind::RaptorUniformity => constants.raptor_reps,
        TestKind::RaptorIndependence => constants.raptor_ind_reps,
        _ => 1,
    };
    let mut config = base_config(test, k, gamma, 300, seed);
    config.epsilon = epsilon;
    config.n_grid = geometric_grid(default_n, multiple);
    let report = sample_complexity_curve(&config).unwrap();
    report.minimal_n[0].unwrap_or_else(|| panic!("saturated grid for {} k={k}", test.label()))
}

/// Criterion 6: fitted log-log slopes of minimal n against k.
#[test]
fn c6_scaling_separation() {
    let mut detail = String::new();
    let mut ok = true;

    let uniformity_ks = [16usize, 64, 256];
    for (test, lo, hi) in [
        (TestKind::RapporUniformity, 1.3, 1.7),
        (TestKind::HrUniformity, 1.3, 1.7),
        (TestKind::RaptorUniformity, 0.8, 1.2),
    ] {
        let ns: Vec<usize> = uniformity_ks
            .iter()
            .map(|&k| minimal_n_for(test, k, 0.5, 1.0, 60))
            .collect();
        let slope = log_log_slope(&uniformity_ks, &ns);
        ok &= (lo..=hi).contains(&slope);
        detail.push_str(&format!("{} slope={slope:.3}; ", test.label()));
    }

    let independence_ks = [4usize, 8, 16];
    let ns: Vec<usize> = independence_ks
        .iter()
        .map(|&k| minimal_n_for(TestKind::RaptorIndependence, k, 0.45, 1.0, 61))
        .collect();
    let slope = log_log_slope(&independence_ks, &ns);
    ok &= (1.7..=2.3).contains(&slope);
    detail.push_str(&format!("raptor_independence slope={slope:.3}; "));

    // Privacy scaling spot check: quartering eps^2 quadruples the minimal n
    // (within 50%), for the subset-indicator test at k = 64.
    let n_eps1 = minimal_n_for(TestKind::RaptorUniformity, 64, 0.5, 1.0, 62);
    let n_eps_half = minimal_n_for(TestKind::RaptorUniformity, 64, 0.5, 0.5, 62);
    let ratio = n_eps_half as f64 / n_eps1 as f64;
    ok &= (2.0..=6.0).contains(&ratio);
    detail.push_str(&format!("eps ratio={ratio:.2}"));

    criterion("6 scaling separation", ok, &detail);
}

/// Criterion 7: independence pipeline at k = 4, eps = 1, gamma = 0.45.
#[test]
fn c7_independence_pipeline() {
    let mut detail = String::new();
    let mut ok = true;
    for (test, seed) in [
        (TestKind::HrIndependence, 70u64),
        (TestKind::RaptorIndependence, 71),
    ] {
        let config = base_config(test, 4, 0.45, 500, seed);
        let report = error_rates(&config).unwrap();
        let p = &report.points[0];
        ok &= p.type1.rate <= 0.40 && p.type2.rate <= 0.40;
        detail.push_str(&format!(
            "{} n={} t1={:.3} t2={:.3}; ",
            test.label(),
            p.n,
            p.type1.rate,
            p.type2.rate
        ));
    }

    // Product learning hits its chi-square target in at least 80% of runs at
    // the calibrated n1.
    let k = 4;
    let gamma = 0.45;
    let budget = PrivacyBudget::new(1.0).unwrap();
    let code = HadamardCode::new(k).unwrap();
    let alpha = budget.alpha_hadamard();
    let target = alpha.powi(4) * gamma * gamma / (k * k) as f64;
    let constants = CalibrationConstants::default();
    let n1 = (constants.learn_c * (k * k * k) as f64 / (alpha.powi(4) * gamma * gamma)) as usize;
    let joint = JointDistribution::balanced_paninski(k, gamma).unwrap();
    let (p1, p2) = joint.marginals();
    let f1 = code.pushforward(&p1, &budget).unwrap();
    let f2 = code.pushforward(&p2, &budget).unwrap();
    let s1 = f1.sampler();
    let s2 = f2.sampler();
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    let trials = 200;
    let mut hits = 0;
    for _ in 0..trials {
        let samples: Vec<(usize, usize)> = (0..n1)
            .map(|_| (s1.draw(&mut rng), s2.draw(&mut rng)))
            .collect();
        let learned =
            ldp_core::independence::learn_product(&samples, code.output_size(), &budget, target)
                .unwrap();
        let c1 = ldp_core::dist::chi_square_div(&f1, &learned.q1).unwrap();
        let c2 = ldp_core::dist::chi_square_div(&f2, &learned.q2).unwrap();
        if c1 * c2 + c1 + c2 <= target {
            hits += 1;
        }
    }
    let fraction = hits as f64 / trials as f64;
    ok &= fraction >= 0.80;
    detail.push_str(&format!("learn_product success={fraction:.3} at n1={n1}"));

    criterion("7 independence pipeline", ok, &detail);
}

/// Criterion 8: `simulate` with a fixed seed run twice produces byte-identical
/// JSON reports once the wall-clock field is zeroed.
#[test]
fn c8_determinism() {
    let exe = env!("CARGO_BIN_EXE_ldp-sim");
    let run = || {
        let output = std::process::Command::new(exe)
            .args([
                "simulate",
                "--test",
                "raptor-uniformity",
                "--k",
                "16",
                "--gamma",
                "0.5",
                "--epsilon",
                "1.0",
                "--trials",
                "40",
                "--seed",
                "12345",
            ])
            .output()
            .expect("simulate runs");
        assert!(output.status.success());
        let mut value: serde_json::Value =
            serde_json::from_slice(&output.stdout).expect("valid JSON report");
        value["wall_clock_ms"] = serde_json::json!(0);
        serde_json::to_string(&value).unwrap()
    };
    let first = run();
    let second = run();
    criterion(
        "8 determinism",
        first == second,
        &format!("{} bytes, byte-identical after zeroing wall clock", first.len()),
    );
}
