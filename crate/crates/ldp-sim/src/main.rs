//! Command-line surface: privacy audits, one-shot tests on batches or raw
//! sample files, Monte-Carlo error-rate simulation, sample-complexity curves,
//! calibration sweeps, and the brute-force verification suite.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ldp_core::dist::Distribution;
use ldp_core::independence::binary_independence_estimate;
use ldp_core::mechanisms::{
    audit_ldp, audit_rappor_per_bit, channel_matrix, AuditResult, MechanismKind, PrivatizedBatch,
    PublicCoin,
};
use ldp_core::theory::{
    hr_lb_diagonal, joint_z_moments, lb_matrix, rappor_lb_diagonal_bound, rappor_t_moments,
    random_zero_sum, subset_z_moments,
};
use ldp_core::uniformity::{bias_test, RapporCounts};
use ldp_core::{Decision, HadamardCode, JointDistribution, PrivacyBudget, Verdict};
use ldp_sim::calibrate::{
    calibrate_learn_product, calibrate_raptor_ind_threshold, calibrate_sample_constant,
};
use ldp_sim::config::{CalibrationConstants, ExperimentConfig, InstanceSpec, TestKind, ThetaSpec};
use ldp_sim::instance::{read_pair_file, read_symbol_file};
use ldp_sim::{error_rates, sample_complexity_curve, ExperimentReport};

#[derive(Parser)]
#[command(
    name = "ldp-sim",
    about = "Locally private distribution testing: mechanisms, tests, experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MechanismArg {
    Rr,
    Rappor,
    Hr,
    Raptor,
    Raptor2,
}

impl From<MechanismArg> for MechanismKind {
    fn from(m: MechanismArg) -> Self {
        match m {
            MechanismArg::Rr => MechanismKind::RandomizedResponse,
            MechanismArg::Rappor => MechanismKind::Rappor,
            MechanismArg::Hr => MechanismKind::HadamardResponse,
            MechanismArg::Raptor => MechanismKind::Raptor,
            MechanismArg::Raptor2 => MechanismKind::BivariateRaptor,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Audit a mechanism's likelihood ratios against e^epsilon.
    Audit {
        #[arg(long, value_enum)]
        mechanism: MechanismArg,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        epsilon: f64,
        /// Seed for the public coin, where one is needed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// One-shot test on a privatized batch (JSON) or a raw sample file.
    Test {
        #[arg(long, value_enum)]
        test: TestKind,
        /// PrivatizedBatch JSON produced by a user-side encoder.
        #[arg(long, conflicts_with = "samples")]
        batch: Option<PathBuf>,
        /// Raw sample file: the mechanism is applied here, seeded by --seed.
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo error rates over a sample-size grid.
    Simulate(SimArgs),
    /// Minimal sample size by binary search over the grid.
    Curve(SimArgs),
    /// Re-derive a shipped calibration constant.
    Calibrate {
        #[arg(long, value_enum)]
        test: TestKind,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.25)]
        target: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the brute-force verification suite; nonzero exit on any failure.
    VerifyAppendix {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct SimArgs {
    /// Experiment config JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    test: Option<TestKind>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Sample-size grid, comma separated; empty means calibrated default.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: OutputFormat,
}

impl SimArgs {
    fn build_config(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).context("parsing experiment config")?
            }
            None => {
                let test = self
                    .test
                    .ok_or_else(|| anyhow!("--test required without --config"))?;
                ExperimentConfig {
                    test,
                    k: 0,
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
                    trials: 100,
                    target_error: 1.0 / 3.0,
                    seed: 0,
                    constants: CalibrationConstants::default(),
                }
            }
        };
        if let Some(test) = self.test {
            config.test = test;
        }
        if let Some(k) = self.k {
            config.k = k;
        }
        if let Some(epsilon) = self.epsilon {
            config.epsilon = epsilon;
        }
        if let Some(gamma) = self.gamma {
            config.gamma = gamma;
        }
        if let Some(grid) = &self.n {
            config.n_grid = grid.clone();
        }
        if let Some(trials) = self.trials {
            config.trials = trials;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.validate().map_err(|e| anyhow!(e))?;
        Ok(config)
    }

    fn emit(&self, report: &ExperimentReport) -> Result<()> {
        let text = match self.format {
            OutputFormat::Json => report.to_json()?,
            OutputFormat::Csv => report.to_csv(),
        };
        match &self.out {
            Some(path) => {
                fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
            }
            None => println!("{text}"),
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Audit {
            mechanism,
            k,
            epsilon,
            seed,
        } => run_audit(mechanism.into(), k, epsilon, seed),
        Command::Test {
            test,
            batch,
            samples,
            k,
            epsilon,
            gamma,
            seed,
            out,
        } => run_test(test, batch, samples, k, epsilon, gamma, seed, out),
        Command::Simulate(args) => {
            let config = args.build_config()?;
            let report = error_rates(&config)?;
            args.emit(&report)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Curve(args) => {
            let config = args.build_config()?;
            let report = sample_complexity_curve(&config)?;
            args.emit(&report)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Calibrate {
            test,
            k,
            gamma,
            epsilon,
            trials,
            seed,
            target,
            out,
        } => run_calibrate(test, k, gamma, epsilon, trials, seed, target, out),
        Command::VerifyAppendix { seed } => run_verify_appendix(seed),
    }
}

fn run_audit(kind: MechanismKind, k: usize, epsilon: f64, seed: u64) -> Result<ExitCode> {
    let budget = PrivacyBudget::new(epsilon)?;
    let result: AuditResult = match kind {
        MechanismKind::Rappor if k > 16 => audit_rappor_per_bit(&budget),
        MechanismKind::Raptor => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let coin = PublicCoin::random(k, &mut rng)?;
            audit_ldp(&channel_matrix(kind, k, &budget, Some(&coin))?, &budget)
        }
        _ => audit_ldp(&channel_matrix(kind, k, &budget, None)?, &budget),
    };
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(if result.passes {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

#[allow(clippy::too_many_arguments)]
fn run_test(
    test: TestKind,
    batch: Option<PathBuf>,
    samples: Option<PathBuf>,
    k: Option<usize>,
    epsilon: Option<f64>,
    gamma: f64,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let verdict: Verdict = if let Some(path) = batch {
        let text =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let batch: PrivatizedBatch = serde_json::from_str(&text).context("parsing batch")?;
        test_on_batch(test, &batch, gamma, &mut rng)?
    } else if let Some(path) = samples {
        let k = k.ok_or_else(|| anyhow!("--k required with --samples"))?;
        let epsilon = epsilon.ok_or_else(|| anyhow!("--epsilon required with --samples"))?;
        let budget = PrivacyBudget::new(epsilon)?;
        let constants = CalibrationConstants::default();
        match test {
            TestKind::RaptorUniformity => {
                let xs = read_symbol_file(&path, k)?;
                ldp_core::uniformity::raptor_uniformity_test(
                    &xs,
                    k,
                    &budget,
                    gamma,
                    &constants.raptor_uniformity_config(),
                    &mut rng,
                )?
            }
            TestKind::HrUniformity => {
                let xs = read_symbol_file(&path, k)?;
                let code = HadamardCode::new(k)?;
                let reports: Vec<usize> = xs
                    .iter()
                    .map(|&x| ldp_core::mechanisms::hr_encode(&code, &budget, x, &mut rng))
                    .collect();
                ldp_core::uniformity::hr_uniformity_test(&reports, k, &budget, gamma, &mut rng)?
            }
            TestKind::RapporUniformity => {
                let xs = read_symbol_file(&path, k)?;
                let messages: Vec<Vec<bool>> = xs
                    .iter()
                    .map(|&x| ldp_core::mechanisms::rappor_encode(k, &budget, x, &mut rng))
                    .collect();
                let counts = RapporCounts::from_messages(&messages, k)?;
                ldp_core::uniformity::rappor_uniformity_test(&counts, &budget, gamma)?
            }
            TestKind::HrIndependence => {
                let pairs = read_pair_file(&path, k)?;
                let code = HadamardCode::new(k)?;
                let reports: Vec<(usize, usize)> = pairs
                    .iter()
                    .map(|&(x1, x2)| {
                        (
                            ldp_core::mechanisms::hr_encode(&code, &budget, x1, &mut rng),
                            ldp_core::mechanisms::hr_encode(&code, &budget, x2, &mut rng),
                        )
                    })
                    .collect();
                ldp_core::independence::hr_independence_test(
                    &reports, k, &budget, gamma, None, &mut rng,
                )?
            }
            TestKind::RaptorIndependence => {
                let pairs = read_pair_file(&path, k)?;
                ldp_core::independence::raptor_independence_test(
                    &pairs,
                    k,
                    &budget,
                    gamma,
                    &constants.raptor_independence_config(),
                    &mut rng,
                )?
            }
        }
    } else {
        bail!("either --batch or --samples is required");
    };

    let text = serde_json::to_string_pretty(&verdict)?;
    match out {
        Some(path) => {
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => println!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

/// One-shot decision on an already privatized batch. The subset-indicator
/// batches carry a single coin, so they get the single-repetition bias (or
/// deviation) verdict at the batch's coin rather than the repeated test.
fn test_on_batch(
    test: TestKind,
    batch: &PrivatizedBatch,
    gamma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Verdict> {
    let budget = PrivacyBudget::new(batch.epsilon)?;
    let k = batch.k;
    match (test, batch.mechanism) {
        (TestKind::RapporUniformity, MechanismKind::Rappor) => {
            let messages = batch.bit_vectors()?;
            let counts = RapporCounts::from_messages(&messages, k)?;
            Ok(ldp_core::uniformity::rappor_uniformity_test(
                &counts, &budget, gamma,
            )?)
        }
        (TestKind::HrUniformity, MechanismKind::HadamardResponse) => {
            let reports = batch.symbols()?;
            Ok(ldp_core::uniformity::hr_uniformity_test(
                &reports, k, &budget, gamma, rng,
            )?)
        }
        (TestKind::RaptorUniformity, MechanismKind::Raptor) => {
            let bits = batch.symbols()?;
            let ones = bits.iter().filter(|&&b| b == 1).count() as u64;
            let gamma_prime = gamma / (5.0 * k as f64).sqrt();
            let v = bias_test(ones, bits.len() as u64, &budget, gamma_prime, 0.05)?;
            Ok(Verdict {
                test: "raptor_bias_single_coin".into(),
                decision: if v.biased {
                    Decision::NotUniform
                } else {
                    Decision::Uniform
                },
                statistic: v.estimate,
                threshold: v.threshold,
                n: bits.len(),
                k,
                epsilon: batch.epsilon,
                gamma,
                seed: None,
                insufficient_samples: v.insufficient_samples,
            })
        }
        (TestKind::RaptorIndependence, MechanismKind::BivariateRaptor) => {
            let triples: Vec<[bool; 3]> = batch
                .messages
                .iter()
                .map(|m| {
                    if m.len() == 3 {
                        Ok([m[0] != 0, m[1] != 0, m[2] != 0])
                    } else {
                        Err(anyhow!("message of length {} is not a bit triple", m.len()))
                    }
                })
                .collect::<Result<_>>()?;
            let (pj, p1, p2) = binary_independence_estimate(&triples, &budget)?;
            let constants = CalibrationConstants::default();
            let threshold = constants.raptor_ind_cthr * gamma / k as f64;
            let deviation = (pj - p1 * p2).abs();
            Ok(Verdict {
                test: "raptor2_deviation_single_coin".into(),
                decision: if deviation > threshold {
                    Decision::NotIndependent
                } else {
                    Decision::Independent
                },
                statistic: deviation,
                threshold,
                n: triples.len(),
                k,
                epsilon: batch.epsilon,
                gamma,
                seed: None,
                insufficient_samples: false,
            })
        }
        (TestKind::HrIndependence, MechanismKind::HadamardResponse) => {
            bail!("paired reports required; use --samples with a pair file")
        }
        (t, m) => bail!("test {} cannot consume a {} batch", t.label(), m),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_calibrate(
    test: TestKind,
    k: usize,
    gamma: f64,
    epsilon: f64,
    trials: usize,
    seed: u64,
    target: f64,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    let mut reports = Vec::new();
    if test == TestKind::RaptorIndependence {
        reports.push(calibrate_raptor_ind_threshold(k.min(6), gamma)?);
    }
    if test == TestKind::HrIndependence {
        reports.push(calibrate_learn_product(
            k, gamma, epsilon, trials, seed, 0.85,
        )?);
    }
    reports.push(calibrate_sample_constant(
        test, k, gamma, epsilon, trials, seed, target,
    )?);
    let text = serde_json::to_string_pretty(&reports)?;
    match out {
        Some(path) => {
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => println!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

struct ClaimSink {
    failures: usize,
}

impl ClaimSink {
    fn new() -> Self {
        Self { failures: 0 }
    }

    fn claim(&mut self, name: &str, ok: bool) {
        println!("{} {}", if ok { "PASS" } else { "FAIL" }, name);
        if !ok {
            self.failures += 1;
        }
    }
}

fn run_verify_appendix(seed: u64) -> Result<ExitCode> {
    let mut sink = ClaimSink::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Subset perturbation moments: closed-form second moment and the
    // fourth-moment bound, exhaustively for 50 random zero-sum vectors.
    let mut all_ok = true;
    for i in 0..50 {
        let k = 2 * (2 + (i % 5));
        let delta = random_zero_sum(k, 0.3, &mut rng);
        let report = subset_z_moments(&delta, &[])?;
        all_ok &= report.second_moment_ok && report.fourth_moment_ok;
    }
    sink.claim(
        "subset perturbation moments (50 random zero-sum deltas)",
        all_ok,
    );

    // Worst-case exceedance floor on perturbed instances at k = 10.
    let mut all_ok = true;
    for gamma in [0.3, 0.4, 0.5] {
        for _ in 0..20 {
            let theta: Vec<i8> = (0..5)
                .map(|_| if rand::Rng::gen::<bool>(&mut rng) { 1 } else { -1 })
                .collect();
            let p = Distribution::paninski(10, gamma, &theta)?;
            all_ok &= ldp_core::theory::half_subset_exceedance(&p, gamma)? > 1.0 / 477.0;
        }
    }
    sink.claim("half-subset exceedance > 1/477 (k=10)", all_ok);

    // Bivariate second-moment identity and bracketing at k in {4, 6, 8}.
    let mut all_ok = true;
    for k in [4usize, 6, 8] {
        let joint = JointDistribution::balanced_paninski(k, 0.45)?;
        let (p1, p2) = joint.marginals();
        let mut delta = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                delta[i * k + j] = joint.prob(i, j) - p1.prob(i) * p2.prob(j);
            }
        }
        let report = joint_z_moments(&delta, k, &[])?;
        all_ok &= report.second_moment_ok;
    }
    sink.claim(
        "bivariate perturbation moment bracketing (k in {4,6,8})",
        all_ok,
    );

    // Collision-statistic moments by exhaustive enumeration.
    let mut all_ok = true;
    for (k, n) in [(2usize, 2usize), (2, 3), (3, 2), (3, 3)] {
        for eps in [0.5, 1.0] {
            let budget = PrivacyBudget::new(eps)?;
            let pmf = if k == 2 {
                vec![0.7, 0.3]
            } else {
                vec![0.5, 0.3, 0.2]
            };
            let p = Distribution::new(pmf)?;
            let report = rappor_t_moments(k, n, &budget, &p)?;
            all_ok &= report.expectation_ok && report.covariance_ok && report.variance_bound_ok;
        }
    }
    sink.claim("collision statistic exact moments (k<=3, n<=3)", all_ok);

    // Lower-bound matrix structure.
    let mut all_ok = true;
    for k in [4usize, 8] {
        for eps in [0.25, 0.5, 1.0] {
            let budget = PrivacyBudget::new(eps)?;
            let lb = lb_matrix(MechanismKind::Rappor, k, &budget)?;
            all_ok &= lb.max_off_diagonal <= 1e-10;
            let bound = rappor_lb_diagonal_bound(&budget);
            all_ok &= lb.diagonal.iter().all(|&d| d <= bound + 1e-10);
        }
    }
    sink.claim("one-hot lower-bound matrix diagonal (k in {4,8})", all_ok);

    let mut all_ok = true;
    for k in [4usize, 16, 64] {
        for eps in [0.25, 0.5, 1.0] {
            let budget = PrivacyBudget::new(eps)?;
            let lb = lb_matrix(MechanismKind::HadamardResponse, k, &budget)?;
            all_ok &= lb.max_off_diagonal <= 1e-10;
            let expect = hr_lb_diagonal(&budget);
            all_ok &= lb.diagonal.iter().all(|&d| (d - expect).abs() <= 1e-10);
        }
    }
    sink.claim(
        "Hadamard lower-bound matrix diagonal (k in {4,16,64})",
        all_ok,
    );

    if sink.failures == 0 {
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{} claim(s) failed", sink.failures);
        Ok(ExitCode::from(1))
    }
}
