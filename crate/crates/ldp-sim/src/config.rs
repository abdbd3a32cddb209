//! Experiment configuration: which test, which instances, sample-size grid,
//! trial counts, and the calibrated constants behind every default sample
//! size. All constants are plain config values so shipped defaults are
//! visible, overridable, and regenerable via the `calibrate` subcommand.

use serde::{Deserialize, Serialize};

use ldp_core::independence::RaptorIndependenceConfig;
use ldp_core::uniformity::RaptorUniformityConfig;
use ldp_core::PrivacyBudget;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    RapporUniformity,
    HrUniformity,
    RaptorUniformity,
    HrIndependence,
    RaptorIndependence,
}

impl TestKind {
    pub fn is_independence(self) -> bool {
        matches!(self, TestKind::HrIndependence | TestKind::RaptorIndependence)
    }

    pub fn label(self) -> &'static str {
        match self {
            TestKind::RapporUniformity => "rappor_uniformity",
            TestKind::HrUniformity => "hr_uniformity",
            TestKind::RaptorUniformity => "raptor_uniformity",
            TestKind::HrIndependence => "hr_independence",
            TestKind::RaptorIndependence => "raptor_independence",
        }
    }
}

/// How the alternative-instance sign pattern is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaSpec {
    /// Fresh random signs every trial (stresses the worst case).
    #[default]
    Random,
    /// Fixed signs, one per domain pair.
    Fixed(Vec<i8>),
}

/// What data a trial tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InstanceSpec {
    Uniform,
    Paninski {
        #[serde(default)]
        theta: ThetaSpec,
    },
    UniformJoint,
    BalancedPaninskiJoint,
    /// Raw samples from a file: newline-delimited decimal symbols, or
    /// whitespace-separated pairs for independence tests.
    SampleFile { path: String },
}

impl InstanceSpec {
    pub fn label(&self) -> String {
        match self {
            InstanceSpec::Uniform => "uniform".into(),
            InstanceSpec::Paninski { .. } => "paninski".into(),
            InstanceSpec::UniformJoint => "uniform_joint".into(),
            InstanceSpec::BalancedPaninskiJoint => "balanced_paninski_joint".into(),
            InstanceSpec::SampleFile { path } => format!("file:{path}"),
        }
    }

    /// Is this the null hypothesis for the given test?
    pub fn is_null(&self, test: TestKind) -> bool {
        match self {
            InstanceSpec::Uniform => !test.is_independence(),
            InstanceSpec::UniformJoint => test.is_independence(),
            _ => false,
        }
    }
}

/// Calibrated leading constants for each test's default sample size, plus the
/// repetition-structure knobs. Values regenerable with `ldp-sim calibrate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConstants {
    /// One-hot uniformity: n = rappor_c * k^{3/2} / (alpha_R^2 gamma^2).
    pub rappor_c: f64,
    /// Hadamard uniformity: n = hr_c * k^{3/2} / (gamma^2 eps^2).
    pub hr_c: f64,
    /// Subset-indicator uniformity: n = raptor_c * k / (gamma^2 eps^2).
    pub raptor_c: f64,
    /// Calibrated exceedance floor for the subset-indicator test.
    pub raptor_exceedance_c: f64,
    /// Repetitions for the subset-indicator uniformity test.
    pub raptor_reps: usize,
    /// Product learning: n1 = learn_c * k^3 / (alpha_H^4 gamma^2).
    pub learn_c: f64,
    /// Hadamard independence: n = hr_ind_c * k^3 / (gamma^2 eps^4).
    pub hr_ind_c: f64,
    /// Fraction of users whose pairs feed learning (n1 = n * n1_fraction).
    pub n1_fraction: f64,
    /// Bivariate subset-indicator: n = raptor_ind_c * k^2 / (gamma^2 eps^2).
    pub raptor_ind_c: f64,
    /// Per-repetition deviation threshold multiplier (of gamma / k).
    pub raptor_ind_cthr: f64,
    /// Dependent-fraction vote threshold.
    pub raptor_ind_tau: f64,
    /// Repetitions for the bivariate subset-indicator test.
    pub raptor_ind_reps: usize,
}

impl Default for CalibrationConstants {
    fn default() -> Self {
        Self {
            rappor_c: 23.0,
            hr_c: 18.0,
            raptor_c: 9000.0,
            raptor_exceedance_c: 0.05,
            raptor_reps: 48,
            learn_c: 6.75,
            hr_ind_c: 455.0,
            n1_fraction: 0.25,
            raptor_ind_c: 40000.0,
            raptor_ind_cthr: 0.33,
            raptor_ind_tau: 0.055,
            raptor_ind_reps: 48,
        }
    }
}

impl CalibrationConstants {
    pub fn raptor_uniformity_config(&self) -> RaptorUniformityConfig {
        RaptorUniformityConfig {
            c: self.raptor_exceedance_c,
            repetitions: self.raptor_reps,
            majority_subtest: false,
            parallel_bits: false,
        }
    }

    pub fn raptor_independence_config(&self) -> RaptorIndependenceConfig {
        RaptorIndependenceConfig {
            c_thr: self.raptor_ind_cthr,
            tau_ind: self.raptor_ind_tau,
            repetitions: self.raptor_ind_reps,
        }
    }

    /// The calibrated default sample size for a test at the given parameters,
    /// rounded up to a multiple of the repetition count where one applies.
    pub fn default_n(&self, test: TestKind, k: usize, gamma: f64, epsilon: f64) -> usize {
        let budget = PrivacyBudget::new(epsilon).expect("epsilon validated upstream");
        let kf = k as f64;
        let g2 = gamma * gamma;
        let e2 = epsilon * epsilon;
        let raw = match test {
            TestKind::RapporUniformity => {
                let a = budget.alpha_rappor();
                self.rappor_c * kf.powf(1.5) / (a * a * g2)
            }
            TestKind::HrUniformity => self.hr_c * kf.powf(1.5) / (g2 * e2),
            TestKind::RaptorUniformity => self.raptor_c * kf / (g2 * e2),
            TestKind::HrIndependence => self.hr_ind_c * kf.powi(3) / (g2 * e2 * e2),
            TestKind::RaptorIndependence => self.raptor_ind_c * kf * kf / (g2 * e2),
        };
        let n = raw.ceil() as usize;
        match test {
            TestKind::RaptorUniformity => round_to_multiple(n, self.raptor_reps),
            TestKind::RaptorIndependence => round_to_multiple(n, self.raptor_ind_reps),
            _ => n,
        }
    }
}

pub fn round_to_multiple(n: usize, m: usize) -> usize {
    if m == 0 {
        return n;
    }
    n.div_ceil(m) * m
}

/// Full experiment description; the JSON file format of the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub test: TestKind,
    pub k: usize,
    pub epsilon: f64,
    pub gamma: f64,
    /// Null instance; defaults to the test's natural null.
    #[serde(default)]
    pub null_instance: Option<InstanceSpec>,
    /// Alternative instances; one type-II column per entry.
    pub instances: Vec<InstanceSpec>,
    /// Sample sizes to evaluate; strictly increasing. Empty means "use the
    /// calibrated default only".
    #[serde(default)]
    pub n_grid: Vec<usize>,
    pub trials: usize,
    #[serde(default = "default_target_error")]
    pub target_error: f64,
    pub seed: u64,
    #[serde(default)]
    pub constants: CalibrationConstants,
}

fn default_target_error() -> f64 {
    1.0 / 3.0
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err("k must be positive".into());
        }
        if self.epsilon <= 0.0 || self.epsilon.is_nan() {
            return Err("epsilon must be positive".into());
        }
        if !(0.0 < self.gamma && self.gamma <= 0.5) {
            return Err("gamma must lie in (0, 1/2]".into());
        }
        if self.trials == 0 {
            return Err("trials must be at least 1".into());
        }
        if !(0.0 < self.target_error && self.target_error < 0.5) {
            return Err("target error must lie in (0, 1/2)".into());
        }
        if !self.n_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err("n grid must be strictly increasing".into());
        }
        if self.instances.is_empty() {
            return Err("at least one alternative instance required".into());
        }
        for inst in &self.instances {
            if self.test.is_independence() {
                if matches!(inst, InstanceSpec::Uniform | InstanceSpec::Paninski { .. }) {
                    return Err(format!(
                        "instance {} is univariate but {} tests joints",
                        inst.label(),
                        self.test.label()
                    ));
                }
            } else if matches!(
                inst,
                InstanceSpec::UniformJoint | InstanceSpec::BalancedPaninskiJoint
            ) {
                return Err(format!(
                    "instance {} is a joint but {} tests marginals",
                    inst.label(),
                    self.test.label()
                ));
            }
        }
        Ok(())
    }

    pub fn null_instance(&self) -> InstanceSpec {
        self.null_instance.clone().unwrap_or({
            if self.test.is_independence() {
                InstanceSpec::UniformJoint
            } else {
                InstanceSpec::Uniform
            }
        })
    }

    pub fn effective_grid(&self) -> Vec<usize> {
        if self.n_grid.is_empty() {
            vec![self
                .constants
                .default_n(self.test, self.k, self.gamma, self.epsilon)]
        } else {
            self.n_grid.clone()
        }
    }
}
