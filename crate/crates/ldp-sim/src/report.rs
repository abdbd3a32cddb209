//! Experiment reports: empirical error rates with Wilson intervals, curve
//! points, and the CSV/JSON emitters.

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

/// Two-sided 95% Wilson score interval.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64, f64) {
    let z = 1.959963984540054_f64;
    if trials == 0 {
        return (f64::NAN, 0.0, 1.0);
    }
    let n = trials as f64;
    let p_hat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p_hat + z2 / (2.0 * n)) / denom;
    let half = z * (p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    (p_hat, (center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateInterval {
    pub rate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl RateInterval {
    pub fn from_counts(errors: usize, trials: usize) -> Self {
        let (rate, lo, hi) = wilson_interval(errors, trials);
        Self { rate, lo, hi }
    }
}

/// Error rates at one grid point against one alternative instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub instance: String,
    pub trials: usize,
    pub type1: RateInterval,
    pub type2: RateInterval,
    pub null_seeds: Vec<u64>,
    pub alt_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub points: Vec<CurvePoint>,
    /// Smallest grid n with both error rates at most the target, per
    /// alternative instance (parallel to `config.instances`).
    pub minimal_n: Vec<Option<usize>>,
    /// Set when some instance never met the target on the grid.
    pub saturated: bool,
    pub wall_clock_ms: u64,
}

impl ExperimentReport {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    /// Fixed-column CSV, one row per (grid point, alternative instance):
    /// test,k,epsilon,gamma,n,trials,type1,type1_lo,type1_hi,type2,type2_lo,type2_hi,seed
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "test,k,epsilon,gamma,n,trials,type1,type1_lo,type1_hi,type2,type2_lo,type2_hi,seed\n",
        );
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                self.config.test.label(),
                self.config.k,
                self.config.epsilon,
                self.config.gamma,
                p.n,
                p.trials,
                p.type1.rate,
                p.type1.lo,
                p.type1.hi,
                p.type2.rate,
                p.type2.lo,
                p.type2.hi,
                self.config.seed,
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_contains_point_estimate() {
        // fp slack: at p = 1 the exact upper endpoint is 1.0 but rounds just
        // below it.
        for &(s, n) in &[(0usize, 10usize), (5, 10), (10, 10), (166, 500)] {
            let (p, lo, hi) = wilson_interval(s, n);
            assert!(lo <= p + 1e-12 && p <= hi + 1e-12, "{s}/{n}");
            assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        }
    }

    #[test]
    fn doubling_trials_roughly_halves_width() {
        // Width scales as 1/sqrt(n): quadrupling trials halves it within 10%.
        let (_, lo1, hi1) = wilson_interval(50, 200);
        let (_, lo2, hi2) = wilson_interval(200, 800);
        let ratio = (hi2 - lo2) / (hi1 - lo1);
        assert!((ratio - 0.5).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn degenerate_single_trial() {
        let (p, lo, hi) = wilson_interval(1, 1);
        assert_eq!(p, 1.0);
        assert!(hi - lo > 0.5, "single-trial interval must be wide");
    }
}
