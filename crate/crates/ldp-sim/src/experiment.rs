//! Experiment orchestration: Monte-Carlo error rates over a sample-size grid
//! and minimal-sample-size search. Trials run in a work-stealing pool; every
//! outcome is keyed by its indices, so parallel and serial runs produce
//! identical reports.

use std::time::Instant;

use anyhow::Result;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, InstanceSpec};
use crate::report::{CurvePoint, ExperimentReport, RateInterval};
use crate::trial::{null_decision, run_trial};

/// Run `config.trials` trials of one (n, instance) cell and count errors.
/// `expect_null` says whether the instance is the null hypothesis.
fn run_cell(
    config: &ExperimentConfig,
    n: usize,
    grid_index: usize,
    spec: &InstanceSpec,
    instance_index: usize,
    expect_null: bool,
) -> Result<(usize, Vec<u64>)> {
    let want = null_decision(config.test);
    let outcomes: Vec<_> = (0..config.trials)
        .into_par_iter()
        .map(|trial| run_trial(config, n, grid_index, spec, instance_index, trial))
        .collect::<Result<_>>()?;
    let mut errors = 0;
    let mut seeds = Vec::with_capacity(outcomes.len());
    for o in &outcomes {
        let accepted_null = o.verdict.decision == want;
        if accepted_null != expect_null {
            errors += 1;
        }
        seeds.push(o.seed);
    }
    Ok((errors, seeds))
}

/// Error rates at one grid point, against every alternative instance.
fn run_point(config: &ExperimentConfig, n: usize, grid_index: usize) -> Result<Vec<CurvePoint>> {
    let null_spec = config.null_instance();
    // Instance index 0 is the null; alternatives follow in config order.
    let (null_errors, null_seeds) = run_cell(config, n, grid_index, &null_spec, 0, true)?;
    let type1 = RateInterval::from_counts(null_errors, config.trials);
    let mut points = Vec::with_capacity(config.instances.len());
    for (i, spec) in config.instances.iter().enumerate() {
        let (alt_errors, alt_seeds) = run_cell(config, n, grid_index, spec, i + 1, false)?;
        points.push(CurvePoint {
            n,
            instance: spec.label(),
            trials: config.trials,
            type1,
            type2: RateInterval::from_counts(alt_errors, config.trials),
            null_seeds: null_seeds.clone(),
            alt_seeds,
        });
    }
    Ok(points)
}

/// Evaluate every grid point. Minimal n is the first grid point meeting the
/// target error on both sides.
pub fn error_rates(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let started = Instant::now();
    let grid = config.effective_grid();
    let mut points = Vec::new();
    for (gi, &n) in grid.iter().enumerate() {
        points.extend(run_point(config, n, gi)?);
    }
    let minimal_n = minimal_per_instance(config, &points);
    let saturated = minimal_n.iter().any(Option::is_none);
    Ok(ExperimentReport {
        config: config.clone(),
        points,
        minimal_n,
        saturated,
        wall_clock_ms: started.elapsed().as_millis() as u64,
    })
}

/// Binary-search the grid for the minimal n meeting the target error, probing
/// only O(log |grid|) points. Detection is treated as monotone in n; the
/// probed points are all included in the report.
pub fn sample_complexity_curve(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let started = Instant::now();
    let grid = config.effective_grid();
    let mut points: Vec<CurvePoint> = Vec::new();
    let mut probed: Vec<(usize, bool)> = Vec::new(); // (grid index, meets target)

    let mut lo = 0usize;
    let mut hi = grid.len();
    while lo < hi {
        let mid = (lo + hi) / 2;
        let cell_points = run_point(config, grid[mid], mid)?;
        let meets = cell_points
            .iter()
            .all(|p| p.type1.rate <= config.target_error && p.type2.rate <= config.target_error);
        points.extend(cell_points);
        probed.push((mid, meets));
        if meets {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    points.sort_by_key(|p| p.n);
    let minimal = if lo < grid.len() { Some(grid[lo]) } else { None };
    let minimal_n = vec![minimal; config.instances.len()];
    Ok(ExperimentReport {
        config: config.clone(),
        points,
        minimal_n: minimal_n.clone(),
        saturated: minimal.is_none(),
        wall_clock_ms: started.elapsed().as_millis() as u64,
    })
}

fn minimal_per_instance(
    config: &ExperimentConfig,
    points: &[CurvePoint],
) -> Vec<Option<usize>> {
    config
        .instances
        .iter()
        .map(|spec| {
            let label = spec.label();
            points
                .iter()
                .filter(|p| p.instance == label)
                .filter(|p| {
                    p.type1.rate <= config.target_error && p.type2.rate <= config.target_error
                })
                .map(|p| p.n)
                .min()
        })
        .collect()
}

/// Least-squares slope of log2(minimal n) against log2(k).
pub fn log_log_slope(ks: &[usize], ns: &[usize]) -> f64 {
    assert_eq!(ks.len(), ns.len());
    let m = ks.len() as f64;
    let xs: Vec<f64> = ks.iter().map(|&k| (k as f64).log2()).collect();
    let ys: Vec<f64> = ns.iter().map(|&n| (n as f64).log2()).collect();
    let mean_x: f64 = xs.iter().sum::<f64>() / m;
    let mean_y: f64 = ys.iter().sum::<f64>() / m;
    let cov: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let var: f64 = xs.iter().map(|x| (x - mean_x) * (x - mean_x)).sum();
    cov / var
}
