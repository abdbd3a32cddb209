//! Materialize instance specs into concrete distributions or ingested sample
//! sequences.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use rand::Rng;

use ldp_core::{Distribution, JointDistribution};

use crate::config::{InstanceSpec, TestKind, ThetaSpec};

/// A realized instance a trial draws its users' data from.
#[derive(Debug, Clone)]
pub enum Instance {
    Marginal(Distribution),
    Joint(JointDistribution),
    Samples(Vec<usize>),
    SamplePairs(Vec<(usize, usize)>),
}

impl InstanceSpec {
    /// Realize the instance spec for one trial. Random sign patterns draw from the
    /// trial stream, so every trial stresses a fresh worst-case instance.
    pub fn realize<R: Rng + ?Sized>(
        &self,
        test: TestKind,
        k: usize,
        gamma: f64,
        rng: &mut R,
    ) -> anyhow::Result<Instance> {
        Ok(match self {
            InstanceSpec::Uniform => Instance::Marginal(Distribution::uniform(k)),
            InstanceSpec::Paninski { theta } => {
                let signs = match theta {
                    ThetaSpec::Random => (0..k / 2)
                        .map(|_| if rng.gen::<bool>() { 1i8 } else { -1 })
                        .collect(),
                    ThetaSpec::Fixed(signs) => signs.clone(),
                };
                Instance::Marginal(Distribution::paninski(k, gamma, &signs)?)
            }
            InstanceSpec::UniformJoint => Instance::Joint(JointDistribution::uniform(k)),
            InstanceSpec::BalancedPaninskiJoint => {
                Instance::Joint(JointDistribution::balanced_paninski(k, gamma)?)
            }
            InstanceSpec::SampleFile { path } => {
                if test.is_independence() {
                    Instance::SamplePairs(read_pair_file(path, k)?)
                } else {
                    Instance::Samples(read_symbol_file(path, k)?)
                }
            }
        })
    }
}

/// Newline-delimited decimal symbols, 0-indexed.
pub fn read_symbol_file(path: impl AsRef<Path>, k: usize) -> anyhow::Result<Vec<usize>> {
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.as_ref().display()))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let x: usize = line
            .parse()
            .with_context(|| format!("line {}: not an integer", lineno + 1))?;
        if x >= k {
            bail!("line {}: symbol {} out of range for k = {}", lineno + 1, x, k);
        }
        out.push(x);
    }
    Ok(out)
}

/// Whitespace-separated symbol pairs, one per line.
pub fn read_pair_file(path: impl AsRef<Path>, k: usize) -> anyhow::Result<Vec<(usize, usize)>> {
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.as_ref().display()))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(a), Some(b)) = (parts.next(), parts.next()) else {
            bail!("line {}: expected two symbols", lineno + 1);
        };
        let x1: usize = a.parse().with_context(|| format!("line {}", lineno + 1))?;
        let x2: usize = b.parse().with_context(|| format!("line {}", lineno + 1))?;
        if x1 >= k || x2 >= k {
            bail!("line {}: symbol out of range for k = {}", lineno + 1, k);
        }
        out.push((x1, x2));
    }
    Ok(out)
}

/// Write symbols in the interchange format.
pub fn write_symbol_file(path: impl AsRef<Path>, samples: &[usize]) -> anyhow::Result<()> {
    let mut text = String::with_capacity(samples.len() * 3);
    for &s in samples {
        text.push_str(&s.to_string());
        text.push('\n');
    }
    fs::write(&path, text).with_context(|| format!("writing {}", path.as_ref().display()))
}
