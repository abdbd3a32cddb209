//! Exact discrete distributions over `[k]` and `[k]x[k]`: distances, samplers,
//! and the hard-instance families used by the testing algorithms.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on total mass for pmf validity.
pub const MASS_TOL: f64 = 1e-12;

/// A probability mass function over `{0, .., k-1}`.
///
/// Entries are validated at construction: nonnegative, summing to 1 within
/// [`MASS_TOL`]. Immutable afterwards, safe to share across threads.
/// Serializes as a plain JSON array; deserialization re-validates.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    pmf: Vec<f64>,
}

impl Serialize for Distribution {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.pmf.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Distribution {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let pmf = Vec::<f64>::deserialize(deserializer)?;
        Distribution::new(pmf).map_err(serde::de::Error::custom)
    }
}

impl Distribution {
    pub fn new(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::EmptyAlphabet);
        }
        for (i, &v) in pmf.iter().enumerate() {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::NegativeMass { index: i, value: v });
            }
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::MassNotNormalized(total));
        }
        Ok(Self { pmf })
    }

    /// The uniform distribution on `[k]`.
    pub fn uniform(k: usize) -> Self {
        assert!(k >= 1, "alphabet size must be positive");
        Self {
            pmf: vec![1.0 / k as f64; k],
        }
    }

    /// The point mass at `x`.
    pub fn point_mass(k: usize, x: usize) -> Self {
        assert!(x < k);
        let mut pmf = vec![0.0; k];
        pmf[x] = 1.0;
        Self { pmf }
    }

    /// Paninski perturbation of the uniform distribution: the domain is split
    /// into k/2 consecutive pairs and the mass of pair i is tilted by
    /// `2*theta[i]*gamma/k`. Total variation distance to uniform is exactly
    /// `gamma` for every sign pattern.
    pub fn paninski(k: usize, gamma: f64, theta: &[i8]) -> Result<Self> {
        if !k.is_multiple_of(2) || k == 0 {
            return Err(Error::OddAlphabet(k));
        }
        if !(0.0..=0.5).contains(&gamma) {
            return Err(Error::BadParameter {
                name: "gamma",
                value: gamma,
            });
        }
        if theta.len() != k / 2 || theta.iter().any(|&t| t != 1 && t != -1) {
            return Err(Error::BadSignVector);
        }
        let kf = k as f64;
        let mut pmf = Vec::with_capacity(k);
        for &t in theta {
            let tilt = 2.0 * f64::from(t) * gamma / kf;
            pmf.push(1.0 / kf + tilt);
            pmf.push(1.0 / kf - tilt);
        }
        Ok(Self { pmf })
    }

    pub fn k(&self) -> usize {
        self.pmf.len()
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn prob(&self, x: usize) -> f64 {
        self.pmf[x]
    }

    /// Sum of squared entries.
    pub fn l2_norm_sq(&self) -> f64 {
        self.pmf.iter().map(|p| p * p).sum()
    }

    /// Build an alias-table sampler (O(k) build, O(1) per draw).
    pub fn sampler(&self) -> AliasSampler {
        AliasSampler::new(&self.pmf)
    }
}

/// A probability mass function over `[k]x[k]`, stored row-major.
///
/// Serializes as a flat row-major JSON array; the side length is recovered as
/// the integer square root on the way back in.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    pmf: Vec<f64>,
    k: usize,
}

impl Serialize for JointDistribution {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.pmf.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for JointDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let pmf = Vec::<f64>::deserialize(deserializer)?;
        let k = (pmf.len() as f64).sqrt().round() as usize;
        if k * k != pmf.len() {
            return Err(serde::de::Error::custom(format!(
                "joint pmf length {} is not a perfect square",
                pmf.len()
            )));
        }
        JointDistribution::new(pmf, k).map_err(serde::de::Error::custom)
    }
}

impl JointDistribution {
    pub fn new(pmf: Vec<f64>, k: usize) -> Result<Self> {
        if k == 0 || pmf.len() != k * k {
            return Err(Error::SizeMismatch(pmf.len(), k * k));
        }
        for (i, &v) in pmf.iter().enumerate() {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::NegativeMass { index: i, value: v });
            }
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::MassNotNormalized(total));
        }
        Ok(Self { pmf, k })
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k >= 1);
        Self {
            pmf: vec![1.0 / (k * k) as f64; k * k],
            k,
        }
    }

    /// Balanced Paninski-style perturbation of the uniform joint distribution.
    ///
    /// Columns are paired `(2j, 2j+1)`; within each pair the sign is +1 for
    /// the first k/2 rows and -1 for the rest, so both marginals stay exactly
    /// uniform while the distance to the product of marginals is `gamma`.
    pub fn balanced_paninski(k: usize, gamma: f64) -> Result<Self> {
        if !k.is_multiple_of(2) || k == 0 {
            return Err(Error::OddAlphabet(k));
        }
        if !(0.0..=0.5).contains(&gamma) {
            return Err(Error::BadParameter {
                name: "gamma",
                value: gamma,
            });
        }
        let base = 1.0 / (k * k) as f64;
        let tilt = 2.0 * gamma / (k * k) as f64;
        let mut pmf = vec![0.0; k * k];
        for i in 0..k {
            let sign = if i < k / 2 { 1.0 } else { -1.0 };
            for j in 0..k / 2 {
                pmf[i * k + 2 * j] = base + sign * tilt;
                pmf[i * k + 2 * j + 1] = base - sign * tilt;
            }
        }
        Ok(Self { pmf, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn prob(&self, x1: usize, x2: usize) -> f64 {
        self.pmf[x1 * self.k + x2]
    }

    /// Row and column marginals.
    pub fn marginals(&self) -> (Distribution, Distribution) {
        let k = self.k;
        let mut p1 = vec![0.0; k];
        let mut p2 = vec![0.0; k];
        for i in 0..k {
            for j in 0..k {
                let v = self.pmf[i * k + j];
                p1[i] += v;
                p2[j] += v;
            }
        }
        (
            Distribution::new(normalize_guard(p1)).expect("marginal is a valid pmf"),
            Distribution::new(normalize_guard(p2)).expect("marginal is a valid pmf"),
        )
    }

    /// Outer product of two marginal distributions.
    pub fn product(p1: &Distribution, p2: &Distribution) -> Result<Self> {
        if p1.k() != p2.k() {
            return Err(Error::SizeMismatch(p1.k(), p2.k()));
        }
        let k = p1.k();
        let mut pmf = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                pmf.push(p1.prob(i) * p2.prob(j));
            }
        }
        Ok(Self {
            pmf: normalize_guard(pmf),
            k,
        })
    }

    /// Total variation distance to the product of this distribution's own
    /// marginals.
    pub fn tv_to_own_product(&self) -> f64 {
        let (p1, p2) = self.marginals();
        let mut acc = 0.0;
        for i in 0..self.k {
            for j in 0..self.k {
                acc += (self.prob(i, j) - p1.prob(i) * p2.prob(j)).abs();
            }
        }
        acc / 2.0
    }

    pub fn sampler(&self) -> AliasSampler {
        AliasSampler::new(&self.pmf)
    }

    /// Decode a flat sample index into an `(x1, x2)` pair.
    pub fn unflatten(&self, idx: usize) -> (usize, usize) {
        (idx / self.k, idx % self.k)
    }
}

// Rescale so the total is exactly the fp-sum of inputs mapped to 1; keeps
// constructors from rejecting pmfs assembled out of other valid pmfs.
fn normalize_guard(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > MASS_TOL / 2.0 {
        for x in &mut v {
            *x /= total;
        }
    }
    v
}

/// Total variation distance, half the l1 distance.
pub fn tv_distance(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.k() != q.k() {
        return Err(Error::SizeMismatch(p.k(), q.k()));
    }
    let l1: f64 = p
        .pmf()
        .iter()
        .zip(q.pmf())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(l1 / 2.0)
}

/// Squared l2 distance between two pmfs.
pub fn l2_distance_sq(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.k() != q.k() {
        return Err(Error::SizeMismatch(p.k(), q.k()));
    }
    Ok(p.pmf()
        .iter()
        .zip(q.pmf())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Chi-square divergence sum((p-q)^2/q); requires q strictly positive.
pub fn chi_square_div(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.k() != q.k() {
        return Err(Error::SizeMismatch(p.k(), q.k()));
    }
    if let Some(i) = q.pmf().iter().position(|&v| v == 0.0) {
        return Err(Error::ZeroReference(i));
    }
    Ok(p.pmf()
        .iter()
        .zip(q.pmf())
        .map(|(a, b)| (a - b) * (a - b) / b)
        .sum())
}

/// TV distance between two joint distributions.
pub fn tv_distance_joint(p: &JointDistribution, q: &JointDistribution) -> Result<f64> {
    if p.k() != q.k() {
        return Err(Error::SizeMismatch(p.k(), q.k()));
    }
    let l1: f64 = p
        .pmf()
        .iter()
        .zip(q.pmf())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(l1 / 2.0)
}

/// Squared l2 distance between two joint pmfs.
pub fn l2_distance_sq_joint(p: &JointDistribution, q: &JointDistribution) -> Result<f64> {
    if p.k() != q.k() {
        return Err(Error::SizeMismatch(p.k(), q.k()));
    }
    Ok(p.pmf()
        .iter()
        .zip(q.pmf())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Draw `n` i.i.d. symbols from `p`.
pub fn sample<R: Rng + ?Sized>(p: &Distribution, n: usize, rng: &mut R) -> Vec<usize> {
    let sampler = p.sampler();
    (0..n).map(|_| sampler.draw(rng)).collect()
}

/// Walker alias table for O(1) draws from a fixed pmf.
#[derive(Debug, Clone)]
pub struct AliasSampler {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasSampler {
    pub fn new(pmf: &[f64]) -> Self {
        let k = pmf.len();
        let kf = k as f64;
        let mut prob = vec![0.0; k];
        let mut alias = vec![0usize; k];
        let mut small = Vec::with_capacity(k);
        let mut large = Vec::with_capacity(k);
        let mut scaled: Vec<f64> = pmf.iter().map(|p| p * kf).collect();
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(&l), Some(s)) = (large.last(), small.pop()) {
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        for i in large.into_iter().chain(small) {
            prob[i] = 1.0;
            alias[i] = i;
        }
        Self { prob, alias }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.gen_range(0..self.prob.len());
        if rng.gen::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_entries() {
        let u = Distribution::uniform(4);
        assert_eq!(u.pmf(), &[0.25, 0.25, 0.25, 0.25]);
        let degenerate = Distribution::uniform(1);
        assert_eq!(degenerate.pmf(), &[1.0]);
        let u6 = Distribution::uniform(6);
        assert_eq!(tv_distance(&u6, &u6).unwrap(), 0.0);
    }

    #[test]
    fn paninski_matches_direct_substitution() {
        let p = Distribution::paninski(4, 0.25, &[1, -1]).unwrap();
        assert_eq!(p.pmf(), &[0.375, 0.125, 0.125, 0.375]);
    }

    #[test]
    fn paninski_zero_gamma_is_uniform() {
        let p = Distribution::paninski(6, 0.0, &[1, 1, -1]).unwrap();
        assert_eq!(p.pmf(), Distribution::uniform(6).pmf());
    }

    #[test]
    fn paninski_rejects_odd_k() {
        assert!(matches!(
            Distribution::paninski(5, 0.1, &[1, 1]),
            Err(Error::OddAlphabet(5))
        ));
    }

    #[test]
    fn paninski_tv_is_gamma_for_all_sign_patterns() {
        let u = Distribution::uniform(10);
        for bits in 0u32..32 {
            let theta: Vec<i8> = (0..5)
                .map(|i| if bits >> i & 1 == 1 { 1 } else { -1 })
                .collect();
            let p = Distribution::paninski(10, 0.3, &theta).unwrap();
            assert!((tv_distance(&p, &u).unwrap() - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn distances_on_known_inputs() {
        let a = Distribution::new(vec![1.0, 0.0]).unwrap();
        let b = Distribution::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(tv_distance(&a, &b).unwrap(), 1.0);

        let p = Distribution::new(vec![0.5, 0.25, 0.25]).unwrap();
        let u = Distribution::uniform(3);
        assert!((l2_distance_sq(&p, &u).unwrap() - 1.0 / 24.0).abs() < 1e-15);
        assert_eq!(chi_square_div(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn chi_square_rejects_zero_reference() {
        let p = Distribution::uniform(2);
        let q = Distribution::new(vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            chi_square_div(&p, &q),
            Err(Error::ZeroReference(1))
        ));
    }

    #[test]
    fn sampling_point_mass_and_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = Distribution::point_mass(5, 0);
        let xs = sample(&p, 100, &mut rng);
        assert!(xs.iter().all(|&x| x == 0));
        assert!(sample(&p, 0, &mut rng).is_empty());
    }

    #[test]
    fn sampling_uniform_frequencies() {
        // Binomial 6-sigma bound: 0.25 +/- 0.005 at n = 1e6.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let u = Distribution::uniform(4);
        let n = 1_000_000;
        let xs = sample(&u, n, &mut rng);
        let mut counts = [0u64; 4];
        for x in xs {
            counts[x] += 1;
        }
        for c in counts {
            let freq = c as f64 / n as f64;
            assert!((freq - 0.25).abs() < 0.005, "freq {freq}");
        }
    }

    #[test]
    fn balanced_paninski_marginals_uniform_and_gamma_far() {
        let j = JointDistribution::balanced_paninski(4, 0.2).unwrap();
        let (p1, p2) = j.marginals();
        for x in 0..4 {
            assert!((p1.prob(x) - 0.25).abs() < 1e-15);
            assert!((p2.prob(x) - 0.25).abs() < 1e-15);
        }
        assert!((j.tv_to_own_product() - 0.2).abs() < 1e-12);

        let zero = JointDistribution::balanced_paninski(4, 0.0).unwrap();
        assert_eq!(zero.pmf(), JointDistribution::uniform(4).pmf());
    }

    #[test]
    fn product_of_point_masses() {
        let p1 = Distribution::point_mass(3, 1);
        let p2 = Distribution::point_mass(3, 2);
        let j = JointDistribution::product(&p1, &p2).unwrap();
        assert_eq!(j.prob(1, 2), 1.0);
        assert_eq!(j.tv_to_own_product(), 0.0);
    }

    #[test]
    fn marginals_of_product_recover_factors() {
        let p1 = Distribution::new(vec![0.5, 0.3, 0.2]).unwrap();
        let p2 = Distribution::new(vec![0.1, 0.6, 0.3]).unwrap();
        let j = JointDistribution::product(&p1, &p2).unwrap();
        let (m1, m2) = j.marginals();
        for x in 0..3 {
            assert!((m1.prob(x) - p1.prob(x)).abs() < 1e-12);
            assert!((m2.prob(x) - p2.prob(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn json_round_trips() {
        let p = Distribution::new(vec![0.5, 0.25, 0.25]).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, "[0.5,0.25,0.25]");
        let back: Distribution = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);

        let j = JointDistribution::balanced_paninski(4, 0.2).unwrap();
        let json = serde_json::to_string(&j).unwrap();
        let back: JointDistribution = serde_json::from_str(&json).unwrap();
        assert_eq!(j, back);
        assert_eq!(back.k(), 4);

        // Non-square lengths and invalid masses are rejected.
        assert!(serde_json::from_str::<JointDistribution>("[0.5,0.5,0.0]").is_err());
        assert!(serde_json::from_str::<Distribution>("[0.5,0.4]").is_err());
    }

    #[test]
    fn alias_sampler_matches_pmf() {
        let p = Distribution::new(vec![0.7, 0.1, 0.05, 0.15]).unwrap();
        let sampler = p.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let mut counts = [0u64; 4];
        for _ in 0..n {
            counts[sampler.draw(&mut rng)] += 1;
        }
        for (x, c) in counts.iter().enumerate() {
            let freq = *c as f64 / n as f64;
            assert!((freq - p.prob(x)).abs() < 0.01, "x={x} freq={freq}");
        }
    }

    proptest! {
        #[test]
        fn paninski_tv_exact(seed in 0u64..1000, half_k in 1usize..12, gamma in 0.01f64..0.5) {
            let k = 2 * half_k;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let theta: Vec<i8> = (0..half_k)
                .map(|_| if rand::Rng::gen::<bool>(&mut rng) { 1 } else { -1 })
                .collect();
            let p = Distribution::paninski(k, gamma, &theta).unwrap();
            let u = Distribution::uniform(k);
            prop_assert!((tv_distance(&p, &u).unwrap() - gamma).abs() < 1e-12);
            let total: f64 = p.pmf().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn l2_to_uniform_identity(entries in proptest::collection::vec(0.01f64..1.0, 2..40)) {
            // ||p - u||^2 = ||p||^2 - 1/k
            let total: f64 = entries.iter().sum();
            let pmf: Vec<f64> = entries.iter().map(|e| e / total).collect();
            let k = pmf.len();
            let p = Distribution::new(pmf).unwrap();
            let u = Distribution::uniform(k);
            let lhs = l2_distance_sq(&p, &u).unwrap();
            let rhs = p.l2_norm_sq() - 1.0 / k as f64;
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn balanced_paninski_tv_to_product(half_k in 1usize..6, gamma in 0.0f64..0.5) {
            let j = JointDistribution::balanced_paninski(2 * half_k, gamma).unwrap();
            prop_assert!((j.tv_to_own_product() - gamma).abs() < 1e-12);
        }
    }
}
