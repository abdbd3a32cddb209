//! Sylvester Hadamard matrices via parity arithmetic, the response code sets
//! `C_x`, the reference output distribution `q*`, and the analytic output
//! transforms of the Hadamard response channel.
//!
//! Everything here works over a power-of-two output alphabet `K`. Membership
//! of an output symbol `z` in the code set of input `x` is the parity test
//! `popcount(z & phi(x)) == 0 (mod 2)`, with the injection `phi(x) = x + 1`
//! keeping the all-ones row 0 out of the code.

use crate::dist::{Distribution, JointDistribution};
use crate::error::{Error, Result};
use crate::mechanisms::PrivacyBudget;

/// Entry of the order-`kk` Sylvester Hadamard matrix: `(-1)^{popcount(r & c)}`.
pub fn hadamard_entry(kk: usize, r: usize, c: usize) -> Result<i32> {
    if !kk.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(kk));
    }
    if r >= kk {
        return Err(Error::IndexOutOfRange { index: r, size: kk });
    }
    if c >= kk {
        return Err(Error::IndexOutOfRange { index: c, size: kk });
    }
    Ok(if (r & c).count_ones().is_multiple_of(2) { 1 } else { -1 })
}

/// In-place unnormalized Walsh-Hadamard butterfly. `fwht(fwht(v)) = K * v`;
/// Parseval: `sum(v^2) = (1/K) * sum(fwht(v)^2)`.
pub fn fwht(v: &mut [f64]) -> Result<()> {
    let n = v.len();
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let mut h = 1;
    while h < n {
        for block in (0..n).step_by(2 * h) {
            for i in block..block + h {
                let (a, b) = (v[i], v[i + h]);
                v[i] = a + b;
                v[i + h] = a - b;
            }
        }
        h *= 2;
    }
    Ok(())
}

/// The code sets backing the Hadamard response mechanism for input alphabet
/// `[k]`: output alphabet size `K = 2^ceil(log2(k+1))`, injection
/// `phi(x) = x+1`, and the memoized table `|D_z| = #{x : z in C_x}`.
#[derive(Debug, Clone)]
pub struct HadamardCode {
    k: usize,
    kk: usize,
    dz: Vec<u32>,
}

impl HadamardCode {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::EmptyAlphabet);
        }
        let kk = (k + 1).next_power_of_two();
        let mut dz = vec![0u32; kk];
        for (z, slot) in dz.iter_mut().enumerate() {
            *slot = (0..k)
                .filter(|&x| (z & (x + 1)).count_ones().is_multiple_of(2))
                .count() as u32;
        }
        Ok(Self { k, kk, dz })
    }

    pub fn input_size(&self) -> usize {
        self.k
    }

    /// The output alphabet size `K`, a power of two with `k+1 <= K <= 2(k+1)`.
    pub fn output_size(&self) -> usize {
        self.kk
    }

    pub fn phi(&self, x: usize) -> usize {
        x + 1
    }

    /// Is `z` in the code set `C_x`? True iff `popcount(z & phi(x))` is even.
    pub fn membership(&self, z: usize, x: usize) -> Result<bool> {
        if z >= self.kk {
            return Err(Error::IndexOutOfRange {
                index: z,
                size: self.kk,
            });
        }
        if x >= self.k {
            return Err(Error::IndexOutOfRange {
                index: x,
                size: self.k,
            });
        }
        Ok((z & self.phi(x)).count_ones().is_multiple_of(2))
    }

    /// `|D_z|`, the number of inputs whose code set contains `z` (memoized).
    pub fn dz_size(&self, z: usize) -> Result<usize> {
        if z >= self.kk {
            return Err(Error::IndexOutOfRange {
                index: z,
                size: self.kk,
            });
        }
        Ok(self.dz[z] as usize)
    }

    /// The exact output distribution of the response channel under uniform
    /// input: `q*(z) = 1/K + (alpha_H/K)(2|D_z|/k - 1)`.
    pub fn q_star(&self, budget: &PrivacyBudget) -> Distribution {
        let alpha = budget.alpha_hadamard();
        let kkf = self.kk as f64;
        let kf = self.k as f64;
        let pmf: Vec<f64> = self
            .dz
            .iter()
            .map(|&d| 1.0 / kkf + alpha / kkf * (2.0 * f64::from(d) / kf - 1.0))
            .collect();
        Distribution::new(pmf).expect("q* is a valid pmf")
    }

    /// Exact output distribution for inputs drawn from `p`:
    /// `q(z) = 1/K + (alpha_H/K)(2 p(D_z) - 1)`, computed analytically.
    pub fn pushforward(&self, p: &Distribution, budget: &PrivacyBudget) -> Result<Distribution> {
        if p.k() != self.k {
            return Err(Error::SizeMismatch(p.k(), self.k));
        }
        let alpha = budget.alpha_hadamard();
        let kkf = self.kk as f64;
        let mut pmf = Vec::with_capacity(self.kk);
        for z in 0..self.kk {
            let mass_dz: f64 = (0..self.k)
                .filter(|&x| (z & (x + 1)).count_ones().is_multiple_of(2))
                .map(|x| p.prob(x))
                .sum();
            pmf.push(1.0 / kkf + alpha / kkf * (2.0 * mass_dz - 1.0));
        }
        Distribution::new(pmf)
    }

    /// Channel row as a length-`K` vector: `W(z|x)` for fixed `x`.
    pub fn channel_row(&self, x: usize, budget: &PrivacyBudget) -> Result<Vec<f64>> {
        if x >= self.k {
            return Err(Error::IndexOutOfRange {
                index: x,
                size: self.k,
            });
        }
        let e = budget.epsilon().exp();
        let hi = 2.0 / self.kk as f64 * e / (e + 1.0);
        let lo = 2.0 / self.kk as f64 / (e + 1.0);
        Ok((0..self.kk)
            .map(|z| {
                if (z & self.phi(x)).count_ones().is_multiple_of(2) {
                    hi
                } else {
                    lo
                }
            })
            .collect())
    }

    /// Exact joint output distribution over `[K]x[K]` of a pair of
    /// independent response channels applied to the two coordinates of a
    /// joint sample: `T(p)(z1,z2) = sum W(z1|x1) W(z2|x2) p(x1,x2)`.
    pub fn pushforward_joint(
        &self,
        p: &JointDistribution,
        budget: &PrivacyBudget,
    ) -> Result<JointDistribution> {
        if p.k() != self.k {
            return Err(Error::SizeMismatch(p.k(), self.k));
        }
        let k = self.k;
        let kk = self.kk;
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|x| self.channel_row(x, budget))
            .collect::<Result<_>>()?;
        // T(p) = A p A^T with A the K x k channel matrix: two passes, O(K k^2 + K^2 k).
        let mut half = vec![0.0; kk * k]; // half[z1][x2] = sum_x1 W(z1|x1) p(x1,x2)
        for x1 in 0..k {
            for z1 in 0..kk {
                let w = rows[x1][z1];
                for x2 in 0..k {
                    half[z1 * k + x2] += w * p.prob(x1, x2);
                }
            }
        }
        let mut out = vec![0.0; kk * kk];
        for z1 in 0..kk {
            for x2 in 0..k {
                let h = half[z1 * k + x2];
                let row = &rows[x2];
                for z2 in 0..kk {
                    out[z1 * kk + z2] += h * row[z2];
                }
            }
        }
        let total: f64 = out.iter().sum();
        for v in &mut out {
            *v /= total;
        }
        JointDistribution::new(out, kk)
    }
}
