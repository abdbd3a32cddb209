//! User-side randomizers (randomized response, one-hot bit flipping, Hadamard
//! response, subset-indicator response), their explicit channel matrices, and
//! a likelihood-ratio privacy auditor.
//!
//! Encoders are pure given `(input, coin, rng)`; they never seed themselves.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::hadamard::HadamardCode;

/// Privacy budget epsilon > 0 with its derived per-mechanism constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    epsilon: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon <= 0.0 || !epsilon.is_finite() {
            return Err(Error::BadParameter {
                name: "epsilon",
                value: epsilon,
            });
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `alpha_R = (e^{eps/2} - 1) / (e^{eps/2} + 1)`.
    pub fn alpha_rappor(&self) -> f64 {
        let h = (self.epsilon / 2.0).exp();
        (h - 1.0) / (h + 1.0)
    }

    /// `beta_R = 1 / (e^{eps/2} + 1)`, the per-bit flip probability.
    pub fn beta_rappor(&self) -> f64 {
        1.0 / ((self.epsilon / 2.0).exp() + 1.0)
    }

    /// `alpha_H = (e^eps - 1) / (e^eps + 1)`.
    pub fn alpha_hadamard(&self) -> f64 {
        let e = self.epsilon.exp();
        (e - 1.0) / (e + 1.0)
    }

    /// Budget scaled to a fraction of this one (e.g. per-bit shares).
    pub fn fraction(&self, denom: f64) -> PrivacyBudget {
        PrivacyBudget {
            epsilon: self.epsilon / denom,
        }
    }
}

/// Which randomizer produced a batch of messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MechanismKind {
    #[serde(rename = "rr")]
    RandomizedResponse,
    #[serde(rename = "rappor")]
    Rappor,
    #[serde(rename = "hr")]
    HadamardResponse,
    #[serde(rename = "raptor")]
    Raptor,
    #[serde(rename = "raptor2")]
    BivariateRaptor,
}

impl std::fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            MechanismKind::RandomizedResponse => "rr",
            MechanismKind::Rappor => "rappor",
            MechanismKind::HadamardResponse => "hr",
            MechanismKind::Raptor => "raptor",
            MechanismKind::BivariateRaptor => "raptor2",
        };
        f.write_str(name)
    }
}

/// A shared random subset of `[k]` of cardinality exactly k/2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicCoin {
    k: usize,
    members: Vec<bool>,
}

impl PublicCoin {
    /// Fisher-Yates partial shuffle of `[k]`; the first k/2 slots form the set.
    pub fn random<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<Self> {
        if !k.is_multiple_of(2) || k == 0 {
            return Err(Error::OddAlphabet(k));
        }
        let mut idx: Vec<usize> = (0..k).collect();
        for i in 0..k / 2 {
            let j = rng.gen_range(i..k);
            idx.swap(i, j);
        }
        let mut members = vec![false; k];
        for &i in &idx[..k / 2] {
            members[i] = true;
        }
        Ok(Self { k, members })
    }

    /// Build from an explicit member list; must have exactly k/2 elements.
    pub fn from_indices(k: usize, indices: &[usize]) -> Result<Self> {
        let mut members = vec![false; k];
        for &i in indices {
            if i >= k {
                return Err(Error::IndexOutOfRange { index: i, size: k });
            }
            members[i] = true;
        }
        let size = members.iter().filter(|&&b| b).count();
        if size != k / 2 || !k.is_multiple_of(2) {
            return Err(Error::BadCoinSize {
                expected: k / 2,
                got: size,
            });
        }
        Ok(Self { k, members })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn contains(&self, x: usize) -> bool {
        self.members[x]
    }

    /// `p(S)`: exact mass of the subset under `p`.
    pub fn mass(&self, p: &Distribution) -> Result<f64> {
        if p.k() != self.k {
            return Err(Error::SizeMismatch(p.k(), self.k));
        }
        Ok(self
            .members
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| p.prob(i))
            .sum())
    }

    pub fn indices(&self) -> Vec<usize> {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Randomized response over `[k]`: keep the input with probability
/// `e^eps / (e^eps + k - 1)`, otherwise report a uniformly random other symbol.
pub fn rr_encode<R: Rng + ?Sized>(
    k: usize,
    budget: &PrivacyBudget,
    x: usize,
    rng: &mut R,
) -> usize {
    debug_assert!(x < k);
    let e = budget.epsilon().exp();
    let keep = e / (e + k as f64 - 1.0);
    if rng.gen::<f64>() < keep {
        x
    } else {
        let z = rng.gen_range(0..k - 1);
        if z >= x {
            z + 1
        } else {
            z
        }
    }
}

/// One-hot encode `x` then flip each bit independently with probability
/// `beta_R`.
pub fn rappor_encode<R: Rng + ?Sized>(
    k: usize,
    budget: &PrivacyBudget,
    x: usize,
    rng: &mut R,
) -> Vec<bool> {
    debug_assert!(x < k);
    let beta = budget.beta_rappor();
    (0..k)
        .map(|i| {
            let bit = i == x;
            if rng.gen::<f64>() < beta {
                !bit
            } else {
                bit
            }
        })
        .collect()
}

/// Hadamard response: with probability `e^eps/(e^eps+1)` output a uniform
/// element of `C_x`, otherwise a uniform element of its complement.
///
/// Runs in O(log K): all bits of the output are drawn uniformly except one
/// position where `phi(x)` has a set bit, which is forced to the parity of
/// the chosen class.
pub fn hr_encode<R: Rng + ?Sized>(
    code: &HadamardCode,
    budget: &PrivacyBudget,
    x: usize,
    rng: &mut R,
) -> usize {
    debug_assert!(x < code.input_size());
    let e = budget.epsilon().exp();
    let in_set = rng.gen::<f64>() < e / (e + 1.0);
    let phi = code.phi(x);
    let pivot = phi.trailing_zeros();
    let kk = code.output_size();
    let z = rng.gen_range(0..kk) & !(1usize << pivot);
    let parity_rest = (z & phi).count_ones() % 2;
    let want_odd = !in_set;
    let need = (parity_rest == 0) == want_odd;
    if need {
        z | (1usize << pivot)
    } else {
        z
    }
}

/// Subset-indicator response: the randomized-response bit of `1{x in S}`,
/// flipped with probability `1/(1+e^eps)`.
pub fn raptor_encode<R: Rng + ?Sized>(
    x: usize,
    coin: &PublicCoin,
    budget: &PrivacyBudget,
    rng: &mut R,
) -> bool {
    let bit = coin.contains(x);
    let e = budget.epsilon().exp();
    if rng.gen::<f64>() < 1.0 / (1.0 + e) {
        !bit
    } else {
        bit
    }
}

/// Bivariate subset-indicator response: the three indicators of
/// `x1 in S1`, `x2 in S2`, `(x1,x2) in S1 x S2`, each sent through
/// randomized response at budget eps/3.
pub fn raptor2_encode<R: Rng + ?Sized>(
    pair: (usize, usize),
    coins: (&PublicCoin, &PublicCoin),
    budget: &PrivacyBudget,
    rng: &mut R,
) -> [bool; 3] {
    let third = budget.fraction(3.0);
    let flip = 1.0 / (1.0 + third.epsilon().exp());
    let b1 = coins.0.contains(pair.0);
    let b2 = coins.1.contains(pair.1);
    let truth = [b1, b2, b1 && b2];
    let mut out = [false; 3];
    for (slot, &t) in out.iter_mut().zip(&truth) {
        *slot = if rng.gen::<f64>() < flip { !t } else { t };
    }
    out
}

/// A row-stochastic conditional probability matrix `W(z|x)`.
#[derive(Debug, Clone)]
pub struct ChannelMatrix {
    entries: Vec<f64>,
    inputs: usize,
    outputs: usize,
}

impl ChannelMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let inputs = rows.len();
        if inputs == 0 {
            return Err(Error::EmptyAlphabet);
        }
        let outputs = rows[0].len();
        let mut entries = Vec::with_capacity(inputs * outputs);
        for row in &rows {
            if row.len() != outputs {
                return Err(Error::SizeMismatch(row.len(), outputs));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::MassNotNormalized(total));
            }
            if let Some((i, &v)) = row.iter().enumerate().find(|(_, &v)| v < 0.0) {
                return Err(Error::NegativeMass { index: i, value: v });
            }
            entries.extend_from_slice(row);
        }
        Ok(Self {
            entries,
            inputs,
            outputs,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn prob(&self, x: usize, z: usize) -> f64 {
        self.entries[x * self.outputs + z]
    }

    /// Output distribution for inputs drawn from `p`.
    pub fn pushforward(&self, p: &Distribution) -> Result<Distribution> {
        if p.k() != self.inputs {
            return Err(Error::SizeMismatch(p.k(), self.inputs));
        }
        let mut out = vec![0.0; self.outputs];
        for x in 0..self.inputs {
            let px = p.prob(x);
            for z in 0..self.outputs {
                out[z] += px * self.prob(x, z);
            }
        }
        let total: f64 = out.iter().sum();
        for v in &mut out {
            *v /= total;
        }
        Distribution::new(out)
    }
}

/// Explicit channel matrix of a mechanism. For the subset mechanisms the
/// public coin(s) must be supplied; the bivariate matrix is over the four
/// truth-value classes of the indicator pair.
pub fn channel_matrix(
    kind: MechanismKind,
    k: usize,
    budget: &PrivacyBudget,
    coin: Option<&PublicCoin>,
) -> Result<ChannelMatrix> {
    match kind {
        MechanismKind::RandomizedResponse => {
            let e = budget.epsilon().exp();
            let denom = e + k as f64 - 1.0;
            let rows = (0..k)
                .map(|x| {
                    (0..k)
                        .map(|z| if z == x { e / denom } else { 1.0 / denom })
                        .collect()
                })
                .collect();
            ChannelMatrix::from_rows(rows)
        }
        MechanismKind::Rappor => rappor_channel(k, budget.beta_rappor()),
        MechanismKind::HadamardResponse => {
            let code = HadamardCode::new(k)?;
            let rows = (0..k)
                .map(|x| code.channel_row(x, budget))
                .collect::<Result<_>>()?;
            ChannelMatrix::from_rows(rows)
        }
        MechanismKind::Raptor => {
            let coin = coin.ok_or(Error::BadCoinSize {
                expected: k / 2,
                got: 0,
            })?;
            let e = budget.epsilon().exp();
            let keep = e / (1.0 + e);
            let rows = (0..k)
                .map(|x| {
                    if coin.contains(x) {
                        vec![1.0 - keep, keep]
                    } else {
                        vec![keep, 1.0 - keep]
                    }
                })
                .collect();
            ChannelMatrix::from_rows(rows)
        }
        MechanismKind::BivariateRaptor => {
            // Inputs are the truth-value classes (b1, b2) in {00, 01, 10, 11};
            // outputs the 8 possible privatized bit triples, low bit first.
            let e3 = (budget.epsilon() / 3.0).exp();
            let keep = e3 / (1.0 + e3);
            let rows = (0..4)
                .map(|class| {
                    let b1 = class & 1 == 1;
                    let b2 = class & 2 == 2;
                    let truth = [b1, b2, b1 && b2];
                    (0..8)
                        .map(|z| {
                            (0..3)
                                .map(|j| {
                                    let sent = z >> j & 1 == 1;
                                    if sent == truth[j] {
                                        keep
                                    } else {
                                        1.0 - keep
                                    }
                                })
                                .product()
                        })
                        .collect()
                })
                .collect();
            ChannelMatrix::from_rows(rows)
        }
    }
}

/// One-hot channel over `2^k` outputs with the given per-bit flip rate.
/// Output index z is read as a bit mask, bit i = entry i of the message.
pub(crate) fn rappor_channel(k: usize, flip: f64) -> Result<ChannelMatrix> {
    if k > 16 {
        return Err(Error::OutputSpaceTooLarge(k));
    }
    let outputs = 1usize << k;
    let rows = (0..k)
        .map(|x| {
            (0..outputs)
                .map(|z| {
                    (0..k)
                        .map(|i| {
                            let bit = z >> i & 1 == 1;
                            let onehot = i == x;
                            if bit == onehot {
                                1.0 - flip
                            } else {
                                flip
                            }
                        })
                        .product()
                })
                .collect()
        })
        .collect();
    ChannelMatrix::from_rows(rows)
}

/// Result of a likelihood-ratio audit of a channel.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AuditResult {
    pub max_ratio: f64,
    pub epsilon: f64,
    pub passes: bool,
}

/// Maximum over outputs z and input pairs (x, x') of `W(z|x') / W(z|x)`,
/// with 0/0 treated as 1 and c/0 as infinity. The audit passes iff the ratio
/// is at most `e^eps * (1 + 1e-9)`.
pub fn audit_ldp(w: &ChannelMatrix, budget: &PrivacyBudget) -> AuditResult {
    let mut max_ratio: f64 = 1.0;
    for z in 0..w.outputs() {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for x in 0..w.inputs() {
            let v = w.prob(x, z);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let ratio = if hi == 0.0 {
            1.0
        } else if lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        };
        max_ratio = max_ratio.max(ratio);
    }
    AuditResult {
        max_ratio,
        epsilon: budget.epsilon(),
        passes: max_ratio <= budget.epsilon().exp() * (1.0 + 1e-9),
    }
}

/// Audit route for the one-hot mechanism when `2^k` is too large to
/// enumerate: audit the single-bit flip channel at eps/2 and compose over the
/// two bits that differ between one-hot encodings.
pub fn audit_rappor_per_bit(budget: &PrivacyBudget) -> AuditResult {
    let beta = budget.beta_rappor();
    let bit_channel = ChannelMatrix::from_rows(vec![
        vec![1.0 - beta, beta],
        vec![beta, 1.0 - beta],
    ])
    .expect("bit channel is stochastic");
    let half = budget.fraction(2.0);
    let per_bit = audit_ldp(&bit_channel, &half);
    // Two bits differ between any pair of one-hot inputs.
    let composed = per_bit.max_ratio * per_bit.max_ratio;
    AuditResult {
        max_ratio: composed,
        epsilon: budget.epsilon(),
        passes: composed <= budget.epsilon().exp() * (1.0 + 1e-9),
    }
}

/// A single privatized message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Message {
    Symbol(u32),
    Bits(Vec<u8>),
}

/// The curator-side view of an encoded batch: mechanism tag, the public
/// coin(s) if any, and one message per user.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrivatizedBatch {
    pub mechanism: MechanismKind,
    pub k: usize,
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coin: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coin2: Option<Vec<usize>>,
    pub messages: Vec<Vec<u32>>,
}

impl PrivatizedBatch {
    pub fn n(&self) -> usize {
        self.messages.len()
    }

    pub fn symbols(&self) -> Result<Vec<usize>> {
        self.messages
            .iter()
            .map(|m| {
                if m.len() == 1 {
                    Ok(m[0] as usize)
                } else {
                    Err(Error::MechanismMismatch {
                        expected: "single-symbol messages".into(),
                        got: format!("message of length {}", m.len()),
                    })
                }
            })
            .collect()
    }

    pub fn bit_vectors(&self) -> Result<Vec<Vec<bool>>> {
        self.messages
            .iter()
            .map(|m| {
                if m.len() == self.k {
                    Ok(m.iter().map(|&b| b != 0).collect())
                } else {
                    Err(Error::MechanismMismatch {
                        expected: format!("length-{} bit vectors", self.k),
                        got: format!("message of length {}", m.len()),
                    })
                }
            })
            .collect()
    }
}
