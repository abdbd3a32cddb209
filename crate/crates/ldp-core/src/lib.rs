//! Locally differentially private distribution testing: randomizers,
//! uniformity and independence testers, and brute-force verification oracles
//! for the concentration and moment identities the tests rest on.

pub mod dist;
pub mod error;
pub mod hadamard;
pub mod independence;
pub mod mechanisms;
pub mod theory;
pub mod uniformity;

pub use dist::{Distribution, JointDistribution};
pub use error::{Error, Result};
pub use hadamard::HadamardCode;
pub use mechanisms::{MechanismKind, PrivacyBudget, PrivatizedBatch, PublicCoin};
pub use uniformity::{Decision, Verdict};
