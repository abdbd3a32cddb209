//! Deterministic per-trial stream seeding.
//!
//! Trial streams are seeded by chaining splitmix64 over the base seed and the
//! coordinates of the trial (grid index, instance index, trial index), so any
//! trial can be reproduced in isolation and parallel execution order cannot
//! affect results. Cross-implementation bit-compatibility is not a goal;
//! within-implementation reproducibility is.

/// splitmix64 finalizer (Steele, Lea, Flood 2014).
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix the base seed with trial coordinates into a stream seed.
pub fn trial_seed(base: u64, grid_index: u64, instance_index: u64, trial_index: u64) -> u64 {
    let mut s = splitmix64(base);
    s = splitmix64(s ^ grid_index);
    s = splitmix64(s ^ instance_index);
    splitmix64(s ^ trial_index)
}
