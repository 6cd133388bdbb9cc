//! Per-cell seed derivation.

use crate::config::Method;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Hash of `(master, method, β index, repetition)`. Independent of how
/// cells are scheduled, so parallel runs reproduce serial ones.
pub fn cell_seed(master: u64, method: Method, beta_index: usize, repetition: usize) -> u64 {
    [method as u64, beta_index as u64, repetition as u64]
        .into_iter()
        .fold(splitmix64(master), |h, v| splitmix64(h ^ splitmix64(v)))
}
