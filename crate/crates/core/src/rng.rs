//! Deterministic random streams.
//!
//! Every stochastic quantity in the engine (initial noise, per-step reverse
//! noise, training timesteps, augmentation swaps, ...) is drawn from a ChaCha
//! stream keyed by the run seed plus a purpose tag and indices. Streams are
//! independent of evaluation order, which is what makes training runs and
//! sampling trajectories bit-reproducible and safe to parallelize.

use alloc::vec::Vec;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Purpose tags for derived streams. Keeping them in one place avoids
/// accidental key collisions between unrelated draws.
pub mod stream {
    /// Initial placement noise `x_T`.
    pub const INIT: u64 = 0x01;
    /// Reverse-step noise `z` at a given timestep.
    pub const STEP_NOISE: u64 = 0x02;
    /// Training: timestep draw for one example.
    pub const TRAIN_T: u64 = 0x03;
    /// Training: target noise draw for one example.
    pub const TRAIN_EPS: u64 = 0x04;
    /// Training: epoch shuffle.
    pub const SHUFFLE: u64 = 0x05;
    /// Netlist augmentation (rewiring and offset resampling).
    pub const AUGMENT: u64 = 0x06;
    /// Synthetic base netlist generation.
    pub const SYNTH: u64 = 0x07;
    /// Reference placement initialization.
    pub const REFERENCE: u64 = 0x08;
    /// Denoiser parameter initialization.
    pub const PARAM_INIT: u64 = 0x09;
}

/// splitmix64 finalizer; good avalanche for key mixing.
fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent ChaCha stream from `seed` and a tag path.
///
/// The same `(seed, tags)` pair always yields the same stream, regardless of
/// how many other streams were drawn before it.
pub fn derive_rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = splitmix(seed ^ 0x6a09_e667_f3bc_c908);
    for &t in tags {
        state = splitmix(state ^ splitmix(t));
    }
    let mut key = [0u8; 32];
    let mut s = state;
    for chunk in key.chunks_exact_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Derive an independent sub-seed from `seed` and a tag path.
///
/// Useful when a callee takes a plain `u64` seed (e.g. per-sample augmentation
/// inside dataset construction) but the caller must guarantee the derived
/// seeds are decorrelated and order-independent.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix(seed ^ 0x510e_527f_ade6_82d1);
    for &t in tags {
        state = splitmix(state ^ splitmix(t));
    }
    state
}

/// Uniform draw in `[0, 1)` with 53-bit resolution.
pub fn uniform01(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Unbiased-enough index draw in `0..n` (widening-multiply method).
pub fn gen_index(rng: &mut impl RngCore, n: usize) -> usize {
    debug_assert!(n > 0);
    let x = rng.next_u64() as u128;
    ((x * n as u128) >> 64) as usize
}

/// `n` i.i.d. standard-normal draws via Box-Muller.
///
/// Box-Muller consumes exactly two uniforms per pair, so the draw count (and
/// therefore every downstream value) is a pure function of the stream.
pub fn standard_normal_vec(rng: &mut impl RngCore, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        let u1 = 1.0 - uniform01(rng); // (0, 1]; ln is finite
        let u2 = uniform01(rng);
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        out.push(r * libm::cos(theta));
        i += 1;
        if i < n {
            out.push(r * libm::sin(theta));
            i += 1;
        }
    }
    out
}

/// Standard-normal draws shaped as `n` coordinate pairs.
pub fn standard_normal_pairs(rng: &mut impl RngCore, n: usize) -> Vec<[f64; 2]> {
    let flat = standard_normal_vec(rng, 2 * n);
    flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T>(rng: &mut impl RngCore, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = gen_index(rng, i + 1);
        items.swap(i, j);
    }
}
