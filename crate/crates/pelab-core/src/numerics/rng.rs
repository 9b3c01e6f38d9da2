//! Deterministic PRNG for every sampled quantity in the crate.
//!
//! Algorithm (fixed, do not change without bumping the tool version):
//! xoshiro256++ (Blackman & Vigna), seeded by expanding a 64-bit seed with
//! four rounds of splitmix64. Uniform doubles take the top 53 bits; Gaussian
//! samples come from the Box–Muller transform on consecutive uniform pairs.
//! Integer arithmetic only in the state transition, so streams are
//! byte-identical across platforms.

use super::tensor::Tensor;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// xoshiro256++ state. `Copy` so callers can fork substreams freely.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    s: [u64; 4],
}

impl RngState {
    /// Seed via splitmix64 expansion.
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        Self { s: [splitmix64(&mut sm), splitmix64(&mut sm), splitmix64(&mut sm), splitmix64(&mut sm)] }
    }

    /// Substream `index` of a base seed. Derivation is fixed:
    /// `new(splitmix64(seed) ^ (index + 1) * GOLDEN)`, which keeps substreams
    /// decorrelated and reproducible independent of evaluation order.
    pub fn substream(seed: u64, index: u64) -> Self {
        let mut sm = seed;
        let mixed = splitmix64(&mut sm);
        Self::new(mixed ^ index.wrapping_add(1).wrapping_mul(GOLDEN))
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1), 53-bit resolution.
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in (0, 1]; safe under `ln`.
    fn next_uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// One standard-normal sample. Box–Muller on two uniforms; both outputs
    /// of the transform are used on alternating calls.
    pub fn next_gaussian(&mut self) -> f64 {
        // Pair consumption is handled by gaussian(); the single-sample path
        // draws a fresh pair and discards the second value so that the
        // stream position stays a function of call count alone.
        let (z0, _) = self.gaussian_pair();
        z0
    }

    fn gaussian_pair(&mut self) -> (f64, f64) {
        let u1 = self.next_uniform_open();
        let u2 = self.next_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let phi = 2.0 * std::f64::consts::PI * u2;
        (r * phi.cos(), r * phi.sin())
    }

    /// Uniform integer in [0, bound) by rejection from the top bits.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }
}

/// Combine two words into a derived seed (splitmix64 of each, xored);
/// used to key data streams off (run seed, purpose) pairs.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut sa = a;
    let mut sb = b ^ GOLDEN;
    splitmix64(&mut sa) ^ splitmix64(&mut sb)
}

/// `n` standard-normal samples as a flat tensor, plus the advanced state.
pub fn gaussian(mut state: RngState, n: usize) -> (Tensor, RngState) {
    assert!(n >= 1, "gaussian: n must be >= 1");
    let mut data = Vec::with_capacity(n);
    while data.len() < n {
        let (z0, z1) = state.gaussian_pair();
        data.push(z0);
        if data.len() < n {
            data.push(z1);
        }
    }
    (Tensor::from_vec(&[n], data).expect("length matches by construction"), state)
}

/// Convenience: a `[rows, cols]` tensor of scaled normals.
pub fn gaussian_matrix(state: &mut RngState, rows: usize, cols: usize, std: f64) -> Tensor {
    let (t, next) = gaussian(*state, rows * cols);
    *state = next;
    Tensor::from_vec(&[rows, cols], t.data().iter().map(|x| x * std).collect())
        .expect("length matches by construction")
}
