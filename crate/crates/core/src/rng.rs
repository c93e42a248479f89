//! Counter-based randomness: every draw is addressed by `(seed, particle, step)`,
//! so results do not depend on thread count or evaluation order.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

/// 32-bit words reserved per (particle, step) cell; enough for 8 normals.
const WORDS_PER_STEP: u128 = 16;

fn key(seed: u64, domain: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(domain.as_bytes());
    h.update(seed.to_le_bytes());
    h.finalize().into()
}

/// Uniform in `[0, 1)` with 53 random bits.
pub fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A pair of independent standard normals (Box-Muller).
pub fn normal_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u1 = 1.0 - uniform(rng);
    let u2 = uniform(rng);
    let rad = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
    (rad * c, rad * s)
}

/// Fill `out` with standard normals.
pub fn fill_normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let mut chunks = out.chunks_exact_mut(2);
    for pair in &mut chunks {
        let (a, b) = normal_pair(rng);
        pair[0] = a;
        pair[1] = b;
    }
    if let [last] = chunks.into_remainder() {
        *last = normal_pair(rng).0;
    }
}

/// Brownian increments for the particle system.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    key: [u8; 32],
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        Self { key: key(seed, "nexdiff/noise") }
    }

    /// Standard normals for `particle` at `step`; at most 8 values.
    pub fn normals(&self, particle: u64, step: u64, out: &mut [f64]) {
        assert!(out.len() <= 8, "at most 8 normals per particle and step");
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(particle);
        rng.set_word_pos(step as u128 * WORDS_PER_STEP);
        fill_normals(&mut rng, out);
    }
}

/// Generator for i.i.d. initial positions; particle `i` reads its own stream.
pub fn sampling_rng(seed: u64, particle: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(key(seed, "nexdiff/initial"));
    rng.set_stream(particle);
    rng
}

/// General-purpose generator for a named experiment component.
pub fn experiment_rng(seed: u64, domain: &str, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(key(seed, domain));
    rng.set_stream(stream);
    rng
}
