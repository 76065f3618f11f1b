//! Counter-based splittable random streams.
//!
//! Every random draw in the crate is keyed by
//! `(master seed, replication, agent, step, purpose)`. Streams derived
//! from the same key are identical regardless of scheduling order, so
//! replications can run on any number of workers without changing a
//! single byte of output.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a derived stream is used for. Keeps independent uses of the same
/// (replication, agent, step) coordinate from colliding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Observation,
    Schedule,
    Topology,
    Auxiliary,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Observation => 0x0b5e,
            Purpose::Schedule => 0x5c4e,
            Purpose::Topology => 0x7090,
            Purpose::Auxiliary => 0xa0aa,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes the key parts into a 256-bit ChaCha seed.
fn derive_seed(parts: &[u64]) -> [u8; 32] {
    let mut state = 0x243f_6a88_85a3_08d3u64;
    for &p in parts {
        state ^= splitmix64(&mut state) ^ p.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    seed
}

/// A per-replication handle from which per-(agent, step, purpose) RNGs
/// are derived.
#[derive(Debug, Clone, Copy)]
pub struct StreamFamily {
    pub master_seed: u64,
    pub replication: u64,
}

impl StreamFamily {
    pub fn new(master_seed: u64, replication: u64) -> Self {
        Self {
            master_seed,
            replication,
        }
    }

    /// RNG for one (agent, step, purpose) cell.
    pub fn rng(&self, agent: u64, step: u64, purpose: Purpose) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(derive_seed(&[
            self.master_seed,
            self.replication,
            agent,
            step,
            purpose.tag(),
        ]))
    }

    /// A 64-bit sub-seed, e.g. for schedule sampling.
    pub fn sub_seed(&self, purpose: Purpose) -> u64 {
        let mut state = derive_seed(&[self.master_seed, self.replication, purpose.tag()])[..8]
            .try_into()
            .map(u64::from_le_bytes)
            .unwrap();
        splitmix64(&mut state)
    }
}

/// Deterministic uniform in [0, 1) keyed by (seed, counter). Used for
/// per-step Bernoulli schedule draws.
pub fn unit_uniform(seed: u64, counter: u64) -> f64 {
    let mut state = seed ^ counter.wrapping_mul(0xd6e8_feb8_6659_fd93);
    let _ = splitmix64(&mut state);
    let bits = splitmix64(&mut state) >> 11; // 53 random bits
    bits as f64 * (1.0 / (1u64 << 53) as f64)
}
