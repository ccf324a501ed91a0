//! Seeded random streams and seed fan-out.
//!
//! Every stochastic component draws from its own `ChaCha8Rng`, seeded by
//! [`sub_seed`] from the master seed and a component name. The derivation is
//! FNV-1a (64-bit) over the UTF-8 name, xor-ed with the master seed, then
//! passed through the SplitMix64 finalizer:
//!
//! ```text
//! sub_seed(master, name) = splitmix64(master ^ fnv1a64(name))
//! ```
//!
//! Adding a new component name never perturbs the stream of an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn sub_seed(master: u64, name: &str) -> u64 {
    splitmix64(master ^ fnv1a64(name.as_bytes()))
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream for a named component under `master`.
pub fn stream(master: u64, name: &str) -> Rng {
    seeded(sub_seed(master, name))
}
