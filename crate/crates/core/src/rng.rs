//! Counter-based substream derivation.
//!
//! Every experiment consumes randomness through substreams derived from a
//! single 64-bit master seed, a purpose tag, and one or more indices:
//!
//! ```text
//! stream(master, tag, [i0, i1, ...]) = ChaCha8(splitmix-fold(master, fnv1a(tag), i0, i1, ...))
//! ```
//!
//! Because a substream is keyed by *what* it is for rather than by *when*
//! it is drawn, adding workers or reordering parallel tasks never changes
//! the numbers a given task sees.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; the standard 64-bit mixer.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over the tag bytes, so distinct purposes get distinct streams.
fn fnv1a(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive the 64-bit seed of the substream `(master, tag, indices)`.
pub fn derive_seed(master: u64, tag: &str, indices: &[u64]) -> u64 {
    let mut state = splitmix(master ^ fnv1a(tag));
    for &ix in indices {
        state = splitmix(state ^ ix.wrapping_mul(0xd6e8_feb8_6659_fd93));
    }
    state
}

/// The substream generator for `(master, tag, indices)`.
pub fn substream(master: u64, tag: &str, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tag, indices))
}
