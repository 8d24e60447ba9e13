//! Seeded random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha stream keyed by
//! `(root seed, stream name, index)`. Keys are laid out directly in the 256-bit
//! ChaCha key, so distinct triples never share a stream and results do not
//! depend on scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha8Rng;

fn fnv1a(name: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325_u64;
    for byte in name.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Independent stream for item `index` of the named purpose under `seed`.
pub fn substream(seed: u64, name: &str, index: u64) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&fnv1a(name).to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..].copy_from_slice(b"bathy\0\0\x01");
    ChaCha8Rng::from_seed(key)
}

/// Derive a child seed, used to hand a sub-seed to a component that takes a
/// plain `u64` (e.g. one stage of a pipeline).
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    use rand::Rng;
    substream(seed, name, u64::MAX).random()
}

pub(crate) fn standard_normals<R: rand::Rng + ?Sized>(rng: &mut R, len: usize) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_iterator(len, (0..len).map(|_| StandardNormal.sample(rng)))
}
