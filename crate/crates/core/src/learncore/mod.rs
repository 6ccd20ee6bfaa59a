//! Numeric substrate: differentiable scalars, jets, perceptrons, Adam.

pub mod adam;
pub mod fd;
pub mod jet;
pub mod mlp;
pub mod scalar;
pub mod tape;

pub use adam::{cosine_lr, AdamConfig, AdamState};
pub use jet::Jet3;
pub use mlp::{Activation, Mlp};
pub use scalar::Scalar;
pub use tape::{gradient, Var};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Deterministic generator for a seed.
pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a master seed with a path of tags into an independent child seed
/// (SplitMix64 finalizer per tag).
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut h = master ^ 0x9E37_79B9_7F4A_7C15;
    for &t in tags {
        h = h.wrapping_add(t.wrapping_mul(0xBF58_476D_1CE4_E5B9)).wrapping_add(0x9E37_79B9_7F4A_7C15);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
