//! Minimal deterministic neural-network core: a fixed set of layer kinds,
//! losses, Adam, and hand-written reverse-mode gradients.

mod adam;
mod layer;
mod loss;
pub mod ops;
mod params;

pub use adam::{AdamConfig, AdamState};
pub use layer::{LayerSpec, Network, Tape};
pub use loss::{
    bce, kl_diag_gaussian, mse, reparameterize, reparameterize_backward, KlValue, LossValue,
    BCE_EPS,
};
pub use params::ModelParams;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used everywhere a seed is accepted.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a base seed and a stage label.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    // FNV-1a over the label, mixed with the base through splitmix64.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = base ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
