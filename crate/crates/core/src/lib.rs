//! One-step sample-based planning with reweighted experience models.
//!
//! The crate is organised bottom-up:
//!
//! - [`kernels`]: Gaussian / indicator kernels and the [`Transition`] record.
//! - [`kde`]: a full kernel density estimator over every observed transition.
//! - [`rem`]: the reweighted experience model (prototypes plus conditional
//!   coefficients) and its log-determinant prototype selector.
//! - [`buffer`]: the circular priority buffer shared by replay and search control.
//! - [`features`]: tile coding and the linear action-value function.
//! - [`envs`]: tabular gridworld, continuous gridworld and river swim.
//! - [`agents`]: Q-learning, experience replay and the Dyna family.

pub mod agents;
pub mod buffer;
pub mod envs;
pub mod features;
pub mod kde;
pub mod kernels;
pub mod linalg;
pub mod rem;

mod error;

pub use error::ModelError;
pub use kernels::{Bandwidth, Outcome, Transition};

/// RNG used for every stochastic component. ChaCha keeps streams identical
/// across platforms, which the reproducibility guarantees rely on.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Build a [`SimRng`] from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> SimRng {
    use rand::SeedableRng;
    SimRng::seed_from_u64(seed)
}

/// Mix a base seed with a stream index (splitmix64 finaliser).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
