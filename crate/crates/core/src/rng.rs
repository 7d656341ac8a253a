//! Counter-based seeding.
//!
//! Every random stream is a ChaCha8 generator keyed by
//! `mix(base_seed, purpose)` with its 64-bit stream id set to the
//! replication index. Two streams differ whenever either the purpose or
//! the replication index differs, and no stream depends on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

/// What a random stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Brownian driver of the volatility process.
    Volatility,
    /// Gaussian innovations of the price increments.
    Price,
    /// Synthetic data for oracle checks.
    Oracle,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Volatility => 0x766f_6c61,
            Purpose::Price => 0x7072_6963,
            Purpose::Oracle => 0x6f72_6163,
        }
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key for `(base_seed, purpose)`; the replication index becomes the stream id.
pub fn stream_key(base_seed: u64, purpose: Purpose) -> u64 {
    mix64(mix64(base_seed) ^ purpose.tag())
}

pub fn stream(base_seed: u64, purpose: Purpose, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_key(base_seed, purpose));
    rng.set_stream(index);
    rng
}

/// Seeds of a run. The volatility and price streams use `base` unless
/// overridden.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub base: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volatility: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub price: Option<u64>,
}

impl Seeds {
    pub fn new(base: u64) -> Self {
        Self { base, ..Self::default() }
    }

    pub fn seed_for(&self, purpose: Purpose) -> u64 {
        match purpose {
            Purpose::Volatility => self.volatility.unwrap_or(self.base),
            Purpose::Price => self.price.unwrap_or(self.base),
            Purpose::Oracle => self.base,
        }
    }

    pub fn stream(&self, purpose: Purpose, index: u64) -> StreamRng {
        stream(self.seed_for(purpose), purpose, index)
    }
}
