//! Seeded random streams.
//!
//! A master seed and a replica id select an independent ChaCha8 stream, so
//! replica `r` draws the same numbers whichever thread runs it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Recorded in output metadata next to the seed.
pub const SCHEME: &str = "chacha8-stream-v1";

pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64, replica: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Uniform draw on (0, 1].
#[inline]
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Exponential waiting time with the given rate, by inverse transform.
#[inline]
pub fn exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    -open_unit(rng).ln() / rate
}

/// Index drawn with probability proportional to `weights[i]`.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64], total: f64) -> usize {
    let mut target = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if target < w {
            return i;
        }
        target -= w;
    }
    // rounding fallthrough: last positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}
