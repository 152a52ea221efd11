//! Monte Carlo campaigns, ablation cases and report files.

mod config;
mod filter;
mod ip;
mod report;

pub use config::*;
pub use filter::*;
pub use ip::*;
pub use report::*;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NavError, Result};

/// Independent random stream for `(seed, index, purpose)`.
pub fn stream_rng(seed: u64, index: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_mul(16).wrapping_add(purpose));
    rng
}

/// Worker pool sized by `NAVSIM_THREADS` (all cores when unset).
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var("NAVSIM_THREADS") {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .map_err(|_| NavError::Config(format!("NAVSIM_THREADS must be a positive integer, got `{s}`")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| NavError::Config(e.to_string()))
}

/// Root mean square of a slice; NaN for an empty slice.
pub(crate) fn rms(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    (sum / n as f64).sqrt()
}
