//! Deterministic sampling substreams.
//!
//! Every Monte-Carlo stage draws from ChaCha8 keyed by `(seed, stage)` and uses
//! the ChaCha stream id for the chunk index. Samples are processed in fixed-size
//! chunks and chunk results are reduced in index order, so the numbers produced
//! do not depend on how many worker threads run the chunks.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::torus::LatticePoint;

/// Name recorded in run manifests.
pub const RNG_ALGORITHM: &str = "chacha8-stream-per-chunk/sha256-key";

/// Samples per chunk. Part of the numerical contract: changing it changes results.
pub const CHUNK_SIZE: u64 = 1 << 14;

/// Generator for one chunk of one stage.
pub fn substream(seed: u64, stage: &str, chunk: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"spectral-lab/");
    hasher.update(stage.as_bytes());
    hasher.update(b"/");
    hasher.update(seed.to_le_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(chunk);
    rng
}

/// A uniformly distributed point of the dyadic grid.
#[inline]
pub fn lattice_point(rng: &mut impl RngCore) -> LatticePoint {
    LatticePoint { x: rng.next_u64(), p: rng.next_u64() }
}

/// Runs `body(rng, count)` over `samples` split into chunks and folds the
/// per-chunk results in chunk order.
pub fn chunked<T, F, R>(samples: u64, seed: u64, stage: &str, body: F, init: T, mut fold: R) -> T
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, u64) -> T + Sync,
    R: FnMut(T, T) -> T,
{
    let chunks = samples.div_ceil(CHUNK_SIZE);
    let parts: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = CHUNK_SIZE.min(samples - c * CHUNK_SIZE);
            let mut rng = substream(seed, stage, c);
            body(&mut rng, count)
        })
        .collect();
    let mut acc = init;
    for part in parts {
        acc = fold(acc, part);
    }
    acc
}
