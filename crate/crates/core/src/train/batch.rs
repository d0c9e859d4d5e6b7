//! Deterministic per-epoch batching.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{BiLinkError, Result};

/// Shuffles `0..n` with a stream keyed by `(seed, epoch)` and chunks the
/// result. A trailing chunk smaller than 2 is dropped because the loss
/// needs in-batch negatives.
pub fn make_batches(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size < 2 {
        return Err(BiLinkError::Config(format!("batch size {batch_size} must be at least 2")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch.wrapping_add(1));
    order.shuffle(&mut rng);
    let mut out: Vec<Vec<usize>> = order.chunks(batch_size).map(|c| c.to_vec()).collect();
    if out.last().is_some_and(|b| b.len() < 2) {
        out.pop();
    }
    Ok(out)
}
