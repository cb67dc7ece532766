//! Seeded random streams.
//!
//! All randomness comes from ChaCha8. A run seeded with `seed` uses
//! `ChaCha8Rng::seed_from_u64(seed)`; per-subject work uses the same key with
//! the stream number set to the subject index, so each subject draws from an
//! independent substream regardless of how the work is scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Substream `index` of the generator keyed by `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Symmetric Dirichlet(1) draw over the entries where `free` is true;
/// other entries are zero.
pub fn dirichlet_free<R: Rng + ?Sized>(rng: &mut R, free: &[bool]) -> Vec<f64> {
    let mut out: Vec<f64> = free
        .iter()
        .map(|&f| if f { rng.sample(Exp1) } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|v| *v /= total);
    }
    out
}

/// Draw an index from a discrete distribution. Zero-probability entries are
/// never returned.
pub fn sample_categorical<R: Rng + ?Sized, I>(rng: &mut R, probs: I) -> usize
where
    I: IntoIterator<Item = f64>,
{
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (j, p) in probs.into_iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last_positive = j;
            if u < cum {
                return j;
            }
        }
    }
    // rounding left u above the cumulative total
    last_positive
}
