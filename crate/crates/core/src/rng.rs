use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent stream for item `index` under a run-level `seed`.
///
/// Streams are addressed by index rather than drawn sequentially, so results
/// do not depend on generation order.
pub(crate) fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub(crate) fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.gen();
    lo + (hi - lo) * u
}

pub(crate) fn shuffle<R: Rng, T>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}
