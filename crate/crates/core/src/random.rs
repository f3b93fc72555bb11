//! Seeded counter-based random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic stream `stream` of the generator keyed by `seed`.
///
/// Distinct streams partition the ChaCha counter space, so parallel tasks
/// each take their own stream instead of sharing one mutable generator.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw on the open interval (0, 1).
pub fn open_unit<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}
