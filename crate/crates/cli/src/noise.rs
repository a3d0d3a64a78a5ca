//! Deterministic measurement-noise injection.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use thermem::TimeSeries;

/// Add uniform noise from `(-amplitude, amplitude)` to every node,
/// deterministic under the seed. Amplitude zero is the identity.
pub fn inject_noise(g: &TimeSeries, amplitude: f64, seed: u64) -> TimeSeries {
    if amplitude == 0.0 {
        return g.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = g
        .values()
        .iter()
        .map(|v| v + rng.gen_range(-amplitude..amplitude))
        .collect();
    TimeSeries::new(g.grid(), values).expect("same grid")
}
