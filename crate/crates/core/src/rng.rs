//! Seeded randomness shared by every stochastic component.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// The run-wide generator. ChaCha keeps streams identical across platforms.
pub type RunRng = ChaCha20Rng;

pub fn seeded(seed: u64) -> RunRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Generator seeded from the operating system.
pub fn from_os_entropy() -> RunRng {
    ChaCha20Rng::from_entropy()
}

/// Derives an independent child stream, e.g. one per network.
pub fn fork(rng: &mut RunRng) -> RunRng {
    ChaCha20Rng::seed_from_u64(rng.gen())
}

/// Fills `out` with i.i.d. standard normals via the Box–Muller transform.
pub fn fill_standard_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    let mut chunks = out.chunks_exact_mut(2);
    for pair in &mut chunks {
        let (a, b) = box_muller(rng);
        pair[0] = a;
        pair[1] = b;
    }
    if let [last] = chunks.into_remainder() {
        *last = box_muller(rng).0;
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    box_muller(rng).0
}

fn box_muller<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    // u1 in (0, 1] so the log is finite.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = std::f64::consts::TAU * u2;
    (r * theta.cos(), r * theta.sin())
}
