//! Small dense-vector helpers and compensated summation.
//!
//! Everything here works on plain `&[f64]`. Problems in this crate top out
//! around a few hundred thousand parameters, well inside what naive loops
//! handle; the only numerically delicate spot is summing long step-size
//! series, which uses Neumaier's variant of Kahan summation.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Neumaier compensated sum. Exact enough that summing 10^4 schedule terms
/// stays below 1e-12 relative error, which the bound checks rely on.
pub fn kahan_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// y += alpha * x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x {
        *xi *= alpha;
    }
}

pub fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Shortest decimal that round-trips f64 exactly; CSV cells use this.
pub fn fmt_f64(v: f64) -> String {
    format!("{:.16e}", v)
}

/// Independent deterministic RNG streams derived from one run seed. Streams
/// with different tags never collide even for equal seeds.
pub fn derive_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    key[16..24].copy_from_slice(&seed.rotate_left(17).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// RNG stream tags used across the crate.
pub mod stream {
    pub const ORACLE: u64 = 1;
    pub const SAMPLER: u64 = 2;
    pub const INIT: u64 = 3;
    pub const DATA: u64 = 4;
    pub const PROBE: u64 = 5;
}
