//! Shared inputs for the benchmarks under `benches/`.

use fa_core::Vec2;

/// `n x n` probe points spread over `[-2.2, 2.2] x [-1.6, 1.6]`, a box that
/// covers the attractor approximations.
pub fn probe_grid(n: usize) -> Vec<Vec2> {
    let step = |i: usize, half: f64| -half + 2.0 * half * (i as f64 + 0.5) / n as f64;
    (0..n * n)
        .map(|k| Vec2::new(step(k % n, 2.2), step(k / n, 1.6)))
        .collect()
}

/// Marker positions of a slit state halfway to collapse.
pub fn squeezed_markers(n: usize) -> Vec<f64> {
    fa_core::activescalar::markers(n)
        .iter()
        .map(|a| 0.5 * a * (1.0 - 0.3 * a * a))
        .collect()
}
