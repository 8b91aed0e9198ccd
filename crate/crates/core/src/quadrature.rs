//! Cached Gauss–Legendre rules.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

const MAX_POINTS: usize = 32;

fn rules() -> &'static [GaussLegendre] {
    static RULES: OnceLock<Vec<GaussLegendre>> = OnceLock::new();
    RULES.get_or_init(|| {
        (1..=MAX_POINTS)
            .map(|n| GaussLegendre::new(NonZeroUsize::new(n).expect("n > 0")))
            .collect()
    })
}

/// `∫_a^b f` with an `n`-point rule, exact for polynomials of degree
/// `2n − 1`. `n` is clamped to `1..=32`.
pub fn gauss_legendre<F: FnMut(f64) -> f64>(a: f64, b: f64, n: usize, f: F) -> f64 {
    if b <= a {
        return 0.0;
    }
    rules()[n.clamp(1, MAX_POINTS) - 1].integrate(a, b, f)
}

/// Number of points that integrates a degree-`degree` polynomial exactly.
pub fn points_for_degree(degree: usize) -> usize {
    degree / 2 + 1
}
