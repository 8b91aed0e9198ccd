//! Energy models `E: ℝᵐ → ℝ ∪ {+∞}` and the scalar test energies.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bar::SecondDifference;
use crate::{Error, Result};

/// Energy sublevel `K` together with a non-convexity constant valid on it.
///
/// For admissible `x, y` with `E(x), E(y) ≤ K`:
/// `⟨DE(y), y − x⟩ ≥ E(y) − E(x) − C‖y − x‖²_H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SublevelBound {
    pub k: f64,
    pub c: f64,
}

/// A stored energy on `ℝᵐ` with its gradient, admissible set and the
/// constants the stability analysis needs.
///
/// `value` returns `+∞` outside the admissible set. `gradient` is the plain
/// coordinate gradient; the kinetic terms of the scheme use the weighted
/// inner product given by [`EnergyModel::weights`].
pub trait EnergyModel: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn is_admissible(&self, x: &[f64]) -> bool;

    /// Finite lower bound of the energy.
    fn energy_min(&self) -> f64;

    /// Weights `w` of the inner product `⟨a, b⟩_H = Σ wᵢ aᵢ bᵢ`.
    fn weights(&self) -> &[f64];

    /// Non-convexity constant valid on the sublevel `{E ≤ K}`.
    fn noncvx_constant(&self, k: f64) -> Result<SublevelBound>;

    /// `λ ≥ 0` with `D²E(x) ≥ −λ W` on the whole admissible set. The
    /// incremental functional is strictly convex whenever `1/(τh) > λ`.
    fn curvature_lower_bound(&self) -> f64;

    fn hessian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    /// Operator for the optional `ε`-dissipation term, if the model has one.
    fn dissipation(&self) -> Option<&SecondDifference> {
        None
    }
}

fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::Dimension { expected, got: x.len() });
    }
    Ok(())
}

/// `E(x) = (x² − 1)²`, minima at `±1`.
#[derive(Debug, Clone, Default)]
pub struct DoubleWell {
    weights: [f64; 1],
}

impl DoubleWell {
    pub fn new() -> Self {
        Self { weights: [1.0] }
    }
}

/// `C(K) = ½ max{|E″(x)| : E(x) ≤ K}` for the double well, where
/// `E″(x) = 12x² − 4` and the sublevel is `|x| ≤ √(1 + √K)`.
pub fn noncvx_constant_double_well(k: f64) -> Result<SublevelBound> {
    if !(k >= 0.0) {
        return Err(Error::InvalidArgument(format!("sublevel K must be ≥ 0, got {k}")));
    }
    let c = 0.5 * f64::max(4.0, 12.0 * (1.0 + k.sqrt()) - 4.0);
    Ok(SublevelBound { k, c })
}

impl EnergyModel for DoubleWell {
    fn name(&self) -> &str {
        "double-well"
    }

    fn dim(&self) -> usize {
        1
    }

    fn value(&self, x: &[f64]) -> f64 {
        let s = x[0] * x[0] - 1.0;
        s * s
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(1, x)?;
        Ok(vec![4.0 * x[0] * (x[0] * x[0] - 1.0)])
    }

    fn is_admissible(&self, x: &[f64]) -> bool {
        x.len() == 1 && x[0].is_finite()
    }

    fn energy_min(&self) -> f64 {
        0.0
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn noncvx_constant(&self, k: f64) -> Result<SublevelBound> {
        noncvx_constant_double_well(k.max(0.0))
    }

    fn curvature_lower_bound(&self) -> f64 {
        4.0
    }

    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, 12.0 * x[0] * x[0] - 4.0))
    }
}

/// `E(x) = ω x²/2`, exact solution `x(t) = x₀ cos(√ω t) + (x_*/√ω) sin(√ω t)`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    omega: f64,
    weights: [f64; 1],
}

impl Quadratic {
    pub fn new(omega: f64) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidArgument(format!("omega must be positive, got {omega}")));
        }
        Ok(Self { omega, weights: [1.0] })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }
}

impl EnergyModel for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        1
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.omega * x[0] * x[0]
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(1, x)?;
        Ok(vec![self.omega * x[0]])
    }

    fn is_admissible(&self, x: &[f64]) -> bool {
        x.len() == 1 && x[0].is_finite()
    }

    fn energy_min(&self) -> f64 {
        0.0
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn noncvx_constant(&self, k: f64) -> Result<SublevelBound> {
        Ok(SublevelBound { k, c: 0.0 })
    }

    fn curvature_lower_bound(&self) -> f64 {
        0.0
    }

    fn hessian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, self.omega))
    }
}

/// Largest relative deviation between the model gradient and central
/// differences of the value with step `eps`:
/// `maxᵢ |FDᵢ − gᵢ| / (1 + |gᵢ|)`.
pub fn check_gradient(model: &dyn EnergyModel, x: &[f64], eps: f64) -> Result<f64> {
    let g = model.gradient(x)?;
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let plus = model.value(&probe);
        probe[i] = x[i] - eps;
        let minus = model.value(&probe);
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::ProbeOutsideDomain { coordinate: i });
        }
        let fd = (plus - minus) / (2.0 * eps);
        worst = worst.max((fd - g[i]).abs() / (1.0 + g[i].abs()));
    }
    Ok(worst)
}

/// `⟨DE(y), y − x⟩_pairing − (E(y) − E(x)) + C‖y − x‖²_H`, which is
/// non-negative whenever the non-convexity estimate holds for the pair.
pub fn noncvx_defect(model: &dyn EnergyModel, x: &[f64], y: &[f64], c: f64) -> Result<f64> {
    let g = model.gradient(y)?;
    let diff: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
    let pairing: f64 = g.iter().zip(&diff).map(|(a, b)| a * b).sum();
    Ok(pairing - (model.value(y) - model.value(x)) + c * crate::norm_sq(model.weights(), &diff))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn double_well_values() {
        let e = DoubleWell::new();
        assert_eq!(e.value(&[1.0]), 0.0);
        assert_eq!(e.value(&[-1.0]), 0.0);
        assert_eq!(e.value(&[0.0]), 1.0);
        assert_eq!(e.gradient(&[0.0]).unwrap(), vec![0.0]);
        assert_eq!(e.gradient(&[2.0]).unwrap(), vec![24.0]);
    }

    #[test]
    fn double_well_symmetry() {
        let e = DoubleWell::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let x = rng.random_range(-3.0..3.0);
            assert_eq!(e.value(&[x]), e.value(&[-x]));
            assert_eq!(e.gradient(&[x]).unwrap()[0], -e.gradient(&[-x]).unwrap()[0]);
        }
    }

    #[test]
    fn quadratic_values() {
        let q = Quadratic::new(1.0).unwrap();
        assert_eq!(q.value(&[2.0]), 2.0);
        assert_eq!(q.gradient(&[2.0]).unwrap(), vec![2.0]);
        let q4 = Quadratic::new(4.0).unwrap();
        assert_eq!(q4.gradient(&[0.5]).unwrap(), vec![2.0]);
        assert!(Quadratic::new(0.0).is_err());
        assert!(Quadratic::new(-1.0).is_err());
    }

    #[test]
    fn double_well_constants() {
        assert_relative_eq!(noncvx_constant_double_well(0.0).unwrap().c, 4.0);
        assert_relative_eq!(noncvx_constant_double_well(1.0).unwrap().c, 10.0);
        assert!(noncvx_constant_double_well(-0.1).is_err());
    }

    #[test]
    fn double_well_constant_from_sublevel_brute_force() {
        // Independent route: scan the sublevel on a fine grid for max |E''|.
        for &k in &[0.0, 0.25, 1.0, 4.0, 9.0] {
            let bound = (1.0 + f64::sqrt(k)).sqrt();
            let scanned = (0..=20_000)
                .map(|i| -bound + 2.0 * bound * i as f64 / 20_000.0)
                .filter(|x| (x * x - 1.0).powi(2) <= k + 1e-12)
                .map(|x| (12.0 * x * x - 4.0).abs())
                .fold(0.0, f64::max);
            let c = noncvx_constant_double_well(k).unwrap().c;
            assert!((0.5 * scanned - c).abs() <= 1e-3 * c, "K = {k}: {scanned} vs {c}");
        }
    }

    #[test]
    fn double_well_pairwise_estimate() {
        let e = DoubleWell::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &k in &[0.1, 1.0, 3.0] {
            let c = e.noncvx_constant(k).unwrap().c;
            let r = (1.0 + f64::sqrt(k)).sqrt();
            let mut count = 0;
            while count < 10_000 {
                let x = rng.random_range(-r..r);
                let y = rng.random_range(-r..r);
                if e.value(&[x]) > k || e.value(&[y]) > k {
                    continue;
                }
                count += 1;
                assert!(noncvx_defect(&e, &[x], &[y], c).unwrap() >= -1e-12);
            }
        }
    }

    #[test]
    fn quadratic_is_convex() {
        let q = Quadratic::new(3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let x = rng.random_range(-5.0..5.0);
            let y = rng.random_range(-5.0..5.0);
            assert!(noncvx_defect(&q, &[x], &[y], 0.0).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn gradient_checks() {
        let e = DoubleWell::new();
        assert!(check_gradient(&e, &[0.3], 1e-5).unwrap() <= 1e-8);
        let q = Quadratic::new(1.0).unwrap();
        for x in [-4.0, 0.0, 0.7, 12.0] {
            assert!(check_gradient(&q, &[x], 1e-5).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            DoubleWell::new().gradient(&[1.0, 2.0]),
            Err(Error::Dimension { expected: 1, got: 2 })
        ));
    }
}
