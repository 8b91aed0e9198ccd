//! One-dimensional nonlinear elastic bar.
//!
//! The reference interval `(0, L)` is split into `m` uniform cells. Node 0 is
//! clamped (`η(0) = 0`) and eliminated, so the unknowns are the nodal values
//! `η₁..η_m`. The right end is free. The discrete energy is
//!
//! ```text
//! E(η) = Σ_cells Δx [ ξ^{−a} + (s/8)(ξ² − 1)² ] + Σ_{interior nodes} Δx φ(D²η)
//! ```
//!
//! with cell gradients `ξ_c = (η_{c+1} − η_c)/Δx` (midpoint quadrature),
//! central second differences `D²η` and `φ(s) = s²/2` (linear regularizer)
//! or `φ(s) = (1 + |s|)^{q−2} s² / q` (nonlinear regularizer). Any cell with
//! `ξ ≤ 0` makes the energy `+∞`; in 1D positivity of every cell gradient is
//! exactly injectivity of the deformation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::energy::{EnergyModel, SublevelBound};
use crate::{Error, Result};

/// Bisection steps used for the determinant lower bound.
const EPS0_BISECTIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Regularizer {
    /// `½ |D²η|²`.
    Linear,
    /// `(1/q)(1 + |D²η|)^{q−2} |D²η|²`.
    Nonlinear { q: f64 },
}

impl Regularizer {
    fn phi(self, s: f64) -> f64 {
        match self {
            Regularizer::Linear => 0.5 * s * s,
            Regularizer::Nonlinear { q } => (1.0 + s.abs()).powf(q - 2.0) * s * s / q,
        }
    }

    fn dphi(self, s: f64) -> f64 {
        match self {
            Regularizer::Linear => s,
            Regularizer::Nonlinear { q } => {
                let r = 1.0 + s.abs();
                ((q - 2.0) * r.powf(q - 3.0) * s.abs() * s + 2.0 * s * r.powf(q - 2.0)) / q
            }
        }
    }

    fn ddphi(self, s: f64) -> f64 {
        match self {
            Regularizer::Linear => 1.0,
            Regularizer::Nonlinear { q } => {
                let r = 1.0 + s.abs();
                ((q - 2.0) * (q - 3.0) * r.powf(q - 4.0) * s * s
                    + 4.0 * (q - 2.0) * r.powf(q - 3.0) * s.abs()
                    + 2.0 * r.powf(q - 2.0))
                    / q
            }
        }
    }

    /// `κ` with `Σ Δx |D²η|² ≤ κ E₂(η)`.
    fn coercivity(self) -> f64 {
        match self {
            Regularizer::Linear => 2.0,
            Regularizer::Nonlinear { q } => q,
        }
    }
}

/// Uniform mesh and material parameters of the bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarMesh {
    /// Number of unknown nodes `m` (node 0 is clamped).
    pub nodes: usize,
    pub length: f64,
    /// Compression exponent `a` in `ξ^{−a}`.
    pub exponent: f64,
    /// Saint Venant–Kirchhoff weight; 0 switches the term off.
    pub svk: f64,
    pub regularizer: Regularizer,
}

impl Default for BarMesh {
    fn default() -> Self {
        Self { nodes: 32, length: 1.0, exponent: 2.0, svk: 0.0, regularizer: Regularizer::Linear }
    }
}

impl BarMesh {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.nodes < 2 {
            return bad(format!("bar needs at least 2 nodes, got {}", self.nodes));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return bad(format!("bar length must be positive, got {}", self.length));
        }
        // The 1/2-Hölder bound on the cell gradients only controls ξ^{−a}
        // from below when a ≥ 2.
        if !(self.exponent >= 2.0 && self.exponent.is_finite()) {
            return bad(format!("compression exponent must be ≥ 2, got {}", self.exponent));
        }
        if !(self.svk >= 0.0 && self.svk.is_finite()) {
            return bad(format!("svk weight must be ≥ 0, got {}", self.svk));
        }
        if let Regularizer::Nonlinear { q } = self.regularizer {
            if !(q >= 2.0 && q.is_finite()) {
                return bad(format!("nonlinear regularizer exponent q must be ≥ 2, got {q}"));
            }
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.length / self.nodes as f64
    }

    /// Reference positions `x_i = iΔx`, `i = 1..=m`.
    pub fn positions(&self) -> Vec<f64> {
        let dx = self.dx();
        (1..=self.nodes).map(|i| i as f64 * dx).collect()
    }

    /// The undeformed state `η(x) = x`.
    pub fn identity(&self) -> Vec<f64> {
        self.positions()
    }

    /// `η(x) = x + A sin(jπx/L)`.
    pub fn sine_perturbation(&self, amplitude: f64, wavenumber: f64) -> Vec<f64> {
        let scale = wavenumber * std::f64::consts::PI / self.length;
        self.positions().into_iter().map(|x| x + amplitude * (scale * x).sin()).collect()
    }

    fn e(&self, xi: f64) -> f64 {
        let s = xi * xi - 1.0;
        xi.powf(-self.exponent) + self.svk / 8.0 * s * s
    }

    fn de(&self, xi: f64) -> f64 {
        -self.exponent * xi.powf(-self.exponent - 1.0) + 0.5 * self.svk * xi * (xi * xi - 1.0)
    }

    fn dde(&self, xi: f64) -> f64 {
        let a = self.exponent;
        a * (a + 1.0) * xi.powf(-a - 2.0) + 0.5 * self.svk * (3.0 * xi * xi - 1.0)
    }

    /// Cell gradients `ξ_c`, `c = 0..m`, with the clamped node `η₀ = 0`.
    pub fn cell_gradients(&self, eta: &[f64]) -> Vec<f64> {
        let dx = self.dx();
        let mut prev = 0.0;
        eta.iter()
            .map(|&u| {
                let xi = (u - prev) / dx;
                prev = u;
                xi
            })
            .collect()
    }

    /// Lower bound `ε₀(K)` on every cell gradient of every state with
    /// `E(η) ≤ K`.
    ///
    /// The regularizer bounds `Σ Δx |D²η|² ≤ κK`, so by Cauchy–Schwarz the
    /// cell gradients are 1/2-Hölder: `|ξ_j − ξ_i| ≤ √(κK·|j − i|Δx)`. If
    /// the smallest gradient is `s`, at least `⌈m/2⌉` consecutive cells on
    /// one side of it satisfy `ξ_{i±j} ≤ s + √(κK·jΔx)`, hence
    /// `K ≥ G(s) = Σ_{j<⌈m/2⌉} Δx (s + √(κK·jΔx))^{−a}`. `G` is decreasing,
    /// so `s ≥ G⁻¹(K)`; the root is bracketed by bisection and the lower end
    /// of the bracket returned.
    pub fn determinant_lower_bound(&self, k: f64) -> f64 {
        if !(k > 0.0) {
            return f64::INFINITY;
        }
        if !k.is_finite() {
            return 0.0;
        }
        let dx = self.dx();
        let a = self.exponent;
        let half = self.nodes.div_ceil(2);
        let spread = self.regularizer.coercivity() * k * dx;
        let g = |s: f64| -> f64 {
            (0..half).map(|j| dx * (s + (spread * j as f64).sqrt()).powf(-a)).sum()
        };
        let mut lo = 0.0;
        let mut hi = (half as f64 * dx / k).powf(1.0 / a);
        while g(hi) > k {
            hi *= 2.0;
        }
        for _ in 0..EPS0_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if g(mid) > k {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// `max(0, −inf_{ξ ≥ p} e″(ξ))`. `e″` is convex in `ξ`, so the infimum
    /// sits at `max(p, ξ_c)` with `ξ_c` the unique critical point.
    fn negative_curvature_above(&self, p: f64) -> f64 {
        if self.svk == 0.0 {
            return 0.0;
        }
        let a = self.exponent;
        let xi_c = (a * (a + 1.0) * (a + 2.0) / (3.0 * self.svk)).powf(1.0 / (a + 4.0));
        let at = if p.is_finite() { p.max(xi_c) } else { return 0.0 };
        (-self.dde(at)).max(0.0)
    }
}

/// Central second-difference operator on the clamped grid, used for the
/// regularizer and the `ε`-dissipation term.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondDifference {
    nodes: usize,
    dx: f64,
}

impl SecondDifference {
    pub fn new(nodes: usize, dx: f64) -> Self {
        Self { nodes, dx }
    }

    /// `(u_{i+1} − 2u_i + u_{i−1})/Δx²` at interior nodes `i = 1..m−1`,
    /// with `u₀ = 0`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let inv = 1.0 / (self.dx * self.dx);
        (1..self.nodes)
            .map(|i| {
                let left = if i >= 2 { u[i - 2] } else { 0.0 };
                (u[i] - 2.0 * u[i - 1] + left) * inv
            })
            .collect()
    }

    /// `Σ Δx |D²u|²`.
    pub fn seminorm_sq(&self, u: &[f64]) -> f64 {
        self.apply(u).iter().map(|d| self.dx * d * d).sum()
    }

    /// Gradient of `½ Σ Δx |D²u|²`, i.e. `DᵀWD u`.
    pub fn half_seminorm_gradient(&self, u: &[f64]) -> Vec<f64> {
        let weights = vec![self.dx; self.nodes - 1];
        self.transpose_apply(&self.apply(u), &weights)
    }

    /// `Dᵀ (w ∘ r)` scattered back onto the unknowns.
    fn transpose_apply(&self, r: &[f64], w: &[f64]) -> Vec<f64> {
        let inv = 1.0 / (self.dx * self.dx);
        let mut out = vec![0.0; self.nodes];
        for (j, (&ri, &wi)) in r.iter().zip(w).enumerate() {
            let i = j + 1;
            let s = wi * ri * inv;
            out[i] += s;
            out[i - 1] -= 2.0 * s;
            if i >= 2 {
                out[i - 2] += s;
            }
        }
        out
    }

    /// Dense `DᵀWD` with per-node weights `w`.
    fn weighted_gram(&self, w: &[f64]) -> DMatrix<f64> {
        let inv = 1.0 / (self.dx * self.dx);
        let mut h = DMatrix::zeros(self.nodes, self.nodes);
        for (j, &wi) in w.iter().enumerate() {
            let i = j + 1;
            let mut stencil = vec![(i, inv), (i - 1, -2.0 * inv)];
            if i >= 2 {
                stencil.push((i - 2, inv));
            }
            for &(p, sp) in &stencil {
                for &(q, sq) in &stencil {
                    h[(p, q)] += wi * sp * sq;
                }
            }
        }
        h
    }

    /// Dense `DᵀWD` with `W = Δx`.
    pub fn matrix(&self) -> DMatrix<f64> {
        self.weighted_gram(&vec![self.dx; self.nodes - 1])
    }
}

/// The bar energy as an [`EnergyModel`] with `H`-weights `Δx`.
#[derive(Debug, Clone)]
pub struct BarModel {
    mesh: BarMesh,
    weights: Vec<f64>,
    second: SecondDifference,
}

impl BarModel {
    pub fn new(mesh: BarMesh) -> Result<Self> {
        mesh.validate()?;
        let dx = mesh.dx();
        Ok(Self {
            mesh,
            weights: vec![dx; mesh.nodes],
            second: SecondDifference::new(mesh.nodes, dx),
        })
    }

    pub fn mesh(&self) -> &BarMesh {
        &self.mesh
    }

    /// Elastic part `E₁ = Σ Δx e(ξ)`; `+∞` for any non-positive cell gradient.
    pub fn elastic_energy(&self, eta: &[f64]) -> f64 {
        let dx = self.mesh.dx();
        let mut total = 0.0;
        for xi in self.mesh.cell_gradients(eta) {
            if !(xi > 0.0) {
                return f64::INFINITY;
            }
            total += dx * self.mesh.e(xi);
        }
        total
    }

    /// Regularizer `E₂ = Σ_{interior} Δx φ(D²η)`.
    pub fn regularizer_energy(&self, eta: &[f64]) -> f64 {
        let dx = self.mesh.dx();
        self.second.apply(eta).iter().map(|&d| dx * self.mesh.regularizer.phi(d)).sum()
    }
}

impl EnergyModel for BarModel {
    fn name(&self) -> &str {
        "bar"
    }

    fn dim(&self) -> usize {
        self.mesh.nodes
    }

    fn value(&self, x: &[f64]) -> f64 {
        if x.len() != self.mesh.nodes || x.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        let e1 = self.elastic_energy(x);
        if e1.is_infinite() {
            return e1;
        }
        e1 + self.regularizer_energy(x)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mesh.nodes {
            return Err(Error::Dimension { expected: self.mesh.nodes, got: x.len() });
        }
        if !self.is_admissible(x) {
            return Err(Error::Inadmissible);
        }
        let m = self.mesh.nodes;
        let mut g = vec![0.0; m];
        // d/dη of Δx e((η_{c+1} − η_c)/Δx) is ±e′(ξ_c).
        for (c, xi) in self.mesh.cell_gradients(x).into_iter().enumerate() {
            let s = self.mesh.de(xi);
            g[c] += s;
            if c >= 1 {
                g[c - 1] -= s;
            }
        }
        let reg = self.mesh.regularizer;
        let d2 = self.second.apply(x);
        let dphi: Vec<f64> = d2.iter().map(|&d| reg.dphi(d)).collect();
        let reg_grad = self.second.transpose_apply(&dphi, &vec![self.mesh.dx(); m - 1]);
        for (gi, ri) in g.iter_mut().zip(reg_grad) {
            *gi += ri;
        }
        Ok(g)
    }

    fn is_admissible(&self, x: &[f64]) -> bool {
        x.len() == self.mesh.nodes
            && x.iter().all(|v| v.is_finite())
            && self.mesh.cell_gradients(x).iter().all(|&xi| xi > 0.0)
    }

    fn energy_min(&self) -> f64 {
        0.0
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Only the non-convex part of `e` matters: the regularizer is convex
    /// and `ξ ↦ ξ^{−a}` is convex. With `μ = max(0, −inf_{ξ ≥ ε₀(K)} e″)`,
    /// Taylor's theorem along the segment (cell gradients are affine in `η`,
    /// so they stay `≥ ε₀`) gives the defect `≥ −½μ Σ Δx |δξ|²`, and the
    /// inverse inequality `Σ Δx |δξ|² ≤ (4/Δx²)‖δ‖²_H` yields
    /// `C = 2μ/Δx²`.
    fn noncvx_constant(&self, k: f64) -> Result<SublevelBound> {
        let eps0 = self.mesh.determinant_lower_bound(k);
        let mu = self.mesh.negative_curvature_above(eps0);
        let dx = self.mesh.dx();
        Ok(SublevelBound { k, c: 2.0 * mu / (dx * dx) })
    }

    fn curvature_lower_bound(&self) -> f64 {
        let dx = self.mesh.dx();
        4.0 * self.mesh.negative_curvature_above(0.0) / (dx * dx)
    }

    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        if !self.is_admissible(x) {
            return None;
        }
        let m = self.mesh.nodes;
        let dx = self.mesh.dx();
        let mut h = DMatrix::zeros(m, m);
        for (c, xi) in self.mesh.cell_gradients(x).into_iter().enumerate() {
            let s = self.mesh.dde(xi) / dx;
            h[(c, c)] += s;
            if c >= 1 {
                h[(c - 1, c - 1)] += s;
                h[(c, c - 1)] -= s;
                h[(c - 1, c)] -= s;
            }
        }
        let reg = self.mesh.regularizer;
        let w: Vec<f64> = self.second.apply(x).iter().map(|&d| dx * reg.ddphi(d)).collect();
        h += self.second.weighted_gram(&w);
        Some(h)
    }

    fn dissipation(&self) -> Option<&SecondDifference> {
        Some(&self.second)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{check_gradient, noncvx_defect};
    use approx::assert_relative_eq;
    use rand::{Rng, RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(reg: Regularizer, svk: f64) -> BarModel {
        BarModel::new(BarMesh { regularizer: reg, svk, ..BarMesh::default() }).unwrap()
    }

    /// Monotone state whose log cell gradients follow a bounded random walk.
    fn random_state<R: Rng>(rng: &mut R, mesh: &BarMesh, spread: f64) -> Vec<f64> {
        let dx = mesh.dx();
        let mut walk: f64 = rng.random_range(-1.0..1.0);
        let mut eta = Vec::with_capacity(mesh.nodes);
        let mut pos = 0.0;
        for _ in 0..mesh.nodes {
            walk += rng.random_range(-0.15..0.15);
            pos += dx * (spread * walk.tanh()).exp();
            eta.push(pos);
        }
        eta
    }

    /// `ξ(x) = s·exp(a sin(kπx + θ))` sampled at cell midpoints.
    fn smooth_state<R: Rng>(rng: &mut R, mesh: &BarMesh) -> Vec<f64> {
        let dx = mesh.dx();
        let scale: f64 = rng.random_range(0.6..1.6);
        let amp: f64 = rng.random_range(0.0..0.8);
        let k = f64::from(rng.random_range(1..=3u8));
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let mut pos = 0.0;
        (0..mesh.nodes)
            .map(|c| {
                let x = (c as f64 + 0.5) * dx;
                pos += dx * scale * (amp * (k * std::f64::consts::PI * x + theta).sin()).exp();
                pos
            })
            .collect()
    }

    #[test]
    fn identity_and_stretch_energies() {
        let m = model(Regularizer::Linear, 0.0);
        let id = m.mesh().identity();
        assert_relative_eq!(m.value(&id), 1.0, epsilon = 1e-12);
        let stretch: Vec<f64> = id.iter().map(|x| 2.0 * x).collect();
        assert_relative_eq!(m.value(&stretch), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn inverted_cell_is_infinite() {
        let m = model(Regularizer::Linear, 0.0);
        let mut eta = m.mesh().identity();
        eta[10] = eta[9];
        assert_eq!(m.value(&eta), f64::INFINITY);
        assert!(!m.is_admissible(&eta));
        assert_eq!(m.gradient(&eta), Err(Error::Inadmissible));
        eta[10] = eta[9] - 0.01;
        assert_eq!(m.value(&eta), f64::INFINITY);
    }

    #[test]
    fn identity_gradient_is_boundary_traction() {
        let m = model(Regularizer::Linear, 0.0);
        let g = m.gradient(&m.mesh().identity()).unwrap();
        for gi in &g[..g.len() - 1] {
            assert!(gi.abs() < 1e-9, "{gi}");
        }
        assert_relative_eq!(g[g.len() - 1], -2.0, epsilon = 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for reg in [Regularizer::Linear, Regularizer::Nonlinear { q: 3.0 }] {
            for svk in [0.0, 1.5] {
                let m = model(reg, svk);
                // The cubic part of the q = 3 regularizer leaves a central
                // difference remainder of order ε²/Δx⁵; probe with a step
                // that perturbs D²η by 1e−5 instead.
                let eps = match reg {
                    Regularizer::Linear => 1e-5,
                    Regularizer::Nonlinear { .. } => 1e-5 * m.mesh().dx().powi(2),
                };
                for _ in 0..25 {
                    let eta = random_state(&mut rng, m.mesh(), 0.5);
                    let err = check_gradient(&m, &eta, eps).unwrap();
                    assert!(err <= 1e-6, "{reg:?} svk={svk}: {err}");
                }
            }
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for reg in [Regularizer::Linear, Regularizer::Nonlinear { q: 3.0 }] {
            let m = BarModel::new(BarMesh { nodes: 8, regularizer: reg, svk: 0.7, ..BarMesh::default() })
                .unwrap();
            let eta = random_state(&mut rng, m.mesh(), 0.4);
            let h = m.hessian(&eta).unwrap();
            let eps = 1e-6;
            for j in 0..8 {
                let mut p = eta.clone();
                p[j] += eps;
                let gp = m.gradient(&p).unwrap();
                p[j] -= 2.0 * eps;
                let gm = m.gradient(&p).unwrap();
                for i in 0..8 {
                    let fd = (gp[i] - gm[i]) / (2.0 * eps);
                    assert!((fd - h[(i, j)]).abs() <= 1e-4 * (1.0 + h[(i, j)].abs()), "{reg:?} ({i},{j}) {fd} vs {}", h[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn quadrature_weight_scaling() {
        // Same ξ-field on a mesh of twice the length doubles Δx and E₁.
        let short = BarModel::new(BarMesh::default()).unwrap();
        let long = BarModel::new(BarMesh { length: 2.0, ..BarMesh::default() }).unwrap();
        let s: Vec<f64> = short.mesh().positions().iter().map(|x| 1.5 * x).collect();
        let l: Vec<f64> = long.mesh().positions().iter().map(|x| 1.5 * x).collect();
        assert_relative_eq!(long.elastic_energy(&l), 2.0 * short.elastic_energy(&s), epsilon = 1e-12);
    }

    #[test]
    fn clamped_translation_changes_energy() {
        let m = model(Regularizer::Linear, 0.0);
        let id = m.mesh().identity();
        let shifted: Vec<f64> = id.iter().map(|x| x + 0.01).collect();
        // Only the first cell and the first second difference see the shift.
        assert!((m.value(&shifted) - m.value(&id)).abs() > 1e-3);
    }

    #[test]
    fn refinement_converges() {
        use gauss_quad::GaussLegendre;
        use std::f64::consts::PI;
        let rule = GaussLegendre::new(std::num::NonZeroUsize::new(64).unwrap());
        let exact = rule.integrate(0.0, 1.0, |x| (1.0 + 0.1 * PI * (PI * x).cos()).powi(-2))
            + 0.5 * rule.integrate(0.0, 1.0, |x| (0.1 * PI * PI * (PI * x).sin()).powi(2));
        let mut errors = Vec::new();
        for nodes in [16, 32, 64, 128] {
            let m = BarModel::new(BarMesh { nodes, ..BarMesh::default() }).unwrap();
            let eta: Vec<f64> =
                m.mesh().positions().iter().map(|x| x + 0.1 * (PI * x).sin()).collect();
            errors.push((m.value(&eta) - exact).abs());
        }
        for pair in errors.windows(2) {
            assert!(pair[1] <= 0.6 * pair[0], "{errors:?}");
        }
    }

    #[test]
    fn determinant_bound_uniform_states() {
        let mesh = BarMesh::default();
        let eps0 = mesh.determinant_lower_bound(4.0);
        assert!(eps0 > 0.0 && eps0 <= 0.5, "{eps0}");
    }

    #[test]
    fn determinant_bound_holds_on_sampled_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let m = model(Regularizer::Linear, 0.0);
        let mesh = *m.mesh();
        for &k in &[1.5, 4.0, 20.0] {
            let eps0 = mesh.determinant_lower_bound(k);
            let mut hits = 0;
            for i in 0..4000 {
                let eta = if i % 2 == 0 {
                    smooth_state(&mut rng, &mesh)
                } else {
                    random_state(&mut rng, &mesh, 1.5)
                };
                if m.value(&eta) > k {
                    continue;
                }
                hits += 1;
                let min_xi = mesh.cell_gradients(&eta).into_iter().fold(f64::INFINITY, f64::min);
                assert!(min_xi >= eps0, "K = {k}: {min_xi} < {eps0}");
            }
            assert!(hits > 50, "too few samples in sublevel {k}: {hits}");
        }
    }

    #[test]
    fn convex_without_svk() {
        let m = model(Regularizer::Linear, 0.0);
        assert_eq!(m.noncvx_constant(10.0).unwrap().c, 0.0);
        assert_eq!(m.curvature_lower_bound(), 0.0);
    }

    #[test]
    fn pairwise_noncvx_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for reg in [Regularizer::Linear, Regularizer::Nonlinear { q: 3.0 }] {
            let m = model(reg, 2.0);
            let k = 30.0;
            let c = m.noncvx_constant(k).unwrap().c;
            let mut pairs = 0;
            while pairs < 1000 {
                let x = random_state(&mut rng, m.mesh(), 1.2);
                let y = random_state(&mut rng, m.mesh(), 1.2);
                if m.value(&x) > k || m.value(&y) > k {
                    continue;
                }
                pairs += 1;
                let defect = noncvx_defect(&m, &x, &y, c).unwrap();
                assert!(defect >= -1e-9 * (1.0 + m.value(&y)), "{defect}");
            }
        }
    }

    #[test]
    fn validation() {
        assert!(BarMesh { nodes: 1, ..BarMesh::default() }.validate().is_err());
        assert!(BarMesh { exponent: 1.0, ..BarMesh::default() }.validate().is_err());
        assert!(BarMesh { regularizer: Regularizer::Nonlinear { q: 1.5 }, ..BarMesh::default() }
            .validate()
            .is_err());
        assert!(BarMesh { svk: -1.0, ..BarMesh::default() }.validate().is_err());
    }

    #[test]
    fn second_difference_gradient() {
        let op = SecondDifference::new(6, 0.2);
        let u = [0.3, -0.1, 0.7, 0.2, 0.0, 0.5];
        let g = op.half_seminorm_gradient(&u);
        let hu = op.matrix() * nalgebra::DVector::from_column_slice(&u);
        for i in 0..6 {
            assert_relative_eq!(g[i], hu[i], epsilon = 1e-9);
        }
        let eps = 1e-6;
        for i in 0..6 {
            let mut p = u;
            p[i] += eps;
            let plus = 0.5 * op.seminorm_sq(&p);
            p[i] -= 2.0 * eps;
            let minus = 0.5 * op.seminorm_sq(&p);
            assert!(((plus - minus) / (2.0 * eps) - g[i]).abs() < 1e-4 * (1.0 + g[i].abs()));
        }
    }
}
