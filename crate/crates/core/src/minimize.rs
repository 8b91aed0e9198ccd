//! The per-step minimization problem and its Newton/Armijo solver.
//!
//! Each step of the scheme minimizes
//!
//! ```text
//! J(η) = ‖η − η_prev − τ v_prev‖²_H / (2τh)
//!      + ε ‖R(η − η_prev)‖²_H / (2τ)
//!      + E(η) − ⟨f, η⟩_H
//! ```
//!
//! where `v_prev` is the velocity quotient of the previous window at the same
//! sub-step (or the initial velocity in window 0) and `R` the optional
//! second-difference operator of the model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::energy::EnergyModel;
use crate::{dual_norm, inner, norm_sq, Error, Result};

/// Smallest line-search step before giving up.
const MIN_STEP: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    Previous,
    #[default]
    Extrapolated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Residual tolerance; `None` resolves to `min(1e−10, τ³)`.
    pub grad_tol: Option<f64>,
    pub max_iters: usize,
    pub armijo_slope: f64,
    pub backtrack_factor: f64,
    pub initial_guess: InitialGuess,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            grad_tol: None,
            max_iters: 500,
            armijo_slope: 1e-4,
            backtrack_factor: 0.5,
            initial_guess: InitialGuess::Extrapolated,
        }
    }
}

impl SolverSettings {
    pub fn tolerance(&self, tau: f64) -> f64 {
        self.grad_tol.unwrap_or_else(|| f64::min(1e-10, tau.powi(3)))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if let Some(tol) = self.grad_tol {
            if !(tol > 0.0) {
                return bad("grad_tol must be positive");
            }
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        if !(self.armijo_slope > 0.0 && self.armijo_slope < 1.0) {
            return bad("armijo_slope must lie in (0, 1)");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        Ok(())
    }
}

/// One step of the scheme.
#[derive(Clone, Copy)]
pub struct IncrementalProblem<'a> {
    model: &'a dyn EnergyModel,
    prev: &'a [f64],
    prev_velocity: &'a [f64],
    forcing: &'a [f64],
    tau: f64,
    h: f64,
    dissipation: f64,
}

impl<'a> IncrementalProblem<'a> {
    pub fn new(
        model: &'a dyn EnergyModel,
        prev: &'a [f64],
        prev_velocity: &'a [f64],
        forcing: &'a [f64],
        tau: f64,
        h: f64,
        dissipation: f64,
    ) -> Result<Self> {
        let m = model.dim();
        for v in [prev, prev_velocity, forcing] {
            if v.len() != m {
                return Err(Error::Dimension { expected: m, got: v.len() });
            }
        }
        if !(tau > 0.0 && h > 0.0 && tau <= h * (1.0 + 1e-12)) {
            return Err(Error::InvalidArgument(format!("need 0 < τ ≤ h, got τ = {tau}, h = {h}")));
        }
        if !(dissipation >= 0.0) {
            return Err(Error::InvalidArgument("dissipation must be ≥ 0".into()));
        }
        if dissipation > 0.0 && model.dissipation().is_none() {
            return Err(Error::InvalidArgument(format!(
                "model '{}' has no regularizer for the dissipation term",
                model.name()
            )));
        }
        Ok(Self { model, prev, prev_velocity, forcing, tau, h, dissipation })
    }

    pub fn model(&self) -> &dyn EnergyModel {
        self.model
    }

    /// `η − η_prev − τ v_prev`.
    fn kinetic_offset(&self, eta: &[f64]) -> Vec<f64> {
        eta.iter()
            .zip(self.prev)
            .zip(self.prev_velocity)
            .map(|((e, p), v)| e - p - self.tau * v)
            .collect()
    }

    fn increment(&self, eta: &[f64]) -> Vec<f64> {
        eta.iter().zip(self.prev).map(|(e, p)| e - p).collect()
    }

    pub fn value(&self, eta: &[f64]) -> f64 {
        let energy = self.model.value(eta);
        if !energy.is_finite() {
            return f64::INFINITY;
        }
        let w = self.model.weights();
        let kinetic = norm_sq(w, &self.kinetic_offset(eta)) / (2.0 * self.tau * self.h);
        let dissipation = match self.model.dissipation() {
            Some(op) if self.dissipation > 0.0 => {
                self.dissipation * op.seminorm_sq(&self.increment(eta)) / (2.0 * self.tau)
            }
            _ => 0.0,
        };
        kinetic + dissipation + energy - inner(w, self.forcing, eta)
    }

    /// Vanishes exactly when the discrete equation
    /// `W((η − η_prev)/τ − v_prev)/h + ε-term + DE(η) = W f` holds.
    pub fn gradient(&self, eta: &[f64]) -> Result<Vec<f64>> {
        let mut g = self.model.gradient(eta)?;
        let w = self.model.weights();
        let scale = 1.0 / (self.tau * self.h);
        for (i, d) in self.kinetic_offset(eta).into_iter().enumerate() {
            g[i] += w[i] * (d * scale - self.forcing[i]);
        }
        if let Some(op) = self.model.dissipation().filter(|_| self.dissipation > 0.0) {
            let r = op.half_seminorm_gradient(&self.increment(eta));
            for (gi, ri) in g.iter_mut().zip(r) {
                *gi += self.dissipation / self.tau * ri;
            }
        }
        Ok(g)
    }

    pub fn hessian(&self, eta: &[f64]) -> Option<DMatrix<f64>> {
        let mut h = self.model.hessian(eta)?;
        let scale = 1.0 / (self.tau * self.h);
        for (i, w) in self.model.weights().iter().enumerate() {
            h[(i, i)] += w * scale;
        }
        if let Some(op) = self.model.dissipation().filter(|_| self.dissipation > 0.0) {
            h += op.matrix() * (self.dissipation / self.tau);
        }
        Some(h)
    }

    /// Whether the kinetic curvature `1/(τh)` dominates the model's global
    /// negative curvature, making `J` strictly convex on the (convex)
    /// admissible set so that any critical point is the unique global
    /// minimizer.
    pub fn strongly_convex(&self) -> bool {
        1.0 / (self.tau * self.h) > self.model.curvature_lower_bound()
    }

    pub fn initial_guess(&self, mode: InitialGuess) -> Vec<f64> {
        match mode {
            InitialGuess::Previous => self.prev.to_vec(),
            InitialGuess::Extrapolated => self
                .prev
                .iter()
                .zip(self.prev_velocity)
                .map(|(p, v)| p + self.tau * v)
                .collect(),
        }
    }
}

/// Result of [`solve_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: Vec<f64>,
    pub iterations: usize,
    /// `‖∇J‖` in the metric dual to `H`.
    pub residual: f64,
    pub value: f64,
    pub converged: bool,
    pub strongly_convex: bool,
    /// Times the solver left a critical point along a negative-curvature
    /// direction.
    pub curvature_escapes: usize,
}

enum Search {
    Accepted(Vec<f64>, f64),
    Stalled,
    /// The last trial left the admissible set.
    Boundary,
}

fn armijo(
    p: &IncrementalProblem<'_>,
    s: &SolverSettings,
    x: &[f64],
    jx: f64,
    slope: f64,
    dir: &[f64],
) -> Search {
    let mut alpha = 1.0;
    let roundoff = 8.0 * f64::EPSILON * jx.abs().max(1.0);
    loop {
        let trial: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + alpha * d).collect();
        let jt = p.value(&trial);
        if jt.is_finite() && jt <= jx + s.armijo_slope * alpha * slope + roundoff {
            return Search::Accepted(trial, jt);
        }
        alpha *= s.backtrack_factor;
        if alpha < MIN_STEP {
            return if p.model.is_admissible(&trial) { Search::Stalled } else { Search::Boundary };
        }
    }
}

/// Newton step, shifted by multiples of `W` until the matrix factors.
/// `scale` sets the size of the first shift.
fn newton_direction(h: &DMatrix<f64>, g: &[f64], weights: &[f64], scale: f64) -> Vec<f64> {
    let rhs = DVector::from_column_slice(g);
    let mut shift = 0.0;
    loop {
        let mut shifted = h.clone();
        for (i, w) in weights.iter().enumerate() {
            shifted[(i, i)] += shift * w;
        }
        if let Some(chol) = shifted.cholesky() {
            return (-chol.solve(&rhs)).iter().copied().collect();
        }
        shift = if shift == 0.0 { 1e-6 * scale } else { shift * 10.0 };
    }
}

/// Tries to leave a critical point along the most negative curvature
/// direction of `J`. Returns the lower of the two one-sided trial points.
fn escape_saddle(
    p: &IncrementalProblem<'_>,
    h: &DMatrix<f64>,
    x: &[f64],
    jx: f64,
) -> Option<(Vec<f64>, f64)> {
    let eig = h.clone().symmetric_eigen();
    let (idx, lambda) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if lambda >= -1e-12 * scale.max(1.0) {
        return None;
    }
    let dir = eig.eigenvectors.column(idx).into_owned();
    let start = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut best: Option<(Vec<f64>, f64)> = None;
    for sign in [1.0, -1.0] {
        let mut t = start;
        for _ in 0..80 {
            let trial: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, d)| a + sign * t * d).collect();
            let jt = p.value(&trial);
            if jt.is_finite() && jt < jx {
                if best.as_ref().is_none_or(|(_, jb)| jt < *jb) {
                    best = Some((trial, jt));
                }
                break;
            }
            t *= 0.5;
        }
    }
    best
}

/// Minimizes the incremental functional.
///
/// Newton with Armijo backtracking when the model has a Hessian, otherwise
/// gradient descent in the `H` metric. Points with infinite value count as
/// line-search failures. Critical points with negative curvature are left
/// along the most negative eigen-direction.
///
/// Below the strong-convexity threshold the configured initial guess is
/// used (falling back to `η_prev` if it does not lower `J`). Above it the
/// critical point reached depends on the start, so descents from both
/// `η_prev` and the extrapolated guess are run and the lower value is kept;
/// this never ends above `J(η_prev)`.
///
/// Returns the best iterate with `converged = false` when `max_iters` runs
/// out or the line search stalls at roundoff level, and
/// [`Error::DomainExhausted`] when the line search shrinks to nothing
/// against the boundary of the admissible set.
pub fn solve_step(p: &IncrementalProblem<'_>, s: &SolverSettings) -> Result<StepOutcome> {
    let j_prev = p.value(p.prev);
    if !j_prev.is_finite() {
        return Err(Error::Inadmissible);
    }
    let guess = p.initial_guess(s.initial_guess);
    let j_guess = p.value(&guess);
    let guess_ok = j_guess.is_finite() && j_guess <= j_prev;
    let extrapolated = p.initial_guess(InitialGuess::Extrapolated);
    if p.strongly_convex() || extrapolated == p.prev {
        return if guess_ok {
            descend(p, s, guess, j_guess)
        } else {
            descend(p, s, p.prev.to_vec(), j_prev)
        };
    }
    let starts = [(p.prev.to_vec(), j_prev), (extrapolated, f64::NAN)];
    let mut best: Option<StepOutcome> = None;
    let mut first_err = None;
    let mut iterations = 0;
    let mut escapes = 0;
    for (x, jx) in starts {
        let jx = if jx.is_nan() { p.value(&x) } else { jx };
        if !jx.is_finite() {
            continue;
        }
        match descend(p, s, x, jx) {
            Ok(out) => {
                iterations += out.iterations;
                escapes += out.curvature_escapes;
                if best.as_ref().is_none_or(|b| out.value < b.value) {
                    best = Some(out);
                }
            }
            Err(e) => first_err = first_err.or(Some(e)),
        }
    }
    match best {
        Some(out) => Ok(StepOutcome { iterations, curvature_escapes: escapes, ..out }),
        None => Err(first_err.unwrap_or(Error::DomainExhausted)),
    }
}

fn descend(p: &IncrementalProblem<'_>, s: &SolverSettings, mut x: Vec<f64>, mut jx: f64) -> Result<StepOutcome> {
    let tol = s.tolerance(p.tau);
    let weights = p.model.weights();
    let strongly_convex = p.strongly_convex();
    let mut escapes = 0;
    let mut iterations = 0;
    let outcome = |state: Vec<f64>, value: f64, residual: f64, iterations, converged, escapes| {
        StepOutcome {
            state,
            iterations,
            residual,
            value,
            converged,
            strongly_convex,
            curvature_escapes: escapes,
        }
    };

    loop {
        let g = p.gradient(&x)?;
        let residual = dual_norm(weights, &g);
        let hess = p.hessian(&x);
        if residual <= tol {
            if let Some(h) = hess.as_ref().filter(|_| !strongly_convex) {
                if let Some((y, jy)) = escape_saddle(p, h, &x, jx) {
                    x = y;
                    jx = jy;
                    escapes += 1;
                    continue;
                }
            }
            return Ok(outcome(x, jx, residual, iterations, true, escapes));
        }
        if iterations >= s.max_iters {
            return Ok(outcome(x, jx, residual, iterations, false, escapes));
        }
        iterations += 1;

        let dir: Vec<f64> = match &hess {
            Some(h) => newton_direction(h, &g, weights, 1.0 / (p.tau * p.h)),
            None => {
                let step = p.tau * p.h;
                g.iter().zip(weights).map(|(gi, w)| -step * gi / w).collect()
            }
        };
        let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        match armijo(p, s, &x, jx, slope, &dir) {
            Search::Accepted(y, jy) => {
                x = y;
                jx = jy;
            }
            Search::Stalled => return Ok(outcome(x, jx, residual, iterations, false, escapes)),
            Search::Boundary => return Err(Error::DomainExhausted),
        }
    }
}
