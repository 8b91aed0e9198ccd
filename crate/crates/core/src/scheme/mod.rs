//! The two-scale driver on the grid `t_k^ℓ = ℓh + kτ`, `h = Nτ`, `T = Mh`.
//!
//! Windows are chained by `η_0^{ℓ+1} = η_N^ℓ`, so the trajectory is stored
//! as `MN + 1` nodal states indexed by `j = ℓN + k`.

pub mod forcing;

pub use forcing::{Forcing, TimeProfile};

use serde::{Deserialize, Serialize};

use crate::energy::EnergyModel;
use crate::minimize::{solve_step, IncrementalProblem, SolverSettings};
use crate::{Error, Result};

/// Relative tolerance for `h/τ` and `T/h` to count as integers.
const DIVISIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    pub tau: f64,
    /// `N = h/τ`.
    pub steps_per_window: usize,
    /// `M = T/h`.
    pub windows: usize,
    pub dissipation: f64,
    pub save_stride: usize,
}

fn ratio(num: f64, den: f64, what: &str) -> Result<usize> {
    let r = num / den;
    let n = r.round();
    if !(n >= 1.0) || (r - n).abs() > DIVISIBILITY_TOL * n {
        return Err(Error::InvalidArgument(format!("{what} must be a positive integer, got {r}")));
    }
    Ok(n as usize)
}

impl SchemeParams {
    pub fn new(tau: f64, steps_per_window: usize, windows: usize) -> Result<Self> {
        let p = Self { tau, steps_per_window, windows, dissipation: 0.0, save_stride: 1 };
        p.validate()?;
        Ok(p)
    }

    /// Builds the grid from `τ`, `h` and `T`, rejecting non-integer `h/τ` or
    /// `T/h`.
    pub fn from_times(tau: f64, h: f64, horizon: f64) -> Result<Self> {
        if !(tau > 0.0 && h > 0.0 && horizon > 0.0) {
            return Err(Error::InvalidArgument("tau, h and T must be positive".into()));
        }
        if tau > h * (1.0 + DIVISIBILITY_TOL) {
            return Err(Error::InvalidArgument(format!("need tau ≤ h, got tau = {tau}, h = {h}")));
        }
        Self::new(tau, ratio(h, tau, "h/tau")?, ratio(horizon, h, "T/h")?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument("tau must be positive".into()));
        }
        if self.steps_per_window == 0 || self.windows == 0 {
            return Err(Error::InvalidArgument("N and M must be positive".into()));
        }
        if !(self.dissipation >= 0.0) {
            return Err(Error::InvalidArgument("dissipation must be ≥ 0".into()));
        }
        if self.save_stride == 0 {
            return Err(Error::InvalidArgument("save_stride must be positive".into()));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        self.steps_per_window as f64 * self.tau
    }

    pub fn horizon(&self) -> f64 {
        self.total_steps() as f64 * self.tau
    }

    pub fn total_steps(&self) -> usize {
        self.steps_per_window * self.windows
    }

    /// `t_k^ℓ`.
    pub fn time(&self, ell: usize, k: usize) -> f64 {
        self.node_time(ell * self.steps_per_window + k)
    }

    pub fn node_time(&self, j: usize) -> f64 {
        j as f64 * self.tau
    }
}

/// Per-step solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub strongly_convex: bool,
    pub curvature_escapes: usize,
}

/// All nodal states of one run plus per-step diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    params: SchemeParams,
    dim: usize,
    eta_star: Vec<f64>,
    states: Vec<f64>,
    forcing: Vec<f64>,
    records: Vec<StepRecord>,
    grad_tol: f64,
}

impl Trajectory {
    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eta_star(&self) -> &[f64] {
        &self.eta_star
    }

    /// Tolerance the solver was asked to reach.
    pub fn grad_tol(&self) -> f64 {
        self.grad_tol
    }

    pub fn horizon(&self) -> f64 {
        self.params.horizon()
    }

    /// Number of nodal states, `MN + 1`.
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn index(&self, ell: usize, k: usize) -> usize {
        assert!(ell < self.params.windows && k <= self.params.steps_per_window);
        ell * self.params.steps_per_window + k
    }

    pub fn time(&self, ell: usize, k: usize) -> f64 {
        self.params.time(ell, k)
    }

    /// State at global node `j`.
    pub fn node(&self, j: usize) -> &[f64] {
        &self.states[j * self.dim..(j + 1) * self.dim]
    }

    /// `η_k^ℓ`.
    pub fn state(&self, ell: usize, k: usize) -> &[f64] {
        self.node(self.index(ell, k))
    }

    pub fn final_state(&self) -> &[f64] {
        self.node(self.len() - 1)
    }

    /// `(η_k^ℓ − η_{k−1}^ℓ)/τ` for `1 ≤ k ≤ N`.
    pub fn velocity(&self, ell: usize, k: usize) -> Vec<f64> {
        assert!(k >= 1);
        let j = self.index(ell, k);
        self.node(j)
            .iter()
            .zip(self.node(j - 1))
            .map(|(a, b)| (a - b) / self.params.tau)
            .collect()
    }

    /// The velocity the step `(ℓ, k)` compares against: the quotient of the
    /// previous window, or `η_*` in window 0.
    pub fn previous_window_velocity(&self, ell: usize, k: usize) -> Vec<f64> {
        if ell == 0 {
            self.eta_star.clone()
        } else {
            self.velocity(ell - 1, k)
        }
    }

    /// `f_k^ℓ` as used by the solver.
    pub fn forcing_average(&self, ell: usize, k: usize) -> &[f64] {
        let s = self.index(ell, k) - 1;
        &self.forcing[s * self.dim..(s + 1) * self.dim]
    }

    pub fn record(&self, ell: usize, k: usize) -> &StepRecord {
        &self.records[self.index(ell, k) - 1]
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    /// Interval index `j` with `t ∈ [t_j, t_{j+1})`, clamped to the last
    /// interval.
    fn interval(&self, t: f64) -> Result<usize> {
        let horizon = self.horizon();
        if !(t >= 0.0 && t <= horizon) {
            return Err(Error::OutOfRange { t, horizon });
        }
        let steps = self.params.total_steps();
        let mut j = ((t / self.params.tau).floor() as usize).min(steps - 1);
        while j > 0 && t < self.params.node_time(j) {
            j -= 1;
        }
        while j + 1 < steps && t >= self.params.node_time(j + 1) {
            j += 1;
        }
        Ok(j)
    }

    /// `η̄(t) = η_k^ℓ` on `[t_{k−1}^ℓ, t_k^ℓ)`, and `η_N^{M−1}` at `t = T`.
    pub fn eval_piecewise_constant(&self, t: f64) -> Result<Vec<f64>> {
        if t == self.horizon() {
            return Ok(self.final_state().to_vec());
        }
        Ok(self.node(self.interval(t)? + 1).to_vec())
    }

    /// Linear interpolation of the nodal states.
    pub fn eval_piecewise_affine(&self, t: f64) -> Result<Vec<f64>> {
        let j = self.interval(t)?;
        let theta = ((t - self.params.node_time(j)) / self.params.tau).clamp(0.0, 1.0);
        Ok(self
            .node(j)
            .iter()
            .zip(self.node(j + 1))
            .map(|(a, b)| a + theta * (b - a))
            .collect())
    }
}

/// Runs the scheme from `η_0^0 = η0` with initial velocity `η_*`.
///
/// A line search that runs into the boundary of the admissible set is
/// reported as [`Error::Collision`] with the failing step. Steps whose
/// solver stopped short of the tolerance are kept and flagged in the
/// [`StepRecord`].
pub fn run(
    model: &dyn EnergyModel,
    params: &SchemeParams,
    eta0: &[f64],
    eta_star: &[f64],
    forcing: &Forcing,
    settings: &SolverSettings,
) -> Result<Trajectory> {
    params.validate()?;
    settings.validate()?;
    let dim = model.dim();
    for v in [eta0, eta_star] {
        if v.len() != dim {
            return Err(Error::Dimension { expected: dim, got: v.len() });
        }
    }
    forcing.check_dim(dim)?;
    if !model.is_admissible(eta0) || !model.value(eta0).is_finite() {
        return Err(Error::Inadmissible);
    }
    let (tau, h, n) = (params.tau, params.h(), params.steps_per_window);
    let steps = params.total_steps();
    let mut states = Vec::with_capacity((steps + 1) * dim);
    states.extend_from_slice(eta0);
    let mut forcing_avgs = Vec::with_capacity(steps * dim);
    let mut records = Vec::with_capacity(steps);

    for ell in 0..params.windows {
        for k in 1..=n {
            let j = ell * n + k;
            let prev = states[(j - 1) * dim..j * dim].to_vec();
            let v_prev: Vec<f64> = if ell == 0 {
                eta_star.to_vec()
            } else {
                let a = &states[(j - n) * dim..(j - n + 1) * dim];
                let b = &states[(j - n - 1) * dim..(j - n) * dim];
                a.iter().zip(b).map(|(x, y)| (x - y) / tau).collect()
            };
            let f = forcing.average(k, ell, tau, h, dim);
            let problem =
                IncrementalProblem::new(model, &prev, &v_prev, &f, tau, h, params.dissipation)?;
            let out = solve_step(&problem, settings).map_err(|e| match e {
                Error::DomainExhausted => Error::Collision { k, ell },
                other => other,
            })?;
            states.extend_from_slice(&out.state);
            forcing_avgs.extend_from_slice(&f);
            records.push(StepRecord {
                iterations: out.iterations,
                residual: out.residual,
                converged: out.converged,
                strongly_convex: out.strongly_convex,
                curvature_escapes: out.curvature_escapes,
            });
        }
    }

    Ok(Trajectory {
        params: *params,
        dim,
        eta_star: eta_star.to_vec(),
        states,
        forcing: forcing_avgs,
        records,
        grad_tol: settings.tolerance(tau),
    })
}
