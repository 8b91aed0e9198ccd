//! Stability certificates, error metrics and convergence-rate fits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::EnergyModel;
use crate::minimize::SolverSettings;
use crate::reference::{solve_limit_rk4, solve_time_delayed, ReferenceSettings};
use crate::scheme::{run, Forcing, SchemeParams, Trajectory};
use crate::{inner, norm_sq, Error, Result};

/// Both sides of the discrete energy estimate on one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowBound {
    pub ell: usize,
    /// `max_k (E(η_k^ℓ) + (1/2N) Σ_{i≤k} ‖v_i^ℓ‖²_H)`.
    pub lhs: f64,
    /// `(E(η₀) + ½‖η_*‖²_H + ‖f‖²_{L²(0,T;H)}) · exp(4(1 + 2Cτ)h(ℓ + 1))`.
    pub rhs: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCertificate {
    /// Initial data plus forcing, the factor in front of the exponential.
    pub base: f64,
    /// Sublevel the constant was computed on.
    pub sublevel: f64,
    pub c: f64,
    /// `h(1 + 2Cτ) ≤ 1/2`, the step restriction of the two-scale Gronwall
    /// argument.
    pub step_condition: bool,
    pub windows: Vec<WindowBound>,
    pub min_margin: f64,
}

impl StabilityCertificate {
    pub fn holds(&self) -> bool {
        self.min_margin >= 0.0
    }
}

fn growth(base: f64, c: f64, tau: f64, t: f64) -> f64 {
    if base == 0.0 {
        return 0.0;
    }
    base * (4.0 * (1.0 + 2.0 * c * tau) * t).exp()
}

/// Evaluates the stability estimate window by window.
///
/// The constant `C` depends on a sublevel `K` that must contain every
/// state, while the bound on the states depends on `C`. One enlargement
/// round is used: `C₀ = C(base)`, then `K = max(rhs_final(C₀), max E)` and
/// `C = C(K)`.
pub fn stability_certificate(
    traj: &Trajectory,
    model: &dyn EnergyModel,
    eta0: &[f64],
    forcing: &Forcing,
) -> Result<StabilityCertificate> {
    let p = traj.params();
    let (tau, h, n) = (p.tau, p.h(), p.steps_per_window);
    let w = model.weights();
    let base = model.value(eta0)
        + 0.5 * norm_sq(w, traj.eta_star())
        + forcing.l2_norm_sq(w, 0.0, p.horizon());
    if !base.is_finite() {
        return Err(Error::Inadmissible);
    }

    let mut lhs = Vec::with_capacity(p.windows);
    let mut max_energy: f64 = model.value(eta0);
    for ell in 0..p.windows {
        let mut kinetic = 0.0;
        let mut worst = f64::NEG_INFINITY;
        for k in 1..=n {
            kinetic += norm_sq(w, &traj.velocity(ell, k));
            let e = model.value(traj.state(ell, k));
            max_energy = max_energy.max(e);
            worst = worst.max(e + kinetic / (2.0 * n as f64));
        }
        lhs.push(worst);
    }

    let c0 = model.noncvx_constant(base)?.c;
    let sublevel = growth(base, c0, tau, p.horizon() + h).max(max_energy);
    let c = model.noncvx_constant(sublevel)?.c;
    let windows: Vec<WindowBound> = lhs
        .into_iter()
        .enumerate()
        .map(|(ell, lhs)| {
            let rhs = growth(base, c, tau, h * (ell + 1) as f64);
            WindowBound { ell, lhs, rhs, margin: rhs - lhs }
        })
        .collect();
    let min_margin = windows.iter().map(|b| b.margin).fold(f64::INFINITY, f64::min);
    Ok(StabilityCertificate {
        base,
        sublevel,
        c,
        step_condition: h * (1.0 + 2.0 * c * tau) <= 0.5,
        windows,
        min_margin,
    })
}

/// Largest violation of the per-step energy inequality
///
/// ```text
/// (τ/2h)‖v‖² + E(η_k^ℓ) ≤ (τ/2h)‖v_prev‖² + E(η_{k−1}^ℓ) + τ⟨f_k^ℓ, v⟩_H + C τ²‖v‖²
/// ```
///
/// relative to the slack `r·‖v‖_H·τ` that a solver residual `r` can cause.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyInequalityReport {
    pub steps: usize,
    /// `max (lhs − rhs)` over all steps.
    pub max_excess: f64,
    /// `max (lhs − rhs) / (grad_tol ‖v‖ τ)`; at most 1 when the residual
    /// explains every violation.
    pub max_slack_ratio: f64,
    pub violations: usize,
}

impl EnergyInequalityReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

pub fn energy_inequality(traj: &Trajectory, model: &dyn EnergyModel) -> Result<EnergyInequalityReport> {
    let p = traj.params();
    let (tau, h) = (p.tau, p.h());
    let w = model.weights();
    let tol = traj.grad_tol();
    let mut report =
        EnergyInequalityReport { steps: 0, max_excess: f64::NEG_INFINITY, max_slack_ratio: 0.0, violations: 0 };
    for ell in 0..p.windows {
        for k in 1..=p.steps_per_window {
            let v = traj.velocity(ell, k);
            let v_prev = traj.previous_window_velocity(ell, k);
            let e_new = model.value(traj.state(ell, k));
            let e_old = model.value(traj.state(ell, k - 1));
            let v2 = norm_sq(w, &v);
            let c = model.noncvx_constant(e_new.max(e_old))?.c;
            let lhs = tau / (2.0 * h) * v2 + e_new;
            let work = tau * inner(w, traj.forcing_average(ell, k), &v);
            let rhs = tau / (2.0 * h) * norm_sq(w, &v_prev) + e_old + work + c * tau * tau * v2;
            let excess = lhs - rhs;
            // Rounding in the energy evaluations themselves.
            let roundoff = 1e-14 * (lhs.abs() + rhs.abs() + work.abs());
            let slack = tol * v2.sqrt() * tau;
            report.steps += 1;
            report.max_excess = report.max_excess.max(excess);
            if excess > 0.0 && slack > 0.0 {
                report.max_slack_ratio = report.max_slack_ratio.max(excess / slack);
            }
            if excess > slack + roundoff {
                report.violations += 1;
            }
        }
    }
    Ok(report)
}

/// `max ‖η̄(t) − x(t)‖_H` over the left end, midpoint and right end of
/// every `stride`-th interval, where `η̄` is the piecewise constant
/// interpolant, plus `t = T`.
pub fn linf_error<F>(traj: &Trajectory, weights: &[f64], stride: usize, reference: F) -> Result<f64>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    let p = traj.params();
    let stride = stride.max(1);
    let dist = |state: &[f64], t: f64| -> Result<f64> {
        let x = reference(t)?;
        let d: Vec<f64> = state.iter().zip(&x).map(|(a, b)| a - b).collect();
        Ok(norm_sq(weights, &d).sqrt())
    };
    let mut worst: f64 = 0.0;
    for j in (0..p.total_steps()).step_by(stride) {
        let state = traj.node(j + 1);
        let (t0, t1) = (p.node_time(j), p.node_time(j + 1));
        for t in [t0, 0.5 * (t0 + t1), t1] {
            worst = worst.max(dist(state, t)?);
        }
    }
    worst = worst.max(dist(traj.final_state(), p.horizon())?);
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub tau: f64,
    pub h: f64,
    pub error: f64,
    /// The error was not positive and was replaced by machine epsilon.
    pub floored: bool,
    /// Smallest stability margin of the run, when computed.
    pub min_margin: Option<f64>,
}

/// Least-squares fit of `log error = slope · log τ + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub points: Vec<RatePoint>,
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square residual of the fit in log space.
    pub fit_residual: f64,
    /// Slopes between consecutive refinement levels.
    pub pair_slopes: Vec<f64>,
}

impl RateReport {
    pub fn errors_strictly_decreasing(&self) -> bool {
        self.points.windows(2).all(|p| p[1].error < p[0].error)
    }
}

/// Fits the observed order. Needs at least three levels with strictly
/// decreasing `τ`.
pub fn rate_fit(points: &[RatePoint]) -> Result<RateReport> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 refinement levels, got {}",
            points.len()
        )));
    }
    if points.windows(2).any(|p| !(p[1].tau < p[0].tau)) || points.iter().any(|p| !(p.tau > 0.0)) {
        return Err(Error::InvalidArgument("tau must be positive and strictly decreasing".into()));
    }
    let points: Vec<RatePoint> = points
        .iter()
        .map(|p| {
            if p.error > 0.0 {
                *p
            } else {
                RatePoint { error: f64::EPSILON, floored: true, ..*p }
            }
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.tau.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.error.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let fit_residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let pair_slopes = xs.windows(2).zip(ys.windows(2)).map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0])).collect();
    Ok(RateReport { points, slope, intercept, fit_residual, pair_slopes })
}

/// One scheme run and its certificate inside a sweep.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub trajectory: Trajectory,
    pub certificate: StabilityCertificate,
    pub error: f64,
}

/// Runs the scheme for each `(τ, h)` in parallel and measures the
/// `L∞` error of the piecewise constant interpolant against `reference`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_sweep<F>(
    model: &dyn EnergyModel,
    eta0: &[f64],
    eta_star: &[f64],
    forcing: &Forcing,
    grid: &[(f64, f64)],
    horizon: f64,
    settings: &SolverSettings,
    reference: F,
) -> Result<(RateReport, Vec<SweepRun>)>
where
    F: Fn(f64) -> Result<Vec<f64>> + Sync,
{
    let runs: Vec<SweepRun> = grid
        .par_iter()
        .map(|&(tau, h)| {
            let params = SchemeParams::from_times(tau, h, horizon)?;
            let trajectory = run(model, &params, eta0, eta_star, forcing, settings)?;
            let certificate = stability_certificate(&trajectory, model, eta0, forcing)?;
            let error = linf_error(&trajectory, model.weights(), 1, &reference)?;
            Ok(SweepRun { trajectory, certificate, error })
        })
        .collect::<Result<_>>()?;
    let points: Vec<RatePoint> = grid
        .iter()
        .zip(&runs)
        .map(|(&(tau, h), r)| RatePoint {
            tau,
            h,
            error: r.error,
            floored: false,
            min_margin: Some(r.certificate.min_margin),
        })
        .collect();
    Ok((rate_fit(&points)?, runs))
}

/// Errors of a fixed-`h` sweep against the time-delayed solution at that
/// `h` and against the limit solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoScaleStudy {
    pub h: f64,
    pub vs_delayed: RateReport,
    pub vs_limit: RateReport,
}

impl TwoScaleStudy {
    /// Last over first error against the limit solution.
    pub fn limit_plateau_ratio(&self) -> f64 {
        let p = &self.vs_limit.points;
        p[p.len() - 1].error / p[0].error
    }
}

#[allow(clippy::too_many_arguments)]
pub fn two_scale_error_study(
    model: &dyn EnergyModel,
    eta0: &[f64],
    eta_star: &[f64],
    forcing: &Forcing,
    h: f64,
    taus: &[f64],
    horizon: f64,
    settings: &SolverSettings,
    reference: &ReferenceSettings,
) -> Result<TwoScaleStudy> {
    let substeps = (h / reference.step).ceil().max(1.0);
    let delayed_settings = ReferenceSettings { step: h / substeps, ..*reference };
    let (delayed, limit) = rayon::join(
        || solve_time_delayed(model, eta0, eta_star, forcing, h, horizon, &delayed_settings),
        || solve_limit_rk4(model, eta0, eta_star, forcing, horizon, reference),
    );
    let (delayed, limit) = (delayed?, limit?);
    let runs: Vec<(f64, f64)> = taus
        .par_iter()
        .map(|&tau| {
            let params = SchemeParams::from_times(tau, h, horizon)?;
            let traj = run(model, &params, eta0, eta_star, forcing, settings)?;
            let w = model.weights();
            Ok((
                linf_error(&traj, w, 1, |t| delayed.position(t))?,
                linf_error(&traj, w, 1, |t| limit.position(t))?,
            ))
        })
        .collect::<Result<_>>()?;
    let report = |pick: fn(&(f64, f64)) -> f64| {
        let points: Vec<RatePoint> = taus
            .iter()
            .zip(&runs)
            .map(|(&tau, e)| RatePoint { tau, h, error: pick(e), floored: false, min_margin: None })
            .collect();
        rate_fit(&points)
    };
    Ok(TwoScaleStudy { h, vs_delayed: report(|e| e.0)?, vs_limit: report(|e| e.1)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{DoubleWell, Quadratic};
    use crate::reference::exact_linear;
    use approx::assert_relative_eq;

    fn points(taus: &[f64], f: impl Fn(f64) -> f64) -> Vec<RatePoint> {
        taus.iter()
            .map(|&tau| RatePoint { tau, h: tau, error: f(tau), floored: false, min_margin: None })
            .collect()
    }

    #[test]
    fn exact_power_laws() {
        let taus = [1e-1, 1e-2, 1e-3];
        let one = rate_fit(&points(&taus, |t| 3.0 * t)).unwrap();
        assert_relative_eq!(one.slope, 1.0, epsilon = 1e-12);
        assert!(one.fit_residual < 1e-12);
        let two = rate_fit(&points(&taus, |t| 0.5 * t * t)).unwrap();
        assert_relative_eq!(two.slope, 2.0, epsilon = 1e-12);
        for s in two.pair_slopes {
            assert_relative_eq!(s, 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn published_table_slope() {
        let errors = [0.258051, 0.0821305, 0.00995943];
        let taus = [1e-1, 1e-2, 1e-3];
        let pts: Vec<RatePoint> = taus
            .iter()
            .zip(errors)
            .map(|(&tau, error)| RatePoint { tau, h: tau, error, floored: false, min_margin: None })
            .collect();
        // Independent closed form of the least-squares slope on equally
        // spaced log τ: (y₃ − y₁)/(x₃ − x₁).
        let direct = (errors[2].ln() - errors[0].ln()) / (taus[2].ln() - taus[0].ln());
        let fit = rate_fit(&pts).unwrap();
        assert_relative_eq!(fit.slope, direct, epsilon = 1e-12);
        assert!((fit.slope - 0.71).abs() < 0.01, "{}", fit.slope);
    }

    #[test]
    fn rate_fit_rejects_bad_input() {
        assert!(rate_fit(&points(&[0.1, 0.01], |t| t)).is_err());
        assert!(rate_fit(&points(&[0.1, 0.1, 0.01], |t| t)).is_err());
        let floored = rate_fit(&points(&[0.1, 0.01, 0.001], |t| if t < 0.005 { 0.0 } else { t })).unwrap();
        assert!(floored.points[2].floored);
        assert_eq!(floored.points[2].error, f64::EPSILON);
    }

    #[test]
    fn certificate_at_equilibrium_is_zero() {
        let e = DoubleWell::new();
        let params = SchemeParams::from_times(0.1, 0.1, 1.0).unwrap();
        let traj = run(&e, &params, &[1.0], &[0.0], &Forcing::zero(), &SolverSettings::default()).unwrap();
        let cert = stability_certificate(&traj, &e, &[1.0], &Forcing::zero()).unwrap();
        for w in &cert.windows {
            assert_eq!((w.lhs, w.rhs, w.margin), (0.0, 0.0, 0.0));
        }
        assert!(cert.holds());
    }

    #[test]
    fn linear_certificate_and_rate() {
        let q = Quadratic::new(1.0).unwrap();
        let mut errors = Vec::new();
        for tau in [0.1, 0.01] {
            let params = SchemeParams::from_times(tau, tau, 1.0).unwrap();
            let traj = run(&q, &params, &[1.0], &[0.0], &Forcing::zero(), &SolverSettings::default()).unwrap();
            let cert = stability_certificate(&traj, &q, &[1.0], &Forcing::zero()).unwrap();
            assert_eq!(cert.c, 0.0);
            assert!(cert.holds(), "{cert:?}");
            assert_relative_eq!(cert.windows[0].rhs, 0.5 * (4.0 * tau).exp(), epsilon = 1e-14);
            let report = energy_inequality(&traj, &q).unwrap();
            assert!(report.holds(), "{report:?}");
            errors.push(linf_error(&traj, &[1.0], 1, |t| Ok(vec![exact_linear(1.0, 1.0, 0.0, t)])).unwrap());
        }
        assert!(errors[1] < 0.2 * errors[0], "{errors:?}");
    }

    #[test]
    fn linf_error_of_exact_nodes_is_interpolation_gap() {
        // A trajectory whose nodes sit on the reference still sees the
        // piecewise constant gap, bounded by the node-to-node variation.
        let q = Quadratic::new(1.0).unwrap();
        let params = SchemeParams::from_times(0.05, 0.05, 1.0).unwrap();
        let traj = run(&q, &params, &[1.0], &[0.0], &Forcing::zero(), &SolverSettings::default()).unwrap();
        let own = |t: f64| traj.eval_piecewise_affine(t);
        let gap = linf_error(&traj, &[1.0], 1, own).unwrap();
        let variation = (0..traj.len() - 1)
            .map(|j| (traj.node(j + 1)[0] - traj.node(j)[0]).abs())
            .fold(0.0, f64::max);
        assert!(gap > 0.0 && gap <= variation + 1e-15);
    }
}
