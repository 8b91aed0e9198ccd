//! Quick invariant checks over all modules, printed as a pass/fail table.

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twoscale_core::analysis::{linf_error, rate_fit, stability_certificate, RatePoint};
use twoscale_core::energy::check_gradient;
use twoscale_core::gronwall::{
    gronwall_bound, gronwall_shifted_bound, simulate_classical, simulate_shifted, two_scale_bound,
    TwoScaleSeq,
};
use twoscale_core::minimize::solve_step;
use twoscale_core::reference::{exact_linear, solve_limit_rk4, ReferenceSettings};
use twoscale_core::scheme::run;
use twoscale_core::{
    BarMesh, BarModel, DoubleWell, EnergyModel, Forcing, IncrementalProblem, Quadratic, Regularizer,
    SchemeParams, SolverSettings,
};

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> twoscale_core::Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check { name, passed: false, detail: format!("error: {e}") },
    }
}

/// Random admissible bar state: a smooth positive-gradient walk around the
/// identity.
pub fn bar_state<R: Rng>(rng: &mut R, mesh: &BarMesh) -> Vec<f64> {
    let dx = mesh.dx();
    let mut walk: f64 = rng.random_range(-1.0..1.0);
    let mut pos = 0.0;
    (0..mesh.nodes)
        .map(|_| {
            walk += rng.random_range(-0.15..0.15);
            pos += dx * (0.5 * walk.tanh()).exp();
            pos
        })
        .collect()
}

fn gradients(rng: &mut ChaCha8Rng) -> twoscale_core::Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let dw = DoubleWell::new();
    let q = Quadratic::new(1.0)?;
    for _ in 0..20 {
        let x = [rng.random_range(-2.0..2.0)];
        worst = worst.max(check_gradient(&dw, &x, 1e-5)?);
        worst = worst.max(check_gradient(&q, &x, 1e-5)?);
    }
    for reg in [Regularizer::Linear, Regularizer::Nonlinear { q: 3.0 }] {
        let bar = BarModel::new(BarMesh { regularizer: reg, ..BarMesh::default() })?;
        let eps = match reg {
            Regularizer::Linear => 1e-5,
            Regularizer::Nonlinear { .. } => 1e-5 * bar.mesh().dx().powi(2),
        };
        for _ in 0..20 {
            let eta = bar_state(rng, bar.mesh());
            worst = worst.max(check_gradient(&bar, &eta, eps)?);
        }
    }
    Ok((worst <= 1e-6, format!("max relative error {worst:.2e}")))
}

fn closed_form_step() -> twoscale_core::Result<(bool, String)> {
    let q = Quadratic::new(1.0)?;
    let p = IncrementalProblem::new(&q, &[1.0], &[0.0], &[0.0], 0.1, 0.1, 0.0)?;
    let out = solve_step(&p, &SolverSettings::default())?;
    let err = (out.state[0] - 1.0 / 1.01).abs();
    Ok((err <= 1e-10, format!("|x − 1/1.01| = {err:.2e}")))
}

fn gronwall(rng: &mut ChaCha8Rng) -> twoscale_core::Result<(bool, String)> {
    let mut failures = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=8);
        let m = rng.random_range(2..=6);
        let c = rng.random_range(0.01..=0.25) / n as f64;
        let seq = TwoScaleSeq::forward_simulate(rng, n, m, c, 0.5)?;
        for l in 1..m {
            if seq.window_max(l) > two_scale_bound(&seq, l)? * (1.0 + 1e-12) {
                failures += 1;
            }
        }
        let a0 = rng.random_range(0.0..2.0);
        let c = rng.random_range(0.01..0.5);
        for (k, a) in simulate_classical(rng, a0, c, 20).into_iter().enumerate() {
            if a > gronwall_bound(a0, c, k) * (1.0 + 1e-12) {
                failures += 1;
            }
        }
        for (k, a) in simulate_shifted(rng, a0, c, 20).into_iter().enumerate() {
            if a > gronwall_shifted_bound(a0, c, k)? * (1.0 + 1e-12) {
                failures += 1;
            }
        }
    }
    Ok((failures == 0, format!("{failures} violations in 600 sequences")))
}

fn forcing_contraction(rng: &mut ChaCha8Rng) -> twoscale_core::Result<(bool, String)> {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..20 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=6);
        let tau = rng.random_range(0.05..0.3);
        let (h, horizon) = (n as f64 * tau, (n * m) as f64 * tau);
        let pieces = rng.random_range(1..=4);
        let mut breaks: Vec<f64> = (0..=pieces).map(|i| horizon * i as f64 / pieces as f64).collect();
        for b in &mut breaks[1..pieces] {
            *b += rng.random_range(-0.2..0.2) * horizon / pieces as f64;
        }
        let coeffs = (0..pieces)
            .map(|_| (0..rng.random_range(1..=4)).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let f = Forcing::piecewise(vec![1.0], breaks, coeffs, horizon)?;
        let mut discrete = 0.0;
        for ell in 0..m {
            for k in 1..=n {
                discrete += tau * f.average(k, ell, tau, h, 1)[0].powi(2);
            }
        }
        worst = worst.max(discrete - f.l2_norm_sq(&[1.0], 0.0, horizon));
    }
    Ok((worst <= 1e-10, format!("max Στ|f_k|² − ‖f‖² = {worst:.2e}")))
}

fn negation_symmetry() -> twoscale_core::Result<(bool, String)> {
    let e = DoubleWell::new();
    let p = SchemeParams::from_times(0.05, 0.1, 2.0)?;
    let s = SolverSettings::default();
    let a = run(&e, &p, &[0.7], &[-0.8], &Forcing::constant(vec![0.3], 2.0), &s)?;
    let b = run(&e, &p, &[-0.7], &[0.8], &Forcing::constant(vec![-0.3], 2.0), &s)?;
    let worst = (0..a.len()).map(|j| (a.node(j)[0] + b.node(j)[0]).abs()).fold(0.0, f64::max);
    Ok((worst <= 1e-9, format!("max |η + η'| = {worst:.2e}")))
}

fn linear_rate() -> twoscale_core::Result<(bool, String)> {
    let q = Quadratic::new(1.0)?;
    let mut points = Vec::new();
    for tau in [1e-1, 1e-2, 1e-3] {
        let p = SchemeParams::from_times(tau, tau, 1.0)?;
        let traj = run(&q, &p, &[1.0], &[0.0], &Forcing::zero(), &SolverSettings::default())?;
        let error = linf_error(&traj, q.weights(), 1, |t| Ok(vec![exact_linear(1.0, 1.0, 0.0, t)]))?;
        points.push(RatePoint { tau, h: tau, error, floored: false, min_margin: None });
    }
    let slope = rate_fit(&points)?.slope;
    Ok(((0.9..=1.1).contains(&slope), format!("slope {slope:.4}")))
}

fn wrong_well() -> twoscale_core::Result<(bool, String)> {
    let e = DoubleWell::new();
    let p = SchemeParams::from_times(1.0, 1.0, 5.0)?;
    let traj = run(&e, &p, &[0.7], &[-0.8], &Forcing::zero(), &SolverSettings::default())?;
    let rs = ReferenceSettings { step: 1e-3, ..Default::default() };
    let reference = solve_limit_rk4(&e, &[0.7], &[-0.8], &Forcing::zero(), 5.0, &rs)?.final_position()[0];
    let scheme = traj.final_state()[0];
    Ok((
        (scheme + 1.0).abs() <= 0.5 && (reference - 1.0).abs() <= 0.5,
        format!("scheme ends at {scheme:.4}, reference at {reference:.4}"),
    ))
}

fn certificate() -> twoscale_core::Result<(bool, String)> {
    let e = DoubleWell::new();
    let p = SchemeParams::from_times(0.01, 0.01, 5.0)?;
    let traj = run(&e, &p, &[0.7], &[-0.8], &Forcing::zero(), &SolverSettings::default())?;
    let cert = stability_certificate(&traj, &e, &[0.7], &Forcing::zero())?;
    Ok((cert.holds(), format!("min margin {:.3e} over {} windows", cert.min_margin, cert.windows.len())))
}

pub fn run_all(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        check("energy: gradient consistency", || gradients(&mut rng)),
        check("minimize: closed-form step", closed_form_step),
        check("gronwall: randomized bounds", || gronwall(&mut rng)),
        check("scheme: forcing contraction", || forcing_contraction(&mut rng)),
        check("scheme: negation symmetry", negation_symmetry),
        check("analysis: linear rate", linear_rate),
        check("analysis: wrong well, x0 0.7, x* -0.8", wrong_well),
        check("analysis: stability certificate", certificate),
    ]
}

pub fn print_table(checks: &[Check]) {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        println!("{status}  {:width$}  {}", c.name, c.detail);
    }
}
