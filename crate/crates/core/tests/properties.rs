use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twoscale_core::analysis::{energy_inequality, rate_fit, stability_certificate, RatePoint};
use twoscale_core::energy::{noncvx_constant_double_well, noncvx_defect};
use twoscale_core::gronwall::{two_scale_bound, two_scale_hypothesis_holds, TwoScaleSeq};
use twoscale_core::minimize::solve_step;
use twoscale_core::scheme::run;
use twoscale_core::{
    DoubleWell, EnergyModel, Forcing, IncrementalProblem, Quadratic, SchemeParams, SolverSettings,
};

fn piecewise(horizon: f64, cuts: &[f64], coeffs: Vec<Vec<f64>>) -> Forcing {
    let mut breaks = vec![0.0];
    breaks.extend(cuts.iter().map(|c| c * horizon));
    breaks.push(horizon);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let pieces = breaks.len() - 1;
    let coeffs = coeffs.into_iter().cycle().take(pieces).collect();
    Forcing::piecewise(vec![1.0], breaks, coeffs, horizon).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn double_well_noncvx_estimate(x in -1.6f64..1.6, y in -1.6f64..1.6) {
        let e = DoubleWell::new();
        let k = e.value(&[x]).max(e.value(&[y]));
        let c = noncvx_constant_double_well(k).unwrap().c;
        prop_assert!(noncvx_defect(&e, &[x], &[y], c).unwrap() >= -1e-12);
    }

    #[test]
    fn averaged_forcing_is_contractive(
        n in 1usize..6,
        m in 1usize..5,
        tau in 0.02f64..0.3,
        cuts in prop::collection::vec(0.05f64..0.95, 0..4),
        coeffs in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 1..5), 1..4),
    ) {
        let h = n as f64 * tau;
        let horizon = m as f64 * h;
        let f = piecewise(horizon, &cuts, coeffs);
        let mut discrete = 0.0;
        for ell in 0..m {
            for k in 1..=n {
                discrete += tau * f.average(k, ell, tau, h, 1)[0].powi(2);
            }
        }
        prop_assert!(discrete <= f.l2_norm_sq(&[1.0], 0.0, horizon) + 1e-10);
    }

    #[test]
    fn two_scale_bound_holds(seed in any::<u64>(), n in 1usize..10, m in 2usize..8, frac in 0.01f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = 0.25 * frac / n as f64;
        let seq = TwoScaleSeq::forward_simulate(&mut rng, n, m, c, 0.5).unwrap();
        prop_assert!(two_scale_hypothesis_holds(&seq));
        for l in 1..m {
            prop_assert!(seq.window_max(l) <= two_scale_bound(&seq, l).unwrap() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn solver_postconditions(
        prev in -1.5f64..1.5,
        v in -2.0f64..2.0,
        f in -1.0f64..1.0,
        tau in 0.01f64..0.2,
        n in 1usize..5,
    ) {
        let e = DoubleWell::new();
        let h = n as f64 * tau;
        let (prev, v, f) = ([prev], [v], [f]);
        let p = IncrementalProblem::new(&e, &prev, &v, &f, tau, h, 0.0).unwrap();
        let s = SolverSettings::default();
        let out = solve_step(&p, &s).unwrap();
        prop_assert!(out.converged);
        prop_assert!(out.residual <= s.tolerance(tau));
        prop_assert!(out.value <= p.value(&prev) + 1e-12);
    }

    #[test]
    fn stability_and_energy_inequality(
        x0 in -1.3f64..1.3,
        xs in -1.0f64..1.0,
        tau in 0.005f64..0.05,
        n in 1usize..4,
    ) {
        let e = DoubleWell::new();
        let h = n as f64 * tau;
        let params = SchemeParams::new(tau, n, (2.0 / h).ceil() as usize).unwrap();
        let traj = run(&e, &params, &[x0], &[xs], &Forcing::zero(), &SolverSettings::default()).unwrap();
        let cert = stability_certificate(&traj, &e, &[x0], &Forcing::zero()).unwrap();
        prop_assert!(cert.holds(), "min margin {}", cert.min_margin);
        prop_assert!(energy_inequality(&traj, &e).unwrap().holds());
    }

    #[test]
    fn negation_symmetry(x0 in -1.3f64..1.3, xs in -1.0f64..1.0, g in -0.5f64..0.5) {
        let e = DoubleWell::new();
        let params = SchemeParams::from_times(0.05, 0.1, 1.0).unwrap();
        let s = SolverSettings::default();
        let a = run(&e, &params, &[x0], &[xs], &Forcing::constant(vec![g], 1.0), &s).unwrap();
        let b = run(&e, &params, &[-x0], &[-xs], &Forcing::constant(vec![-g], 1.0), &s).unwrap();
        for j in 0..a.len() {
            prop_assert!((a.node(j)[0] + b.node(j)[0]).abs() <= 1e-9);
        }
    }

    #[test]
    fn rate_fit_recovers_power_laws(c in 0.1f64..10.0, p in 0.3f64..3.0) {
        let points: Vec<RatePoint> = [0.2, 0.1, 0.05, 0.01]
            .iter()
            .map(|&tau| RatePoint { tau, h: tau, error: c * tau.powf(p), floored: false, min_margin: None })
            .collect();
        let r = rate_fit(&points).unwrap();
        prop_assert!((r.slope - p).abs() <= 1e-10);
        prop_assert!(r.errors_strictly_decreasing());
    }
}

/// For a quadratic energy each step is the linear update
/// `η_k = (η_{k−1} + τ v_k^{ℓ−1}) / (1 + τhω)`, with `v^{−1} = η*`.
#[test]
fn quadratic_matches_linear_recurrence() {
    let omega = 2.5;
    let q = Quadratic::new(omega).unwrap();
    for (tau, n, m) in [(0.1, 1, 20), (0.02, 5, 10), (0.01, 8, 5)] {
        let params = SchemeParams::new(tau, n, m).unwrap();
        let h = params.h();
        let (x0, xs) = (0.8, -0.3);
        let traj = run(&q, &params, &[x0], &[xs], &Forcing::zero(), &SolverSettings::default()).unwrap();

        let mut prev_window = vec![xs; n];
        let mut x = x0;
        for ell in 0..m {
            let mut window = Vec::with_capacity(n);
            for (k, v) in prev_window.iter().enumerate() {
                let next = (x + tau * v) / (1.0 + tau * h * omega);
                window.push((next - x) / tau);
                x = next;
                let got = traj.state(ell, k + 1)[0];
                assert!((got - x).abs() <= 1e-10 * (1.0 + x.abs()), "ell {ell} k {} got {got} want {x}", k + 1);
            }
            prev_window = window;
        }
    }
}
