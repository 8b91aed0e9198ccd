//! The `run`, `convergence` and `compare` commands.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;
use twoscale_core::analysis::{
    convergence_sweep, energy_inequality, stability_certificate, EnergyInequalityReport,
};
use twoscale_core::reference::{exact_linear, solve_limit_rk4, solve_time_delayed, ReferenceSettings};
use twoscale_core::scheme::run;
use twoscale_core::{
    EnergyModel, Error, Forcing, RateReport, ReferenceSolution, SchemeParams, StabilityCertificate,
    Trajectory,
};

use crate::config::{ExperimentConfig, ModelSpec, ReferenceKind};
use crate::output::{fmt_f64, run_id, write_csv, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    /// The scheme ran into the boundary of the admissible set.
    Collision { k: usize, ell: usize },
}

struct Setup {
    model: Box<dyn EnergyModel>,
    eta0: Vec<f64>,
    eta_star: Vec<f64>,
    forcing: Forcing,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let model = cfg.build_model()?;
    let dim = model.dim();
    Ok(Setup { eta0: cfg.eta0(dim)?, eta_star: cfg.eta_star(dim)?, forcing: cfg.build_forcing(dim)?, model })
}

fn prepare_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn trajectory_rows(traj: &Trajectory) -> (Vec<String>, Vec<Vec<String>>) {
    let p = traj.params();
    let d = traj.dim();
    let mut header: Vec<String> = ["ell", "k", "t"].iter().map(|s| s.to_string()).collect();
    header.extend((0..d).map(|i| format!("eta_{i}")));
    header.extend((0..d).map(|i| format!("v_{i}")));
    header.extend(["iterations".to_string(), "residual".to_string()]);

    let row = |ell: usize, k: usize, state: &[f64], v: &[f64], iterations: usize, residual: f64| {
        let mut r = vec![ell.to_string(), k.to_string(), fmt_f64(p.time(ell, k))];
        r.extend(state.iter().chain(v).map(|x| fmt_f64(*x)));
        r.extend([iterations.to_string(), fmt_f64(residual)]);
        r
    };
    let mut rows = vec![row(0, 0, traj.state(0, 0), traj.eta_star(), 0, 0.0)];
    let n = p.steps_per_window;
    let last = p.total_steps();
    for j in 1..=last {
        if j % p.save_stride != 0 && j != last {
            continue;
        }
        let (ell, k) = ((j - 1) / n, (j - 1) % n + 1);
        let rec = traj.record(ell, k);
        rows.push(row(ell, k, traj.state(ell, k), &traj.velocity(ell, k), rec.iterations, rec.residual));
    }
    (header, rows)
}

fn run_summary(traj: &Trajectory, model: &dyn EnergyModel) -> serde_json::Value {
    let p = traj.params();
    let recs = traj.records();
    json!({
        "steps": recs.len(),
        "unconverged_steps": recs.iter().filter(|r| !r.converged).count(),
        "max_residual": recs.iter().map(|r| r.residual).fold(0.0, f64::max),
        "curvature_escapes": recs.iter().map(|r| r.curvature_escapes).sum::<usize>(),
        "grad_tol": traj.grad_tol(),
        "strong_convexity": {
            "kinetic_curvature": 1.0 / (p.tau * p.h()),
            "curvature_lower_bound": model.curvature_lower_bound(),
            "strongly_convex": recs.iter().all(|r| r.strongly_convex),
        },
        "final_state": traj.final_state(),
    })
}

fn meta(cfg: &ExperimentConfig, command: &str, model: &dyn EnergyModel, extra: serde_json::Value) -> serde_json::Value {
    let resolved = cfg.resolved_json();
    let mut m = json!({
        "run_id": run_id(&resolved),
        "command": command,
        "model": model.name(),
        "dim": model.dim(),
        "config": serde_json::from_str::<serde_json::Value>(&resolved).expect("valid json"),
    });
    if let (Some(m), serde_json::Value::Object(extra)) = (m.as_object_mut(), extra) {
        m.extend(extra);
    }
    m
}

#[derive(Serialize)]
struct CertificateFile<'a> {
    certificate: &'a StabilityCertificate,
    holds: bool,
    energy_inequality: &'a EnergyInequalityReport,
}

/// Runs the scheme once, writing `trajectory.csv`, `certificate.json` and
/// `meta.json`.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let s = setup(cfg)?;
    let params = cfg.scheme_params()?;
    prepare_dir(out)?;
    let traj = match run(&*s.model, &params, &s.eta0, &s.eta_star, &s.forcing, &cfg.solver) {
        Ok(t) => t,
        Err(Error::Collision { k, ell }) => {
            let m = meta(cfg, "run", &*s.model, json!({ "params": params, "collision": { "k": k, "ell": ell } }));
            write_json(&out.join("meta.json"), &m)?;
            return Ok(Outcome::Collision { k, ell });
        }
        Err(e) => return Err(e.into()),
    };
    let (header, rows) = trajectory_rows(&traj);
    write_csv(&out.join("trajectory.csv"), &header, rows)?;

    let certificate = stability_certificate(&traj, &*s.model, &s.eta0, &s.forcing)?;
    let ei = energy_inequality(&traj, &*s.model)?;
    write_json(
        &out.join("certificate.json"),
        &CertificateFile { certificate: &certificate, holds: certificate.holds(), energy_inequality: &ei },
    )?;
    let m = meta(
        cfg,
        "run",
        &*s.model,
        json!({ "params": params, "collision": null, "summary": run_summary(&traj, &*s.model) }),
    );
    write_json(&out.join("meta.json"), &m)?;
    Ok(Outcome::Completed)
}

fn delayed_settings(reference: &ReferenceSettings, h: f64) -> ReferenceSettings {
    let substeps = (h / reference.step).ceil().max(1.0);
    ReferenceSettings { step: h / substeps, ..*reference }
}

fn scalar(v: &[f64], key: &str) -> Result<f64> {
    match v {
        [x] => Ok(*x),
        _ => anyhow::bail!("{key}: exact_linear needs a scalar state"),
    }
}

#[derive(Serialize)]
struct RateFile<'a> {
    reference: ReferenceKind,
    report: &'a RateReport,
    errors_strictly_decreasing: bool,
    /// Largest `τ` of the sweep whose stability certificate holds.
    largest_certified_tau: Option<f64>,
    certificates: Vec<serde_json::Value>,
}

/// Sweeps the configured `(τ, h)` grid, writing `errors.csv` and
/// `rate.json`.
pub fn cmd_convergence(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let s = setup(cfg)?;
    let grid = cfg.sweep_grid()?;
    let horizon = cfg.scheme.horizon;
    let rs = cfg.reference.settings();
    prepare_dir(out)?;

    let solution: Option<ReferenceSolution> = match cfg.reference.kind {
        ReferenceKind::Rk4 => Some(
            solve_limit_rk4(&*s.model, &s.eta0, &s.eta_star, &s.forcing, horizon, &rs)
                .with_context(|| format!("reference rk4 solve (step {})", rs.step))?,
        ),
        ReferenceKind::Delayed => {
            let h = grid[0].1;
            let ds = delayed_settings(&rs, h);
            Some(
                solve_time_delayed(&*s.model, &s.eta0, &s.eta_star, &s.forcing, h, horizon, &ds)
                    .with_context(|| format!("reference delayed solve (step {})", ds.step))?,
            )
        }
        ReferenceKind::ExactLinear => None,
    };
    let omega = match cfg.model {
        ModelSpec::Quadratic { omega } => omega,
        _ => f64::NAN,
    };
    let (x0, xs) = match cfg.reference.kind {
        ReferenceKind::ExactLinear => (scalar(&s.eta0, "initial.eta0")?, scalar(&s.eta_star, "initial.eta_star")?),
        _ => (f64::NAN, f64::NAN),
    };
    let reference = |t: f64| -> twoscale_core::Result<Vec<f64>> {
        match &solution {
            Some(sol) => sol.position(t),
            None => Ok(vec![exact_linear(omega, x0, xs, t)]),
        }
    };
    let sweep =
        convergence_sweep(&*s.model, &s.eta0, &s.eta_star, &s.forcing, &grid, horizon, &cfg.solver, reference);
    let (report, runs) = match sweep {
        Ok(r) => r,
        Err(Error::Collision { k, ell }) => {
            let m = meta(cfg, "convergence", &*s.model, json!({ "collision": { "k": k, "ell": ell } }));
            write_json(&out.join("meta.json"), &m)?;
            return Ok(Outcome::Collision { k, ell });
        }
        Err(e) => return Err(e.into()),
    };

    let header = vec!["tau".to_string(), "linf_error".to_string()];
    let rows = report.points.iter().map(|p| vec![fmt_f64(p.tau), fmt_f64(p.error)]);
    write_csv(&out.join("errors.csv"), &header, rows)?;

    let certificates = runs
        .iter()
        .map(|r| {
            let p = r.trajectory.params();
            json!({
                "tau": p.tau,
                "h": p.h(),
                "holds": r.certificate.holds(),
                "min_margin": r.certificate.min_margin,
                "c": r.certificate.c,
                "step_condition": r.certificate.step_condition,
                "unconverged_steps": r.trajectory.records().iter().filter(|s| !s.converged).count(),
            })
        })
        .collect();
    let largest_certified_tau = runs
        .iter()
        .filter(|r| r.certificate.holds())
        .map(|r| r.trajectory.params().tau)
        .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.max(t))));
    write_json(
        &out.join("rate.json"),
        &RateFile {
            reference: cfg.reference.kind,
            report: &report,
            errors_strictly_decreasing: report.errors_strictly_decreasing(),
            largest_certified_tau,
            certificates,
        },
    )?;
    write_json(&out.join("meta.json"), &meta(cfg, "convergence", &*s.model, json!({ "grid": grid })))?;
    Ok(Outcome::Completed)
}

/// Samples the scheme interpolants, the time-delayed solution at the same
/// `h` and the limit solution on a uniform grid, writing `compare.csv`.
pub fn cmd_compare(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let s = setup(cfg)?;
    let params: SchemeParams = cfg.scheme_params()?;
    let rs = cfg.reference.settings();
    let (h, horizon) = (params.h(), params.horizon());
    prepare_dir(out)?;
    let traj = match run(&*s.model, &params, &s.eta0, &s.eta_star, &s.forcing, &cfg.solver) {
        Ok(t) => t,
        Err(Error::Collision { k, ell }) => {
            let m = meta(cfg, "compare", &*s.model, json!({ "params": params, "collision": { "k": k, "ell": ell } }));
            write_json(&out.join("meta.json"), &m)?;
            return Ok(Outcome::Collision { k, ell });
        }
        Err(e) => return Err(e.into()),
    };
    let (delayed, limit) = rayon::join(
        || solve_time_delayed(&*s.model, &s.eta0, &s.eta_star, &s.forcing, h, horizon, &delayed_settings(&rs, h)),
        || solve_limit_rk4(&*s.model, &s.eta0, &s.eta_star, &s.forcing, horizon, &rs),
    );
    let delayed = delayed.with_context(|| format!("reference delayed solve (step {})", delayed_settings(&rs, h).step))?;
    let limit = limit.with_context(|| format!("reference rk4 solve (step {})", rs.step))?;

    let c = cfg.compare.component;
    let n = cfg.compare.samples;
    let header: Vec<String> =
        ["t", "scheme_affine", "scheme_constant", "delayed", "limit"].iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let t = if i + 1 == n { horizon } else { horizon * i as f64 / (n - 1) as f64 };
        rows.push(vec![
            fmt_f64(t),
            fmt_f64(traj.eval_piecewise_affine(t)?[c]),
            fmt_f64(traj.eval_piecewise_constant(t)?[c]),
            fmt_f64(delayed.position(t)?[c]),
            fmt_f64(limit.position(t)?[c]),
        ]);
    }
    write_csv(&out.join("compare.csv"), &header, rows)?;
    let m = meta(
        cfg,
        "compare",
        &*s.model,
        json!({ "params": params, "collision": null, "summary": run_summary(&traj, &*s.model) }),
    );
    write_json(&out.join("meta.json"), &m)?;
    Ok(Outcome::Completed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
        let mut r = csv::Reader::from_path(path).unwrap();
        let header = r.headers().unwrap().iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.unwrap().iter().map(|x| x.parse().unwrap()).collect())
            .collect();
        (header, rows)
    }

    fn read_json(path: &Path) -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
    }

    #[test]
    fn run_writes_trajectory_certificate_and_meta() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::preset("double-well-canonical").unwrap();
        assert_eq!(cmd_run(&cfg, dir.path()).unwrap(), Outcome::Completed);
        let (header, rows) = read_csv(&dir.path().join("trajectory.csv"));
        assert_eq!(header, ["ell", "k", "t", "eta_0", "v_0", "iterations", "residual"]);
        assert_eq!(rows.len(), 1001);
        assert_eq!(&rows[0][..5], &[0.0, 0.0, 0.0, 0.5, 1.6]);
        assert_eq!(rows[1000][2], 10.0);

        let cert = read_json(&dir.path().join("certificate.json"));
        assert_eq!(cert["holds"], true);
        let meta = read_json(&dir.path().join("meta.json"));
        assert_eq!(meta["run_id"], run_id(&cfg.resolved_json()));
        let round_trip = ExperimentConfig::from_json(&meta["config"].to_string()).unwrap();
        assert_eq!(round_trip.resolved_json(), cfg.resolved_json());
    }

    #[test]
    fn save_stride_keeps_last_step() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::preset("quadratic").unwrap();
        cfg.scheme.save_stride = 3;
        cmd_run(&cfg, dir.path()).unwrap();
        let (_, rows) = read_csv(&dir.path().join("trajectory.csv"));
        let times: Vec<f64> = rows.iter().map(|r| r[2]).collect();
        assert_eq!(times.len(), 5);
        assert!((times[1] - 0.3).abs() < 1e-12);
        assert_eq!(*times.last().unwrap(), 1.0);
    }

    #[test]
    fn bar_run_stays_monotone() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::preset("bar-small").unwrap();
        cmd_run(&cfg, dir.path()).unwrap();
        let (header, rows) = read_csv(&dir.path().join("trajectory.csv"));
        let first = header.iter().position(|h| h == "eta_0").unwrap();
        for row in &rows {
            assert!(row[first..first + 32].windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn convergence_writes_errors_and_rate() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::preset("quadratic").unwrap();
        cmd_convergence(&cfg, dir.path()).unwrap();
        let (header, rows) = read_csv(&dir.path().join("errors.csv"));
        assert_eq!(header, ["tau", "linf_error"]);
        assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), [0.1, 0.01, 0.001]);
        let rate = read_json(&dir.path().join("rate.json"));
        let slope = rate["report"]["slope"].as_f64().unwrap();
        assert!((0.9..=1.1).contains(&slope), "{slope}");
        assert_eq!(rate["errors_strictly_decreasing"], true);
        assert_eq!(rate["largest_certified_tau"], 0.1);
    }

    #[test]
    fn convergence_needs_sweep() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::preset("double-well-wrong-well").unwrap();
        let err = cmd_convergence(&cfg, dir.path()).unwrap_err().to_string();
        assert!(err.starts_with("sweep"), "{err}");
    }

    #[test]
    fn compare_covers_both_endpoints() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::preset("quadratic").unwrap();
        cfg.compare.samples = 7;
        cmd_compare(&cfg, dir.path()).unwrap();
        let (header, rows) = read_csv(&dir.path().join("compare.csv"));
        assert_eq!(header, ["t", "scheme_affine", "scheme_constant", "delayed", "limit"]);
        assert_eq!(rows.len(), 7);
        assert_eq!(rows[0][0], 0.0);
        assert_eq!(rows[6][0], 1.0);
        assert_eq!(rows[0][1], 1.0);
        assert!((rows[6][4] - 1f64.cos()).abs() < 1e-8);
    }
}
