//! Reference solutions: RK4 for the limit equation `x″ + W⁻¹∇E(x) = f`,
//! the time-delayed equation `x′(t) = x′(t − h) − h(W⁻¹∇E(x) − f)` and the
//! closed form for a quadratic energy.

use serde::{Deserialize, Serialize};

use crate::energy::EnergyModel;
use crate::scheme::Forcing;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Rk4Limit,
    TimeDelayed { h: f64 },
}

/// Step size and the magnitude beyond which a solution counts as blown up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSettings {
    pub step: f64,
    pub blowup_bound: f64,
}

impl Default for ReferenceSettings {
    fn default() -> Self {
        Self { step: 1e-4, blowup_bound: 1e8 }
    }
}

/// Samples of `x` and `x′` on a grid where `x′` is smooth.
#[derive(Debug, Clone)]
struct Segment {
    t: Vec<f64>,
    x: Vec<f64>,
    v: Vec<f64>,
}

/// Dense output `t ↦ (x(t), x′(t))` on `[0, T]`.
///
/// Positions use cubic Hermite interpolation of `(x, x′)`, velocities linear
/// interpolation. `x′` may jump between segments; lookups are
/// right-continuous.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    method: Method,
    step: f64,
    dim: usize,
    segments: Vec<Segment>,
}

impl ReferenceSolution {
    pub fn method(&self) -> Method {
        self.method
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizon(&self) -> f64 {
        *self.segments.last().and_then(|s| s.t.last()).unwrap_or(&0.0)
    }

    fn locate(&self, t: f64) -> Result<(&Segment, usize, f64)> {
        let horizon = self.horizon();
        if !(t >= 0.0 && t <= horizon) {
            return Err(Error::OutOfRange { t, horizon });
        }
        let si = self.segments.partition_point(|s| s.t[0] <= t).max(1) - 1;
        let seg = &self.segments[si];
        let last = seg.t.len() - 2;
        let i = (seg.t.partition_point(|&s| s <= t).max(1) - 1).min(last);
        let dt = seg.t[i + 1] - seg.t[i];
        Ok((seg, i, ((t - seg.t[i]) / dt).clamp(0.0, 1.0)))
    }

    pub fn position(&self, t: f64) -> Result<Vec<f64>> {
        let (seg, i, s) = self.locate(t)?;
        let d = self.dim;
        let dt = seg.t[i + 1] - seg.t[i];
        let (h00, h10) = ((1.0 + 2.0 * s) * (1.0 - s).powi(2), s * (1.0 - s).powi(2));
        let (h01, h11) = (s * s * (3.0 - 2.0 * s), s * s * (s - 1.0));
        Ok((0..d)
            .map(|c| {
                h00 * seg.x[i * d + c]
                    + h10 * dt * seg.v[i * d + c]
                    + h01 * seg.x[(i + 1) * d + c]
                    + h11 * dt * seg.v[(i + 1) * d + c]
            })
            .collect())
    }

    pub fn velocity(&self, t: f64) -> Result<Vec<f64>> {
        let (seg, i, s) = self.locate(t)?;
        let d = self.dim;
        Ok((0..d)
            .map(|c| (1.0 - s) * seg.v[i * d + c] + s * seg.v[(i + 1) * d + c])
            .collect())
    }

    pub fn final_position(&self) -> Vec<f64> {
        let seg = self.segments.last().expect("non-empty solution");
        seg.x[seg.x.len() - self.dim..].to_vec()
    }
}

/// `W⁻¹∇E(x) − f(t)`.
fn drift(model: &dyn EnergyModel, forcing: &Forcing, x: &[f64], t: f64) -> Result<Vec<f64>> {
    let g = model.gradient(x)?;
    let f = forcing.eval(t, x.len());
    Ok(g.iter().zip(model.weights()).zip(f).map(|((g, w), f)| g / w - f).collect())
}

fn axpy(x: &[f64], a: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(x, y)| x + a * y).collect()
}

fn check_bound(x: &[f64], t: f64, bound: f64) -> Result<()> {
    if x.iter().any(|v| !(v.abs() <= bound)) {
        return Err(Error::BlowUp { t, bound });
    }
    Ok(())
}

fn check_inputs(model: &dyn EnergyModel, x0: &[f64], x_star: &[f64], horizon: f64, step: f64) -> Result<()> {
    let d = model.dim();
    for v in [x0, x_star] {
        if v.len() != d {
            return Err(Error::Dimension { expected: d, got: v.len() });
        }
    }
    if !(horizon > 0.0 && step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument("horizon and step must be positive".into()));
    }
    Ok(())
}

/// Classical RK4 for `(x, v)′ = (v, f − W⁻¹∇E(x))`. The step is shrunk so
/// that it divides `T`.
pub fn solve_limit_rk4(
    model: &dyn EnergyModel,
    x0: &[f64],
    x_star: &[f64],
    forcing: &Forcing,
    horizon: f64,
    settings: &ReferenceSettings,
) -> Result<ReferenceSolution> {
    check_inputs(model, x0, x_star, horizon, settings.step)?;
    forcing.check_dim(model.dim())?;
    let n = (horizon / settings.step).ceil() as usize;
    let dt = horizon / n as f64;
    let acc = |x: &[f64], t: f64| -> Result<Vec<f64>> {
        Ok(drift(model, forcing, x, t)?.into_iter().map(|a| -a).collect())
    };

    let mut seg = Segment { t: vec![0.0], x: x0.to_vec(), v: x_star.to_vec() };
    let (mut x, mut v) = (x0.to_vec(), x_star.to_vec());
    for i in 0..n {
        let t = i as f64 * dt;
        let k1x = v.clone();
        let k1v = acc(&x, t)?;
        let x2 = axpy(&x, 0.5 * dt, &k1x);
        let k2x = axpy(&v, 0.5 * dt, &k1v);
        let k2v = acc(&x2, t + 0.5 * dt)?;
        let x3 = axpy(&x, 0.5 * dt, &k2x);
        let k3x = axpy(&v, 0.5 * dt, &k2v);
        let k3v = acc(&x3, t + 0.5 * dt)?;
        let x4 = axpy(&x, dt, &k3x);
        let k4x = axpy(&v, dt, &k3v);
        let k4v = acc(&x4, t + dt)?;
        for c in 0..x.len() {
            x[c] += dt / 6.0 * (k1x[c] + 2.0 * k2x[c] + 2.0 * k3x[c] + k4x[c]);
            v[c] += dt / 6.0 * (k1v[c] + 2.0 * k2v[c] + 2.0 * k3v[c] + k4v[c]);
        }
        let t_next = (i + 1) as f64 * dt;
        check_bound(&x, t_next, settings.blowup_bound)?;
        seg.t.push(t_next);
        seg.x.extend_from_slice(&x);
        seg.v.extend_from_slice(&v);
    }
    Ok(ReferenceSolution { method: Method::Rk4Limit, step: dt, dim: model.dim(), segments: vec![seg] })
}

/// Integrates the time-delayed equation window by window with RK4 at
/// `substep`, starting from the history `x′ ≡ x_*` on `(−h, 0]`.
///
/// The delayed velocity is only needed at RK4 stage times, which lie on the
/// half-step grid of the previous window; the velocity is stored there, with
/// midpoint positions taken from the cubic Hermite interpolant.
pub fn solve_time_delayed(
    model: &dyn EnergyModel,
    x0: &[f64],
    x_star: &[f64],
    forcing: &Forcing,
    h: f64,
    horizon: f64,
    settings: &ReferenceSettings,
) -> Result<ReferenceSolution> {
    check_inputs(model, x0, x_star, horizon, settings.step)?;
    forcing.check_dim(model.dim())?;
    let d = model.dim();
    let integer = |r: f64, what: &str| -> Result<usize> {
        let n = r.round();
        if !(n >= 1.0) || (r - n).abs() > 1e-9 * n {
            return Err(Error::InvalidArgument(format!("{what} must be a positive integer, got {r}")));
        }
        Ok(n as usize)
    };
    let n = integer(h / settings.step, "h/substep")?;
    let windows = integer(horizon / h, "T/h")?;
    let dt = h / n as f64;

    // Velocity history of the previous window on its half-step grid.
    let mut hist: Vec<f64> = x_star.iter().copied().cycle().take((2 * n + 1) * d).collect();
    let hist_at = |hist: &[f64], i: usize| hist[i * d..(i + 1) * d].to_vec();
    let mut segments = Vec::with_capacity(windows);
    let mut x = x0.to_vec();

    for ell in 0..windows {
        let start = ell as f64 * h;
        let time = |i: usize| start + i as f64 * dt;
        let rhs = |hist: &[f64], half: usize, y: &[f64], t: f64| -> Result<Vec<f64>> {
            let past = hist_at(hist, half);
            Ok(drift(model, forcing, y, t)?.iter().zip(past).map(|(a, p)| p - h * a).collect())
        };
        let mut seg = Segment { t: vec![start], x: x.clone(), v: rhs(&hist, 0, &x, start)? };
        for i in 0..n {
            let t = time(i);
            let k1 = rhs(&hist, 2 * i, &x, t)?;
            let k2 = rhs(&hist, 2 * i + 1, &axpy(&x, 0.5 * dt, &k1), t + 0.5 * dt)?;
            let k3 = rhs(&hist, 2 * i + 1, &axpy(&x, 0.5 * dt, &k2), t + 0.5 * dt)?;
            let k4 = rhs(&hist, 2 * i + 2, &axpy(&x, dt, &k3), t + dt)?;
            for c in 0..d {
                x[c] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
            }
            check_bound(&x, time(i + 1), settings.blowup_bound)?;
            let v = rhs(&hist, 2 * i + 2, &x, time(i + 1))?;
            seg.t.push(time(i + 1));
            seg.x.extend_from_slice(&x);
            seg.v.extend_from_slice(&v);
        }

        let mut next = Vec::with_capacity((2 * n + 1) * d);
        for i in 0..n {
            next.extend_from_slice(&seg.v[i * d..(i + 1) * d]);
            let mid: Vec<f64> = (0..d)
                .map(|c| {
                    0.5 * (seg.x[i * d + c] + seg.x[(i + 1) * d + c])
                        + dt * (seg.v[i * d + c] - seg.v[(i + 1) * d + c]) / 8.0
                })
                .collect();
            next.extend(rhs(&hist, 2 * i + 1, &mid, time(i) + 0.5 * dt)?);
        }
        next.extend_from_slice(&seg.v[n * d..]);
        hist = next;
        segments.push(seg);
    }
    Ok(ReferenceSolution { method: Method::TimeDelayed { h }, step: dt, dim: d, segments })
}

/// `x₀ cos(√ω t) + (x_*/√ω) sin(√ω t)`.
pub fn exact_linear(omega: f64, x0: f64, x_star: f64, t: f64) -> f64 {
    let w = omega.sqrt();
    x0 * (w * t).cos() + x_star / w * (w * t).sin()
}
