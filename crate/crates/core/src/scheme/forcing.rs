//! Right-hand sides `f(t) ∈ ℝᵐ`, extended by zero outside `[0, T]`, and
//! their two-scale window averages.

use std::fmt;
use std::sync::Arc;

use crate::quadrature::{gauss_legendre, points_for_degree};
use crate::{Error, Result};

/// Scalar time factor `g(t)` of a separable forcing `f(t) = g(t)·p`.
#[derive(Clone)]
pub enum TimeProfile {
    /// `Σ cᵢ tⁱ` on `[0, T]`.
    Polynomial(Vec<f64>),
    /// Piece `i` is `Σ cᵢⱼ (t − breaksᵢ)ʲ` on `[breaksᵢ, breaksᵢ₊₁)`.
    Piecewise { breaks: Vec<f64>, pieces: Vec<Vec<f64>> },
    /// Arbitrary function; averages use a 2-point Gauss rule per axis.
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for TimeProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeProfile::Polynomial(c) => f.debug_tuple("Polynomial").field(c).finish(),
            TimeProfile::Piecewise { breaks, pieces } => f
                .debug_struct("Piecewise")
                .field("breaks", breaks)
                .field("pieces", pieces)
                .finish(),
            TimeProfile::Function(_) => f.write_str("Function(..)"),
        }
    }
}

fn horner(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

#[derive(Debug, Clone)]
enum Kind {
    Zero,
    Separable { profile: Vec<f64>, time: TimeProfile },
}

/// Forcing term `f: [0, T] → ℝᵐ`, zero outside `[0, T]`.
/// `(start, end, origin, coeffs)` of one polynomial piece.
type Piece<'a> = (f64, f64, f64, &'a [f64]);

#[derive(Debug, Clone)]
pub struct Forcing {
    kind: Kind,
    horizon: f64,
}

impl Forcing {
    pub fn zero() -> Self {
        Self { kind: Kind::Zero, horizon: f64::INFINITY }
    }

    pub fn constant(value: Vec<f64>, horizon: f64) -> Self {
        Self::separable(value, TimeProfile::Polynomial(vec![1.0]), horizon)
    }

    /// `f(t) = (Σ cᵢ tⁱ)·profile` on `[0, T]`.
    pub fn polynomial(profile: Vec<f64>, coeffs: Vec<f64>, horizon: f64) -> Self {
        Self::separable(profile, TimeProfile::Polynomial(coeffs), horizon)
    }

    pub fn piecewise(
        profile: Vec<f64>,
        breaks: Vec<f64>,
        pieces: Vec<Vec<f64>>,
        horizon: f64,
    ) -> Result<Self> {
        if breaks.len() != pieces.len() + 1 || pieces.is_empty() {
            return Err(Error::InvalidArgument("need one more break than pieces".into()));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("breaks must be strictly increasing".into()));
        }
        Ok(Self::separable(profile, TimeProfile::Piecewise { breaks, pieces }, horizon))
    }

    pub fn function<F>(profile: Vec<f64>, f: F, horizon: f64) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::separable(profile, TimeProfile::Function(Arc::new(f)), horizon)
    }

    pub fn separable(profile: Vec<f64>, time: TimeProfile, horizon: f64) -> Self {
        Self { kind: Kind::Separable { profile, time }, horizon }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, Kind::Zero)
    }

    /// Errors if the spatial profile does not have `dim` components.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        match &self.kind {
            Kind::Zero => Ok(()),
            Kind::Separable { profile, .. } if profile.len() == dim => Ok(()),
            Kind::Separable { profile, .. } => {
                Err(Error::Dimension { expected: dim, got: profile.len() })
            }
        }
    }

    /// Zero-extended time factor.
    pub fn time_factor(&self, t: f64) -> f64 {
        let Kind::Separable { time, .. } = &self.kind else {
            return 0.0;
        };
        if !(0.0..=self.horizon).contains(&t) {
            return 0.0;
        }
        match time {
            TimeProfile::Polynomial(c) => horner(c, t),
            TimeProfile::Piecewise { breaks, pieces } => {
                let last = pieces.len() - 1;
                match breaks.iter().rposition(|&b| b <= t) {
                    Some(i) if i <= last => horner(&pieces[i], t - breaks[i]),
                    Some(_) if t == breaks[last + 1] => {
                        horner(&pieces[last], t - breaks[last])
                    }
                    _ => 0.0,
                }
            }
            TimeProfile::Function(f) => f(t),
        }
    }

    fn scaled(&self, g: f64, dim: usize) -> Vec<f64> {
        match &self.kind {
            Kind::Zero => vec![0.0; dim],
            Kind::Separable { profile, .. } => profile.iter().map(|p| g * p).collect(),
        }
    }

    pub fn eval(&self, t: f64, dim: usize) -> Vec<f64> {
        self.scaled(self.time_factor(t), dim)
    }

    /// Polynomial pieces of the zero-extended time factor, clipped to
    /// `[a, b]`. `None` for function profiles.
    fn pieces_in(&self, a: f64, b: f64) -> Option<Vec<Piece<'_>>> {
        let Kind::Separable { time, .. } = &self.kind else {
            return Some(Vec::new());
        };
        let lo = a.max(0.0);
        let hi = b.min(self.horizon);
        let mut out = Vec::new();
        match time {
            TimeProfile::Polynomial(c) => {
                if hi > lo {
                    out.push((lo, hi, 0.0, c.as_slice()));
                }
            }
            TimeProfile::Piecewise { breaks, pieces } => {
                for (i, c) in pieces.iter().enumerate() {
                    let s = breaks[i].max(lo);
                    let e = breaks[i + 1].min(hi);
                    if e > s {
                        out.push((s, e, breaks[i], c.as_slice()));
                    }
                }
            }
            TimeProfile::Function(_) => return None,
        }
        Some(out)
    }

    /// `(1/τ)(1/h) ∫₀^τ ∫₀^h g(start + s + σ) ds dσ` for the zero-extended
    /// time factor.
    ///
    /// The double average equals `∫ g(start + u) w(u) du` with the
    /// trapezoidal kernel `w(u) = min(u, τ, h, τ + h − u)/(τh)`; polynomial
    /// pieces are integrated exactly against it.
    pub fn window_average_factor(&self, start: f64, tau: f64, h: f64) -> f64 {
        let end = start + tau + h;
        if let Some(pieces) = self.pieces_in(start, end) {
            let kernel = |u: f64| (u.min(tau).min(h).min(tau + h - u)).max(0.0) / (tau * h);
            let kinks = [start, start + tau.min(h), start + tau.max(h), end];
            let mut total = 0.0;
            for (s, e, origin, coeffs) in pieces {
                let n = points_for_degree(coeffs.len());
                for w in kinks.windows(2) {
                    let lo = w[0].max(s);
                    let hi = w[1].min(e);
                    total += gauss_legendre(lo, hi, n, |t| horner(coeffs, t - origin) * kernel(t - start));
                }
            }
            return total;
        }
        // Function profile: 2-point rule per axis, inner limits clipped to [0, T].
        let horizon = self.horizon;
        gauss_legendre(0.0, tau, 2, |sigma| {
            let lo = (start + sigma).max(0.0);
            let hi = (start + sigma + h).min(horizon);
            gauss_legendre(lo, hi, 2, |t| self.time_factor(t)) / h
        }) / tau
    }

    /// `f_k^ℓ`, averaging over `[t_{k−1}^{ℓ−1}, t_{k−1}^{ℓ−1} + τ + h]`.
    /// Window `ℓ = 0` reaches back to negative times, where `f = 0`.
    pub fn average(&self, k: usize, ell: usize, tau: f64, h: f64, dim: usize) -> Vec<f64> {
        if self.is_zero() {
            return vec![0.0; dim];
        }
        let start = (ell as f64 - 1.0) * h + (k as f64 - 1.0) * tau;
        self.scaled(self.window_average_factor(start, tau, h), dim)
    }

    /// `∫_a^b ‖f(t)‖²_H dt`.
    pub fn l2_norm_sq(&self, weights: &[f64], a: f64, b: f64) -> f64 {
        let Kind::Separable { profile, .. } = &self.kind else {
            return 0.0;
        };
        let p2 = crate::norm_sq(weights, profile);
        let g2: f64 = match self.pieces_in(a, b) {
            Some(pieces) => pieces
                .into_iter()
                .map(|(s, e, origin, c)| {
                    gauss_legendre(s, e, c.len().max(1), |t| horner(c, t - origin).powi(2))
                })
                .sum(),
            None => {
                let lo = a.max(0.0);
                let hi = b.min(self.horizon);
                let panels = 256;
                let width = (hi - lo) / panels as f64;
                (0..panels)
                    .map(|i| {
                        let s = lo + i as f64 * width;
                        gauss_legendre(s, s + width, 4, |t| self.time_factor(t).powi(2))
                    })
                    .sum()
            }
        };
        p2 * g2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_forcing() {
        let f = Forcing::zero();
        assert_eq!(f.average(1, 3, 0.1, 0.2, 2), vec![0.0, 0.0]);
        assert_eq!(f.l2_norm_sq(&[1.0], 0.0, 1.0), 0.0);
    }

    #[test]
    fn constant_inside_window() {
        let f = Forcing::constant(vec![2.5, -1.0], 10.0);
        let avg = f.average(2, 3, 0.1, 0.3, 2);
        assert_relative_eq!(avg[0], 2.5, epsilon = 1e-14);
        assert_relative_eq!(avg[1], -1.0, epsilon = 1e-14);
    }

    #[test]
    fn linear_forcing_average() {
        let f = Forcing::polynomial(vec![1.0], vec![0.0, 1.0], 10.0);
        let (tau, h) = (0.05, 0.2);
        for (k, ell) in [(1, 1), (3, 2), (4, 7)] {
            let start = (ell as f64 - 1.0) * h + (k as f64 - 1.0) * tau;
            assert_relative_eq!(
                f.average(k, ell, tau, h, 1)[0],
                start + tau / 2.0 + h / 2.0,
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn window_zero_sees_zero_extension() {
        let f = Forcing::constant(vec![1.0], 10.0);
        // τ = h: kernel is a triangle on [−h, h], half of it at negative times.
        assert_relative_eq!(f.average(1, 0, 0.1, 0.1, 1)[0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn function_profile_matches_polynomial_for_linear() {
        let exact = Forcing::polynomial(vec![1.0], vec![0.3, 2.0], 5.0);
        let sampled = Forcing::function(vec![1.0], |t| 0.3 + 2.0 * t, 5.0);
        for (k, ell) in [(1, 2), (2, 5)] {
            assert_relative_eq!(
                exact.average(k, ell, 0.1, 0.2, 1)[0],
                sampled.average(k, ell, 0.1, 0.2, 1)[0],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn piecewise_evaluation_and_norm() {
        let f = Forcing::piecewise(
            vec![2.0],
            vec![0.0, 1.0, 2.0],
            vec![vec![1.0], vec![0.0, 3.0]],
            2.0,
        )
        .unwrap();
        assert_eq!(f.time_factor(0.5), 1.0);
        assert_eq!(f.time_factor(1.5), 1.5);
        assert_eq!(f.time_factor(2.0), 3.0);
        assert_eq!(f.time_factor(2.5), 0.0);
        // ∫ 4·(1 + 9s² on [0,1]) = 4·(1 + 3)
        assert_relative_eq!(f.l2_norm_sq(&[1.0], 0.0, 2.0), 16.0, epsilon = 1e-12);
        assert!(Forcing::piecewise(vec![1.0], vec![0.0, 0.0], vec![vec![1.0]], 1.0).is_err());
    }

    #[test]
    fn dimension_check() {
        let f = Forcing::constant(vec![1.0, 2.0], 1.0);
        assert!(f.check_dim(2).is_ok());
        assert!(f.check_dim(3).is_err());
        assert!(Forcing::zero().check_dim(7).is_ok());
    }
}
