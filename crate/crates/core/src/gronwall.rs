//! Discrete Gronwall inequalities as executable bounds.
//!
//! Three statements are covered: the classical discrete inequality, the
//! index-shifted variant where the current term appears on the right, and
//! the two-scale version that drives the stability estimate of the scheme.

use rand::{Rng, RngExt};

use crate::{Error, Result};

/// Relative slack used when checking inequalities that may hold with equality.
pub const HYPOTHESIS_SLACK: f64 = 1e-12;

/// Bound `a₀·e^{kc}` for sequences with `a_k ≤ a₀ + c Σ_{i<k} a_i`.
pub fn gronwall_bound(a0: f64, c: f64, k: usize) -> f64 {
    a0 * (k as f64 * c).exp()
}

/// Bound `a₀·(1−c)^{−k}` for sequences with `a_k ≤ a₀ + c Σ_{i=1}^{k} a_i`.
pub fn gronwall_shifted_bound(a0: f64, c: f64, k: usize) -> Result<f64> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "shifted Gronwall constant must lie in (0, 1), got {c}"
        )));
    }
    Ok(a0 * (1.0 - c).powf(-(k as f64)))
}

/// Sequences `a_k^ℓ, b_k^ℓ, d_k^ℓ` for `ℓ = 0..M`, `k = 0..=N` with a
/// coupling constant `c`.
///
/// Construction checks non-negativity, shape and the window chaining
/// `a_0^ℓ = a_N^{ℓ−1}`, `b_0^ℓ = b_N^{ℓ−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoScaleSeq {
    n: usize,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
    c: f64,
}

fn close(x: f64, y: f64) -> bool {
    (x - y).abs() <= HYPOTHESIS_SLACK * x.abs().max(y.abs()).max(1.0)
}

impl TwoScaleSeq {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, d: Vec<Vec<f64>>, c: f64) -> Result<Self> {
        let m = a.len();
        if m == 0 || b.len() != m || d.len() != m {
            return Err(Error::InvalidArgument(
                "a, b, d must have the same non-zero number of windows".into(),
            ));
        }
        let n = a[0].len().checked_sub(1).filter(|&n| n > 0).ok_or_else(|| {
            Error::InvalidArgument("each window needs at least two entries (k = 0..=N)".into())
        })?;
        for rows in [&a, &b, &d] {
            if rows.iter().any(|r| r.len() != n + 1) {
                return Err(Error::InvalidArgument("ragged window rows".into()));
            }
            if rows.iter().flatten().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidArgument("entries must be finite and non-negative".into()));
            }
        }
        if !(c > 0.0) {
            return Err(Error::InvalidArgument(format!("c must be positive, got {c}")));
        }
        for l in 1..m {
            if !close(a[l][0], a[l - 1][n]) || !close(b[l][0], b[l - 1][n]) {
                return Err(Error::InvalidArgument(format!(
                    "window {l} is not chained to window {}",
                    l - 1
                )));
            }
        }
        Ok(Self { n, a, b, d, c })
    }

    /// Generates a sequence satisfying the two-scale recurrence by forward
    /// simulation: each step takes a uniformly random fraction of the
    /// right-hand side allowed by the recurrence and splits it randomly
    /// between `a` and `b`.
    ///
    /// Requires `c·N < 1` so both left-hand coefficients stay positive.
    pub fn forward_simulate<R: Rng + ?Sized>(
        rng: &mut R,
        n: usize,
        m: usize,
        c: f64,
        d_scale: f64,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument("N and M must be positive".into()));
        }
        if !(c > 0.0 && c * n as f64 <= 0.25) {
            return Err(Error::InvalidArgument(format!(
                "need c > 0 and c·N ≤ 1/4, got c = {c}, N = {n}"
            )));
        }
        let inv_n = 1.0 / n as f64;
        let mut a = vec![vec![0.0; n + 1]; m];
        let mut b = vec![vec![0.0; n + 1]; m];
        let mut d = vec![vec![0.0; n + 1]; m];
        a[0][0] = rng.random::<f64>();
        b[0][0] = rng.random::<f64>();
        for l in 0..m {
            if l > 0 {
                a[l][0] = a[l - 1][n];
                b[l][0] = b[l - 1][n];
            }
            for k in 1..=n {
                d[l][k] = d_scale * rng.random::<f64>();
                let b_prev = if l == 0 { b[0][0] } else { b[l - 1][k] };
                let rhs = a[l][k - 1] + inv_n * b_prev + d[l][k];
                let used = rng.random::<f64>() * rhs;
                let split = rng.random::<f64>();
                a[l][k] = split * used / (1.0 - c);
                b[l][k] = (1.0 - split) * used / (inv_n - c);
            }
        }
        Self::new(a, b, d, c)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn windows(&self) -> usize {
        self.a.len()
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// `max_{k=1..N} (a_k^ℓ + (1/N) Σ_{i=1}^k b_i^ℓ)`, the quantity bounded by
    /// [`two_scale_bound`].
    pub fn window_max(&self, l: usize) -> f64 {
        let inv_n = 1.0 / self.n as f64;
        let mut running = 0.0;
        let mut best = f64::NEG_INFINITY;
        for k in 1..=self.n {
            running += self.b[l][k];
            best = best.max(self.a[l][k] + inv_n * running);
        }
        best
    }
}

/// `(a_0^0 + b_0^0 + Σ_{l=0}^{ℓ} Σ_{k=1}^{N} d_k^l)·e^{4cNℓ}` for `ℓ ≥ 1`.
///
/// The forcing terms of window 0 are included: they feed `a_N^0` through the
/// chaining and the bound is false without them.
pub fn two_scale_bound(seq: &TwoScaleSeq, l: usize) -> Result<f64> {
    let cn = seq.c * seq.n as f64;
    if cn > 0.25 {
        return Err(Error::InvalidArgument(format!(
            "hypothesis c·N ≤ 1/4 violated (c·N = {cn})"
        )));
    }
    if l == 0 || l >= seq.windows() {
        return Err(Error::InvalidArgument(format!(
            "window index must lie in 1..{}, got {l}",
            seq.windows()
        )));
    }
    let forcing: f64 = seq.d[..=l].iter().map(|row| row[1..].iter().sum::<f64>()).sum();
    Ok((seq.a[0][0] + seq.b[0][0] + forcing) * (4.0 * cn * l as f64).exp())
}

/// Whether every step satisfies
/// `a_k^ℓ + b_k^ℓ/N ≤ a_{k−1}^ℓ + b_k^{ℓ−1}/N + c(a_k^ℓ + b_k^ℓ) + d_k^ℓ`,
/// with `b_k^{−1} := b_0^0`.
pub fn two_scale_hypothesis_holds(seq: &TwoScaleSeq) -> bool {
    let inv_n = 1.0 / seq.n as f64;
    let c = seq.c;
    (0..seq.windows()).all(|l| {
        (1..=seq.n).all(|k| {
            let (a, b) = (seq.a[l][k], seq.b[l][k]);
            let b_prev = if l == 0 { seq.b[0][0] } else { seq.b[l - 1][k] };
            let lhs = a + inv_n * b;
            let rhs = seq.a[l][k - 1] + inv_n * b_prev + c * (a + b) + seq.d[l][k];
            lhs <= rhs + HYPOTHESIS_SLACK * rhs.abs().max(1.0)
        })
    })
}

/// Forward-simulates `a_k ≤ a₀ + c Σ_{i=0}^{k−1} a_i` with random slack.
pub fn simulate_classical<R: Rng + ?Sized>(rng: &mut R, a0: f64, c: f64, len: usize) -> Vec<f64> {
    let mut a = vec![a0];
    let mut sum = a0;
    for _ in 1..=len {
        let next = rng.random::<f64>() * (a0 + c * sum);
        sum += next;
        a.push(next);
    }
    a
}

/// Forward-simulates `a_k ≤ a₀ + c Σ_{i=1}^{k} a_i` with random slack.
/// Solving for `a_k` gives `a_k ≤ (a₀ + c Σ_{i<k}) / (1 − c)`.
pub fn simulate_shifted<R: Rng + ?Sized>(rng: &mut R, a0: f64, c: f64, len: usize) -> Vec<f64> {
    let mut a = vec![a0];
    let mut sum = 0.0;
    for _ in 1..=len {
        let next = rng.random::<f64>() * (a0 + c * sum) / (1.0 - c);
        sum += next;
        a.push(next);
    }
    a
}
