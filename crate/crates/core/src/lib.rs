//! Two-time-scale minimizing movements for second-order evolutions
//! `∂ₜₜη + DE(η) = f`.
//!
//! Each time step solves a finite-dimensional minimization problem whose
//! objective couples a kinetic penalty on the change of velocity over the
//! acceleration scale `h` with the stored energy `E`. The crate provides
//!
//! - [`energy`]: the [`EnergyModel`] abstraction plus scalar test energies,
//! - [`bar`]: a 1D nonlinear elastic bar with a second-gradient regularizer,
//! - [`minimize`]: the per-step Newton/Armijo solver,
//! - [`scheme`]: the two-scale driver, forcing averages and interpolants,
//! - [`reference`]: RK4 and time-delayed reference solvers,
//! - [`gronwall`]: executable discrete Gronwall bounds,
//! - [`analysis`]: stability certificates, error metrics and rate fits.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bar;
pub mod energy;
mod error;
pub mod gronwall;
pub mod minimize;
pub mod quadrature;
pub mod reference;
pub mod scheme;

pub use error::{Error, Result};

pub use analysis::{RateReport, StabilityCertificate};
pub use bar::{BarMesh, BarModel, Regularizer};
pub use energy::{DoubleWell, EnergyModel, Quadratic, SublevelBound};
pub use minimize::{InitialGuess, IncrementalProblem, SolverSettings, StepOutcome};
pub use reference::{ReferenceSettings, ReferenceSolution};
pub use scheme::{Forcing, SchemeParams, StepRecord, TimeProfile, Trajectory};

/// `⟨a, b⟩_H = Σ wᵢ aᵢ bᵢ`.
pub fn inner(weights: &[f64], a: &[f64], b: &[f64]) -> f64 {
    weights
        .iter()
        .zip(a)
        .zip(b)
        .map(|((w, x), y)| w * x * y)
        .sum()
}

/// `‖a‖²_H`.
pub fn norm_sq(weights: &[f64], a: &[f64]) -> f64 {
    inner(weights, a, a)
}

/// Norm of a gradient (a dual object) in the metric dual to `H`:
/// `sqrt(Σ gᵢ² / wᵢ)`. Equals the `H`-norm of the Riesz representative.
pub fn dual_norm(weights: &[f64], g: &[f64]) -> f64 {
    weights
        .iter()
        .zip(g)
        .map(|(w, x)| x * x / w)
        .sum::<f64>()
        .sqrt()
}
