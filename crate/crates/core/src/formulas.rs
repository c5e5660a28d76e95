//! Executable forms of the average-expansion identities.
//!
//! For `A_1, …, A_n ∈ SL(2,ℝ)` and `B_θ = A_n R_θ ⋯ A_1 R_θ`:
//!
//! ```text
//! avg_θ N(B_θ)           = Σ N(A_j)
//! avg_θ log ρ(B_θ)       = Σ N(A_j)
//! avg_θ log ‖A·(cos θ, sin θ)‖ = N(A)
//! ∫₀^π log(b² cos² θ + sin² θ) dθ = 2π log((b + 1)/2)
//! ```
//!
//! Each check evaluates the left side by quadrature and the right side in
//! closed form, and reports both with the quadrature metadata.

use std::f64::consts::{LN_2, PI};
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mat2::{rotation_matrix, Mat2, Sl2};
use crate::quadrature::{grid_values, periodic_average, IntegralEstimate, QuadratureSpec};

/// Default pass tolerance for the `N(B_θ)` identity (smooth integrand).
pub const THEOREM1_TOL: f64 = 1e-8;
/// Default pass tolerance for the `log ρ(B_θ)` identity (singular integrand).
pub const THEOREM2_TOL: f64 = 1e-6;
pub const AVG_EXPANSION_TOL: f64 = 1e-8;
pub const F_INTEGRAL_TOL: f64 = 1e-8;
pub const FUBINI_TOL: f64 = 1e-5;

/// Grid area above which a nested average logs a cost warning.
const FUBINI_COST_WARN: usize = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormulaReport {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_error: f64,
    pub quadrature: IntegralEstimate,
}

impl FormulaReport {
    fn new(quadrature: IntegralEstimate, rhs: f64) -> Self {
        FormulaReport {
            lhs: quadrature.value,
            rhs,
            abs_error: (quadrature.value - rhs).abs(),
            quadrature,
        }
    }

    /// Converged quadrature and `abs_error ≤ tol`.
    pub fn passes(&self, tol: f64) -> bool {
        self.quadrature.converged && self.abs_error <= tol
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureBoundReport {
    pub a: f64,
    pub nu_estimate: f64,
    pub lower_bound: f64,
    pub grid: usize,
}

impl MeasureBoundReport {
    /// Allowed discretization slack of a grid estimate of `ν(E)`.
    pub fn slack(&self) -> f64 {
        2.0 / self.grid as f64
    }

    pub fn passes(&self) -> bool {
        self.nu_estimate >= self.lower_bound - self.slack()
    }
}

fn require_nonempty(matrices: &[Sl2]) -> Result<()> {
    if matrices.is_empty() {
        return invalid("need at least one matrix");
    }
    Ok(())
}

/// `Σ N(A_j)`.
pub fn sum_n_values(matrices: &[Sl2]) -> f64 {
    matrices.iter().map(Sl2::n_value).sum()
}

/// `B_θ = A_n R_θ ⋯ A_1 R_θ`.
pub fn rotated_product(matrices: &[Sl2], theta: f64) -> Sl2 {
    let r = rotation_matrix(theta);
    let b = matrices
        .iter()
        .fold(Mat2::IDENTITY, |acc, a| *a.matrix() * r * acc);
    Sl2::new_unchecked(b)
}

pub fn theorem1_integrand(matrices: &[Sl2]) -> impl Fn(f64) -> f64 + Sync + '_ {
    move |theta| rotated_product(matrices, theta).n_value()
}

pub fn theorem2_integrand(matrices: &[Sl2]) -> impl Fn(f64) -> f64 + Sync + '_ {
    move |theta| rotated_product(matrices, theta).log_spectral_radius()
}

pub fn avg_expansion_integrand(a: &Sl2) -> impl Fn(f64) -> f64 + Sync + '_ {
    move |theta| {
        let (s, c) = theta.sin_cos();
        let [x, y] = a.matrix().apply([c, s]);
        0.5 * (x * x + y * y).ln()
    }
}

/// `θ ↦ log(b² cos² θ + sin² θ)`, written as `log(1 + (b² − 1) cos² θ)`.
pub fn f_integrand(b: f64) -> impl Fn(f64) -> f64 + Sync {
    move |theta| ((b * b - 1.0) * theta.cos().powi(2)).ln_1p()
}

/// `avg_θ N(A_n R_θ ⋯ A_1 R_θ)` against `Σ N(A_j)`.
pub fn theorem1_check(matrices: &[Sl2], spec: &QuadratureSpec) -> Result<FormulaReport> {
    require_nonempty(matrices)?;
    let est = periodic_average(theorem1_integrand(matrices), spec)?;
    Ok(FormulaReport::new(est, sum_n_values(matrices)))
}

/// `avg_θ log ρ(A_n R_θ ⋯ A_1 R_θ)` against `Σ N(A_j)`.
pub fn theorem2_check(matrices: &[Sl2], spec: &QuadratureSpec) -> Result<FormulaReport> {
    require_nonempty(matrices)?;
    let est = periodic_average(theorem2_integrand(matrices), spec)?;
    Ok(FormulaReport::new(est, sum_n_values(matrices)))
}

/// `avg_θ log ‖A·(cos θ, sin θ)‖` against `N(A)`.
pub fn avg_expansion_check(a: &Sl2, spec: &QuadratureSpec) -> Result<FormulaReport> {
    let est = periodic_average(avg_expansion_integrand(a), spec)?;
    Ok(FormulaReport::new(est, a.n_value()))
}

/// `F(b) = ∫₀^π log(b² cos² θ + sin² θ) dθ` against `2π log((b+1)/2)`.
///
/// The integrand has period π, so `F(b)` is π times its average over the
/// full circle. `lhs`, `rhs` and the quadrature value/error are all on the
/// `F` scale.
pub fn f_integral_check(b: f64, spec: &QuadratureSpec) -> Result<FormulaReport> {
    if !b.is_finite() || b < 1.0 {
        return invalid(format!("F(b) needs finite b >= 1, got {b}"));
    }
    let mut est = periodic_average(f_integrand(b), spec)?;
    est.value *= PI;
    est.est_error *= PI;
    let closed_form = 2.0 * PI * ((b + 1.0) / 2.0).ln();
    Ok(FormulaReport::new(est, closed_form))
}

/// Grid estimate of `ν(E)` where
/// `E = {θ : (1/n) log ‖B_θ‖ > −a + (1/n) Σ log ‖A_j‖}`.
///
/// Grid points on the boundary of `E` count as outside.
pub fn measure_bound_check(matrices: &[Sl2], a: f64, grid: usize) -> Result<MeasureBoundReport> {
    require_nonempty(matrices)?;
    if !a.is_finite() || a <= 0.0 {
        return invalid(format!("a must be positive and finite, got {a}"));
    }
    if grid == 0 {
        return invalid("grid must be at least 1");
    }
    let n = matrices.len() as f64;
    let threshold = -a + matrices.iter().map(|m| m.operator_norm().ln()).sum::<f64>() / n;
    let rates = grid_values(
        |theta| rotated_product(matrices, theta).operator_norm().ln() / n,
        grid,
    )?;
    let inside = rates.iter().filter(|&&r| r > threshold).count();
    Ok(MeasureBoundReport {
        a,
        nu_estimate: inside as f64 / grid as f64,
        lower_bound: 1.0 - LN_2 / a,
        grid,
    })
}

/// Inner average `avg_θ′ log ρ(B_θ R_θ′)`, which equals `N(B_θ)`.
pub fn fubini_inner(
    matrices: &[Sl2],
    theta: f64,
    spec: &QuadratureSpec,
) -> Result<IntegralEstimate> {
    let b = *rotated_product(matrices, theta).matrix();
    periodic_average(
        |phi| Sl2::new_unchecked(b * rotation_matrix(phi)).log_spectral_radius(),
        spec,
    )
}

/// Double average `avg_θ avg_θ′ log ρ(B_θ R_θ′)` against `Σ N(A_j)`.
///
/// The same spec drives both levels. The reported quadrature is the outer
/// one, with `converged` cleared if any inner average failed to converge.
pub fn fubini_check(matrices: &[Sl2], spec: &QuadratureSpec) -> Result<FormulaReport> {
    require_nonempty(matrices)?;
    spec.validate()?;
    if spec.max_grid.saturating_mul(spec.max_grid) > FUBINI_COST_WARN {
        log::warn!(
            "nested average may use up to {0} x {0} integrand evaluations",
            spec.max_grid
        );
    }
    let inner_ok = AtomicBool::new(true);
    let outer = periodic_average(
        |theta| match fubini_inner(matrices, theta, spec) {
            Ok(inner) => {
                if !inner.converged {
                    inner_ok.store(false, Ordering::Relaxed);
                }
                inner.value
            }
            Err(_) => f64::NAN,
        },
        spec,
    )?;
    let mut report = FormulaReport::new(outer, sum_n_values(matrices));
    report.quadrature.converged &= inner_ok.load(Ordering::Relaxed);
    Ok(report)
}
