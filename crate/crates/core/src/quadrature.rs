//! Averages `(1/2π)∫₀^{2π} f(θ) dθ` over the circle.
//!
//! The rule is the equal-weight sum over `m` equispaced nodes, which is the
//! trapezoidal rule for a periodic integrand. It integrates trigonometric
//! polynomials of degree `< m` exactly and converges geometrically for
//! analytic integrands. For `log ρ` integrands, which behave like
//! `sqrt(θ − θ₀)` at parabolic parameters, it still converges, at rate
//! `O(m^{−3/2})`.
//!
//! Refinement doubles the grid and reuses every previous node. The error
//! estimate is the difference between the last two grid averages.
//! Node values may be computed on several threads, but the sum always uses
//! the same pairwise tree over the node index, so results are bit-identical
//! for any thread count.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Smallest allowed initial grid.
pub const MIN_GRID: usize = 16;
/// Largest allowed grid.
pub const MAX_GRID: usize = 1 << 24;
/// Smallest allowed tolerance.
pub const MIN_TOL: f64 = 1e-14;

/// Below this many nodes evaluation stays on the calling thread.
const PARALLEL_THRESHOLD: usize = 4096;
/// Leaf size of the pairwise summation tree.
const SUM_LEAF: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    pub initial_grid: usize,
    pub max_grid: usize,
    pub tol: f64,
}

impl QuadratureSpec {
    pub fn new(initial_grid: usize, max_grid: usize, tol: f64) -> Result<Self> {
        let spec = QuadratureSpec {
            initial_grid,
            max_grid,
            tol,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// A single grid of size `m` with no refinement.
    pub fn fixed(m: usize) -> Result<Self> {
        QuadratureSpec::new(m, m, MIN_TOL)
    }

    pub fn validate(&self) -> Result<()> {
        let QuadratureSpec {
            initial_grid,
            max_grid,
            tol,
        } = *self;
        if !initial_grid.is_power_of_two() || initial_grid < MIN_GRID {
            return invalid(format!(
                "initial_grid must be a power of two >= {MIN_GRID}, got {initial_grid}"
            ));
        }
        if !max_grid.is_power_of_two() || max_grid > MAX_GRID {
            return invalid(format!(
                "max_grid must be a power of two <= 2^24, got {max_grid}"
            ));
        }
        if initial_grid > max_grid {
            return invalid(format!(
                "initial_grid {initial_grid} exceeds max_grid {max_grid}"
            ));
        }
        if !tol.is_finite() || tol < MIN_TOL {
            return invalid(format!("tol must be finite and >= {MIN_TOL:e}, got {tol}"));
        }
        Ok(())
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            initial_grid: 1 << 10,
            max_grid: 1 << 18,
            tol: 1e-10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralEstimate {
    pub value: f64,
    pub est_error: f64,
    pub grid_used: usize,
    pub converged: bool,
}

/// Node `k` of an `m`-point grid.
pub fn node(k: usize, m: usize) -> f64 {
    TAU * k as f64 / m as f64
}

/// `[f(2πk/m)]` for `k = 0..m`.
pub fn grid_values<F>(f: F, m: usize) -> Result<Vec<f64>>
where
    F: Fn(f64) -> f64 + Sync,
{
    if m == 0 {
        return invalid("grid size must be at least 1");
    }
    evaluate(&f, (0..m).map(|k| node(k, m)).collect())
}

fn evaluate<F>(f: &F, thetas: Vec<f64>) -> Result<Vec<f64>>
where
    F: Fn(f64) -> f64 + Sync,
{
    let values: Vec<f64> = if thetas.len() >= PARALLEL_THRESHOLD {
        thetas.par_iter().map(|&t| f(t)).collect()
    } else {
        thetas.iter().map(|&t| f(t)).collect()
    };
    match values.iter().position(|v| !v.is_finite()) {
        Some(k) => Err(Error::Integrand {
            theta: thetas[k],
            value: values[k],
        }),
        None => Ok(values),
    }
}

/// Sum with a fixed binary tree over the index range.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= SUM_LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean of the equal-weight rule on `m` nodes.
pub fn grid_average<F>(f: F, m: usize) -> Result<f64>
where
    F: Fn(f64) -> f64 + Sync,
{
    let values = grid_values(f, m)?;
    Ok(pairwise_sum(&values) / m as f64)
}

/// `(1/2π)∫₀^{2π} f` with grid doubling until two successive differences in
/// a row are at most `spec.tol`, or `spec.max_grid` is reached.
///
/// The first comparison is against the half grid made of the even nodes,
/// so even `initial_grid == max_grid` gets an error estimate.
pub fn periodic_average<F>(f: F, spec: &QuadratureSpec) -> Result<IntegralEstimate>
where
    F: Fn(f64) -> f64 + Sync,
{
    spec.validate()?;
    let mut m = spec.initial_grid;
    let values = grid_values(&f, m)?;
    let even: Vec<f64> = values.iter().step_by(2).copied().collect();
    let coarse = pairwise_sum(&even) / (m / 2) as f64;
    let mut sum = pairwise_sum(&values);
    let mut value = sum / m as f64;
    let mut est_error = (value - coarse).abs();
    // kinked integrands can agree by chance across one doubling, so
    // convergence needs two small differences in a row
    let mut settled = usize::from(est_error <= spec.tol);

    while settled < 2 && m < spec.max_grid {
        let fine = 2 * m;
        // new nodes are the odd nodes of the doubled grid
        let thetas = (0..m).map(|k| node(2 * k + 1, fine)).collect();
        let new_values = evaluate(&f, thetas)?;
        sum += pairwise_sum(&new_values);
        m = fine;
        let refined = sum / m as f64;
        est_error = (refined - value).abs();
        value = refined;
        settled = if est_error <= spec.tol {
            settled + 1
        } else {
            0
        };
    }

    Ok(IntegralEstimate {
        value,
        est_error,
        grid_used: m,
        converged: est_error <= spec.tol,
    })
}

/// Writes `theta,value` rows with 17 significant digits.
pub fn grid_csv(values: &[f64]) -> String {
    let m = values.len();
    let mut out = String::from("theta,value\n");
    for (k, v) in values.iter().enumerate() {
        out.push_str(&format!("{:.16e},{:.16e}\n", node(k, m), v));
    }
    out
}
