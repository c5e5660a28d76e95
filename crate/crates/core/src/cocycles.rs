//! Linear cocycles over a circle rotation or the Bernoulli shift.
//!
//! A cocycle is a map `A: X → SL(2,ℝ)` over an invertible `T: X → X`, with
//! products `Aⁿ(x) = A(Tⁿ⁻¹x) ⋯ A(x)`. Two built-in pairs are provided:
//!
//! * the Herman cocycle `A(e^{it}) = H_c R_t` over rotation by a fixed
//!   fraction `α` of a turn, whose exponent is `log((c + c⁻¹)/2)`;
//! * the Bernoulli cocycle that is `H_2`, `I` or `R_{π/2}` depending on the
//!   window `(x₋₁, x₀, x₁)`, whose exponent is `log 2 / 2` but whose
//!   products have spectral radius 1 infinitely often.
//!
//! Constant maps and user tables work over either base.

use std::f64::consts::{LN_2, TAU};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::formulas::FormulaReport;
use crate::mat2::{product_chain, rotation_matrix, wrap_angle, Mat2, ScaledProduct, Sl2};
use crate::quadrature::{pairwise_sum, periodic_average, IntegralEstimate, QuadratureSpec};

/// Rotation number `(√5 − 1)/2` used for the circle base by default.
pub const GOLDEN_FRACTION: f64 = 0.618_033_988_749_894_9;

/// `ρ − 1` at or below this counts as `ρ = 1`.
pub const RHO_ONE_TOL: f64 = 1e-9;

/// Largest horizon accepted by [`star_identity_probe`].
pub const STAR_PROBE_MAX_N: usize = 22;

/// Symbol positions are offset by this many 32-bit words in the ChaCha
/// stream so that negative positions map to valid counters.
const STREAM_CENTER: u128 = 1 << 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Base {
    /// `e^{it} ↦ e^{i(t + 2πα)}`.
    CircleRotation { alpha: f64 },
    /// Left shift on `{0,1}^ℤ` with a seeded (½, ½) sequence.
    BernoulliShift { seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CocycleMap {
    /// `A(e^{it}) = H_c R_t`; circle base only.
    Herman {
        c: f64,
    },
    /// `H_2` / `I` / `R_{π/2}` by the window `(x₋₁, x₀, x₁)`; Bernoulli base only.
    BernoulliHir,
    Constant(Sl2),
    /// Over the circle: `k` equal arcs, `A = table[⌊k t / 2π⌋]`.
    /// Over the Bernoulli shift: two entries, `A = table[x₀]`.
    Table(Vec<Sl2>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CocycleSpec {
    pub base: Base,
    pub map: CocycleMap,
}

/// A point of the base: an angle on the circle or a shift position.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasePoint {
    Angle(f64),
    Position(i64),
}

impl CocycleSpec {
    pub fn herman(c: f64) -> Self {
        CocycleSpec {
            base: Base::CircleRotation {
                alpha: GOLDEN_FRACTION,
            },
            map: CocycleMap::Herman { c },
        }
    }

    pub fn bernoulli_hir(seed: u64) -> Self {
        CocycleSpec {
            base: Base::BernoulliShift { seed },
            map: CocycleMap::BernoulliHir,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.base {
            Base::CircleRotation { alpha } => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return config(format!("rotation fraction must lie in (0, 1), got {alpha}"));
                }
            }
            Base::BernoulliShift { .. } => {}
        }
        match (&self.map, &self.base) {
            (CocycleMap::Herman { c }, Base::CircleRotation { .. }) => {
                if !c.is_finite() || *c < 1.0 {
                    return config(format!("herman map needs finite c >= 1, got {c}"));
                }
            }
            (CocycleMap::Herman { .. }, _) => {
                return config("herman map requires the circle_rotation base")
            }
            (CocycleMap::BernoulliHir, Base::BernoulliShift { .. }) => {}
            (CocycleMap::BernoulliHir, _) => {
                return config("bernoulli_hir map requires the bernoulli_shift base")
            }
            (CocycleMap::Constant(_), _) => {}
            (CocycleMap::Table(t), Base::CircleRotation { .. }) => {
                if t.is_empty() {
                    return config("table map needs at least one matrix");
                }
            }
            (CocycleMap::Table(t), Base::BernoulliShift { .. }) => {
                if t.len() != 2 {
                    return config(format!(
                        "table over the bernoulli shift needs exactly 2 matrices, got {}",
                        t.len()
                    ));
                }
            }
        }
        Ok(())
    }

    /// Base point used when none is given: angle 0 or position 0.
    pub fn default_point(&self) -> BasePoint {
        match self.base {
            Base::CircleRotation { .. } => BasePoint::Angle(0.0),
            Base::BernoulliShift { .. } => BasePoint::Position(0),
        }
    }

    fn check_point(&self, x: BasePoint) -> Result<()> {
        match (self.base, x) {
            (Base::CircleRotation { .. }, BasePoint::Angle(t)) if t.is_finite() => Ok(()),
            (Base::CircleRotation { .. }, _) => {
                config("circle base needs a finite angle as base point")
            }
            (Base::BernoulliShift { .. }, BasePoint::Position(_)) => Ok(()),
            (Base::BernoulliShift { .. }, _) => {
                config("bernoulli base needs an integer position as base point")
            }
        }
    }

    /// `Tᵐ x`.
    pub fn advance(&self, x: BasePoint, m: u64) -> BasePoint {
        match (self.base, x) {
            (Base::CircleRotation { alpha }, BasePoint::Angle(t)) => {
                BasePoint::Angle(wrap_angle(t + TAU * orbit_fraction(m, alpha)))
            }
            (_, BasePoint::Position(p)) => BasePoint::Position(p + m as i64),
            (_, p) => p,
        }
    }
}

/// `frac(j·α)` to within an ulp of 1. The product `j·α` is split into its
/// rounded value and the exact rounding error, so the integer part is
/// removed before any precision is lost.
fn orbit_fraction(j: u64, alpha: f64) -> f64 {
    let jf = j as f64;
    let p = jf * alpha;
    let err = jf.mul_add(alpha, -p);
    let f = (p - p.floor()) + err;
    f - f.floor()
}

fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

/// Counter-based (½, ½) symbol sequence indexed by `ℤ`.
#[derive(Clone, Copy, Debug)]
pub struct BernoulliSequence {
    seed: u64,
}

impl BernoulliSequence {
    pub fn new(seed: u64) -> Self {
        BernoulliSequence { seed }
    }

    /// Symbols at positions `start .. start + len`.
    pub fn window(&self, start: i64, len: usize) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let first_word = start.div_euclid(32);
        let mut bit = start.rem_euclid(32) as u32;
        rng.set_word_pos(STREAM_CENTER.wrapping_add_signed(first_word as i128));
        let mut word = rng.next_u32();
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            if bit == 32 {
                word = rng.next_u32();
                bit = 0;
            }
            out.push(((word >> bit) & 1) as u8);
            bit += 1;
        }
        out
    }

    pub fn symbol(&self, position: i64) -> u8 {
        self.window(position, 1)[0]
    }
}

/// The Bernoulli cocycle at the window `(x₋₁, x₀, x₁)`.
pub fn bernoulli_cocycle_value(window: [u8; 3]) -> Result<Sl2> {
    if window.iter().any(|&s| s > 1) {
        return invalid(format!("symbols must be 0 or 1, got {window:?}"));
    }
    Ok(hir_value(window))
}

fn hir_value(window: [u8; 3]) -> Sl2 {
    match window {
        [_, 1, _] => Sl2::new_unchecked(Mat2::new(2.0, 0.0, 0.0, 0.5)),
        [0, 0, 0] | [1, 0, 1] => Sl2::IDENTITY,
        _ => Sl2::QUARTER_TURN,
    }
}

/// `[A(x), A(Tx), …, A(Tⁿ⁻¹x)]`.
pub fn orbit_matrices(spec: &CocycleSpec, x0: BasePoint, n: usize) -> Result<Vec<Sl2>> {
    spec.validate()?;
    spec.check_point(x0)?;
    let out = match (&spec.base, &spec.map, x0) {
        (Base::CircleRotation { alpha }, map, BasePoint::Angle(t0)) => (0..n)
            .map(|j| {
                let t = wrap_angle(t0 + TAU * orbit_fraction(j as u64, *alpha));
                circle_value(map, t)
            })
            .collect(),
        (Base::BernoulliShift { seed }, map, BasePoint::Position(p)) => {
            let symbols = BernoulliSequence::new(*seed).window(p - 1, n + 2);
            symbols
                .windows(3)
                .map(|w| match map {
                    CocycleMap::BernoulliHir => hir_value([w[0], w[1], w[2]]),
                    CocycleMap::Constant(a) => *a,
                    CocycleMap::Table(t) => t[w[1] as usize],
                    CocycleMap::Herman { .. } => unreachable!("rejected by validate"),
                })
                .collect()
        }
        _ => unreachable!("rejected by check_point"),
    };
    Ok(out)
}

fn circle_value(map: &CocycleMap, t: f64) -> Sl2 {
    match map {
        CocycleMap::Herman { c } => {
            let h = Mat2::new(*c, 0.0, 0.0, 1.0 / c);
            Sl2::new_unchecked(h * rotation_matrix(t))
        }
        CocycleMap::Constant(a) => *a,
        CocycleMap::Table(table) => {
            let k = table.len();
            let idx = ((t / TAU) * k as f64).floor() as usize;
            table[idx.min(k - 1)]
        }
        CocycleMap::BernoulliHir => unreachable!("rejected by validate"),
    }
}

fn require_steps(n: usize) -> Result<()> {
    if n == 0 {
        return invalid("need at least one step");
    }
    Ok(())
}

/// `Aⁿ(x0)` as an explicit matrix; fails with [`Error::Overflow`] when the
/// product does not fit in `f64`.
pub fn cocycle_product(spec: &CocycleSpec, x0: BasePoint, n: usize) -> Result<Sl2> {
    require_steps(n)?;
    product_chain(&orbit_matrices(spec, x0, n)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub n: usize,
    /// `(1/n) log ‖Aⁿ(x0)‖`.
    pub exponent: f64,
    pub x0: BasePoint,
    pub renorm_count: usize,
}

/// Finite-horizon exponent `(1/n) log ‖Aⁿ(x0)‖`.
pub fn lyapunov_estimate(spec: &CocycleSpec, x0: BasePoint, n: usize) -> Result<LyapunovReport> {
    require_steps(n)?;
    let orbit = orbit_matrices(spec, x0, n)?;
    let mut p = ScaledProduct::identity();
    for a in &orbit {
        p.push(a);
    }
    Ok(LyapunovReport {
        n,
        exponent: p.log_norm() / n as f64,
        x0,
        renorm_count: p.renorm_count(),
    })
}

/// Mean of [`lyapunov_estimate`] over several Bernoulli seeds (or a single
/// run for the circle base, where the seed list is ignored).
pub fn lyapunov_over_seeds(spec: &CocycleSpec, seeds: &[u64], n: usize) -> Result<f64> {
    let specs = seeded_specs(spec, seeds)?;
    let runs: Vec<f64> = specs
        .par_iter()
        .map(|s| lyapunov_estimate(s, s.default_point(), n).map(|r| r.exponent))
        .collect::<Result<_>>()?;
    Ok(pairwise_sum(&runs) / runs.len() as f64)
}

fn seeded_specs(spec: &CocycleSpec, seeds: &[u64]) -> Result<Vec<CocycleSpec>> {
    spec.validate()?;
    match spec.base {
        Base::BernoulliShift { .. } => {
            if seeds.is_empty() {
                return invalid("need at least one seed");
            }
            Ok(seeds
                .iter()
                .map(|&seed| CocycleSpec {
                    base: Base::BernoulliShift { seed },
                    map: spec.map.clone(),
                })
                .collect())
        }
        Base::CircleRotation { .. } => Ok(vec![spec.clone()]),
    }
}

/// Average over `θ` of the exponent of `A(x)·R_θ` at horizon `n`, against
/// the Birkhoff average `(1/n) Σ N(A(Tʲ x0))`.
///
/// Both sides are finite-horizon estimates; `abs_error` carries an
/// `O(1/n)` bias on top of the quadrature error.
pub fn herman_equality_check(
    spec: &CocycleSpec,
    n: usize,
    quad: &QuadratureSpec,
) -> Result<FormulaReport> {
    herman_equality_at(spec, spec.default_point(), n, quad)
}

pub fn herman_equality_at(
    spec: &CocycleSpec,
    x0: BasePoint,
    n: usize,
    quad: &QuadratureSpec,
) -> Result<FormulaReport> {
    require_steps(n)?;
    let orbit: Vec<Mat2> = orbit_matrices(spec, x0, n)?
        .iter()
        .map(|a| *a.matrix())
        .collect();
    let n_values: Vec<f64> = orbit
        .iter()
        .map(|m| Sl2::new_unchecked(*m).n_value())
        .collect();
    let rhs = pairwise_sum(&n_values) / n as f64;
    let est = periodic_average(
        |theta| {
            let r = rotation_matrix(theta);
            let mut p = ScaledProduct::identity();
            for a in &orbit {
                p.push_matrix(&(*a * r));
            }
            p.log_norm() / n as f64
        },
        quad,
    )?;
    Ok(FormulaReport {
        lhs: est.value,
        rhs,
        abs_error: (est.value - rhs).abs(),
        quadrature: est,
    })
}

/// [`herman_equality_check`] averaged over Bernoulli seeds: `lhs` and `rhs`
/// are the seed means, the quadrature metadata is the worst case.
pub fn herman_equality_over_seeds(
    spec: &CocycleSpec,
    seeds: &[u64],
    n: usize,
    quad: &QuadratureSpec,
) -> Result<FormulaReport> {
    let specs = seeded_specs(spec, seeds)?;
    let reports: Vec<FormulaReport> = specs
        .iter()
        .map(|s| herman_equality_check(s, n, quad))
        .collect::<Result<_>>()?;
    let k = reports.len() as f64;
    let lhs = pairwise_sum(&reports.iter().map(|r| r.lhs).collect::<Vec<_>>()) / k;
    let rhs = pairwise_sum(&reports.iter().map(|r| r.rhs).collect::<Vec<_>>()) / k;
    let quadrature = IntegralEstimate {
        value: lhs,
        est_error: reports
            .iter()
            .map(|r| r.quadrature.est_error)
            .fold(0.0, f64::max),
        grid_used: reports
            .iter()
            .map(|r| r.quadrature.grid_used)
            .max()
            .unwrap_or(0),
        converged: reports.iter().all(|r| r.quadrature.converged),
    };
    Ok(FormulaReport {
        lhs,
        rhs,
        abs_error: (lhs - rhs).abs(),
        quadrature,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthPoint {
    pub n: usize,
    pub inv_n_log_rho: f64,
    pub inv_n_log_norm: f64,
    pub rho_is_one: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrowthReport {
    pub series: Vec<GrowthPoint>,
    /// Largest `(1/n) log ρ(Aⁿ(x))` over the tail `n ≥ tail_start`.
    pub running_max: f64,
    pub tail_start: usize,
    /// Number of `n ≤ n_max` with `ρ(Aⁿ(x)) ≤ 1 + 1e−9`.
    pub rho_one_count: usize,
}

impl SpectralGrowthReport {
    /// `(1/n_max) log ‖A^{n_max}(x)‖`.
    pub fn final_norm_rate(&self) -> f64 {
        self.series.last().map_or(0.0, |p| p.inv_n_log_norm)
    }

    /// Largest amount by which the spectral series exceeds the norm series.
    pub fn max_excess_over_norm(&self) -> f64 {
        self.series
            .iter()
            .map(|p| p.inv_n_log_rho - p.inv_n_log_norm)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,inv_n_log_rho,inv_n_log_norm,rho_is_one\n");
        for p in &self.series {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{}\n",
                p.n, p.inv_n_log_rho, p.inv_n_log_norm, p.rho_is_one as u8
            ));
        }
        out
    }
}

/// Tail window used for the limsup proxy: the second half of the horizon.
pub fn tail_start(n_max: usize) -> usize {
    (n_max / 2).max(1)
}

/// Series of `(1/n) log ρ(Aⁿ(x0))` and `(1/n) log ‖Aⁿ(x0)‖` for
/// `n = 1..=n_max`.
pub fn spectral_growth(
    spec: &CocycleSpec,
    x0: BasePoint,
    n_max: usize,
) -> Result<SpectralGrowthReport> {
    require_steps(n_max)?;
    let orbit = orbit_matrices(spec, x0, n_max)?;
    let rho_one = RHO_ONE_TOL.ln_1p();
    let mut p = ScaledProduct::identity();
    let mut series = Vec::with_capacity(n_max);
    for (k, a) in orbit.iter().enumerate() {
        p.push(a);
        let n = k + 1;
        let log_rho = p.log_spectral_radius();
        series.push(GrowthPoint {
            n,
            inv_n_log_rho: log_rho / n as f64,
            inv_n_log_norm: p.log_norm() / n as f64,
            rho_is_one: log_rho <= rho_one,
        });
    }
    let tail = tail_start(n_max);
    let running_max = series[tail - 1..]
        .iter()
        .map(|p| p.inv_n_log_rho)
        .fold(f64::NEG_INFINITY, f64::max);
    let rho_one_count = series.iter().filter(|p| p.rho_is_one).count();
    Ok(SpectralGrowthReport {
        series,
        running_max,
        tail_start: tail,
        rho_one_count,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarProbeReport {
    pub n: usize,
    /// `(1/n) E[log ρ(Aⁿ)]` under the (½, ½) measure, by enumeration.
    pub mean_log_rho_rate: f64,
    /// `(1/n) E[log ‖Aⁿ‖]`, same enumeration.
    pub mean_log_norm_rate: f64,
    /// Exponent of the Bernoulli cocycle, `log 2 / 2`.
    pub lambda: f64,
}

impl StarProbeReport {
    pub fn gap(&self) -> f64 {
        self.lambda - self.mean_log_rho_rate
    }
}

/// Exact `(1/n) E[log ρ(Aⁿ)]` for the Bernoulli cocycle, enumerating all
/// `2^{n+2}` windows `x₋₁ … x_n` with equal weight.
pub fn star_identity_probe(n: usize) -> Result<StarProbeReport> {
    if n == 0 {
        return invalid("horizon must be at least 1");
    }
    if n > STAR_PROBE_MAX_N {
        return Err(Error::Resource(format!(
            "exact enumeration needs 2^{} windows; n is capped at {STAR_PROBE_MAX_N}",
            n + 2
        )));
    }
    // split on (x₋₁, x₀, x₁, …) prefixes so subtrees run in parallel; the
    // fixed prefix order keeps the total deterministic
    let prefix_len = (n + 1).min(8);
    let sums: Vec<(f64, f64)> = (0..1usize << prefix_len)
        .into_par_iter()
        .map(|code| {
            let prefix: Vec<u8> = (0..prefix_len)
                .map(|i| ((code >> (prefix_len - 1 - i)) & 1) as u8)
                .collect();
            let mut acc = Mat2::IDENTITY;
            // prefix fixes x₋₁ … x_{prefix_len−2}, so A_j is known for
            // j ≤ prefix_len − 3
            for j in 0..prefix_len.saturating_sub(2) {
                let a = hir_value([prefix[j], prefix[j + 1], prefix[j + 2]]);
                acc = *a.matrix() * acc;
            }
            let done = prefix_len.saturating_sub(2);
            enumerate(n, done, prefix[prefix_len - 2], prefix[prefix_len - 1], acc)
        })
        .collect();
    let rho: Vec<f64> = sums.iter().map(|s| s.0).collect();
    let norm: Vec<f64> = sums.iter().map(|s| s.1).collect();
    let windows = (1u64 << (n + 2)) as f64;
    Ok(StarProbeReport {
        n,
        mean_log_rho_rate: pairwise_sum(&rho) / windows / n as f64,
        mean_log_norm_rate: pairwise_sum(&norm) / windows / n as f64,
        lambda: LN_2 / 2.0,
    })
}

/// Sums of `(log ρ, log ‖·‖)` over all completions, given that `A_0 … A_{done−1}`
/// are already multiplied into `acc` and the last two fixed symbols are
/// `x_{done−1} = prev`, `x_done = cur`.
fn enumerate(n: usize, done: usize, prev: u8, cur: u8, acc: Mat2) -> (f64, f64) {
    if done == n {
        let p = Sl2::new_unchecked(acc);
        return (p.log_spectral_radius(), p.operator_norm().ln());
    }
    let mut total = (0.0, 0.0);
    for next in 0..=1u8 {
        let a = hir_value([prev, cur, next]);
        let (r, s) = enumerate(n, done + 1, cur, next, *a.matrix() * acc);
        total.0 += r;
        total.1 += s;
    }
    total
}
