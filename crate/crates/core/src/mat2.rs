//! Real 2×2 matrices and the unit-determinant group they form.
//!
//! Everything in the crate is built on [`Sl2`]. Norms, `N(A)` and the
//! spectral radius use closed forms that only hold when `det A = 1`, which
//! is what makes them cheap and branch-free compared to a general SVD or
//! eigensolver.
//!
//! Long products are handled by two accumulators:
//!
//! * [`product_chain`] returns an honest [`Sl2`] and rescales the running
//!   product by `1/sqrt(det)` every [`RENORM_EVERY`] factors to stop
//!   determinant drift, as long as the product is small enough for the
//!   determinant to be resolved.
//! * [`ScaledProduct`] keeps the product as `2^e · M` with `M` of unit
//!   order, so orbits of length 10⁶ never overflow. Scaling by powers of
//!   two is exact, which keeps integer-valued products (the Bernoulli
//!   cocycle) exact as well.

use std::f64::consts::{LN_2, TAU};
use std::fmt;
use std::ops::{Mul, Neg};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};

/// Accepted `|det − 1|` for a value to count as an element of SL(2,ℝ).
pub const DET_TOLERANCE: f64 = 1e-9;

/// Number of factors between renormalizations of a running product.
pub const RENORM_EVERY: usize = 64;

/// A polar form with `c − 1` below this is treated as a pure rotation.
const ROTATION_TIE: f64 = 1e-12;

/// Determinant renormalization is skipped once the rounding error of the
/// computed determinant, roughly `ε·‖M‖_F²`, exceeds this bound. Dividing
/// by `sqrt(det)` injects that error into every entry, so it only pays off
/// while the determinant is resolved to near machine precision.
const DET_RENORM_MAX_NOISE: f64 = 64.0 * f64::EPSILON;

/// Force a renormalization of a [`ScaledProduct`] outside the regular
/// cadence once an entry exceeds `2^400` in magnitude.
const SCALE_GUARD: f64 = 2.582249878086908e120;

/// Row-major real 2×2 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2::new(1.0, 0.0, 0.0, 1.0);

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Mat2 { a11, a12, a21, a22 }
    }

    pub fn from_rows(rows: [[f64; 2]; 2]) -> Self {
        Mat2::new(rows[0][0], rows[0][1], rows[1][0], rows[1][1])
    }

    pub fn rows(&self) -> [[f64; 2]; 2] {
        [[self.a11, self.a12], [self.a21, self.a22]]
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.a11 * self.a11 + self.a12 * self.a12 + self.a21 * self.a21 + self.a22 * self.a22
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2::new(self.a11 * s, self.a12 * s, self.a21 * s, self.a22 * s)
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2::new(self.a11, self.a21, self.a12, self.a22)
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.a11 * v[0] + self.a12 * v[1],
            self.a21 * v[0] + self.a22 * v[1],
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.a11.is_finite() && self.a12.is_finite() && self.a21.is_finite() && self.a22.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.a11
            .abs()
            .max(self.a12.abs())
            .max(self.a21.abs())
            .max(self.a22.abs())
    }

    /// Largest entrywise difference.
    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        Mat2::new(
            self.a11 - other.a11,
            self.a12 - other.a12,
            self.a21 - other.a21,
            self.a22 - other.a22,
        )
        .max_abs()
    }

    /// Halves of the conformal and anti-conformal parts, `(q, r)`.
    ///
    /// Writing `M = q·R_φ + r·R_ψ·diag(1, −1)`, the singular values are
    /// `q + r` and `|q − r|`, and `q² − r² = det M`.
    fn conformal_split(&self) -> (f64, f64) {
        let q = 0.5 * (self.a11 + self.a22).hypot(self.a12 - self.a21);
        let r = 0.5 * (self.a11 - self.a22).hypot(self.a12 + self.a21);
        (q, r)
    }

    /// Largest singular value; valid for any real 2×2 matrix.
    pub fn largest_singular_value(&self) -> f64 {
        let (q, r) = self.conformal_split();
        q + r
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    fn mul(self, rhs: Mat2) -> Mat2 {
        Mat2::new(
            self.a11 * rhs.a11 + self.a12 * rhs.a21,
            self.a11 * rhs.a12 + self.a12 * rhs.a22,
            self.a21 * rhs.a11 + self.a22 * rhs.a21,
            self.a21 * rhs.a12 + self.a22 * rhs.a22,
        )
    }
}

impl Neg for Mat2 {
    type Output = Mat2;

    fn neg(self) -> Mat2 {
        self.scale(-1.0)
    }
}

impl Serialize for Mat2 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mat2 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = <[[f64; 2]; 2]>::deserialize(d)?;
        Ok(Mat2::from_rows(rows))
    }
}

impl fmt::Display for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[[{}, {}], [{}, {}]]",
            self.a11, self.a12, self.a21, self.a22
        )
    }
}

/// An element of SL(2,ℝ): a finite [`Mat2`] with `|det − 1| ≤ 1e−9`.
///
/// Products of two `Sl2` values are taken as-is; rounding keeps them
/// within a few ulps of unit determinant for factors of moderate norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Sl2(Mat2);

impl Sl2 {
    pub const IDENTITY: Sl2 = Sl2(Mat2::IDENTITY);

    /// `R_{π/2}` with exact zero diagonal.
    pub const QUARTER_TURN: Sl2 = Sl2(Mat2::new(0.0, -1.0, 1.0, 0.0));

    pub fn new(m: Mat2) -> Result<Sl2> {
        if !m.is_finite() {
            return invalid(format!("matrix has non-finite entries: {m}"));
        }
        let det = m.det();
        if (det - 1.0).abs() > DET_TOLERANCE {
            return invalid(format!("det = {det} is not 1 (matrix {m})"));
        }
        Ok(Sl2(m))
    }

    pub fn from_rows(rows: [[f64; 2]; 2]) -> Result<Sl2> {
        Sl2::new(Mat2::from_rows(rows))
    }

    pub(crate) const fn new_unchecked(m: Mat2) -> Sl2 {
        Sl2(m)
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }

    pub fn det(&self) -> f64 {
        self.0.det()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Exact inverse `[[d, −b], [−c, a]]`.
    pub fn inverse(&self) -> Sl2 {
        let m = &self.0;
        Sl2(Mat2::new(m.a22, -m.a12, -m.a21, m.a11))
    }

    pub fn transpose(&self) -> Sl2 {
        Sl2(self.0.transpose())
    }

    pub fn pow(&self, n: u32) -> Sl2 {
        (0..n).fold(Sl2::IDENTITY, |acc, _| *self * acc)
    }

    /// Euclidean operator norm.
    ///
    /// Uses `‖A‖ + ‖A‖⁻¹ = sqrt(‖A‖_F² + 2)` and `‖A‖ − ‖A‖⁻¹ = sqrt(‖A‖_F² − 2)`,
    /// with both square roots evaluated from sums of squares so that neither
    /// side cancels.
    pub fn operator_norm(&self) -> f64 {
        self.0.largest_singular_value()
    }

    /// `N(A) = log((‖A‖ + ‖A‖⁻¹)/2) = ½·log((‖A‖_F² + 2)/4)`.
    ///
    /// On unit determinant `(‖A‖_F² + 2)/4 = 1 + r²` where
    /// `r = ½·|(a11 − a22, a12 + a21)|`, so the logarithm is taken with
    /// `ln_1p` and stays accurate for `A` close to a rotation.
    pub fn n_value(&self) -> f64 {
        let (_, r) = self.0.conformal_split();
        0.5 * (r * r).ln_1p()
    }

    /// Largest eigenvalue modulus: 1 when `|tr A| ≤ 2`, otherwise the larger
    /// root of `λ + λ⁻¹ = |tr A|`.
    pub fn spectral_radius(&self) -> f64 {
        let t = self.trace().abs();
        if t <= 2.0 {
            1.0
        } else {
            0.5 * (t + ((t - 2.0) * (t + 2.0)).sqrt())
        }
    }

    /// `log ρ(A)`, accurate when `A` is close to parabolic.
    pub fn log_spectral_radius(&self) -> f64 {
        log_rho_from_abs_trace(self.trace().abs())
    }

    pub fn is_hyperbolic(&self) -> bool {
        self.trace().abs() > 2.0
    }

    /// Polar form `A = R_β · H_c · R_α` with `c = ‖A‖`.
    ///
    /// A near-rotation (`c − 1 ≤ 1e−12`) returns `(atan2(a21, a11), 1, 0)`.
    /// Otherwise `α` is fixed by taking the top right-singular vector
    /// `(cos α, −sin α)` with its first nonzero coordinate positive, and
    /// `β` follows from `A·R_α⁻¹·H_c⁻¹`.
    pub fn polar_decompose(&self) -> PolarForm {
        let m = &self.0;
        let c = self.operator_norm();
        if c - 1.0 <= ROTATION_TIE {
            return PolarForm {
                beta: wrap_angle(m.a21.atan2(m.a11)),
                c: 1.0,
                alpha: 0.0,
            };
        }
        // M = q·R(φ+θ) + r·R(φ−θ)·diag(1,−1) for M = R(φ)·diag(σ1,σ2)·R(θ)
        let reflection_angle = (0.5 * (m.a21 + m.a12)).atan2(0.5 * (m.a11 - m.a22));
        let rotation_angle = (0.5 * (m.a21 - m.a12)).atan2(0.5 * (m.a11 + m.a22));
        let mut alpha = 0.5 * (rotation_angle - reflection_angle);
        let mut beta = 0.5 * (rotation_angle + reflection_angle);
        let (sin_a, cos_a) = alpha.sin_cos();
        if cos_a < 0.0 || (cos_a == 0.0 && -sin_a < 0.0) {
            alpha += std::f64::consts::PI;
            beta += std::f64::consts::PI;
        }
        let mut polar = PolarForm {
            beta: wrap_angle(beta),
            c,
            alpha: wrap_angle(alpha),
        };
        let back = polar.recompose();
        if back.max_abs_diff(m) > (-back).max_abs_diff(m) {
            polar.beta = wrap_angle(polar.beta + std::f64::consts::PI);
        }
        polar
    }
}

impl Mul for Sl2 {
    type Output = Sl2;

    fn mul(self, rhs: Sl2) -> Sl2 {
        Sl2(self.0 * rhs.0)
    }
}

impl Neg for Sl2 {
    type Output = Sl2;

    fn neg(self) -> Sl2 {
        Sl2(-self.0)
    }
}

impl TryFrom<Mat2> for Sl2 {
    type Error = Error;

    fn try_from(m: Mat2) -> Result<Sl2> {
        Sl2::new(m)
    }
}

impl<'de> Deserialize<'de> for Sl2 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = Mat2::deserialize(d)?;
        Sl2::new(m).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Sl2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// `A = R_β · H_c · R_α`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarForm {
    pub beta: f64,
    pub c: f64,
    pub alpha: f64,
}

impl PolarForm {
    pub fn recompose(&self) -> Mat2 {
        let r_beta = rotation_matrix(self.beta);
        let h = Mat2::new(self.c, 0.0, 0.0, 1.0 / self.c);
        let r_alpha = rotation_matrix(self.alpha);
        r_beta * h * r_alpha
    }
}

/// `[[cos θ, −sin θ], [sin θ, cos θ]]`.
pub fn rotation(theta: f64) -> Result<Sl2> {
    if !theta.is_finite() {
        return invalid(format!("rotation angle must be finite, got {theta}"));
    }
    Ok(Sl2(rotation_matrix(theta)))
}

/// `R_θ` for an angle already known to be finite.
pub(crate) fn rotation_matrix(theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// `H_c = diag(c, 1/c)` for `c ≥ 1`.
pub fn diag_hyperbolic(c: f64) -> Result<Sl2> {
    if !c.is_finite() || c < 1.0 {
        return invalid(format!("H_c needs finite c >= 1, got {c}"));
    }
    Ok(Sl2(Mat2::new(c, 0.0, 0.0, 1.0 / c)))
}

/// `ms[k−1] · … · ms[0]`: later factors multiply on the left.
///
/// Every [`RENORM_EVERY`] factors the running product is divided by
/// `sqrt(det)`, as long as `‖M‖_F² ≤ 64` so that the determinant itself
/// is accurate to a few ulps. Fails with [`Error::Overflow`] if the product leaves the
/// range of `f64`; use [`ScaledProduct`] for products that grow without
/// bound.
pub fn product_chain(ms: &[Sl2]) -> Result<Sl2> {
    if ms.is_empty() {
        return invalid("product_chain needs at least one factor");
    }
    let mut acc = Mat2::IDENTITY;
    for (k, a) in ms.iter().enumerate() {
        acc = a.0 * acc;
        if (k + 1) % RENORM_EVERY == 0 {
            acc = renormalize_det(acc);
        }
    }
    let acc = renormalize_det(acc);
    if !acc.is_finite() {
        return Err(Error::Overflow);
    }
    Ok(Sl2(acc))
}

fn renormalize_det(m: Mat2) -> Mat2 {
    if !m.is_finite() {
        return m;
    }
    let det = m.det();
    let noise = f64::EPSILON * m.frobenius_sq();
    if det > 0.0 && noise <= DET_RENORM_MAX_NOISE {
        m.scale(1.0 / det.sqrt())
    } else {
        m
    }
}

/// Angle reduced to `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// `log ρ` of an SL2 matrix given `|tr|`.
pub(crate) fn log_rho_from_abs_trace(t: f64) -> f64 {
    if t <= 2.0 {
        return 0.0;
    }
    let d = t - 2.0;
    // ρ − 1 = d/2 + sqrt(d·(t+2))/2
    (0.5 * d + 0.5 * (d * (t + 2.0)).sqrt()).ln_1p()
}

/// `2^k` built from its bit pattern, for `k` in the normal range.
fn pow2(k: i64) -> f64 {
    debug_assert!((-1022..=1023).contains(&k));
    f64::from_bits(((k + 1023) as u64) << 52)
}

/// Running product of SL2 matrices stored as `2^exponent · m`.
///
/// The unit-determinant constraint of the true product is used to recover
/// `log ρ` from the trace of `m` alone, so no information is lost when the
/// smaller singular value of `m` underflows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledProduct {
    m: Mat2,
    exponent: i64,
    factors: usize,
    renorms: usize,
}

impl Default for ScaledProduct {
    fn default() -> Self {
        ScaledProduct::identity()
    }
}

impl ScaledProduct {
    pub fn identity() -> Self {
        ScaledProduct {
            m: Mat2::IDENTITY,
            exponent: 0,
            factors: 0,
            renorms: 0,
        }
    }

    /// Multiplies `a` on the left.
    pub fn push(&mut self, a: &Sl2) {
        self.push_matrix(&a.0);
    }

    pub(crate) fn push_matrix(&mut self, a: &Mat2) {
        self.m = *a * self.m;
        self.factors += 1;
        if self.factors.is_multiple_of(RENORM_EVERY) || self.m.max_abs() > SCALE_GUARD {
            self.renormalize();
        }
    }

    pub fn factors(&self) -> usize {
        self.factors
    }

    /// Renormalizations that actually changed the exponent.
    pub fn renorm_count(&self) -> usize {
        self.renorms
    }

    fn renormalize(&mut self) {
        let big = self.m.max_abs();
        if big == 0.0 || !big.is_finite() {
            return;
        }
        let k = big.log2().floor() as i64;
        if k != 0 {
            self.m = self.m.scale(pow2(-k));
            self.exponent += k;
            self.renorms += 1;
        }
    }

    pub fn exponent(&self) -> i64 {
        self.exponent
    }

    pub fn mantissa(&self) -> &Mat2 {
        &self.m
    }

    /// `log ‖P‖`.
    pub fn log_norm(&self) -> f64 {
        self.m.largest_singular_value().ln() + self.exponent as f64 * LN_2
    }

    /// `log ρ(P)`, using `det P = 1`.
    pub fn log_spectral_radius(&self) -> f64 {
        let t = self.m.trace().abs();
        if t == 0.0 {
            return 0.0;
        }
        // s = log(|tr P| / 2)
        let s = t.ln() - LN_2 + self.exponent as f64 * LN_2;
        if s <= 0.0 {
            0.0
        } else if s < 1.0 {
            log_rho_from_abs_trace(2.0 * s.exp())
        } else {
            // acosh(e^s) = s + log(1 + sqrt(1 − e^{−2s}))
            s + (-(-2.0 * s).exp_m1()).sqrt().ln_1p()
        }
    }

    /// Converts back to an explicit matrix, failing if it does not fit.
    pub fn to_sl2(&self) -> Result<Sl2> {
        let half = self.exponent / 2;
        let rest = self.exponent - half;
        if half.abs() > 1022 || rest.abs() > 1022 {
            return Err(Error::Overflow);
        }
        let m = self.m.scale(pow2(half)).scale(pow2(rest));
        if !m.is_finite() {
            return Err(Error::Overflow);
        }
        Ok(Sl2(renormalize_det(m)))
    }
}
