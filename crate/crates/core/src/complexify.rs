//! Complex 2×2 matrices `S_z`, `T_z` and `C_z = A_n T_z ⋯ A_1 T_z`.
//!
//! On the unit circle `C_{e^{iθ}} = e^{inθ}·A_n R_θ ⋯ A_1 R_θ`, so the
//! spectral radius of `C_z` continues `θ ↦ ρ(B_θ)` into the disk. At the
//! center `C_0` has rank one and its nonzero eigenvalue is
//! `∏ (‖A_j‖ + ‖A_j‖⁻¹)/2`. This module provides the matrices and the
//! numeric probes of those facts.

use std::f64::consts::TAU;
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mat2::Sl2;
use crate::randprod::disk_point;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Below this `|det|` a matrix is treated as singular by [`equal_modulus`].
pub const SINGULAR_DET: f64 = 1e-14;

/// Tolerance on `Im u` and on interval membership in [`equal_modulus`].
pub const EQUAL_MODULUS_TOL: f64 = 1e-10;

/// Relative modulus gap below which eigenvalues count as tied.
const MODULUS_TIE: f64 = 1e-12;

/// Row-major complex 2×2 matrix.
///
/// Serializes as `[[[re, im], [re, im]], [[re, im], [re, im]]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[[[f64; 2]; 2]; 2]", into = "[[[f64; 2]; 2]; 2]")]
pub struct CMat2 {
    pub a11: Complex64,
    pub a12: Complex64,
    pub a21: Complex64,
    pub a22: Complex64,
}

impl CMat2 {
    pub const IDENTITY: CMat2 = CMat2::new(
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(1.0, 0.0),
    );

    pub const fn new(a11: Complex64, a12: Complex64, a21: Complex64, a22: Complex64) -> Self {
        CMat2 { a11, a12, a21, a22 }
    }

    pub fn from_real(a: &Sl2) -> Self {
        let m = a.matrix();
        CMat2::new(m.a11.into(), m.a12.into(), m.a21.into(), m.a22.into())
    }

    pub fn trace(&self) -> Complex64 {
        self.a11 + self.a22
    }

    pub fn det(&self) -> Complex64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn scale(&self, s: Complex64) -> CMat2 {
        CMat2::new(self.a11 * s, self.a12 * s, self.a21 * s, self.a22 * s)
    }

    pub fn is_finite(&self) -> bool {
        [self.a11, self.a12, self.a21, self.a22]
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn max_abs_diff(&self, other: &CMat2) -> f64 {
        [
            self.a11 - other.a11,
            self.a12 - other.a12,
            self.a21 - other.a21,
            self.a22 - other.a22,
        ]
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
    }

    pub fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        [
            self.a11 * v[0] + self.a12 * v[1],
            self.a21 * v[0] + self.a22 * v[1],
        ]
    }

    /// Largest eigenvalue modulus.
    pub fn spectral_radius(&self) -> f64 {
        eigen2(self).lambda1.norm()
    }
}

impl Mul for CMat2 {
    type Output = CMat2;

    fn mul(self, rhs: CMat2) -> CMat2 {
        CMat2::new(
            self.a11 * rhs.a11 + self.a12 * rhs.a21,
            self.a11 * rhs.a12 + self.a12 * rhs.a22,
            self.a21 * rhs.a11 + self.a22 * rhs.a21,
            self.a21 * rhs.a12 + self.a22 * rhs.a22,
        )
    }
}

type Pairs = [[[f64; 2]; 2]; 2];

impl From<Pairs> for CMat2 {
    fn from(p: Pairs) -> Self {
        let c = |x: [f64; 2]| Complex64::new(x[0], x[1]);
        CMat2::new(c(p[0][0]), c(p[0][1]), c(p[1][0]), c(p[1][1]))
    }
}

impl From<CMat2> for Pairs {
    fn from(m: CMat2) -> Self {
        let p = |z: Complex64| [z.re, z.im];
        [[p(m.a11), p(m.a12)], [p(m.a21), p(m.a22)]]
    }
}

/// Eigenvalues ordered so that `|lambda1| ≥ |lambda2|`; equal moduli are
/// ordered by argument in `[0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    #[serde(with = "complex_pair")]
    pub lambda1: Complex64,
    #[serde(with = "complex_pair")]
    pub lambda2: Complex64,
}

mod complex_pair {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}

/// `S_z`; equals `R_θ` at `z = e^{iθ}`.
pub fn s_matrix(z: Complex64) -> Result<CMat2> {
    if z == Complex64::new(0.0, 0.0) {
        return invalid("S_z is undefined at z = 0");
    }
    if !(z.re.is_finite() && z.im.is_finite()) {
        return invalid(format!("S_z needs a finite argument, got {z}"));
    }
    let zi = z.inv();
    let even = (z + zi) * 0.5;
    let odd = (z - zi) / (2.0 * I);
    Ok(CMat2::new(even, -odd, odd, even))
}

/// `T_z = z·S_z`, defined on the whole plane; `det T_z = z²`.
pub fn t_matrix(z: Complex64) -> CMat2 {
    let z2 = z * z;
    let even = (z2 + 1.0) * 0.5;
    let odd = (z2 - 1.0) / (2.0 * I);
    CMat2::new(even, -odd, odd, even)
}

/// `C_z = A_n T_z ⋯ A_1 T_z`.
pub fn c_matrix(matrices: &[Sl2], z: Complex64) -> Result<CMat2> {
    if matrices.is_empty() {
        return invalid("C_z needs at least one matrix");
    }
    let t = t_matrix(z);
    Ok(matrices
        .iter()
        .fold(CMat2::IDENTITY, |acc, a| CMat2::from_real(a) * t * acc))
}

/// Roots of `λ² − (tr C)·λ + det C`.
pub fn eigen2(c: &CMat2) -> EigenPair {
    let tr = c.trace();
    let det = c.det();
    let disc = (tr * tr - det * 4.0).sqrt();
    // pick the sign that avoids cancellation, then use λ1·λ2 = det
    let plus = tr + disc;
    let minus = tr - disc;
    let big = if plus.norm() >= minus.norm() {
        plus
    } else {
        minus
    } * 0.5;
    let small = if big.norm() == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        det / big
    };
    order_pair(big, small)
}

fn order_pair(a: Complex64, b: Complex64) -> EigenPair {
    let (ma, mb) = (a.norm(), b.norm());
    let tied = (ma - mb).abs() <= MODULUS_TIE * ma.max(mb);
    let a_first = if tied {
        positive_arg(a) <= positive_arg(b)
    } else {
        ma > mb
    };
    if a_first {
        EigenPair {
            lambda1: a,
            lambda2: b,
        }
    } else {
        EigenPair {
            lambda1: b,
            lambda2: a,
        }
    }
}

fn positive_arg(z: Complex64) -> f64 {
    let a = z.arg();
    if a < 0.0 {
        a + TAU
    } else {
        a
    }
}

/// Whether both eigenvalues of `c` have the same modulus, decided by
/// `u = (tr C)² / (4 det C) ∈ [0, 1]`.
pub fn equal_modulus(c: &CMat2) -> Result<bool> {
    let det = c.det();
    if det.norm() <= SINGULAR_DET {
        return Err(Error::Singular { det: det.norm() });
    }
    let tr = c.trace();
    let u = tr * tr / (det * 4.0);
    let real = u.im.abs() <= EQUAL_MODULUS_TOL * (1.0 + u.norm());
    let inside = u.re >= -EQUAL_MODULUS_TOL && u.re <= 1.0 + EQUAL_MODULUS_TOL;
    Ok(real && inside)
}

/// Eigenvalues of `C_0` against the predicted `{0, ∏ (c_j + c_j⁻¹)/2}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentroReport {
    pub small_modulus: f64,
    pub large_modulus: f64,
    pub predicted: f64,
    /// `large_modulus − predicted`.
    pub large_deviation: f64,
}

impl CentroReport {
    pub fn max_abs_deviation(&self) -> f64 {
        self.small_modulus.abs().max(self.large_deviation.abs())
    }
}

pub fn centro_check(matrices: &[Sl2]) -> Result<CentroReport> {
    let c0 = c_matrix(matrices, Complex64::new(0.0, 0.0))?;
    let eig = eigen2(&c0);
    let predicted: f64 = matrices.iter().map(|a| a.n_value().exp()).product();
    let large_modulus = eig.lambda1.norm();
    Ok(CentroReport {
        small_modulus: eig.lambda2.norm(),
        large_modulus,
        predicted,
        large_deviation: large_modulus - predicted,
    })
}

/// Relative modulus gap `(|λ1| − |λ2|)/|λ1|` of `C_z`.
pub fn modulus_separation(matrices: &[Sl2], z: Complex64) -> Result<f64> {
    let eig = eigen2(&c_matrix(matrices, z)?);
    let big = eig.lambda1.norm();
    if big == 0.0 {
        return Ok(0.0);
    }
    Ok((big - eig.lambda2.norm()) / big)
}

/// Relative gap below which [`autoval_sample`] counts a point as tied.
pub const SEPARATION_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutovalReport {
    pub samples: usize,
    pub radius: f64,
    pub min_separation: f64,
    /// Point where the smallest gap was seen, as `[re, im]`.
    #[serde(with = "complex_pair")]
    pub worst_z: Complex64,
}

impl AutovalReport {
    pub fn all_separated(&self) -> bool {
        self.min_separation > SEPARATION_TOL
    }
}

/// [`modulus_separation`] at `samples` uniform points of `|z| ≤ radius`.
pub fn autoval_sample(
    matrices: &[Sl2],
    samples: usize,
    radius: f64,
    seed: u64,
) -> Result<AutovalReport> {
    if samples == 0 {
        return invalid("need at least one sample");
    }
    if !(radius > 0.0 && radius < 1.0) {
        return invalid(format!("radius must lie in (0, 1), got {radius}"));
    }
    let mut worst = (f64::INFINITY, Complex64::new(0.0, 0.0));
    for i in 0..samples as u64 {
        let z = disk_point(seed, i, radius);
        let gap = modulus_separation(matrices, z)?;
        if gap < worst.0 {
            worst = (gap, z);
        }
    }
    Ok(AutovalReport {
        samples,
        radius,
        min_separation: worst.0,
        worst_z: worst.1,
    })
}
