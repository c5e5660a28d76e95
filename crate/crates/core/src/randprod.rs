//! I.i.d. products of random SL(2,ℝ) matrices `R_φ H_c R_ψ` with uniform
//! angles, a law invariant under rotations on both sides.
//!
//! For such laws four quantities coincide: the exponent `λ⁺` of the
//! product, `E[log ρ(A)]`, `E[N(A)]` and the Furstenberg average
//! `E[log ‖A u_θ‖]`. [`dedieu_shub_check`] estimates all four by Monte Carlo.
//!
//! Every draw is a pure function of `(seed, index)`: index `i` selects
//! ChaCha stream `i`, so results do not depend on evaluation order.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mat2::{rotation_matrix, Mat2, ScaledProduct, Sl2};
use crate::quadrature::pairwise_sum;

/// Independent runs used for the exponent estimate.
pub const RUNS: usize = 100;
/// Batches used for standard errors of the one-sample means.
pub const BATCHES: usize = 100;
/// Smallest accepted sample count and horizon.
pub const MIN_SAMPLES: usize = 1000;

/// Run `r`, step `j` uses stream `RUN_STREAM_BASE + r·2³² + j`, disjoint
/// from the one-sample streams `0..samples`.
const RUN_STREAM_BASE: u64 = 1 << 62;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CDistribution {
    Constant {
        c: f64,
    },
    /// `log c` uniform on `[log c_min, log c_max]`.
    LogUniform {
        c_min: f64,
        c_max: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawSpec {
    pub c_distribution: CDistribution,
    pub seed: u64,
}

/// One draw: the matrix and an independent uniform direction angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Draw {
    pub matrix: Sl2,
    pub theta: f64,
}

impl LawSpec {
    pub fn constant(c: f64, seed: u64) -> Self {
        LawSpec {
            c_distribution: CDistribution::Constant { c },
            seed,
        }
    }

    pub fn log_uniform(c_min: f64, c_max: f64, seed: u64) -> Self {
        LawSpec {
            c_distribution: CDistribution::LogUniform { c_min, c_max },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.c_distribution {
            CDistribution::Constant { c } => {
                if !c.is_finite() || c < 1.0 {
                    return invalid(format!("constant law needs finite c >= 1, got {c}"));
                }
            }
            CDistribution::LogUniform { c_min, c_max } => {
                if !(c_min.is_finite() && c_max.is_finite() && 1.0 <= c_min && c_min <= c_max) {
                    return invalid(format!(
                        "log_uniform law needs 1 <= c_min <= c_max, got [{c_min}, {c_max}]"
                    ));
                }
            }
        }
        Ok(())
    }

    /// The draw at `index`.
    pub fn draw(&self, index: u64) -> Draw {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let phi = TAU * rng.random::<f64>();
        let psi = TAU * rng.random::<f64>();
        let u: f64 = rng.random();
        let theta = TAU * rng.random::<f64>();
        let c = match self.c_distribution {
            CDistribution::Constant { c } => c,
            CDistribution::LogUniform { c_min, c_max } => {
                (c_min.ln() + u * (c_max.ln() - c_min.ln())).exp()
            }
        };
        let h = Mat2::new(c, 0.0, 0.0, 1.0 / c);
        let m = rotation_matrix(phi) * h * rotation_matrix(psi);
        Draw {
            matrix: Sl2::new_unchecked(m),
            theta,
        }
    }
}

/// `R_φ H_c R_ψ` drawn from `law` at `index`.
pub fn sample_matrix(law: &LawSpec, index: u64) -> Result<Sl2> {
    law.validate()?;
    Ok(law.draw(index).matrix)
}

/// `len` matrices with norm uniform in `[1, max_norm]` and uniform angles,
/// for randomized identity checks. Instance `index` uses streams
/// `index·len .. (index+1)·len`.
pub fn random_instance(seed: u64, index: u64, len: usize, max_norm: f64) -> Result<Vec<Sl2>> {
    if !max_norm.is_finite() || max_norm < 1.0 {
        return invalid(format!("max_norm must be finite and >= 1, got {max_norm}"));
    }
    Ok((0..len as u64)
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index * len as u64 + j);
            let c = 1.0 + (max_norm - 1.0) * rng.random::<f64>();
            let phi = TAU * rng.random::<f64>();
            let psi = TAU * rng.random::<f64>();
            let h = Mat2::new(c, 0.0, 0.0, 1.0 / c);
            Sl2::new_unchecked(rotation_matrix(phi) * h * rotation_matrix(psi))
        })
        .collect())
}

/// Uniform point of the disk `|z| ≤ radius`, stream `index`.
pub fn disk_point(seed: u64, index: u64, radius: f64) -> Complex64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let r = radius * rng.random::<f64>().sqrt();
    Complex64::from_polar(r, TAU * rng.random::<f64>())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StdErrors {
    pub lambda: f64,
    pub int_log_rho: f64,
    pub int_n: f64,
    pub furstenberg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DedieuShubReport {
    pub lambda_est: f64,
    pub int_log_rho_est: f64,
    pub int_n_est: f64,
    pub furstenberg_est: f64,
    pub n_steps: usize,
    pub samples: usize,
    pub runs: usize,
    pub std_errors: StdErrors,
    /// `(1/n_steps) log ‖A_n ⋯ A_1‖` per run.
    pub run_exponents: Vec<f64>,
}

impl DedieuShubReport {
    pub fn estimates(&self) -> [(f64, f64); 4] {
        let se = &self.std_errors;
        [
            (self.lambda_est, se.lambda),
            (self.int_log_rho_est, se.int_log_rho),
            (self.int_n_est, se.int_n),
            (self.furstenberg_est, se.furstenberg),
        ]
    }

    /// Largest pairwise gap in units of the combined standard error.
    /// A gap below `1e-12` counts as zero.
    pub fn max_z_score(&self) -> f64 {
        let est = self.estimates();
        let mut worst = 0.0f64;
        for i in 0..4 {
            for j in i + 1..4 {
                let gap = (est[i].0 - est[j].0).abs();
                if gap <= 1e-12 {
                    continue;
                }
                let se = est[i].1.hypot(est[j].1);
                worst = worst.max(if se > 0.0 { gap / se } else { f64::INFINITY });
            }
        }
        worst
    }

    /// All pairs agree within `k` combined standard errors.
    pub fn agrees_within(&self, k: f64) -> bool {
        self.max_z_score() <= k
    }

    /// Largest distance of any of the four estimates from `target`.
    pub fn max_deviation_from(&self, target: f64) -> f64 {
        self.estimates()
            .iter()
            .map(|(v, _)| (v - target).abs())
            .fold(0.0, f64::max)
    }

    pub fn runs_csv(&self) -> String {
        let mut out = String::from("run,exponent\n");
        for (r, e) in self.run_exponents.iter().enumerate() {
            out.push_str(&format!("{r},{e:.16e}\n"));
        }
        out
    }
}

/// Mean and batch-means standard error over `BATCHES` contiguous batches.
fn mean_and_se(xs: &[f64], batches: usize) -> (f64, f64) {
    let n = xs.len();
    let mean = pairwise_sum(xs) / n as f64;
    let k = batches.min(n);
    let means: Vec<f64> = (0..k)
        .map(|b| {
            let chunk = &xs[b * n / k..(b + 1) * n / k];
            pairwise_sum(chunk) / chunk.len() as f64
        })
        .collect();
    if k < 2 {
        return (mean, 0.0);
    }
    let centre = pairwise_sum(&means) / k as f64;
    let dev: Vec<f64> = means.iter().map(|m| (m - centre).powi(2)).collect();
    let var = pairwise_sum(&dev) / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

/// Estimates `λ⁺`, `E[log ρ]`, `E[N]` and the Furstenberg average for `law`.
///
/// `λ⁺` is the mean of [`RUNS`] independent products of length `n_steps`;
/// the other three are means over `samples` draws.
pub fn dedieu_shub_check(
    law: &LawSpec,
    samples: usize,
    n_steps: usize,
) -> Result<DedieuShubReport> {
    law.validate()?;
    if samples < MIN_SAMPLES || n_steps < MIN_SAMPLES {
        return invalid(format!(
            "samples and n_steps must be >= {MIN_SAMPLES}, got {samples} and {n_steps}"
        ));
    }
    if n_steps as u64 >= 1 << 32 {
        return invalid("n_steps must be below 2^32");
    }

    let per_sample: Vec<[f64; 3]> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let d = law.draw(i);
            let v = d.matrix.matrix().apply([d.theta.cos(), d.theta.sin()]);
            [
                d.matrix.log_spectral_radius(),
                d.matrix.n_value(),
                v[0].hypot(v[1]).ln(),
            ]
        })
        .collect();
    let column = |k: usize| -> Vec<f64> { per_sample.iter().map(|s| s[k]).collect() };
    let (int_log_rho_est, se_rho) = mean_and_se(&column(0), BATCHES);
    let (int_n_est, se_n) = mean_and_se(&column(1), BATCHES);
    let (furstenberg_est, se_f) = mean_and_se(&column(2), BATCHES);

    let run_exponents: Vec<f64> = (0..RUNS as u64)
        .into_par_iter()
        .map(|r| {
            let base = RUN_STREAM_BASE + (r << 32);
            let mut p = ScaledProduct::identity();
            for j in 0..n_steps as u64 {
                p.push(&law.draw(base + j).matrix);
            }
            p.log_norm() / n_steps as f64
        })
        .collect();
    let (lambda_est, se_lambda) = mean_and_se(&run_exponents, RUNS);

    Ok(DedieuShubReport {
        lambda_est,
        int_log_rho_est,
        int_n_est,
        furstenberg_est,
        n_steps,
        samples,
        runs: RUNS,
        std_errors: StdErrors {
            lambda: se_lambda,
            int_log_rho: se_rho,
            int_n: se_n,
            furstenberg: se_f,
        },
        run_exponents,
    })
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic critical value of [`ks_statistic`] at significance `alpha`.
pub fn ks_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}
