//! Exit criteria. Prints one `criterion N: PASS|FAIL` line each and exits
//! nonzero if any criterion fails.

use std::f64::consts::{LN_2, TAU};
use std::process::Command;

use sl2lab::cocycles::{
    herman_equality_check, lyapunov_estimate, lyapunov_over_seeds, spectral_growth,
    star_identity_probe, CocycleSpec,
};
use sl2lab::complexify::{autoval_sample, centro_check};
use sl2lab::formulas::{
    avg_expansion_check, f_integral_check, measure_bound_check, theorem1_check, theorem2_check,
    FormulaReport,
};
use sl2lab::randprod::{dedieu_shub_check, random_instance, LawSpec};
use sl2lab::{diag_hyperbolic, QuadratureSpec, Sl2};

const INSTANCE_SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Instance `i`: `1 + i mod 4` matrices with norms in `[1, 10]`.
fn instance(i: u64) -> Vec<Sl2> {
    random_instance(INSTANCE_SEED, i, 1 + (i % 4) as usize, 10.0).unwrap()
}

fn worst(reports: &[FormulaReport]) -> f64 {
    reports.iter().map(|r| r.abs_error).fold(0.0, f64::max)
}

fn norm_spec() -> QuadratureSpec {
    QuadratureSpec::new(1 << 10, 1 << 18, 1e-10).unwrap()
}

fn spectral_spec() -> QuadratureSpec {
    QuadratureSpec::new(1 << 18, 1 << 18, 1e-6).unwrap()
}

fn criterion_1_expansion_average_identity() -> Outcome {
    let reports: Vec<FormulaReport> = (0..100)
        .map(|i| theorem1_check(&instance(i), &norm_spec()).unwrap())
        .collect();
    let grid_ok = reports.iter().all(|r| r.quadrature.grid_used <= 1 << 18);
    let named = theorem1_check(
        &[diag_hyperbolic(2.0).unwrap(), diag_hyperbolic(3.0).unwrap()],
        &norm_spec(),
    )
    .unwrap();
    let named_err = (named.lhs - (25.0f64 / 12.0).ln()).abs();
    verdict(
        worst(&reports) <= 1e-6 && grid_ok && named_err <= 1e-8,
        format!("worst {:.2e}, named case {named_err:.2e}", worst(&reports)),
    )
}

fn criterion_2_spectral_radius_average_identity() -> Outcome {
    let mut worst_t2 = 0.0f64;
    let mut worst_gap = 0.0f64;
    let mut grid_ok = true;
    for i in 0..100 {
        let ms = instance(i);
        let t1 = theorem1_check(&ms, &norm_spec()).unwrap();
        let t2 = theorem2_check(&ms, &spectral_spec()).unwrap();
        grid_ok &= t2.quadrature.grid_used <= 1 << 18;
        worst_t2 = worst_t2.max(t2.abs_error);
        worst_gap = worst_gap.max((t1.lhs - t2.lhs).abs());
    }
    verdict(
        worst_t2 <= 1e-6 && worst_gap <= 1e-6 + 1e-8 && grid_ok,
        format!("worst {worst_t2:.2e}, identity gap {worst_gap:.2e}"),
    )
}

fn criterion_3_expansion_of_one_matrix_and_closed_form() -> Outcome {
    let grid = QuadratureSpec::fixed(1 << 14).unwrap();
    let reports: Vec<FormulaReport> = (0..100)
        .map(|i| {
            let a = random_instance(INSTANCE_SEED + 1, i, 1, 10.0).unwrap()[0];
            avg_expansion_check(&a, &grid).unwrap()
        })
        .collect();
    let mut worst_f = 0.0f64;
    for b in [1.0, 1.5, 2.0, 10.0, 100.0] {
        let r = f_integral_check(b, &grid).unwrap();
        let closed = TAU * ((b + 1.0) / 2.0f64).ln();
        worst_f = worst_f.max((r.rhs - closed).abs()).max(r.abs_error);
    }
    verdict(
        worst(&reports) <= 1e-8 && worst_f <= 1e-8,
        format!(
            "expansion worst {:.2e}, closed form worst {worst_f:.2e}",
            worst(&reports)
        ),
    )
}

fn criterion_4_measure_lower_bound() -> Outcome {
    let mut failures = 0;
    let mut worst_margin = f64::INFINITY;
    for i in 0..1000u64 {
        let frac = (i as f64 * 0.618_033_988_749_894_9).fract();
        let a = LN_2 + (10.0 - LN_2) * frac;
        let r = measure_bound_check(&instance(i), a, 1 << 14).unwrap();
        let bound = 1.0 - LN_2 / a - 2.0 / (1 << 14) as f64;
        worst_margin = worst_margin.min(r.nu_estimate - bound);
        if r.nu_estimate < bound {
            failures += 1;
        }
    }
    verdict(
        failures == 0,
        format!("{failures} below bound, smallest margin {worst_margin:.3e}"),
    )
}

fn criterion_5_centre_eigenvalues_and_disk_separation() -> Outcome {
    let worst_centre = (0..1000)
        .map(|i| centro_check(&instance(i)).unwrap().max_abs_deviation())
        .fold(0.0, f64::max);
    let samples: Vec<_> = (0..10)
        .map(|i| autoval_sample(&instance(i), 1000, 0.9, i).unwrap())
        .collect();
    let separated = samples.iter().all(|r| r.all_separated());
    let min_gap = samples
        .iter()
        .map(|r| r.min_separation)
        .fold(f64::INFINITY, f64::min);
    verdict(
        worst_centre <= 1e-8 && separated,
        format!("centre worst {worst_centre:.2e}, smallest modulus gap {min_gap:.3e}"),
    )
}

fn criterion_6_herman_exponent() -> Outcome {
    let spec = CocycleSpec::herman(2.0);
    let target = 1.25f64.ln();
    let lyap = lyapunov_estimate(&spec, spec.default_point(), 100_000).unwrap();
    let eq = herman_equality_check(&spec, 10_000, &QuadratureSpec::fixed(1 << 8).unwrap()).unwrap();
    let lyap_err = (lyap.exponent - target).abs();
    verdict(
        lyap_err <= 0.01 && eq.abs_error <= 0.02,
        format!(
            "exponent error {lyap_err:.2e}, equality error {:.2e}",
            eq.abs_error
        ),
    )
}

fn criterion_7_bernoulli_example() -> Outcome {
    let target = LN_2 / 2.0;
    let spec = CocycleSpec::bernoulli_hir(0);
    let seeds: Vec<u64> = (0..10).collect();
    let lambda = lyapunov_over_seeds(&spec, &seeds, 100_000).unwrap();
    let lambda_err = (lambda - target).abs();

    let spec = CocycleSpec::bernoulli_hir(7);
    let short = spectral_growth(&spec, spec.default_point(), 1_000).unwrap();
    let long = spectral_growth(&spec, spec.default_point(), 10_000).unwrap();
    let counts_ok = long.rho_one_count >= 100 && long.rho_one_count > short.rho_one_count;

    let probes: Vec<_> = (1..=20).map(|n| star_identity_probe(n).unwrap()).collect();
    let not_below: Vec<usize> = probes
        .iter()
        .filter(|p| p.mean_log_rho_rate >= target)
        .map(|p| p.n)
        .collect();
    verdict(
        lambda_err <= 0.02 && counts_ok && not_below.is_empty(),
        format!(
            "exponent error {lambda_err:.2e}, ρ = 1 counts {} then {}, probe not strictly below at n = {not_below:?}",
            short.rho_one_count, long.rho_one_count
        ),
    )
}

fn criterion_8_random_product_chain() -> Outcome {
    let target = 1.25f64.ln();
    let constant = dedieu_shub_check(&LawSpec::constant(2.0, 1), 100_000, 10_000).unwrap();
    let spread = dedieu_shub_check(&LawSpec::log_uniform(1.0, 4.0, 1), 100_000, 10_000).unwrap();
    let dev = constant.max_deviation_from(target);
    verdict(
        dev <= 0.01 && spread.agrees_within(3.0),
        format!(
            "constant law deviation {dev:.2e}, log-uniform max z {:.2}",
            spread.max_z_score()
        ),
    )
}

fn criterion_9_spectral_growth_tracks_norm_growth() -> Outcome {
    let spec = CocycleSpec::herman(2.0);
    let g = spectral_growth(&spec, spec.default_point(), 10_000).unwrap();
    let gap = (g.running_max - g.final_norm_rate()).abs();
    let excess = g.max_excess_over_norm();
    verdict(
        gap <= 0.03 && excess <= 1e-12,
        format!("running max gap {gap:.2e}, largest excess {excess:.2e}"),
    )
}

const H2: &str = "[[[2,0],[0,0.5]]]";
const H2_H3: &str = "[[[2,0],[0,0.5]],[[3,0],[0,0.3333333333333333]]]";

fn runs() -> Vec<Vec<&'static str>> {
    vec![
        vec!["verify-theorem1", "--matrices", H2_H3],
        vec!["verify-theorem2", "--matrices", H2_H3],
        vec!["avg-expansion", "--matrices", H2],
        vec!["f-integral", "--b", "2"],
        vec!["measure-bound", "--matrices", H2_H3, "--a", "2"],
        vec!["fubini", "--matrices", H2, "--grid", "256"],
        vec!["lyapunov", "--n", "20000"],
        vec!["herman-equality", "--n", "2000"],
        vec!["bernoulli", "--n-max", "2000", "--seed", "3"],
        vec!["star-probe", "--n", "12"],
        vec![
            "dedieu-shub",
            "--samples",
            "5000",
            "--n",
            "2000",
            "--seed",
            "4",
        ],
        vec!["spectral-growth", "--n-max", "2000"],
        vec!["centro-check", "--matrices", H2_H3],
        vec![
            "autoval-sample",
            "--matrices",
            H2_H3,
            "--samples",
            "500",
            "--seed",
            "5",
        ],
    ]
}

fn criterion_10_reports_are_deterministic() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_sl2lab");
    let mut differing = Vec::new();
    for args in runs() {
        let outputs: Vec<Vec<u8>> = ["1", "4"]
            .iter()
            .map(|threads| {
                Command::new(bin)
                    .args(&args)
                    .args(["--threads", threads])
                    .output()
                    .unwrap()
                    .stdout
            })
            .collect();
        if outputs[0].is_empty() || outputs[0] != outputs[1] {
            differing.push(args[0]);
        }
    }
    verdict(
        differing.is_empty(),
        format!("{} subcommands, differing: {differing:?}", runs().len()),
    )
}

fn main() {
    let criteria: [fn() -> Outcome; 10] = [
        criterion_1_expansion_average_identity,
        criterion_2_spectral_radius_average_identity,
        criterion_3_expansion_of_one_matrix_and_closed_form,
        criterion_4_measure_lower_bound,
        criterion_5_centre_eigenvalues_and_disk_separation,
        criterion_6_herman_exponent,
        criterion_7_bernoulli_example,
        criterion_8_random_product_chain,
        criterion_9_spectral_growth_tracks_norm_growth,
        criterion_10_reports_are_deterministic,
    ];
    let mut failed = 0;
    for (k, criterion) in criteria.iter().enumerate() {
        let outcome = criterion();
        let word = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {}: {word} ({})", k + 1, outcome.detail);
        failed += usize::from(!outcome.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
