use sl2lab::randprod::{
    dedieu_shub_check, ks_critical, ks_statistic, sample_matrix, LawSpec, RUNS,
};
use sl2lab::{rotation, Sl2};

const WITNESS_SAMPLES: u64 = 10_000;

/// `|tr|` and `‖·‖_F`, snapped to a 1e-9 grid so that atoms such as the
/// constant-law Frobenius norm are not split by rounding.
fn summaries(ms: &[Sl2]) -> (Vec<f64>, Vec<f64>) {
    let snap = |x: f64| (x * 1e9).round() / 1e9;
    ms.iter()
        .map(|a| {
            (
                snap(a.trace().abs()),
                snap(a.matrix().frobenius_sq().sqrt()),
            )
        })
        .unzip()
}

fn draws(law: &LawSpec, from: u64, to: u64) -> Vec<Sl2> {
    (from..to).map(|i| sample_matrix(law, i).unwrap()).collect()
}

#[test]
fn sampled_matrices_have_unit_determinant() {
    let law = LawSpec::log_uniform(1.0, 100.0, 11);
    for a in draws(&law, 0, WITNESS_SAMPLES) {
        assert!((a.det() - 1.0).abs() <= 1e-12, "{a}");
    }
}

#[test]
fn rotated_draws_match_unrotated_in_distribution() {
    let critical = ks_critical(WITNESS_SAMPLES as usize, WITNESS_SAMPLES as usize, 0.01);
    for (seed, theta) in [(1, 0.3), (2, 1.0), (3, 2.5), (4, 4.0), (5, 5.9)] {
        for law in [
            LawSpec::constant(2.0, seed),
            LawSpec::log_uniform(1.0, 4.0, seed),
        ] {
            let base = draws(&law, 0, WITNESS_SAMPLES);
            let r = rotation(theta).unwrap();
            let turned: Vec<Sl2> = draws(&law, WITNESS_SAMPLES, 2 * WITNESS_SAMPLES)
                .into_iter()
                .map(|a| r * a)
                .collect();
            let (tr_a, fro_a) = summaries(&base);
            let (tr_b, fro_b) = summaries(&turned);
            let d_tr = ks_statistic(&tr_a, &tr_b);
            let d_fro = ks_statistic(&fro_a, &fro_b);
            assert!(
                d_tr <= critical,
                "{law:?} θ = {theta}: |tr| KS {d_tr} > {critical}"
            );
            assert!(
                d_fro <= critical,
                "{law:?} θ = {theta}: Frobenius KS {d_fro} > {critical}"
            );
        }
    }
}

/// `E[N(A)]` for `log c` uniform on `[0, ln 4]`, by composite Simpson.
fn expected_n_log_uniform_1_4() -> f64 {
    let top = 4f64.ln();
    let m = 2000;
    let h = top / m as f64;
    let f = |u: f64| u.cosh().ln();
    let inner: f64 = (1..m)
        .map(|k| f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    (f(0.0) + inner + f(top)) * h / 3.0 / top
}

#[test]
fn log_uniform_chain_agrees_within_three_standard_errors() {
    let report = dedieu_shub_check(&LawSpec::log_uniform(1.0, 4.0, 5), 20_000, 2_000).unwrap();
    assert!(report.agrees_within(3.0), "{report:?}");
    let se = report.std_errors;
    let oracle = expected_n_log_uniform_1_4();
    assert!(
        (report.int_n_est - oracle).abs() <= 3.0 * se.int_n,
        "{} vs {oracle}",
        report.int_n_est
    );
    assert!((report.furstenberg_est - oracle).abs() <= 3.0 * se.furstenberg);
    assert!((report.int_log_rho_est - oracle).abs() <= 3.0 * se.int_log_rho);
}

#[test]
fn constant_law_has_exact_n_average() {
    let report = dedieu_shub_check(&LawSpec::constant(2.0, 9), 5_000, 1_000).unwrap();
    assert!((report.int_n_est - 1.25f64.ln()).abs() <= 1e-15);
    assert_eq!(report.std_errors.int_n, 0.0);
    assert_eq!(report.run_exponents.len(), RUNS);
    assert!(report.agrees_within(3.0), "{report:?}");
}

#[test]
fn lambda_is_bit_reproducible_across_thread_counts() {
    let law = LawSpec::log_uniform(1.0, 4.0, 21);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| dedieu_shub_check(&law, 4_000, 1_000).unwrap())
    };
    let one = run(1);
    let many = run(7);
    assert_eq!(one.lambda_est.to_bits(), many.lambda_est.to_bits());
    assert_eq!(one, many);
}
