use opcap::distributions::{Family, SeverityDistribution};
use opcap::lda::{Component, CompoundPoissonModel, SlaVariant};
use opcap::opcar::{
    aggregate_statistics, estimate_lambda, grid_search_calibrate, Axis, CalibrationFamily, ConditionSet, Objective,
    ParamGrid, QisBankStatistics, ResidualSurface, SampleAggregates, Thresholds,
};
use opcap::regression::{ols_fit, rho, OlsOptions, PowerCoefficientModel, RegressionDataset};
use opcap::rng::RngStream;
use opcap::sma::{bic, k_sma, LcThresholds, LossHistory};
use proptest::prelude::*;
use rand::Rng;

fn family_strategy() -> impl Strategy<Value = SeverityDistribution> {
    prop_oneof![
        (-2.0..16.0f64, 0.2..3.5f64).prop_map(|(m, s)| SeverityDistribution::lognormal(m, s).unwrap()),
        (0.3..8.0f64, 0.1..1e5f64).prop_map(|(k, t)| SeverityDistribution::gamma(k, t).unwrap()),
        (0.3..6.0f64, 0.1..1e4f64).prop_map(|(a, x)| SeverityDistribution::pareto(a, x).unwrap()),
        (0.3..6.0f64, 0.1..1e4f64).prop_map(|(a, x)| SeverityDistribution::log_logistic(a, x).unwrap()),
        (0.5..10.0f64, 0.5..10.0f64).prop_map(|(k, r)| SeverityDistribution::log_gamma(k, r).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn quantile_cdf_round_trip(d in family_strategy(), p in 1e-4..(1.0 - 1e-4f64)) {
        let x = d.quantile(p).unwrap();
        prop_assert!((d.cdf(x) - p).abs() <= 1e-8, "{:?} p={} x={} cdf={}", d, p, x, d.cdf(x));
    }

    #[test]
    fn partial_expectation_nonincreasing(d in family_strategy(), a in 0.0..1e3f64, b in 0.0..1e3f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        match (d.partial_expectation(lo), d.partial_expectation(hi)) {
            (Ok(x), Ok(y)) => prop_assert!(y <= x * (1.0 + 1e-12)),
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "inconsistent {:?}", other),
        }
    }

    #[test]
    fn partial_expectation_at_zero_is_mean(d in family_strategy()) {
        if let Ok(m) = d.mean() {
            let pe = d.partial_expectation(0.0).unwrap();
            prop_assert!((pe / m - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn sla_variants_differ_by_mean(rate in 1.0..2000.0f64, mu in 0.0..14.0f64, sigma in 0.5..3.0f64) {
        let m = CompoundPoissonModel::poisson_lognormal(rate, mu, sigma).unwrap();
        let c = m.sla_var(0.999, SlaVariant::Corrected).unwrap();
        let o = m.sla_var(0.999, SlaVariant::Opcar).unwrap();
        let mean = SeverityDistribution::lognormal(mu, sigma).unwrap().mean().unwrap();
        prop_assert!(((c - o) - mean).abs() <= 1e-9 * c);
    }

    #[test]
    fn long_term_lc_additive_and_linear(
        r1 in 0.1..100.0f64, r2 in 0.1..100.0f64, mu in -2.0..4.0f64, s in 0.5..2.5f64, k in 0.5..3.0f64
    ) {
        let t = LcThresholds::default();
        let a = Component { rate: r1, severity: SeverityDistribution::lognormal(mu, s).unwrap() };
        let b = Component { rate: r2, severity: SeverityDistribution::gamma(k, 5.0).unwrap() };
        let joint = CompoundPoissonModel::new(vec![a, b]).unwrap().long_term_lc(t).unwrap();
        let la = CompoundPoissonModel::new(vec![a]).unwrap().long_term_lc(t).unwrap();
        let lb = CompoundPoissonModel::new(vec![b]).unwrap().long_term_lc(t).unwrap();
        prop_assert!((joint - la - lb).abs() <= 1e-10 * joint);
        let doubled = CompoundPoissonModel::new(vec![a]).unwrap().with_rates_scaled(2.0).unwrap().long_term_lc(t).unwrap();
        prop_assert!((doubled - 2.0 * la).abs() <= 1e-10 * la);
    }

    #[test]
    fn k_sma_continuous_at_first_bound(lc in 0.0..1e7f64) {
        let right = k_sma(1000.0 * (1.0 + 1e-12), lc);
        prop_assert!((k_sma(1000.0, lc) - 110.0).abs() < 1e-12);
        prop_assert!((right - 110.0).abs() < 1e-6);
    }

    #[test]
    fn k_sma_equals_bic_when_lc_equals_bic(bi in 1000.001..1e6f64) {
        let c = bic(bi);
        prop_assert!((k_sma(bi, c) - c).abs() <= 1e-12 * c);
    }

    #[test]
    fn loss_component_monotone_in_added_losses(
        years in prop::collection::vec(prop::collection::vec(0.01..500.0f64, 0..6), 1..10),
        extra in 0.01..500.0f64,
        year in 0usize..10,
    ) {
        let t = LcThresholds::default();
        let base = LossHistory::new(years.clone()).unwrap().loss_component(t);
        let mut more = years.clone();
        let i = year % more.len();
        more[i].push(extra);
        prop_assert!(LossHistory::new(more).unwrap().loss_component(t) >= base);
    }

    #[test]
    fn scaling_small_losses_only_moves_first_term(
        years in prop::collection::vec(prop::collection::vec(0.01..500.0f64, 1..6), 1..10),
        c in 0.1..0.99f64,
    ) {
        let t = LcThresholds::default();
        let h = LossHistory::new(years.clone()).unwrap();
        let scaled: Vec<Vec<f64>> = years
            .iter()
            .map(|y| y.iter().map(|&x| if x <= t.low { c * x } else { x }).collect())
            .collect();
        let small: f64 = years.iter().flatten().filter(|&&x| x <= t.low).sum();
        let expected = h.loss_component(t) - 7.0 * (1.0 - c) * small / years.len() as f64;
        let got = LossHistory::new(scaled).unwrap().loss_component(t);
        prop_assert!((got - expected).abs() <= 1e-9 * expected.max(1.0));
    }

    #[test]
    fn rho_properties(tau in 0.01..0.99f64, y in -1e3..1e3f64, d in 0.0..10.0f64) {
        prop_assert!(rho(tau, y) >= 0.0);
        prop_assert_eq!(rho(tau, 0.0), 0.0);
        if y > 0.0 {
            prop_assert!((rho(tau, y + d) - rho(tau, y) - tau * d).abs() <= 1e-9 * (1.0 + y.abs()));
        }
        if y < -d {
            prop_assert!((rho(tau, y + d) - rho(tau, y) - (tau - 1.0) * d).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn k_sma_monotone(bi in 1000.0..1e6f64, dbi in 1e-3..1e4f64, lc in 0.0..1e6f64, dlc in 0.0..1e4f64) {
        prop_assert!(k_sma(bi + dbi, lc) > k_sma(bi, lc));
        prop_assert!(k_sma(bi, lc + dlc) >= k_sma(bi, lc));
    }
}

#[test]
fn bic_boundaries_exact() {
    for (b, v) in [(1000.0f64, 110.0), (3000.0, 410.0), (10000.0, 1740.0), (30000.0, 6340.0)] {
        assert_eq!(bic(b), v);
        let right = bic(f64::from_bits(b.to_bits() + 1));
        assert!((right - v).abs() <= 1e-9, "{b}: {right}");
    }
}

#[test]
fn lognormal_partial_expectation_matches_integration() {
    for mu in [0.0, 10.0, 14.0] {
        for sigma in [1.0, 2.0, 3.0] {
            let d = SeverityDistribution::lognormal(mu, sigma).unwrap();
            for t in [0.01, 10.0, 100.0] {
                let closed = d.partial_expectation(t).unwrap();
                let numeric = d.partial_expectation_numeric(t).unwrap();
                assert!((closed / numeric - 1.0).abs() <= 1e-8, "μ={mu} σ={sigma} t={t}: {closed} vs {numeric}");
                // and against a composite Simpson rule in log space
                let plain = log_space_partial_expectation(mu, sigma, t);
                assert!((closed / plain - 1.0).abs() <= 1e-6, "μ={mu} σ={sigma} t={t}: {closed} vs {plain}");
            }
        }
    }
}

/// ∫_t^∞ x f(x) dx for a lognormal, with x = e^y and Simpson's rule on y.
fn log_space_partial_expectation(mu: f64, sigma: f64, t: f64) -> f64 {
    let lo = t.ln();
    let hi = (mu + sigma * sigma + 14.0 * sigma).max(lo + 1.0);
    let n = 200_000usize;
    let h = (hi - lo) / n as f64;
    let g = |y: f64| {
        let z = (y - mu) / sigma;
        (y - 0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
    };
    let mut sum = g(lo) + g(hi);
    for i in 1..n {
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * g(lo + i as f64 * h);
    }
    sum * h / 3.0
}

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
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

#[test]
fn merged_model_matches_components_in_distribution() {
    let model = CompoundPoissonModel::new(vec![
        Component { rate: 5.0, severity: SeverityDistribution::lognormal(1.0, 1.5).unwrap() },
        Component { rate: 20.0, severity: SeverityDistribution::gamma(2.0, 3.0).unwrap() },
    ])
    .unwrap();
    let years = 100_000;
    let direct = model.simulate_annual_totals(years, &RngStream::new(11)).unwrap();
    let merged = model.merge().simulate_annual_totals(years, &RngStream::new(12)).unwrap();
    let d = ks_statistic(direct, merged);
    // critical value at the 0.1% level: c(α)·sqrt((n+m)/(nm)), c = 1.949
    let critical = 1.949 * (2.0 / years as f64).sqrt();
    assert!(d < critical, "KS {d} ≥ {critical}");
}

#[test]
fn simulation_independent_of_thread_count() {
    let model = CompoundPoissonModel::poisson_lognormal(50.0, 0.0, 2.0).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| model.simulate(5000, &RngStream::new(3)).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.years, b.years);
    assert_eq!(a.years, model.simulate(5000, &RngStream::new(3)).unwrap().years);
}

#[test]
fn order_statistic_identity() {
    let d = SeverityDistribution::lognormal(10.0, 2.0).unwrap();
    let mut rng = RngStream::new(22);
    let reps = 100_000;
    for n in [1usize, 5, 50] {
        let values: Vec<f64> = (0..reps)
            .map(|_| {
                let max = d.sample(&mut rng, n).into_iter().fold(0.0, f64::max);
                d.cdf(max)
            })
            .collect();
        let mean = values.iter().sum::<f64>() / reps as f64;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        let target = n as f64 / (n as f64 + 1.0);
        assert!((mean - target).abs() < 3.0 * sd / (reps as f64).sqrt(), "n={n}: {mean} vs {target}");
    }
}

fn population_aggregates(mu: f64, sigma: f64, rate: f64, t: Thresholds) -> SampleAggregates {
    let d = SeverityDistribution::lognormal(mu, sigma).unwrap();
    SampleAggregates {
        lambda_u: rate * d.sf(t.u),
        lambda_u_tilde: rate * d.sf(t.u_tilde),
        mu_u: d.conditional_tail_mean(t.u).unwrap(),
        mu_m1: 0.0,
        mu_m2: 0.0,
        n_tilde_mean: 0.0,
        n_tilde_total: 0.0,
    }
}

#[test]
fn grid_search_recovers_truth_from_population_aggregates() {
    let t = Thresholds::default();
    let agg = population_aggregates(10.0, 2.0, 1000.0, t);
    for objective in [Objective::SumOfSquares, Objective::ParetoOptimal] {
        let r = grid_search_calibrate(&agg, CalibrationFamily::Lognormal, ConditionSet::PercentileMoment, &ParamGrid::grid1(), objective, t)
            .unwrap();
        let (m, s) = r.params.unwrap();
        assert!((m - 10.0).abs() < 1e-9 && (s - 2.0).abs() < 1e-9, "{objective:?}: {m} {s}");
        assert!((r.lambda.unwrap() - 1000.0).abs() < 1e-6);
    }
}

#[test]
fn pareto_selection_is_non_dominated() {
    let t = Thresholds::default();
    let model = CompoundPoissonModel::poisson_lognormal(1000.0, 10.0, 2.0).unwrap();
    for seed in 0..5u64 {
        let years = model.simulate(5, &RngStream::new(seed)).unwrap().years;
        let agg = aggregate_statistics(&QisBankStatistics::from_losses(&years, t).unwrap()).unwrap();
        let s = ResidualSurface::evaluate(&agg, CalibrationFamily::Lognormal, ConditionSet::PercentileMoment, &ParamGrid::grid1(), t);
        let i = s.select(Objective::ParetoOptimal).unwrap();
        assert!((0..s.points.len()).all(|j| !s.dominates(j, i)));
    }
}

#[test]
fn calibration_is_log_scale_equivariant() {
    let t = Thresholds::default();
    let model = CompoundPoissonModel::poisson_lognormal(1000.0, 10.0, 2.0).unwrap();
    let years = model.simulate(5, &RngStream::new(5)).unwrap().years;
    let agg = aggregate_statistics(&QisBankStatistics::from_losses(&years, t).unwrap()).unwrap();
    let c = 1e-6f64;
    let scaled_years: Vec<Vec<f64>> = years.iter().map(|y| y.iter().map(|x| x * c).collect()).collect();
    let ts = Thresholds::new(t.u * c, t.u_tilde * c).unwrap();
    let agg_s = aggregate_statistics(&QisBankStatistics::from_losses(&scaled_years, ts).unwrap()).unwrap();
    let shift = c.ln();
    let grid = ParamGrid::grid1();
    let grid_s = ParamGrid {
        first: Axis::new(grid.first.lo + shift, grid.first.hi + shift, grid.first.step).unwrap(),
        second: grid.second,
    };
    let a = grid_search_calibrate(&agg, CalibrationFamily::Lognormal, ConditionSet::PercentileMoment, &grid, Objective::ParetoOptimal, t).unwrap();
    let b = grid_search_calibrate(&agg_s, CalibrationFamily::Lognormal, ConditionSet::PercentileMoment, &grid_s, Objective::ParetoOptimal, ts)
        .unwrap();
    let (pa, pb) = (a.params.unwrap(), b.params.unwrap());
    assert!((pa.0 + shift - pb.0).abs() < 1e-6, "{pa:?} {pb:?}");
    assert!((pa.1 - pb.1).abs() < 1e-12);
    assert!((a.lambda.unwrap() / b.lambda.unwrap() - 1.0).abs() < 1e-9);
    let d = SeverityDistribution::lognormal(pa.0, pa.1).unwrap();
    assert!((estimate_lambda(&d, agg.lambda_u, t.u).unwrap() - a.lambda.unwrap()).abs() < 1e-9);
}

#[test]
fn power_model_derivatives_match_finite_differences() {
    let mut rng = RngStream::new(99);
    for _ in 0..1000 {
        let theta = rng.gen_range(0.01..10.0);
        let alpha = rng.gen_range(0.0..0.95);
        let a = -rng.gen_range(0.0..50.0);
        let x = rng.gen_range(0.5..500.0);
        let m = PowerCoefficientModel::new(theta, alpha, a).unwrap();
        let h = 1e-6 * x;
        let e = m.eval(x).unwrap();
        let (up, down) = (m.eval(x + h).unwrap(), m.eval(x - h).unwrap());
        let d1 = (up.r - down.r) / (2.0 * h);
        let d2 = (up.dr - down.dr) / (2.0 * h);
        assert!((d1 / e.dr - 1.0).abs() <= 1e-5, "R' {d1} vs {}", e.dr);
        assert!((d2 / e.d2r - 1.0).abs() <= 1e-5, "R'' {d2} vs {}", e.d2r);
    }
}

#[test]
fn ols_residuals_orthogonal_to_regressors() {
    let mut rng = RngStream::new(4);
    let n = 300;
    let cols: Vec<Vec<f64>> = (0..4).map(|_| (0..n).map(|_| rng.gen_range(0.0..1e3)).collect()).collect();
    let y: Vec<f64> = (0..n).map(|j| 5.0 + cols.iter().map(|c| 0.3 * c[j]).sum::<f64>() + rng.gen_range(-50.0..50.0)).collect();
    let rows = (0..n).map(|j| cols.iter().map(|c| c[j]).collect()).collect();
    let names = (0..4).map(|i| format!("x{i}")).collect();
    let d = RegressionDataset::new("y", names, y, rows).unwrap();
    let fit = ols_fit(&d, &OlsOptions { intercept: true, ..Default::default() }).unwrap();
    let rnorm = fit.residuals.iter().map(|e| e * e).sum::<f64>().sqrt();
    let ones = vec![1.0; n];
    for c in std::iter::once(&ones).chain(cols.iter()) {
        let dot: f64 = c.iter().zip(&fit.residuals).map(|(a, b)| a * b).sum();
        let cnorm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(dot.abs() <= 1e-8 * cnorm * rnorm, "{dot}");
    }
}

#[test]
fn family_config_round_trip() {
    let d = SeverityDistribution::new(Family::LogGamma { shape: 2.0, rate: 3.0, scale: 1.0 }).unwrap();
    let text = serde_json::to_string(&d).unwrap();
    let back: SeverityDistribution = serde_json::from_str(&text).unwrap();
    assert_eq!(d, back);
    assert!(serde_json::from_str::<SeverityDistribution>(r#"{"family":"gamma","shape":-1,"scale":1}"#).is_err());
}

#[test]
fn split_under_capitalization_positive() {
    use opcap::studies::{split_analysis, SplitSpec};
    for i in 0..=30 {
        let sigma = 1.5 + 0.05 * i as f64;
        for m in [2usize, 10] {
            let s = split_analysis(&SplitSpec { rate: 10.0, mu_euro: 14.0, sigma, m, alpha: 0.999 }).unwrap();
            assert!(s.under_capitalization > 0.0, "σ={sigma} m={m}: {}", s.under_capitalization);
        }
    }
    let one = split_analysis(&SplitSpec { rate: 10.0, mu_euro: 14.0, sigma: 2.0, m: 1, alpha: 0.999 }).unwrap();
    assert_eq!(one.delta, 0.0);
}

#[test]
fn implied_bi_root_consistency() {
    use opcap::studies::{euro_lognormal_model, implied_bi, VarMethod};
    for mu in [10.0, 12.0, 14.0] {
        for sigma in [1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.0] {
            let model = euro_lognormal_model(10.0, mu, sigma).unwrap();
            let r = implied_bi(&model, 0.999, VarMethod::Sla, LcThresholds::default()).unwrap();
            assert!((k_sma(r.bi, r.lc) / r.var - 1.0).abs() <= 1e-6, "μ={mu} σ={sigma}");
        }
    }
}
