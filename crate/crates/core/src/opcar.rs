//! Hybrid calibration of an LDA model from bank-level summary statistics.
//!
//! Each bank reports, per year, the number of losses above two thresholds
//! `ũ < u`, the aggregate amount above `u` and the largest loss. Severity
//! parameters are chosen on a rectangular grid so that two conditions hold
//! approximately:
//!
//! * percentile: `S(ũ)/S(u) = λ̂_ũ/λ̂_u`, where `S = 1 − F`;
//! * moment: `E[X | X ≥ u] = μ̂_u`;
//!
//! or, for heavy-tailed variants, a maximum condition replacing the
//! percentile one: `F_{X|X>ũ}(μ̂_M) = ñ/(ñ+1)`. The frequency is then backed
//! out as `λ̂ = λ̂_u / S(u; θ̂)`.
//!
//! Amounts here are raw Euro by default (`u = 20 000`, `ũ = 10 000`); any
//! consistent unit works.

use std::io::Read;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::SeverityDistribution;
use crate::error::{OpcapError, Result};
use crate::lda::{poisson, CompoundPoissonModel, SlaVariant};
use crate::rng::RngStream;

/// Default upper reporting threshold, Euro.
pub const DEFAULT_U: f64 = 20_000.0;
/// Default lower reporting threshold, Euro.
pub const DEFAULT_U_TILDE: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// upper threshold `u`
    pub u: f64,
    /// lower threshold `ũ`
    pub u_tilde: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            u: DEFAULT_U,
            u_tilde: DEFAULT_U_TILDE,
        }
    }
}

impl Thresholds {
    pub fn new(u: f64, u_tilde: f64) -> Result<Self> {
        if !(u_tilde > 0.0 && u > u_tilde && u.is_finite()) {
            return Err(OpcapError::InvalidParameter(format!(
                "thresholds need 0 < ũ < u, got ũ = {u_tilde}, u = {u}"
            )));
        }
        Ok(Thresholds { u, u_tilde })
    }
}

/// One year of reported statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YearStatistics {
    pub year: i64,
    /// number of losses above `ũ`
    pub n_tilde: u64,
    /// number of losses above `u`
    pub n: u64,
    /// total amount of the losses above `u`
    #[serde(rename = "S")]
    pub s: f64,
    /// largest loss of the year
    #[serde(rename = "M")]
    pub m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QisBankStatistics {
    pub thresholds: Thresholds,
    pub years: Vec<YearStatistics>,
}

impl QisBankStatistics {
    pub fn new(thresholds: Thresholds, years: Vec<YearStatistics>) -> Result<Self> {
        if years.is_empty() {
            return Err(OpcapError::InsufficientData("no yearly statistics".into()));
        }
        for y in &years {
            let bad = |what: &str| {
                Err(OpcapError::InvalidParameter(format!("year {}: {what}", y.year)))
            };
            if y.n > y.n_tilde {
                return bad("n exceeds n_tilde");
            }
            if !y.s.is_finite() || !y.m.is_finite() {
                return bad("non-finite amount");
            }
            // small slack: S may be a rounded sum
            if y.n > 0 && y.s < y.n as f64 * thresholds.u * (1.0 - 1e-12) {
                return bad("S below n·u");
            }
            if y.n_tilde > 0 && y.m < thresholds.u_tilde {
                return bad("M below ũ although losses above ũ were reported");
            }
        }
        Ok(QisBankStatistics { thresholds, years })
    }

    /// Reads `year,n_tilde,n,S,M` records.
    pub fn from_csv_reader<R: Read>(reader: R, thresholds: Thresholds) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let years = rdr.deserialize().collect::<std::result::Result<Vec<YearStatistics>, _>>()?;
        Self::new(thresholds, years)
    }

    pub fn from_csv_path(path: &Path, thresholds: Thresholds) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?, thresholds)
    }

    /// Summarizes simulated years of individual losses.
    pub fn from_losses(years: &[Vec<f64>], thresholds: Thresholds) -> Result<Self> {
        let stats = years
            .iter()
            .enumerate()
            .map(|(i, losses)| year_statistics(i as i64 + 1, losses.iter().copied(), thresholds))
            .collect();
        Self::new(thresholds, stats)
    }
}

fn year_statistics(year: i64, losses: impl Iterator<Item = f64>, t: Thresholds) -> YearStatistics {
    let mut y = YearStatistics {
        year,
        n_tilde: 0,
        n: 0,
        s: 0.0,
        m: 0.0,
    };
    for x in losses {
        if x > t.u_tilde {
            y.n_tilde += 1;
        }
        if x > t.u {
            y.n += 1;
            y.s += x;
        }
        y.m = y.m.max(x);
    }
    y
}

/// Sample quantities entering the calibration conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleAggregates {
    /// mean yearly count above `u`
    pub lambda_u: f64,
    /// mean yearly count above `ũ`
    pub lambda_u_tilde: f64,
    /// mean loss above `u`, `ΣS_i / Σn_i`
    pub mu_u: f64,
    /// largest yearly maximum
    pub mu_m1: f64,
    /// mean of the yearly maxima
    pub mu_m2: f64,
    /// mean yearly count above `ũ`
    pub n_tilde_mean: f64,
    /// total count above `ũ`
    pub n_tilde_total: f64,
}

pub fn aggregate_statistics(stats: &QisBankStatistics) -> Result<SampleAggregates> {
    let t = stats.years.len() as f64;
    let n_total: u64 = stats.years.iter().map(|y| y.n).sum();
    if n_total == 0 {
        return Err(OpcapError::InsufficientData(
            "no losses above u: the mean loss above u is undefined".into(),
        ));
    }
    let n_tilde_total: u64 = stats.years.iter().map(|y| y.n_tilde).sum();
    let s_total: f64 = stats.years.iter().map(|y| y.s).sum();
    Ok(SampleAggregates {
        lambda_u: n_total as f64 / t,
        lambda_u_tilde: n_tilde_total as f64 / t,
        mu_u: s_total / n_total as f64,
        mu_m1: stats.years.iter().map(|y| y.m).fold(f64::NEG_INFINITY, f64::max),
        mu_m2: stats.years.iter().map(|y| y.m).sum::<f64>() / t,
        n_tilde_mean: n_tilde_total as f64 / t,
        n_tilde_total: n_tilde_total as f64,
    })
}

/// Lognormal residuals of the percentile and moment conditions written with
/// normal distribution functions:
///
/// `O1 = Φ((μ−ln ũ)/σ)/Φ((μ−ln u)/σ) − λ̂_ũ/λ̂_u`,
/// `O2 = e^{μ+σ²/2} Φ((μ+σ²−ln u)/σ)/Φ((μ−ln u)/σ) − μ̂_u`.
///
/// A vanishing denominator yields infinite residuals.
pub fn condition_residuals_lognormal(mu: f64, sigma: f64, agg: &SampleAggregates, t: Thresholds) -> (f64, f64) {
    use crate::special::normal_cdf;
    let den = normal_cdf((mu - t.u.ln()) / sigma);
    if den <= 0.0 || !den.is_finite() {
        return (f64::INFINITY, f64::INFINITY);
    }
    let o1 = normal_cdf((mu - t.u_tilde.ln()) / sigma) / den - agg.lambda_u_tilde / agg.lambda_u;
    let o2 = (mu + 0.5 * sigma * sigma).exp() * normal_cdf((mu + sigma * sigma - t.u.ln()) / sigma) / den - agg.mu_u;
    (o1, o2)
}

/// `S(ũ)/S(u) − λ̂_ũ/λ̂_u`.
pub fn percentile_condition(d: &SeverityDistribution, agg: &SampleAggregates, t: Thresholds) -> Result<f64> {
    let su = d.sf(t.u);
    if su <= 0.0 {
        return Err(OpcapError::Domain(format!("survival at u = {} is zero", t.u)));
    }
    Ok(d.sf(t.u_tilde) / su - agg.lambda_u_tilde / agg.lambda_u)
}

/// `E[X | X ≥ u] − μ̂_u`. A sample mean below `u` can never be matched and is
/// reported as an error.
pub fn moment_condition(d: &SeverityDistribution, agg: &SampleAggregates, u: f64) -> Result<f64> {
    if agg.mu_u < u {
        return Err(OpcapError::Domain(format!(
            "infeasible: sample mean above u ({}) is below u ({u})",
            agg.mu_u
        )));
    }
    Ok(d.conditional_tail_mean(u)? - agg.mu_u)
}

/// Which sample maximum and which count enter the maximum condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MaximumVariant {
    /// overall maximum with the total count `Σñ_i`
    Heavy,
    /// mean yearly maximum with the mean count `mean(ñ_i)`
    Medium,
}

/// `F_{X|X>ũ}(μ̂_M) − ñ/(ñ+1)`, using `E[F(X_{n:n})] = n/(n+1)`.
pub fn maximum_condition(
    d: &SeverityDistribution,
    agg: &SampleAggregates,
    t: Thresholds,
    variant: MaximumVariant,
) -> Result<f64> {
    let (m, n) = match variant {
        MaximumVariant::Heavy => (agg.mu_m1, agg.n_tilde_total),
        MaximumVariant::Medium => (agg.mu_m2, agg.n_tilde_mean),
    };
    if m <= t.u_tilde {
        return Err(OpcapError::Domain(format!("sample maximum {m} does not exceed ũ = {}", t.u_tilde)));
    }
    let s_tilde = d.sf(t.u_tilde);
    if s_tilde <= 0.0 {
        return Err(OpcapError::Domain("survival at ũ is zero".into()));
    }
    let conditional_cdf = (d.cdf(m) - d.cdf(t.u_tilde)) / s_tilde;
    Ok(conditional_cdf - n / (n + 1.0))
}

/// Pair of conditions matched by the calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ConditionSet {
    PercentileMoment,
    MaximumHeavyMoment,
    MaximumMediumMoment,
}

/// Two-parameter severity families searchable on a grid; the grid axes are
/// the first and second parameter in the order listed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationFamily {
    /// (μ, σ)
    Lognormal,
    /// (shape, scale)
    Gamma,
    /// (shape, scale)
    Pareto,
    /// (shape, scale)
    LogLogistic,
    /// (shape, rate)
    LogGamma,
}

impl CalibrationFamily {
    pub fn build(self, p1: f64, p2: f64) -> Result<SeverityDistribution> {
        match self {
            CalibrationFamily::Lognormal => SeverityDistribution::lognormal(p1, p2),
            CalibrationFamily::Gamma => SeverityDistribution::gamma(p1, p2),
            CalibrationFamily::Pareto => SeverityDistribution::pareto(p1, p2),
            CalibrationFamily::LogLogistic => SeverityDistribution::log_logistic(p1, p2),
            CalibrationFamily::LogGamma => SeverityDistribution::log_gamma(p1, p2),
        }
    }

    pub fn parameter_names(self) -> (&'static str, &'static str) {
        match self {
            CalibrationFamily::Lognormal => ("mu", "sigma"),
            CalibrationFamily::LogGamma => ("shape", "rate"),
            _ => ("shape", "scale"),
        }
    }
}

/// Residuals `(O1, O2)` of a condition set at one severity; infinite when a
/// condition cannot be evaluated.
pub fn residuals(d: &SeverityDistribution, agg: &SampleAggregates, t: Thresholds, set: ConditionSet) -> (f64, f64) {
    let first = match set {
        ConditionSet::PercentileMoment => percentile_condition(d, agg, t),
        ConditionSet::MaximumHeavyMoment => maximum_condition(d, agg, t, MaximumVariant::Heavy),
        ConditionSet::MaximumMediumMoment => maximum_condition(d, agg, t, MaximumVariant::Medium),
    };
    let second = moment_condition(d, agg, t.u);
    let finite = |r: Result<f64>| r.ok().filter(|v| v.is_finite()).unwrap_or(f64::INFINITY);
    (finite(first), finite(second))
}

/// Equally spaced values `lo, lo+step, …` up to `hi` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi >= lo && (step > 0.0 || hi == lo)) {
            return Err(OpcapError::InvalidParameter(format!(
                "bad grid axis [{lo}, {hi}] step {step}"
            )));
        }
        Ok(Axis { lo, hi, step })
    }

    pub fn point(v: f64) -> Self {
        Axis { lo: v, hi: v, step: 1.0 }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.hi == self.lo {
            return vec![self.lo];
        }
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        // index-based values, rounded to kill accumulated binary noise
        (0..=n)
            .map(|i| {
                let v = self.lo + i as f64 * self.step;
                (v * 1e10).round() / 1e10
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub first: Axis,
    pub second: Axis,
}

impl ParamGrid {
    /// μ ∈ [8, 12], σ ∈ [1, 3], spacing 0.05 (raw-Euro Lognormal).
    pub fn grid1() -> Self {
        ParamGrid {
            first: Axis { lo: 8.0, hi: 12.0, step: 0.05 },
            second: Axis { lo: 1.0, hi: 3.0, step: 0.05 },
        }
    }

    /// μ ∈ [6, 14], σ ∈ [0.5, 3.5], spacing 0.05.
    pub fn grid2() -> Self {
        ParamGrid {
            first: Axis { lo: 6.0, hi: 14.0, step: 0.05 },
            second: Axis { lo: 0.5, hi: 3.5, step: 0.05 },
        }
    }

    /// Grid points in row-major order (first parameter outer, both ascending).
    pub fn points(&self) -> Vec<(f64, f64)> {
        let a = self.first.values();
        let b = self.second.values();
        a.iter().flat_map(|&x| b.iter().map(move |&y| (x, y))).collect()
    }
}

/// How a grid point is selected from the two residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// minimize `O1² + O2²`
    SumOfSquares,
    /// a point no other grid point beats on both `|O1|` and `|O2|`
    #[value(alias = "pareto")]
    ParetoOptimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub family: CalibrationFamily,
    /// fitted severity (absent when nothing converged)
    pub severity: Option<SeverityDistribution>,
    pub params: Option<(f64, f64)>,
    pub lambda: Option<f64>,
    pub residuals: Option<(f64, f64)>,
    /// `O1² + O2²` at the selected point
    pub objective_value: Option<f64>,
    pub converged: bool,
    pub grid: ParamGrid,
    pub objective: Objective,
}

/// Residual surface over a grid, in row-major order.
#[derive(Debug, Clone)]
pub struct ResidualSurface {
    pub points: Vec<(f64, f64)>,
    pub residuals: Vec<(f64, f64)>,
}

impl ResidualSurface {
    pub fn evaluate(
        agg: &SampleAggregates,
        family: CalibrationFamily,
        set: ConditionSet,
        grid: &ParamGrid,
        t: Thresholds,
    ) -> Self {
        let points = grid.points();
        let residuals = points
            .par_iter()
            .map(|&(p1, p2)| match family.build(p1, p2) {
                Ok(d) => residuals(&d, agg, t, set),
                Err(_) => (f64::INFINITY, f64::INFINITY),
            })
            .collect();
        ResidualSurface { points, residuals }
    }

    /// Index of the selected point, or `None` when no residual pair is finite.
    pub fn select(&self, objective: Objective) -> Option<usize> {
        let finite = |i: usize| {
            let (a, b) = self.residuals[i];
            a.is_finite() && b.is_finite()
        };
        match objective {
            Objective::SumOfSquares => (0..self.residuals.len())
                .filter(|&i| finite(i))
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if self.sum_sq(b) <= self.sum_sq(i) => Some(b),
                    _ => Some(i),
                }),
            Objective::ParetoOptimal => {
                let start = (0..self.residuals.len()).find(|&i| finite(i))?;
                // Row-major walk: move only when both residuals strictly improve.
                let mut best = start;
                for i in start + 1..self.residuals.len() {
                    if self.dominates(i, best) {
                        best = i;
                    }
                }
                // The walk can in principle stop at a dominated point; move to
                // the first dominator until none exists.
                while let Some(d) = (0..self.residuals.len()).find(|&i| self.dominates(i, best)) {
                    best = d;
                }
                Some(best)
            }
        }
    }

    fn sum_sq(&self, i: usize) -> f64 {
        let (a, b) = self.residuals[i];
        a * a + b * b
    }

    /// True when point `i` has strictly smaller `|O1|` and `|O2|` than `j`.
    pub fn dominates(&self, i: usize, j: usize) -> bool {
        let (a1, a2) = self.residuals[i];
        let (b1, b2) = self.residuals[j];
        a1.abs() < b1.abs() && a2.abs() < b2.abs()
    }

    /// Exhaustive non-domination check.
    pub fn is_pareto_optimal(&self, i: usize) -> bool {
        !(0..self.residuals.len()).any(|j| self.dominates(j, i))
    }
}

/// Exhaustive grid search followed by the frequency back-out.
pub fn grid_search_calibrate(
    agg: &SampleAggregates,
    family: CalibrationFamily,
    set: ConditionSet,
    grid: &ParamGrid,
    objective: Objective,
    t: Thresholds,
) -> Result<CalibrationResult> {
    if grid.points().is_empty() {
        return Err(OpcapError::InvalidParameter("empty grid".into()));
    }
    let surface = ResidualSurface::evaluate(agg, family, set, grid, t);
    let mut result = CalibrationResult {
        family,
        severity: None,
        params: None,
        lambda: None,
        residuals: None,
        objective_value: None,
        converged: false,
        grid: *grid,
        objective,
    };
    let Some(i) = surface.select(objective) else {
        return Ok(result);
    };
    let (p1, p2) = surface.points[i];
    let d = family.build(p1, p2)?;
    let lambda = estimate_lambda(&d, agg.lambda_u, t.u).ok();
    result.severity = Some(d);
    result.params = Some((p1, p2));
    result.lambda = lambda;
    result.residuals = Some(surface.residuals[i]);
    result.objective_value = Some(surface.sum_sq(i));
    result.converged = lambda.is_some();
    Ok(result)
}

/// `λ̂ = λ̂_u / (1 − F(u; θ̂))`.
pub fn estimate_lambda(d: &SeverityDistribution, lambda_u: f64, u: f64) -> Result<f64> {
    let s = d.sf(u);
    if s <= 0.0 {
        return Err(OpcapError::Domain(format!("F(u) = 1 at u = {u}; frequency cannot be backed out")));
    }
    Ok(lambda_u / s)
}

/// Bank information used by the model-selection filters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BankProfile {
    /// total assets, Euro billion
    pub total_assets_bn: f64,
    pub lambda_u: f64,
    pub lambda_u_tilde: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterReason {
    /// losses above `u` are not 1%–40% of all losses
    Proportion,
    /// losses per Euro billion of assets outside [0.1, 70]
    FrequencyAssets,
    NotConverged,
}

impl std::fmt::Display for FilterReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FilterReason::Proportion => "proportion",
            FilterReason::FrequencyAssets => "frequency/assets",
            FilterReason::NotConverged => "not converged",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub passed: bool,
    pub reasons: Vec<FilterReason>,
}

/// Plausibility filters on a fitted model: share of losses above `u`
/// (`λ̂_u/λ̂`) in [1%, 40%], `λ̂` per Euro billion of assets in [0.1, 70], and
/// convergence.
pub fn opcar_filters(candidate: &CalibrationResult, bank: &BankProfile) -> FilterOutcome {
    let mut reasons = Vec::new();
    match candidate.lambda.filter(|_| candidate.converged) {
        None => reasons.push(FilterReason::NotConverged),
        Some(lambda) => {
            let proportion = bank.lambda_u / lambda;
            if !(0.01..=0.40).contains(&proportion) {
                reasons.push(FilterReason::Proportion);
            }
            let per_bn = lambda / bank.total_assets_bn;
            if !(0.1..=70.0).contains(&per_bn) {
                reasons.push(FilterReason::FrequencyAssets);
            }
        }
    }
    FilterOutcome {
        passed: reasons.is_empty(),
        reasons,
    }
}

/// Opcar-variant SLA VaR of a fitted model.
pub fn fitted_var(result: &CalibrationResult, alpha: f64, variant: SlaVariant) -> Result<f64> {
    match (result.converged, result.severity, result.lambda) {
        (true, Some(d), Some(lambda)) => CompoundPoissonModel::single(lambda, d)?.sla_var(alpha, variant),
        _ => Err(OpcapError::InvalidParameter("calibration did not converge".into())),
    }
}

/// Mean opcar-SLA VaR across the surviving fitted models.
pub fn model_average_var(results: &[CalibrationResult], alpha: f64) -> Result<f64> {
    if results.is_empty() {
        return Err(OpcapError::InsufficientData("no surviving models to average".into()));
    }
    let vars = results
        .iter()
        .map(|r| fitted_var(r, alpha, SlaVariant::Opcar))
        .collect::<Result<Vec<_>>>()?;
    Ok(vars.iter().sum::<f64>() / vars.len() as f64)
}

/// Simulation study: calibrate on many independent multi-year blocks drawn
/// from a known Poisson–Lognormal model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockStudySpec {
    pub rate: f64,
    pub mu: f64,
    pub sigma: f64,
    pub blocks: usize,
    pub years_per_block: usize,
    pub thresholds: Thresholds,
    pub grid: ParamGrid,
    pub alpha: f64,
}

impl Default for BlockStudySpec {
    fn default() -> Self {
        BlockStudySpec {
            rate: 1000.0,
            mu: 10.0,
            sigma: 2.0,
            blocks: 200,
            years_per_block: 5,
            thresholds: Thresholds::default(),
            grid: ParamGrid::grid1(),
            alpha: 0.999,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockFit {
    pub block: usize,
    pub lambda_u: f64,
    pub lambda_u_tilde: f64,
    pub mu_u: f64,
    pub mu_hat: f64,
    pub sigma_hat: f64,
    pub lambda_hat: f64,
    /// SLA VaR (corrected variant) of the fitted model
    pub var: f64,
    pub pareto_optimal: bool,
}

/// Mean, standard deviation and root mean squared error against a true value.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub rmse: f64,
}

impl Summary {
    pub fn of(values: &[f64], truth: f64) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let rmse = (values.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / n).sqrt();
        Summary { mean, sd, rmse }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockStudyResult {
    pub objective: Objective,
    pub fits: Vec<BlockFit>,
    pub lambda_u: Summary,
    pub lambda_u_tilde: Summary,
    pub mu_u: Summary,
    pub mu_hat: Summary,
    pub sigma_hat: Summary,
    pub lambda_hat: Summary,
    pub var: Summary,
    /// blocks where no grid point had finite residuals
    pub failed_blocks: usize,
}

impl BlockStudySpec {
    /// Yearly statistics of every block; block `b` uses substream `b`.
    pub fn simulate_blocks(&self, stream: &RngStream) -> Result<Vec<QisBankStatistics>> {
        let t = self.thresholds;
        let d = SeverityDistribution::lognormal(self.mu, self.sigma)?;
        let sampler = d.sampler();
        (0..self.blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream.substream(b as u64);
                let years = (0..self.years_per_block)
                    .map(|y| {
                        let n = poisson(&mut rng, self.rate);
                        let draws: Vec<f64> = (0..n).map(|_| sampler.draw(&mut rng)).collect();
                        year_statistics(y as i64 + 1, draws.into_iter(), t)
                    })
                    .collect();
                QisBankStatistics::new(t, years)
            })
            .collect()
    }

    pub fn run(&self, stream: &RngStream, objective: Objective) -> Result<BlockStudyResult> {
        let blocks = self.simulate_blocks(stream)?;
        self.calibrate_blocks(&blocks, objective)
    }

    pub fn calibrate_blocks(&self, blocks: &[QisBankStatistics], objective: Objective) -> Result<BlockStudyResult> {
        let truth = CompoundPoissonModel::poisson_lognormal(self.rate, self.mu, self.sigma)?;
        let true_var = truth.sla_var(self.alpha, SlaVariant::Corrected)?;
        let mut fits = Vec::with_capacity(blocks.len());
        let mut failed = 0;
        for (b, stats) in blocks.iter().enumerate() {
            let agg = aggregate_statistics(stats)?;
            let surface = ResidualSurface::evaluate(
                &agg,
                CalibrationFamily::Lognormal,
                ConditionSet::PercentileMoment,
                &self.grid,
                self.thresholds,
            );
            let Some(i) = surface.select(objective) else {
                failed += 1;
                continue;
            };
            let (mu_hat, sigma_hat) = surface.points[i];
            let d = SeverityDistribution::lognormal(mu_hat, sigma_hat)?;
            let lambda_hat = estimate_lambda(&d, agg.lambda_u, self.thresholds.u)?;
            let var = CompoundPoissonModel::single(lambda_hat, d)?.sla_var(self.alpha, SlaVariant::Corrected)?;
            fits.push(BlockFit {
                block: b,
                lambda_u: agg.lambda_u,
                lambda_u_tilde: agg.lambda_u_tilde,
                mu_u: agg.mu_u,
                mu_hat,
                sigma_hat,
                lambda_hat,
                var,
                pareto_optimal: surface.is_pareto_optimal(i),
            });
        }
        if fits.is_empty() {
            return Err(OpcapError::NoSolution("no block produced a finite calibration".into()));
        }
        let col = |f: fn(&BlockFit) -> f64| fits.iter().map(f).collect::<Vec<_>>();
        let su = SeverityDistribution::lognormal(self.mu, self.sigma)?;
        let true_lu = self.rate * su.sf(self.thresholds.u);
        let true_lt = self.rate * su.sf(self.thresholds.u_tilde);
        Ok(BlockStudyResult {
            objective,
            lambda_u: Summary::of(&col(|f| f.lambda_u), true_lu),
            lambda_u_tilde: Summary::of(&col(|f| f.lambda_u_tilde), true_lt),
            mu_u: Summary::of(&col(|f| f.mu_u), su.conditional_tail_mean(self.thresholds.u)?),
            mu_hat: Summary::of(&col(|f| f.mu_hat), self.mu),
            sigma_hat: Summary::of(&col(|f| f.sigma_hat), self.sigma),
            lambda_hat: Summary::of(&col(|f| f.lambda_hat), self.rate),
            var: Summary::of(&col(|f| f.var), true_var),
            failed_blocks: failed,
            fits,
        })
    }
}
