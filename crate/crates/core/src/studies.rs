//! Studies built on the SMA formula and LDA models: implied business
//! indicator, capital instability, sensitivity to the heavy-tailed process,
//! super-additivity and the under-capitalization of split entities.
//!
//! Amounts are Euro million unless a field name says `_bn`.

use serde::{Deserialize, Serialize};

use crate::distributions::SeverityDistribution;
use crate::error::{OpcapError, Result};
use crate::lda::{Component, CompoundPoissonModel, SlaVariant};
use crate::numeric::roots::{bisect, expand_bracket, RootTolerance};
use crate::rng::RngStream;
use crate::sma::{bucket, k_sma, loss_component_of, LcThresholds, SmaInput};

/// How the 0.999 VaR of a model is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum VarMethod {
    /// corrected single-loss approximation
    Sla,
    /// Monte Carlo order statistic
    Mc { years: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImpliedBi {
    pub bi: f64,
    pub var: f64,
    /// long-term loss component used
    pub lc: f64,
    pub bucket: u8,
}

impl ImpliedBi {
    pub fn bi_bn(&self) -> f64 {
        self.bi / 1000.0
    }

    pub fn capital(&self) -> f64 {
        k_sma(self.bi, self.lc)
    }
}

/// BI at which `k_sma(BI, lc) = target`.
///
/// Targets up to 110 are bucket-1 capitals and are inverted exactly
/// (`BI = K/0.11`). Above that the root is found by bisection after a
/// geometric expansion of `[1e-6, 1e9]`.
pub fn bi_for_capital(target: f64, lc: f64) -> Result<f64> {
    if !(target.is_finite() && target > 0.0) {
        return Err(OpcapError::NoSolution(format!(
            "capital target {target} is outside the range of the SMA formula"
        )));
    }
    if target <= 110.0 {
        return Ok(target / 0.11);
    }
    let f = |bi: f64| k_sma(bi, lc) - target;
    let (lo, hi) = expand_bracket(f, 1e-6, 1e9, 10.0, 400)?;
    bisect(
        f,
        lo,
        hi,
        RootTolerance {
            rel: 1e-13,
            abs: 0.0,
            max_iter: 400,
        },
    )
}

pub fn model_var(model: &CompoundPoissonModel, alpha: f64, method: VarMethod) -> Result<f64> {
    match method {
        VarMethod::Sla => model.sla_var(alpha, SlaVariant::Corrected),
        VarMethod::Mc { years, seed } => Ok(model.mc_var(alpha, years, &RngStream::new(seed))?.var),
    }
}

/// BI at which long-term SMA capital equals the model's α-VaR.
pub fn implied_bi(model: &CompoundPoissonModel, alpha: f64, method: VarMethod, thresholds: LcThresholds) -> Result<ImpliedBi> {
    let var = model_var(model, alpha, method)?;
    let lc = model.long_term_lc(thresholds)?;
    let bi = bi_for_capital(var, lc)?;
    Ok(ImpliedBi {
        bi,
        var,
        lc,
        bucket: bucket(bi),
    })
}

/// Poisson(λ)–Lognormal(μ, σ) with μ on the raw-Euro scale, expressed in Euro
/// million.
pub fn euro_lognormal_model(rate: f64, mu_euro: f64, sigma: f64) -> Result<CompoundPoissonModel> {
    CompoundPoissonModel::poisson_lognormal(rate, mu_euro, sigma)?.rescaled(1e-6)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImpliedBiCell {
    pub mu: f64,
    pub sigma: f64,
    pub bi_bn: f64,
}

/// Implied BI (Euro billion, SLA) for Poisson(`rate`)–Lognormal over a grid
/// of raw-Euro μ and σ; rows ordered μ-major.
pub fn implied_bi_table(rate: f64, mus: &[f64], sigmas: &[f64], alpha: f64) -> Result<Vec<ImpliedBiCell>> {
    let mut cells = Vec::with_capacity(mus.len() * sigmas.len());
    for &mu in mus {
        for &sigma in sigmas {
            let m = euro_lognormal_model(rate, mu, sigma)?;
            let r = implied_bi(&m, alpha, VarMethod::Sla, LcThresholds::default())?;
            cells.push(ImpliedBiCell { mu, sigma, bi_bn: r.bi_bn() });
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstabilityStudySpec {
    pub model: CompoundPoissonModel,
    pub bi: f64,
    /// number of reported capital years
    pub horizon: usize,
    /// trailing LC window length
    pub window: usize,
    /// simulated years before the first reported year
    pub burn_in: usize,
    #[serde(default)]
    pub thresholds: LcThresholds,
}

impl InstabilityStudySpec {
    pub fn new(model: CompoundPoissonModel, bi: f64) -> Self {
        InstabilityStudySpec {
            model,
            bi,
            horizon: 1000,
            window: 10,
            burn_in: 10,
            thresholds: LcThresholds::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.window == 0 || self.horizon == 0 {
            return Err(OpcapError::InvalidParameter("horizon and window must be positive".into()));
        }
        if self.burn_in + 1 < self.window {
            return Err(OpcapError::InvalidParameter(format!(
                "burn-in {} too short for a {}-year window",
                self.burn_in, self.window
            )));
        }
        SmaInput::new(self.bi, 0.0)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InstabilityRow {
    /// 1-based reported year
    pub year: usize,
    pub lc: f64,
    pub capital: f64,
    /// capital relative to the long-term capital
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InstabilitySeries {
    pub long_term_lc: f64,
    pub long_term_capital: f64,
    pub rows: Vec<InstabilityRow>,
}

impl InstabilitySeries {
    pub fn ratios(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.ratio).collect()
    }

    pub fn max_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Yearly SMA capital from a trailing LC window over a simulated history,
/// relative to the capital at the long-term LC.
pub fn instability_series(spec: &InstabilityStudySpec, stream: &RngStream) -> Result<InstabilitySeries> {
    spec.validate()?;
    let long_term_lc = spec.model.long_term_lc(spec.thresholds)?;
    let long_term_capital = k_sma(spec.bi, long_term_lc);
    let sample = spec.model.simulate(spec.burn_in + spec.horizon, stream)?;
    let rows = (0..spec.horizon)
        .map(|i| {
            let end = spec.burn_in + i + 1;
            let lc = loss_component_of(&sample.years[end - spec.window..end], spec.thresholds);
            let capital = k_sma(spec.bi, lc);
            InstabilityRow {
                year: i + 1,
                lc,
                capital,
                ratio: capital / long_term_capital,
            }
        })
        .collect();
    Ok(InstabilitySeries {
        long_term_lc,
        long_term_capital,
        rows,
    })
}

/// The two-process bank used in the instability studies: Poisson(990)–Gamma(1, β)
/// plus Poisson(10)–Lognormal(μ, σ), with β and μ on the raw-Euro scale.
pub fn two_process_bank(gamma_scale_euro: f64, mu_euro: f64, sigma: f64) -> Result<CompoundPoissonModel> {
    CompoundPoissonModel::new(vec![
        Component {
            rate: 990.0,
            severity: SeverityDistribution::gamma(1.0, gamma_scale_euro)?,
        },
        Component {
            rate: 10.0,
            severity: SeverityDistribution::lognormal(mu_euro, sigma)?,
        },
    ])?
    .rescaled(1e-6)
}

/// Small, medium and large banks of the instability study for a given σ.
pub fn test_case_banks(sigma: f64) -> Result<Vec<(&'static str, CompoundPoissonModel)>> {
    Ok(vec![
        ("small", two_process_bank(1e4, 10.0, sigma)?),
        ("medium", two_process_bank(1e5, 12.0, sigma)?),
        ("large", two_process_bank(5e5, 14.0, sigma)?),
    ])
}

/// Five-number summary with Tukey whiskers (1.5 IQR, clipped to the data).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxSummary {
    pub sigma: f64,
    pub min: f64,
    pub whisker_low: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_high: f64,
    pub max: f64,
    pub mean: f64,
}

/// Linear-interpolation quantile of sorted data.
fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl BoxSummary {
    pub fn of(sigma: f64, values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(OpcapError::InsufficientData("no values to summarize".into()));
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let q1 = sorted_quantile(&s, 0.25);
        let q3 = sorted_quantile(&s, 0.75);
        let iqr = q3 - q1;
        let whisker_low = *s.iter().find(|&&v| v >= q1 - 1.5 * iqr).expect("non-empty");
        let whisker_high = *s.iter().rev().find(|&&v| v <= q3 + 1.5 * iqr).expect("non-empty");
        Ok(BoxSummary {
            sigma,
            min: s[0],
            whisker_low,
            q1,
            median: sorted_quantile(&s, 0.5),
            q3,
            whisker_high,
            max: s[s.len() - 1],
            mean: s.iter().sum::<f64>() / s.len() as f64,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySpec {
    pub bi: f64,
    pub gamma_scale_euro: f64,
    pub mu_euro: f64,
    pub horizon: usize,
    pub window: usize,
    pub burn_in: usize,
}

impl Default for SensitivitySpec {
    fn default() -> Self {
        SensitivitySpec {
            bi: 2000.0,
            gamma_scale_euro: 5e5,
            mu_euro: 14.0,
            horizon: 1000,
            window: 10,
            burn_in: 10,
        }
    }
}

pub const SENSITIVITY_SIGMAS: [f64; 5] = [2.0, 2.25, 2.5, 2.75, 3.0];

/// Capital-ratio summaries per σ; σ number `i` uses substream `i`.
pub fn sensitivity_boxplot_data(sigmas: &[f64], base: &SensitivitySpec, stream: &RngStream) -> Result<Vec<BoxSummary>> {
    if sigmas.is_empty() {
        return Err(OpcapError::InvalidParameter("σ list is empty".into()));
    }
    sigmas
        .iter()
        .enumerate()
        .map(|(i, &sigma)| {
            let model = two_process_bank(base.gamma_scale_euro, base.mu_euro, sigma)?;
            let spec = InstabilityStudySpec {
                horizon: base.horizon,
                window: base.window,
                burn_in: base.burn_in,
                ..InstabilityStudySpec::new(model, base.bi)
            };
            let series = instability_series(&spec, &stream.substream(i as u64))?;
            BoxSummary::of(sigma, &series.ratios())
        })
        .collect()
}

/// `K(joint) − Σ K(entity)`; positive means the SMA is super-additive.
pub fn superadditivity_gap(joint: SmaInput, entities: &[SmaInput]) -> Result<f64> {
    if entities.is_empty() {
        return Err(OpcapError::InvalidParameter("need at least one entity".into()));
    }
    Ok(joint.capital() - entities.iter().map(SmaInput::capital).sum::<f64>())
}

/// The same gap from already computed capitals.
pub fn capital_gap(joint_capital: f64, entity_capitals: &[f64]) -> f64 {
    joint_capital - entity_capitals.iter().sum::<f64>()
}

/// Split of a Poisson–Lognormal institution into `m` similar entities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub rate: f64,
    /// raw-Euro log-scale
    pub mu_euro: f64,
    pub sigma: f64,
    pub m: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitResult {
    pub m: usize,
    pub sigma: f64,
    pub bi_joint: f64,
    pub sma_joint: f64,
    /// SMA capital of each entity
    pub sma_entity: f64,
    /// `sma_joint − m · sma_entity`
    pub delta: f64,
    pub relative_delta: f64,
    /// SLA VaR of each entity
    pub lda_entity: f64,
    /// `m · lda_entity − m · sma_entity`
    pub under_capitalization: f64,
    /// under-capitalization relative to `m · lda_entity`
    pub relative_under_capitalization: f64,
}

/// Joint BI implied by the SLA VaR; each entity gets `BI/m`, `LC/m` and rate
/// `λ/m` with the same severity.
pub fn split_analysis(spec: &SplitSpec) -> Result<SplitResult> {
    if spec.m == 0 {
        return Err(OpcapError::InvalidParameter("m must be at least 1".into()));
    }
    let m = spec.m as f64;
    let joint = euro_lognormal_model(spec.rate, spec.mu_euro, spec.sigma)?;
    let implied = implied_bi(&joint, spec.alpha, VarMethod::Sla, LcThresholds::default())?;
    let sma_joint = implied.capital();
    let sma_entity = k_sma(implied.bi / m, implied.lc / m);
    let entity = joint.with_rates_scaled(1.0 / m)?;
    let lda_entity = entity.sla_var(spec.alpha, SlaVariant::Corrected)?;
    let delta = sma_joint - m * sma_entity;
    let under = m * (lda_entity - sma_entity);
    Ok(SplitResult {
        m: spec.m,
        sigma: spec.sigma,
        bi_joint: implied.bi,
        sma_joint,
        sma_entity,
        delta,
        relative_delta: delta / sma_joint,
        lda_entity,
        under_capitalization: under,
        relative_under_capitalization: under / (m * lda_entity),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionCell {
    pub mu1: f64,
    pub mu2: f64,
    /// Entity 1 implied BI in Euro billion when the split is super-additive
    pub bi1_bn: Option<f64>,
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub joint_rate: f64,
    pub joint_mu_euro: f64,
    pub joint_sigma: f64,
    pub rates: [f64; 2],
    pub sigmas: [f64; 2],
    pub alpha: f64,
}

impl Default for RegionSpec {
    fn default() -> Self {
        RegionSpec {
            joint_rate: 10.0,
            joint_mu_euro: 12.0,
            joint_sigma: 2.5,
            rates: [10.0, 10.0],
            sigmas: [2.5, 2.5],
            alpha: 0.999,
        }
    }
}

/// For each `(μ1, μ2)`: each entity's BI implied by its own SLA VaR, and the
/// super-additivity gap against the joint bank at its implied BI.
pub fn superadditive_region(spec: &RegionSpec, mu1: &[f64], mu2: &[f64]) -> Result<Vec<RegionCell>> {
    if mu1.is_empty() || mu2.is_empty() {
        return Err(OpcapError::InvalidParameter("μ grids must be non-empty".into()));
    }
    let joint_model = euro_lognormal_model(spec.joint_rate, spec.joint_mu_euro, spec.joint_sigma)?;
    let joint = implied_bi(&joint_model, spec.alpha, VarMethod::Sla, LcThresholds::default())?;
    let entity = |i: usize, mu: f64| -> Result<ImpliedBi> {
        let model = euro_lognormal_model(spec.rates[i], mu, spec.sigmas[i])?;
        implied_bi(&model, spec.alpha, VarMethod::Sla, LcThresholds::default())
    };
    let e1 = mu1.iter().map(|&m| entity(0, m)).collect::<Result<Vec<_>>>()?;
    let e2 = mu2.iter().map(|&m| entity(1, m)).collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::with_capacity(mu1.len() * mu2.len());
    for (a, &m1) in e1.iter().zip(mu1) {
        for (b, &m2) in e2.iter().zip(mu2) {
            let gap = capital_gap(joint.capital(), &[a.capital(), b.capital()]);
            cells.push(RegionCell {
                mu1: m1,
                mu2: m2,
                bi1_bn: (gap > 0.0).then(|| a.bi_bn()),
                gap,
            });
        }
    }
    Ok(cells)
}

/// One row of the SLA-versus-Monte-Carlo comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlaAccuracyRow {
    pub rate: f64,
    pub mu: f64,
    pub sigma: f64,
    pub mc_var: f64,
    /// standard error relative to `mc_var`
    pub mc_relative_error: f64,
    pub sla_var: f64,
    /// `sla_var − mc_var`
    pub delta: f64,
    /// `delta / mc_var`
    pub epsilon: f64,
}

/// Compares the corrected SLA with a Monte Carlo VaR for Poisson–Lognormal.
pub fn sla_accuracy(rate: f64, mu: f64, sigma: f64, alpha: f64, years: usize, stream: &RngStream) -> Result<SlaAccuracyRow> {
    let model = CompoundPoissonModel::poisson_lognormal(rate, mu, sigma)?;
    let mc = model.mc_var(alpha, years, stream)?;
    let sla = model.sla_var(alpha, SlaVariant::Corrected)?;
    Ok(SlaAccuracyRow {
        rate,
        mu,
        sigma,
        mc_var: mc.var,
        mc_relative_error: mc.relative_error(),
        sla_var: sla,
        delta: sla - mc.var,
        epsilon: (sla - mc.var) / mc.var,
    })
}

/// The (λ, σ) pairs of the standard SLA accuracy comparison, μ = 3.
pub const SLA_ACCURACY_CASES: [(f64, f64); 6] = [(1000.0, 1.0), (1000.0, 2.0), (100.0, 1.0), (100.0, 2.0), (10.0, 1.0), (10.0, 2.0)];
