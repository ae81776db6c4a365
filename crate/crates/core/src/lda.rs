//! Compound Poisson annual-loss models.
//!
//! A model is a sum of independent Poisson(λ_i)–severity processes. All
//! amounts are in whatever unit the severities are expressed in; the SMA
//! studies use Euro million.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{Family, Mixture, MixtureSampler, Severity, SeverityDistribution, SeveritySampler};
use crate::error::{OpcapError, Result};
use crate::rng::{par_blocks, RngStream};
use crate::sma::LcThresholds;
use crate::special::normal_quantile_upper;

/// One Poisson frequency / severity pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub rate: f64,
    pub severity: SeverityDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Component>", into = "Vec<Component>")]
pub struct CompoundPoissonModel {
    components: Vec<Component>,
}

impl TryFrom<Vec<Component>> for CompoundPoissonModel {
    type Error = OpcapError;
    fn try_from(components: Vec<Component>) -> Result<Self> {
        Self::new(components)
    }
}

impl From<CompoundPoissonModel> for Vec<Component> {
    fn from(m: CompoundPoissonModel) -> Self {
        m.components
    }
}

/// Which single-loss approximation to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SlaVariant {
    /// `exp(μ + σ Φ⁻¹(1 − (1−α)/λ)) + λ exp(μ + σ²/2)`; single Lognormal only.
    LognormalClosedForm,
    /// `F⁻¹(1 − (1−α)/λ) + (λ − 1) E[X]`
    Opcar,
    /// `F⁻¹(1 − (1−α)/λ) + λ E[X]`
    Corrected,
}

/// Monte Carlo VaR estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McVar {
    pub var: f64,
    pub standard_error: f64,
    pub years: usize,
}

impl McVar {
    pub fn relative_error(&self) -> f64 {
        self.standard_error / self.var
    }
}

/// Simulated individual losses, one list per year.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnualLossSample {
    pub years: Vec<Vec<f64>>,
}

impl AnnualLossSample {
    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    pub fn totals(&self) -> Vec<f64> {
        self.years.iter().map(|y| y.iter().sum()).collect()
    }
}

impl CompoundPoissonModel {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(OpcapError::InvalidParameter("model needs at least one component".into()));
        }
        for c in &components {
            if !(c.rate.is_finite() && c.rate > 0.0) {
                return Err(OpcapError::InvalidParameter(format!(
                    "Poisson rate must be finite and > 0, got {}",
                    c.rate
                )));
            }
        }
        Ok(CompoundPoissonModel { components })
    }

    pub fn single(rate: f64, severity: SeverityDistribution) -> Result<Self> {
        Self::new(vec![Component { rate, severity }])
    }

    pub fn poisson_lognormal(rate: f64, mu: f64, sigma: f64) -> Result<Self> {
        Self::single(rate, SeverityDistribution::lognormal(mu, sigma)?)
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn total_rate(&self) -> f64 {
        self.components.iter().map(|c| c.rate).sum()
    }

    /// Adds the components of `other` (independent processes).
    pub fn combined(&self, other: &CompoundPoissonModel) -> Self {
        let mut components = self.components.clone();
        components.extend_from_slice(&other.components);
        CompoundPoissonModel { components }
    }

    /// Every severity multiplied by `factor` (a change of currency unit).
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        let components = self
            .components
            .iter()
            .map(|c| {
                Ok(Component {
                    rate: c.rate,
                    severity: c.severity.rescaled(factor)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(components)
    }

    /// Every rate multiplied by `factor`.
    pub fn with_rates_scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.components
                .iter()
                .map(|c| Component {
                    rate: c.rate * factor,
                    severity: c.severity,
                })
                .collect(),
        )
    }

    /// Equivalent single process: total rate and the rate-weighted severity
    /// mixture. Components with identical severities are pooled first.
    pub fn merge(&self) -> MergedModel {
        let mut pooled: Vec<(f64, SeverityDistribution)> = Vec::new();
        for c in &self.components {
            match pooled.iter_mut().find(|(_, s)| *s == c.severity) {
                Some((r, _)) => *r += c.rate,
                None => pooled.push((c.rate, c.severity)),
            }
        }
        let rate: f64 = pooled.iter().map(|(r, _)| r).sum();
        let severity = if pooled.len() == 1 {
            Severity::Single(pooled[0].1)
        } else {
            Severity::Mixture(Mixture::new(pooled).expect("rates validated positive"))
        };
        MergedModel { rate, severity }
    }

    /// `Σ λ_i E[X_i]`.
    pub fn annual_loss_mean(&self) -> Result<f64> {
        self.components.iter().map(|c| Ok(c.rate * c.severity.mean()?)).sum()
    }

    pub fn sla_var(&self, alpha: f64, variant: SlaVariant) -> Result<f64> {
        if variant == SlaVariant::LognormalClosedForm {
            let merged = self.merge();
            let Some(Family::Lognormal { mu, sigma }) = merged.severity.as_single().map(|d| d.family()) else {
                return Err(OpcapError::InvalidParameter(
                    "lognormal closed-form SLA requires a single Lognormal severity".into(),
                ));
            };
            let tail = sla_tail(alpha, merged.rate)?;
            return Ok((mu + sigma * normal_quantile_upper(tail)).exp() + merged.rate * (mu + 0.5 * sigma * sigma).exp());
        }
        self.merge().sla_var(alpha, variant)
    }

    /// Long-term average loss component
    /// `Σ λ_i (7 E[X_i] + 7 E[X_i 1{X_i>L}] + 5 E[X_i 1{X_i>H}])`.
    pub fn long_term_lc(&self, thresholds: LcThresholds) -> Result<f64> {
        self.components
            .iter()
            .map(|c| {
                let d = &c.severity;
                Ok(c.rate
                    * (7.0 * d.mean()?
                        + 7.0 * d.partial_expectation(thresholds.low)?
                        + 5.0 * d.partial_expectation(thresholds.high)?))
            })
            .sum()
    }

    fn samplers(&self) -> Vec<(f64, SeveritySampler)> {
        self.components.iter().map(|c| (c.rate, c.severity.sampler())).collect()
    }

    /// Simulates `years` years of individual losses.
    pub fn simulate(&self, years: usize, stream: &RngStream) -> Result<AnnualLossSample> {
        check_years(years)?;
        let samplers = self.samplers();
        let years = par_blocks(years, stream, |range, rng| {
            range
                .map(|_| {
                    let mut losses = Vec::new();
                    for (rate, s) in &samplers {
                        let n = poisson(rng, *rate);
                        losses.extend((0..n).map(|_| s.draw(rng)));
                    }
                    losses
                })
                .collect()
        });
        Ok(AnnualLossSample { years })
    }

    /// Simulates annual totals only. Gamma components are summed in one draw,
    /// so the stream is consumed differently from [`Self::simulate`].
    pub fn simulate_annual_totals(&self, years: usize, stream: &RngStream) -> Result<Vec<f64>> {
        check_years(years)?;
        let samplers = self.samplers();
        Ok(par_blocks(years, stream, |range, rng| {
            range
                .map(|_| {
                    samplers
                        .iter()
                        .map(|(rate, s)| {
                            let n = poisson(rng, *rate);
                            s.draw_sum(rng, n)
                        })
                        .sum()
                })
                .collect()
        }))
    }

    pub fn mc_var(&self, alpha: f64, years: usize, stream: &RngStream) -> Result<McVar> {
        check_mc_years(alpha, years)?;
        let totals = self.simulate_annual_totals(years, stream)?;
        empirical_var(totals, alpha)
    }
}

/// Single-process view of a (possibly multi-component) model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergedModel {
    pub rate: f64,
    pub severity: Severity,
}

impl MergedModel {
    pub fn weights(&self) -> Vec<f64> {
        match &self.severity {
            Severity::Single(_) => vec![1.0],
            Severity::Mixture(m) => m.weights(),
        }
    }

    pub fn sla_var(&self, alpha: f64, variant: SlaVariant) -> Result<f64> {
        let tail = sla_tail(alpha, self.rate)?;
        let q = self.severity.inverse_sf(tail)?;
        let mean = self.severity.mean()?;
        match variant {
            SlaVariant::Corrected => Ok(q + self.rate * mean),
            SlaVariant::Opcar => Ok(q + (self.rate - 1.0) * mean),
            SlaVariant::LognormalClosedForm => match self.severity.as_single().map(|d| d.family()) {
                Some(Family::Lognormal { .. }) => Ok(q + self.rate * mean),
                _ => Err(OpcapError::InvalidParameter(
                    "lognormal closed-form SLA requires a single Lognormal severity".into(),
                )),
            },
        }
    }

    pub fn simulate_annual_totals(&self, years: usize, stream: &RngStream) -> Result<Vec<f64>> {
        check_years(years)?;
        let sampler: MixtureSampler = self.severity.sampler();
        let rate = self.rate;
        Ok(par_blocks(years, stream, |range, rng| {
            range
                .map(|_| {
                    let n = poisson(rng, rate);
                    (0..n).map(|_| sampler.draw(rng)).sum()
                })
                .collect()
        }))
    }
}

fn sla_tail(alpha: f64, rate: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(OpcapError::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let tail = (1.0 - alpha) / rate;
    if !(tail > 0.0 && tail < 1.0) {
        return Err(OpcapError::Domain(format!(
            "SLA needs λ > 1 − α; got λ = {rate}, α = {alpha}"
        )));
    }
    Ok(tail)
}

fn check_years(years: usize) -> Result<()> {
    if years == 0 {
        return Err(OpcapError::InvalidParameter("need at least one simulated year".into()));
    }
    Ok(())
}

fn check_mc_years(alpha: f64, years: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(OpcapError::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let needed = (1.0 / (1.0 - alpha)).round();
    if (years as f64) < needed {
        return Err(OpcapError::InsufficientData(format!(
            "{years} simulated years are too few for a {alpha} quantile (need at least {needed})"
        )));
    }
    Ok(())
}

/// Empirical α-quantile (the ⌈α n⌉-th order statistic) with a standard error
/// taken as half the width of the binomial ±1 s.d. order-statistic bracket.
pub fn empirical_var(mut values: Vec<f64>, alpha: f64) -> Result<McVar> {
    let n = values.len();
    check_mc_years(alpha, n)?;
    if values.iter().any(|v| v.is_nan()) {
        return Err(OpcapError::Numeric("NaN in simulated losses".into()));
    }
    let na = n as f64 * alpha;
    let sd = (na * (1.0 - alpha)).sqrt();
    let rank = |r: f64| (r.ceil() as usize).clamp(1, n) - 1;
    let k = rank(na);
    let k_lo = rank(na - sd);
    let k_hi = rank(na + sd);

    // everything above the lower bracket rank is a short tail; sort just that
    values.select_nth_unstable_by(k_lo, f64::total_cmp);
    let tail = &mut values[k_lo..];
    tail.sort_unstable_by(f64::total_cmp);
    let (v_lo, var, v_hi) = (tail[0], tail[k - k_lo], tail[k_hi - k_lo]);
    Ok(McVar {
        var,
        standard_error: 0.5 * (v_hi - v_lo),
        years: n,
    })
}

/// Draws a Poisson(`lambda`) count: sequential inversion for small means,
/// Hörmann's transformed rejection (PTRS) otherwise.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    if lambda <= 30.0 {
        let mut p = (-lambda).exp();
        let mut cdf = p;
        let u: f64 = rng.gen();
        let mut k = 0u64;
        while u > cdf {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
            if p == 0.0 && cdf <= u {
                // rounding left u unreachable; restart with a fresh uniform
                return poisson(rng, lambda);
            }
        }
        return k;
    }
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let invalpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u: f64 = rng.gen::<f64>() - 0.5;
        let v: f64 = rng.gen();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + invalpha.ln() - (a / (us * us) + b).ln()
            <= -lambda + k * loglam - crate::special::ln_gamma(k + 1.0)
        {
            return k as u64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_case_small() -> CompoundPoissonModel {
        CompoundPoissonModel::new(vec![
            Component {
                rate: 990.0,
                severity: SeverityDistribution::gamma(1.0, 1e4).unwrap(),
            },
            Component {
                rate: 10.0,
                severity: SeverityDistribution::lognormal(10.0, 2.5).unwrap(),
            },
        ])
        .unwrap()
        .rescaled(1e-6)
        .unwrap()
    }

    #[test]
    fn merge_examples() {
        let f1 = SeverityDistribution::gamma(1.0, 1.0).unwrap();
        let f2 = SeverityDistribution::lognormal(0.0, 1.0).unwrap();
        let m = CompoundPoissonModel::new(vec![Component { rate: 2.0, severity: f1 }, Component { rate: 3.0, severity: f2 }])
            .unwrap()
            .merge();
        assert_eq!(m.rate, 5.0);
        assert_eq!(m.weights(), vec![0.4, 0.6]);

        let single = CompoundPoissonModel::single(7.0, f1).unwrap().merge();
        assert_eq!(single, MergedModel { rate: 7.0, severity: Severity::Single(f1) });

        let twin = CompoundPoissonModel::new(vec![Component { rate: 5.0, severity: f1 }, Component { rate: 5.0, severity: f1 }])
            .unwrap()
            .merge();
        assert_eq!(twin, MergedModel { rate: 10.0, severity: Severity::Single(f1) });
    }

    #[test]
    fn annual_loss_means_of_test_case_1() {
        assert!((test_case_small().annual_loss_mean().unwrap() - 14.9).abs() < 0.1);
        let large = CompoundPoissonModel::new(vec![
            Component { rate: 990.0, severity: SeverityDistribution::gamma(1.0, 5e5).unwrap() },
            Component { rate: 10.0, severity: SeverityDistribution::lognormal(14.0, 2.5).unwrap() },
        ])
        .unwrap()
        .rescaled(1e-6)
        .unwrap();
        assert!((large.annual_loss_mean().unwrap() - 769.0).abs() < 1.0);
        let degenerate = CompoundPoissonModel::poisson_lognormal(10.0, 0.0, 1e-8).unwrap();
        assert!((degenerate.annual_loss_mean().unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn simulate_small_rate_is_empty() {
        let m = CompoundPoissonModel::poisson_lognormal(1e-9, 0.0, 1.0).unwrap();
        let s = m.simulate(10, &RngStream::new(1)).unwrap();
        assert_eq!(s.len(), 10);
        assert!(s.years.iter().all(|y| y.is_empty()));
    }

    #[test]
    fn simulate_is_deterministic() {
        let m = test_case_small();
        let a = m.simulate(50, &RngStream::new(9)).unwrap();
        let b = m.simulate(50, &RngStream::new(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.years.iter().flatten().all(|&x| x > 0.0));
    }

    #[test]
    fn simulated_mean_matches_table_1_small_bank() {
        let m = test_case_small();
        let totals = m.simulate(1000, &RngStream::new(2016)).unwrap().totals();
        let n = totals.len() as f64;
        let mean = totals.iter().sum::<f64>() / n;
        let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean - 15.0).abs() < 3.0 * se + 0.5, "mean {mean} se {se}");
    }

    #[test]
    fn sla_examples() {
        let m = CompoundPoissonModel::poisson_lognormal(10.0, 14.0, 2.0).unwrap().rescaled(1e-6).unwrap();
        let v = m.sla_var(0.999, SlaVariant::Corrected).unwrap();
        assert!((v / 2130.0 - 1.0).abs() < 0.005, "{v}");
        let closed = m.sla_var(0.999, SlaVariant::LognormalClosedForm).unwrap();
        assert!((closed / v - 1.0).abs() < 1e-12);
        let opcar = m.sla_var(0.999, SlaVariant::Opcar).unwrap();
        let mean = m.components()[0].severity.mean().unwrap();
        assert!(((v - opcar) - mean).abs() <= 1e-9 * v);

        let m5 = CompoundPoissonModel::poisson_lognormal(5.0, 14.0, 2.0).unwrap().rescaled(1e-6).unwrap();
        let v5 = m5.sla_var(0.999, SlaVariant::Corrected).unwrap();
        assert!((v5 / 1470.0 - 1.0).abs() < 0.005, "{v5}");

        let g = CompoundPoissonModel::single(3.0, SeverityDistribution::gamma(1.0, 1.0).unwrap()).unwrap();
        assert!(g.sla_var(0.999, SlaVariant::LognormalClosedForm).is_err());
        let tiny = CompoundPoissonModel::poisson_lognormal(1e-4, 0.0, 1.0).unwrap();
        assert!(matches!(tiny.sla_var(0.999, SlaVariant::Corrected), Err(OpcapError::Domain(_))));
    }

    #[test]
    fn long_term_lc_examples() {
        let below = CompoundPoissonModel::single(100.0, SeverityDistribution::gamma(1.0, 0.001).unwrap()).unwrap();
        let lc = below.long_term_lc(LcThresholds::default()).unwrap();
        assert!((lc / 0.7 - 1.0).abs() < 1e-6);

        // independent evaluation of the lognormal closed form
        let (mu, sigma) = (12.0 + 1e-6f64.ln(), 2.5);
        let m = CompoundPoissonModel::poisson_lognormal(10.0, mu, sigma).unwrap();
        let mean = (mu + sigma * sigma / 2.0).exp();
        let pe = |t: f64| mean * crate::special::normal_cdf((sigma * sigma + mu - t.ln()) / sigma);
        let expected = 10.0 * (7.0 * mean + 7.0 * pe(10.0) + 5.0 * pe(100.0));
        assert!((m.long_term_lc(LcThresholds::default()).unwrap() / expected - 1.0).abs() < 1e-12);

        let doubled = m.with_rates_scaled(2.0).unwrap();
        assert!((doubled.long_term_lc(LcThresholds::default()).unwrap() / (2.0 * expected) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mc_var_needs_enough_years() {
        let m = CompoundPoissonModel::poisson_lognormal(10.0, 0.0, 1.0).unwrap();
        assert!(matches!(m.mc_var(0.999, 999, &RngStream::new(1)), Err(OpcapError::InsufficientData(_))));
        assert!(m.mc_var(0.999, 1000, &RngStream::new(1)).is_ok());
    }

    #[test]
    fn empirical_var_order_statistic() {
        let values: Vec<f64> = (1..=10_000).rev().map(f64::from).collect();
        let v = empirical_var(values, 0.999).unwrap();
        assert_eq!(v.var, 9990.0);
        // bracket ±√(n α (1−α)) ≈ ±3.16 ranks
        assert_eq!(v.standard_error, 0.5 * (9994.0 - 9987.0));
    }

    #[test]
    fn degenerate_severity_var_is_poisson_quantile() {
        // Poisson(1000) 0.999-quantile by direct summation of the pmf
        let (mut k, mut cdf) = (0u64, 0.0);
        let lnp = |k: f64| -1000.0 + k * 1000f64.ln() - crate::special::ln_gamma(k + 1.0);
        loop {
            cdf += lnp(k as f64).exp();
            if cdf >= 0.999 {
                break;
            }
            k += 1;
        }
        let m = CompoundPoissonModel::poisson_lognormal(1000.0, 0.0, 1e-9).unwrap();
        let v = m.mc_var(0.999, 200_000, &RngStream::new(3)).unwrap();
        assert!((v.var - k as f64).abs() <= 3.0, "{} vs {k}", v.var);
    }

    #[test]
    fn poisson_moments() {
        for &lambda in &[0.5, 10.0, 29.9, 30.1, 990.0] {
            let mut rng = RngStream::new(77);
            let n = 200_000;
            let xs: Vec<f64> = (0..n).map(|_| poisson(&mut rng, lambda) as f64).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (lambda / n as f64).sqrt();
            assert!((mean - lambda).abs() < 4.0 * se, "λ={lambda} mean={mean}");
            assert!((var / lambda - 1.0).abs() < 0.03, "λ={lambda} var={var}");
        }
    }
}
