//! Parametric loss-severity distributions.
//!
//! Parameterizations:
//!
//! * `Lognormal { mu, sigma }`: `ln X ~ N(mu, sigma²)`.
//! * `Gamma { shape, scale }`: mean `shape·scale`, variance `shape·scale²`.
//! * `Pareto { shape, scale }`: survival `(scale/x)^shape` for `x ≥ scale`.
//! * `LogLogistic { shape, scale }`: cdf `1 / (1 + (x/scale)^−shape)`.
//! * `LogGamma { shape, rate, scale }`: `X = scale·e^Y` with
//!   `Y ~ Gamma(shape, rate)`; `scale` defaults to 1 and exists so the family
//!   is closed under a change of currency unit.
//!
//! Values are validated once at construction and are immutable afterwards.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{OpcapError, Result};
use crate::numeric::quadrature::{integrate, integrate_lower, integrate_upper};
use crate::numeric::roots::{brent, RootTolerance};
use crate::numeric::QuadTolerance;
use crate::special::{
    gamma_p, gamma_q, ln_gamma, normal_cdf, normal_pdf, normal_quantile, normal_quantile_upper,
    normal_sf,
};

/// Raw parameters of a severity family, as read from or written to config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Lognormal { mu: f64, sigma: f64 },
    Gamma { shape: f64, scale: f64 },
    Pareto { shape: f64, scale: f64 },
    LogLogistic { shape: f64, scale: f64 },
    LogGamma {
        shape: f64,
        rate: f64,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// A validated severity distribution on (0, ∞).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Family", into = "Family")]
pub struct SeverityDistribution {
    family: Family,
}

impl TryFrom<Family> for SeverityDistribution {
    type Error = OpcapError;

    fn try_from(family: Family) -> Result<Self> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(OpcapError::InvalidParameter(format!(
                    "{name} must be finite and > 0, got {v}"
                )))
            }
        };
        match family {
            Family::Lognormal { mu, sigma } => {
                if !mu.is_finite() {
                    return Err(OpcapError::InvalidParameter(format!("mu must be finite, got {mu}")));
                }
                positive("sigma", sigma)?;
            }
            Family::Gamma { shape, scale }
            | Family::Pareto { shape, scale }
            | Family::LogLogistic { shape, scale } => {
                positive("shape", shape)?;
                positive("scale", scale)?;
            }
            Family::LogGamma { shape, rate, scale } => {
                positive("shape", shape)?;
                positive("rate", rate)?;
                positive("scale", scale)?;
            }
        }
        Ok(SeverityDistribution { family })
    }
}

impl From<SeverityDistribution> for Family {
    fn from(d: SeverityDistribution) -> Family {
        d.family
    }
}

fn prob_arg(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(OpcapError::Domain(format!("probability must lie in (0, 1), got {p}")))
    }
}

fn threshold_arg(t: f64) -> Result<()> {
    if t >= 0.0 {
        Ok(())
    } else {
        Err(OpcapError::Domain(format!("threshold must be >= 0, got {t}")))
    }
}

impl SeverityDistribution {
    pub fn new(family: Family) -> Result<Self> {
        Self::try_from(family)
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(Family::Lognormal { mu, sigma })
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        Self::new(Family::Gamma { shape, scale })
    }

    pub fn pareto(shape: f64, scale: f64) -> Result<Self> {
        Self::new(Family::Pareto { shape, scale })
    }

    pub fn log_logistic(shape: f64, scale: f64) -> Result<Self> {
        Self::new(Family::LogLogistic { shape, scale })
    }

    pub fn log_gamma(shape: f64, rate: f64) -> Result<Self> {
        Self::new(Family::LogGamma {
            shape,
            rate,
            scale: 1.0,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            Family::Lognormal { .. } => "lognormal",
            Family::Gamma { .. } => "gamma",
            Family::Pareto { .. } => "pareto",
            Family::LogLogistic { .. } => "log_logistic",
            Family::LogGamma { .. } => "log_gamma",
        }
    }

    /// Distribution of `factor·X`, e.g. `rescaled(1e-6)` converts Euro to
    /// Euro million.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(OpcapError::InvalidParameter(format!(
                "rescale factor must be finite and > 0, got {factor}"
            )));
        }
        let family = match self.family {
            Family::Lognormal { mu, sigma } => Family::Lognormal {
                mu: mu + factor.ln(),
                sigma,
            },
            Family::Gamma { shape, scale } => Family::Gamma {
                shape,
                scale: scale * factor,
            },
            Family::Pareto { shape, scale } => Family::Pareto {
                shape,
                scale: scale * factor,
            },
            Family::LogLogistic { shape, scale } => Family::LogLogistic {
                shape,
                scale: scale * factor,
            },
            Family::LogGamma { shape, rate, scale } => Family::LogGamma {
                shape,
                rate,
                scale: scale * factor,
            },
        };
        Self::new(family)
    }

    /// Infimum of the support.
    pub fn support_min(&self) -> f64 {
        match self.family {
            Family::Pareto { scale, .. } | Family::LogGamma { scale, .. } => scale,
            _ => 0.0,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x <= 0.0 {
            return 0.0;
        }
        if x == f64::INFINITY {
            return 1.0;
        }
        match self.family {
            Family::Lognormal { mu, sigma } => normal_cdf((x.ln() - mu) / sigma),
            Family::Gamma { shape, scale } => gamma_p(shape, x / scale),
            Family::Pareto { shape, scale } => {
                if x <= scale {
                    0.0
                } else {
                    -(shape * (scale / x).ln()).exp_m1()
                }
            }
            Family::LogLogistic { shape, scale } => 1.0 / (1.0 + (x / scale).powf(-shape)),
            Family::LogGamma { shape, rate, scale } => {
                if x <= scale {
                    0.0
                } else {
                    gamma_p(shape, rate * (x / scale).ln())
                }
            }
        }
    }

    /// Survival function `1 − F(x)`, evaluated without cancellation.
    pub fn sf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x <= 0.0 {
            return 1.0;
        }
        if x == f64::INFINITY {
            return 0.0;
        }
        match self.family {
            Family::Lognormal { mu, sigma } => normal_sf((x.ln() - mu) / sigma),
            Family::Gamma { shape, scale } => gamma_q(shape, x / scale),
            Family::Pareto { shape, scale } => {
                if x <= scale {
                    1.0
                } else {
                    (scale / x).powf(shape)
                }
            }
            Family::LogLogistic { shape, scale } => 1.0 / (1.0 + (x / scale).powf(shape)),
            Family::LogGamma { shape, rate, scale } => {
                if x <= scale {
                    1.0
                } else {
                    gamma_q(shape, rate * (x / scale).ln())
                }
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 || !x.is_finite() {
            return 0.0;
        }
        match self.family {
            Family::Lognormal { mu, sigma } => normal_pdf((x.ln() - mu) / sigma) / (x * sigma),
            Family::Gamma { shape, scale } => {
                let y = x / scale;
                ((shape - 1.0) * y.ln() - y - ln_gamma(shape)).exp() / scale
            }
            Family::Pareto { shape, scale } => {
                if x < scale {
                    0.0
                } else {
                    shape / scale * (scale / x).powf(shape + 1.0)
                }
            }
            Family::LogLogistic { shape, scale } => {
                let r = (x / scale).powf(shape);
                shape * r / (x * (1.0 + r) * (1.0 + r))
            }
            Family::LogGamma { shape, rate, scale } => {
                if x <= scale {
                    return 0.0;
                }
                let y = (x / scale).ln();
                (shape * rate.ln() + (shape - 1.0) * y.ln() - rate * y - ln_gamma(shape)).exp() / x
            }
        }
    }

    /// Smallest `x` with `cdf(x) ≥ p`, for `p` in (0, 1).
    pub fn quantile(&self, p: f64) -> Result<f64> {
        prob_arg(p)?;
        match self.family {
            Family::Lognormal { mu, sigma } => Ok((mu + sigma * normal_quantile(p)).exp()),
            Family::Gamma { shape, scale } => Ok(scale * gamma_unit_quantile(shape, p, false)?),
            Family::Pareto { shape, scale } => Ok(scale * (-(-p).ln_1p() / shape).exp()),
            Family::LogLogistic { shape, scale } => Ok(scale * (p / (1.0 - p)).powf(1.0 / shape)),
            Family::LogGamma { shape, rate, scale } => {
                Ok(scale * (gamma_unit_quantile(shape, p, false)? / rate).exp())
            }
        }
    }

    /// `F⁻¹(1 − tail)` computed from the tail probability directly.
    pub fn inverse_sf(&self, tail: f64) -> Result<f64> {
        prob_arg(tail)?;
        match self.family {
            Family::Lognormal { mu, sigma } => Ok((mu + sigma * normal_quantile_upper(tail)).exp()),
            Family::Gamma { shape, scale } => Ok(scale * gamma_unit_quantile(shape, tail, true)?),
            Family::Pareto { shape, scale } => Ok(scale * tail.powf(-1.0 / shape)),
            Family::LogLogistic { shape, scale } => {
                Ok(scale * ((1.0 - tail) / tail).powf(1.0 / shape))
            }
            Family::LogGamma { shape, rate, scale } => {
                Ok(scale * (gamma_unit_quantile(shape, tail, true)? / rate).exp())
            }
        }
    }

    /// `E[X]`; an explicit error when the mean is infinite.
    pub fn mean(&self) -> Result<f64> {
        match self.family {
            Family::Lognormal { mu, sigma } => Ok((mu + 0.5 * sigma * sigma).exp()),
            Family::Gamma { shape, scale } => Ok(shape * scale),
            Family::Pareto { shape, scale } => {
                if shape > 1.0 {
                    Ok(shape * scale / (shape - 1.0))
                } else {
                    Err(OpcapError::InfiniteMean(format!("Pareto shape {shape} <= 1")))
                }
            }
            Family::LogLogistic { shape, scale } => {
                if shape > 1.0 {
                    let t = std::f64::consts::PI / shape;
                    Ok(scale * t / t.sin())
                } else {
                    Err(OpcapError::InfiniteMean(format!("log-logistic shape {shape} <= 1")))
                }
            }
            Family::LogGamma { shape, rate, scale } => {
                if rate > 1.0 {
                    Ok(scale * (shape * (rate / (rate - 1.0)).ln()).exp())
                } else {
                    Err(OpcapError::InfiniteMean(format!("log-gamma rate {rate} <= 1")))
                }
            }
        }
    }

    /// Partial (tail) expectation `E[X·1{X > threshold}]`.
    pub fn partial_expectation(&self, threshold: f64) -> Result<f64> {
        threshold_arg(threshold)?;
        let mean = self.mean()?;
        if threshold <= self.support_min() {
            return Ok(mean);
        }
        if threshold == f64::INFINITY {
            return Ok(0.0);
        }
        match self.family {
            Family::Lognormal { mu, sigma } => {
                Ok(mean * normal_cdf((sigma * sigma + mu - threshold.ln()) / sigma))
            }
            Family::Gamma { shape, scale } => Ok(mean * gamma_q(shape + 1.0, threshold / scale)),
            Family::Pareto { shape, scale } => {
                Ok(shape * scale / (shape - 1.0) * (scale / threshold).powf(shape - 1.0))
            }
            Family::LogGamma { shape, rate, scale } => {
                Ok(mean * gamma_q(shape, (rate - 1.0) * (threshold / scale).ln()))
            }
            Family::LogLogistic { .. } => self.partial_expectation_numeric(threshold),
        }
    }

    /// `E[X·1{X > threshold}]` by adaptive quadrature of `x·f(x)` in log space.
    ///
    /// Independent of the closed forms in [`Self::partial_expectation`].
    pub fn partial_expectation_numeric(&self, threshold: f64) -> Result<f64> {
        threshold_arg(threshold)?;
        self.mean()?;
        let lower = threshold.max(self.support_min());
        // substitute x = e^y: ∫ x f(x) dx = ∫ e^{2y} f(e^y) dy
        let integrand = |y: f64| {
            let x = y.exp();
            let v = x * (x * self.pdf(x));
            // far tails: x² overflows while the density has underflowed
            if v.is_finite() {
                v
            } else {
                0.0
            }
        };
        let tol = QuadTolerance {
            rel: 1e-12,
            ..Default::default()
        };
        let centre = self.quantile(0.5)?.ln();
        let width = self.log_width();
        if lower > 0.0 {
            let y0 = lower.ln();
            if centre > y0 {
                Ok(integrate(integrand, y0, centre, tol)? + integrate_upper(integrand, centre, width, tol)?)
            } else {
                integrate_upper(integrand, y0, width, tol)
            }
        } else {
            Ok(integrate_lower(integrand, centre, width, tol)? + integrate_upper(integrand, centre, width, tol)?)
        }
    }

    // rough spread of ln X, used to scale infinite-range substitutions
    fn log_width(&self) -> f64 {
        match self.family {
            Family::Lognormal { sigma, .. } => sigma,
            Family::Gamma { shape, .. } => (1.0 / shape).sqrt().max(0.5),
            Family::Pareto { shape, .. } | Family::LogLogistic { shape, .. } => (1.0 / shape).max(0.25),
            Family::LogGamma { shape, rate, .. } => (shape.sqrt() / rate).max(0.25),
        }
    }

    /// Conditional tail mean `E[X | X > threshold]`.
    pub fn conditional_tail_mean(&self, threshold: f64) -> Result<f64> {
        let s = self.sf(threshold);
        if s <= 0.0 {
            return Err(OpcapError::Domain(format!(
                "threshold {threshold} lies beyond the support (survival is 0)"
            )));
        }
        Ok(self.partial_expectation(threshold)? / s)
    }

    pub fn sampler(&self) -> SeveritySampler {
        SeveritySampler::new(self)
    }

    /// `count` i.i.d. draws from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        let s = self.sampler();
        (0..count).map(|_| s.draw(rng)).collect()
    }
}

// Unit-scale gamma quantile: P(shape, y) = p, or Q(shape, y) = p when `upper`.
fn gamma_unit_quantile(shape: f64, p: f64, upper: bool) -> Result<f64> {
    let f = |y: f64| {
        if upper {
            p - gamma_q(shape, y)
        } else {
            gamma_p(shape, y) - p
        }
    };
    let mut hi = shape.max(1.0);
    let mut steps = 0;
    while f(hi) < 0.0 {
        hi *= 2.0;
        steps += 1;
        if steps > 2000 {
            return Err(OpcapError::Numeric(format!("cannot bracket gamma quantile p={p}")));
        }
    }
    // shrink the lower end while it stays below the root
    let mut lo = hi;
    while lo > f64::MIN_POSITIVE && f(lo) >= 0.0 {
        lo *= 0.5;
    }
    if f(lo) >= 0.0 {
        return Ok(lo);
    }
    brent(
        f,
        lo,
        hi,
        RootTolerance {
            rel: 1e-14,
            abs: 0.0,
            max_iter: 500,
        },
    )
}

/// Prepared draw routine for one severity distribution.
#[derive(Debug, Clone)]
pub enum SeveritySampler {
    Lognormal { mu: f64, sigma: f64 },
    Gamma { dist: rand_distr::Gamma<f64>, shape: f64, scale: f64 },
    Pareto { inv_shape: f64, scale: f64 },
    LogLogistic { inv_shape: f64, scale: f64 },
    LogGamma { dist: rand_distr::Gamma<f64>, scale: f64 },
}

impl SeveritySampler {
    fn new(d: &SeverityDistribution) -> Self {
        match d.family {
            Family::Lognormal { mu, sigma } => SeveritySampler::Lognormal { mu, sigma },
            Family::Gamma { shape, scale } => SeveritySampler::Gamma {
                dist: rand_distr::Gamma::new(shape, scale).expect("validated gamma parameters"),
                shape,
                scale,
            },
            Family::Pareto { shape, scale } => SeveritySampler::Pareto {
                inv_shape: 1.0 / shape,
                scale,
            },
            Family::LogLogistic { shape, scale } => SeveritySampler::LogLogistic {
                inv_shape: 1.0 / shape,
                scale,
            },
            Family::LogGamma { shape, rate, scale } => SeveritySampler::LogGamma {
                dist: rand_distr::Gamma::new(shape, 1.0 / rate).expect("validated log-gamma parameters"),
                scale,
            },
        }
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            SeveritySampler::Lognormal { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                (mu + sigma * z).exp()
            }
            SeveritySampler::Gamma { dist, .. } => dist.sample(rng),
            SeveritySampler::Pareto { inv_shape, scale } => {
                let u = open_unit(rng);
                scale * u.powf(-inv_shape)
            }
            SeveritySampler::LogLogistic { inv_shape, scale } => {
                let u = open_unit(rng);
                scale * (u / (1.0 - u)).powf(*inv_shape)
            }
            SeveritySampler::LogGamma { dist, scale } => scale * dist.sample(rng).exp(),
        }
    }

    /// Sum of `n` i.i.d. draws. Gamma sums are drawn directly as
    /// `Gamma(n·shape, scale)`, which has the same distribution.
    pub fn draw_sum<R: Rng + ?Sized>(&self, rng: &mut R, n: u64) -> f64 {
        match self {
            _ if n == 0 => 0.0,
            SeveritySampler::Gamma { shape, scale, .. } => rand_distr::Gamma::new(n as f64 * shape, *scale)
                .expect("positive gamma parameters")
                .sample(rng),
            _ => (0..n).map(|_| self.draw(rng)).sum(),
        }
    }
}

#[inline]
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

/// Finite mixture of severities with positive weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mixture {
    components: Vec<(f64, SeverityDistribution)>,
}

impl Mixture {
    pub fn new(components: Vec<(f64, SeverityDistribution)>) -> Result<Self> {
        if components.is_empty() {
            return Err(OpcapError::InvalidParameter("mixture needs at least one component".into()));
        }
        if components.iter().any(|(w, _)| !(w.is_finite() && *w > 0.0)) {
            return Err(OpcapError::InvalidParameter("mixture weights must be positive".into()));
        }
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        let components = components.into_iter().map(|(w, d)| (w / total, d)).collect();
        Ok(Mixture { components })
    }

    pub fn components(&self) -> &[(f64, SeverityDistribution)] {
        &self.components
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|(w, _)| *w).collect()
    }
}

/// Either a single parametric severity or a mixture (the severity of a merged
/// multi-component compound Poisson model).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Severity {
    Single(SeverityDistribution),
    Mixture(Mixture),
}

impl From<SeverityDistribution> for Severity {
    fn from(d: SeverityDistribution) -> Self {
        Severity::Single(d)
    }
}

impl Severity {
    fn parts(&self) -> Vec<(f64, &SeverityDistribution)> {
        match self {
            Severity::Single(d) => vec![(1.0, d)],
            Severity::Mixture(m) => m.components.iter().map(|(w, d)| (*w, d)).collect(),
        }
    }

    pub fn as_single(&self) -> Option<&SeverityDistribution> {
        match self {
            Severity::Single(d) => Some(d),
            Severity::Mixture(_) => None,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.parts().iter().map(|(w, d)| w * d.cdf(x)).sum()
    }

    pub fn sf(&self, x: f64) -> f64 {
        self.parts().iter().map(|(w, d)| w * d.sf(x)).sum()
    }

    pub fn mean(&self) -> Result<f64> {
        self.parts().iter().map(|(w, d)| Ok(w * d.mean()?)).sum()
    }

    pub fn partial_expectation(&self, threshold: f64) -> Result<f64> {
        self.parts()
            .iter()
            .map(|(w, d)| Ok(w * d.partial_expectation(threshold)?))
            .sum()
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        match self {
            Severity::Single(d) => d.quantile(p),
            Severity::Mixture(_) => self.mixture_solve(p, false),
        }
    }

    pub fn inverse_sf(&self, tail: f64) -> Result<f64> {
        match self {
            Severity::Single(d) => d.inverse_sf(tail),
            Severity::Mixture(_) => self.mixture_solve(tail, true),
        }
    }

    // The mixture quantile lies between the smallest and largest component quantiles.
    fn mixture_solve(&self, p: f64, upper: bool) -> Result<f64> {
        prob_arg(p)?;
        let qs = self
            .parts()
            .iter()
            .map(|(_, d)| if upper { d.inverse_sf(p) } else { d.quantile(p) })
            .collect::<Result<Vec<_>>>()?;
        let lo = qs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            return Ok(lo);
        }
        let f = |x: f64| if upper { p - self.sf(x) } else { self.cdf(x) - p };
        brent(f, lo, hi, RootTolerance::relative(1e-14))
    }

    pub fn sampler(&self) -> MixtureSampler {
        let parts = self.parts();
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(parts.len());
        let mut samplers = Vec::with_capacity(parts.len());
        for (w, d) in parts {
            acc += w;
            cumulative.push(acc);
            samplers.push(d.sampler());
        }
        MixtureSampler { cumulative, samplers }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        let s = self.sampler();
        (0..count).map(|_| s.draw(rng)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct MixtureSampler {
    cumulative: Vec<f64>,
    samplers: Vec<SeveritySampler>,
}

impl MixtureSampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.samplers.len() == 1 {
            return self.samplers[0].draw(rng);
        }
        let u: f64 = rng.gen();
        let idx = self
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.samplers.len() - 1);
        self.samplers[idx].draw(rng)
    }
}
