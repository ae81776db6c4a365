//! The SMA capital formula and the legacy BIA/TSA gross-income formulas.
//!
//! All amounts are Euro million.

use serde::{Deserialize, Serialize};

use crate::error::{OpcapError, Result};

/// Bucket upper bounds (inclusive) and the BIC value reached at each.
const BOUNDS: [f64; 4] = [1000.0, 3000.0, 10000.0, 30000.0];
const BIC_AT_BOUND: [f64; 4] = [110.0, 410.0, 1740.0, 6340.0];
const SLOPES: [f64; 5] = [0.11, 0.15, 0.19, 0.23, 0.29];

/// Basel II TSA betas for the eight business lines (corporate finance,
/// trading and sales, retail banking, commercial banking, payment and
/// settlement, agency services, asset management, retail brokerage).
pub const BASEL_II_BETAS: [f64; 8] = [0.18, 0.18, 0.12, 0.15, 0.18, 0.15, 0.12, 0.12];

/// BIA multiplier.
pub const BIA_ALPHA: f64 = 0.15;

/// Loss-size thresholds of the loss component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LcThresholds {
    pub low: f64,
    pub high: f64,
}

impl Default for LcThresholds {
    fn default() -> Self {
        LcThresholds { low: 10.0, high: 100.0 }
    }
}

fn check_amount(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(OpcapError::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")))
    }
}

/// Bucket 1..=5; a BI equal to a bound belongs to the lower bucket.
pub fn bucket(bi: f64) -> u8 {
    BOUNDS.iter().take_while(|&&b| bi > b).count() as u8 + 1
}

/// Business indicator component (piecewise linear in BI).
pub fn bic(bi: f64) -> f64 {
    let b = bucket(bi) as usize;
    if b == 1 {
        SLOPES[0] * bi
    } else {
        BIC_AT_BOUND[b - 2] + SLOPES[b - 1] * (bi - BOUNDS[b - 2])
    }
}

/// Inverse of [`bic`].
pub fn bi_from_bic(value: f64) -> f64 {
    match BIC_AT_BOUND.iter().position(|&c| value <= c) {
        Some(0) => value / SLOPES[0],
        Some(i) => BOUNDS[i - 1] + (value - BIC_AT_BOUND[i - 1]) / SLOPES[i],
        None => BOUNDS[3] + (value - BIC_AT_BOUND[3]) / SLOPES[4],
    }
}

/// SMA capital from BI and LC.
pub fn k_sma(bi: f64, lc: f64) -> f64 {
    let c = bic(bi);
    if bucket(bi) == 1 {
        c
    } else {
        110.0 + (c - 110.0) * (std::f64::consts::E - 1.0 + lc / c).ln()
    }
}

/// Business indicator and loss component of one institution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmaInput {
    pub bi: f64,
    pub lc: f64,
}

impl SmaInput {
    pub fn new(bi: f64, lc: f64) -> Result<Self> {
        check_amount("bi", bi)?;
        check_amount("lc", lc)?;
        Ok(SmaInput { bi, lc })
    }

    pub fn from_history(bi: f64, history: &LossHistory, thresholds: LcThresholds) -> Result<Self> {
        Self::new(bi, history.loss_component(thresholds))
    }

    pub fn bucket(&self) -> u8 {
        bucket(self.bi)
    }

    pub fn bic(&self) -> f64 {
        bic(self.bi)
    }

    pub fn capital(&self) -> f64 {
        k_sma(self.bi, self.lc)
    }
}

/// Individual losses per year, most recent last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct LossHistory {
    years: Vec<Vec<f64>>,
}

impl TryFrom<Vec<Vec<f64>>> for LossHistory {
    type Error = OpcapError;
    fn try_from(years: Vec<Vec<f64>>) -> Result<Self> {
        LossHistory::new(years)
    }
}

impl From<LossHistory> for Vec<Vec<f64>> {
    fn from(h: LossHistory) -> Self {
        h.years
    }
}

impl LossHistory {
    pub fn new(years: Vec<Vec<f64>>) -> Result<Self> {
        if years.is_empty() {
            return Err(OpcapError::InsufficientData("loss history has no years".into()));
        }
        if let Some(bad) = years.iter().flatten().find(|&&x| !(x.is_finite() && x > 0.0)) {
            return Err(OpcapError::InvalidParameter(format!("loss amounts must be positive, got {bad}")));
        }
        Ok(LossHistory { years })
    }

    pub fn years(&self) -> &[Vec<f64>] {
        &self.years
    }

    /// `7·avg total + 7·avg total above L + 5·avg total above H`, with strict
    /// threshold comparisons.
    pub fn loss_component(&self, thresholds: LcThresholds) -> f64 {
        loss_component_of(&self.years, thresholds)
    }
}

/// Loss component of a window of yearly loss lists (must be non-empty).
pub fn loss_component_of<Y: AsRef<[f64]>>(years: &[Y], thresholds: LcThresholds) -> f64 {
    let (mut all, mut above_low, mut above_high) = (0.0, 0.0, 0.0);
    for year in years {
        for &x in year.as_ref() {
            all += x;
            if x > thresholds.low {
                above_low += x;
            }
            if x > thresholds.high {
                above_high += x;
            }
        }
    }
    let t = years.len() as f64;
    (7.0 * all + 7.0 * above_low + 5.0 * above_high) / t
}

/// Gross income over the last three years, optionally by business line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrossIncomeSeries {
    pub total: [f64; 3],
    #[serde(default)]
    pub by_line: Option<[[f64; 3]; 8]>,
    #[serde(default = "basel_betas")]
    pub betas: [f64; 8],
}

fn basel_betas() -> [f64; 8] {
    BASEL_II_BETAS
}

impl GrossIncomeSeries {
    pub fn new(total: [f64; 3], by_line: Option<[[f64; 3]; 8]>, betas: [f64; 8]) -> Result<Self> {
        if let Some(b) = betas.iter().find(|b| !(0.12..=0.18).contains(*b)) {
            return Err(OpcapError::InvalidParameter(format!("TSA beta {b} outside [0.12, 0.18]")));
        }
        Ok(GrossIncomeSeries { total, by_line, betas })
    }

    pub fn totals(total: [f64; 3]) -> Self {
        GrossIncomeSeries {
            total,
            by_line: None,
            betas: BASEL_II_BETAS,
        }
    }

    /// Builds the series from per-line income; totals are the line sums.
    pub fn by_line(lines: [[f64; 3]; 8], betas: [f64; 8]) -> Result<Self> {
        let mut total = [0.0; 3];
        for line in &lines {
            for (t, v) in total.iter_mut().zip(line) {
                *t += v;
            }
        }
        Self::new(total, Some(lines), betas)
    }

    /// `0.15 · mean of the positive yearly gross incomes`.
    pub fn k_bia(&self) -> Result<f64> {
        let positive: Vec<f64> = self.total.iter().copied().filter(|&g| g > 0.0).collect();
        if positive.is_empty() {
            return Err(OpcapError::InsufficientData("no year with positive gross income".into()));
        }
        Ok(BIA_ALPHA * positive.iter().sum::<f64>() / positive.len() as f64)
    }

    /// `(1/3) Σ_years max(Σ_lines β_i GI_i, 0)`.
    pub fn k_tsa(&self) -> Result<f64> {
        let lines = self
            .by_line
            .as_ref()
            .ok_or_else(|| OpcapError::InsufficientData("TSA needs gross income by business line".into()))?;
        let mut sum = 0.0;
        for year in 0..3 {
            let weighted: f64 = lines.iter().zip(&self.betas).map(|(l, b)| b * l[year]).sum();
            sum += weighted.max(0.0);
        }
        Ok(sum / 3.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buckets() {
        assert_eq!(bucket(0.0), 1);
        assert_eq!(bucket(1000.0), 1);
        assert_eq!(bucket(1000.01), 2);
        assert_eq!(bucket(3000.0), 2);
        assert_eq!(bucket(30000.0), 4);
        assert_eq!(bucket(50000.0), 5);
    }

    #[test]
    fn bic_values() {
        assert!((bic(2000.0) - 260.0).abs() < 1e-12);
        assert_eq!(bic(30000.0), 6340.0);
        assert_eq!(bic(0.0), 0.0);
        for (b, c) in BOUNDS.iter().zip(BIC_AT_BOUND) {
            assert_eq!(bic(*b), c);
            let right = bic(b + 1e-9);
            assert!((right - c).abs() < 1e-9);
        }
        for &v in &[0.0, 50.0, 110.0, 300.0, 410.0, 1000.0, 1740.0, 6340.0, 9000.0] {
            assert!((bic(bi_from_bic(v)) - v).abs() < 1e-9 * v.max(1.0));
        }
    }

    #[test]
    fn k_sma_examples() {
        assert!((k_sma(500.0, 1e6) - 55.0).abs() < 1e-12);
        assert!((k_sma(2000.0, 260.0) - 260.0).abs() < 1e-12);
        let expected = 110.0 + 150.0 * (std::f64::consts::E - 1.0).ln();
        assert!((k_sma(2000.0, 0.0) - expected).abs() < 1e-12);
        assert!((k_sma(2000.0, 0.0) - 191.20).abs() < 0.01);
        assert!((k_sma(1000.0 + 1e-9, 1e4) - 110.0).abs() < 1e-6);
    }

    #[test]
    fn loss_component_examples() {
        let lc = |x: f64| LossHistory::new(vec![vec![x]]).unwrap().loss_component(LcThresholds::default());
        assert_eq!(lc(5.0), 35.0);
        assert_eq!(lc(50.0), 700.0);
        assert_eq!(lc(200.0), 3800.0);
        // strict comparisons at the thresholds
        assert_eq!(lc(10.0), 70.0);
        assert_eq!(lc(100.0), 1400.0);
        assert!(LossHistory::new(vec![]).is_err());
        assert!(LossHistory::new(vec![vec![-1.0]]).is_err());
        // empty years count toward the average
        let h = LossHistory::new(vec![vec![5.0], vec![]]).unwrap();
        assert_eq!(h.loss_component(LcThresholds::default()), 17.5);
    }

    #[test]
    fn bia_examples() {
        assert!((GrossIncomeSeries::totals([100.0; 3]).k_bia().unwrap() - 15.0).abs() < 1e-12);
        assert!((GrossIncomeSeries::totals([100.0, -50.0, 100.0]).k_bia().unwrap() - 15.0).abs() < 1e-12);
        assert!(GrossIncomeSeries::totals([-1.0; 3]).k_bia().is_err());
    }

    #[test]
    fn tsa_examples() {
        let g = GrossIncomeSeries::by_line([[100.0; 3]; 8], [0.12; 8]).unwrap();
        assert!((g.k_tsa().unwrap() - 96.0).abs() < 1e-12);

        let mut lines = [[100.0; 3]; 8];
        lines[0][1] = -10_000.0;
        let g = GrossIncomeSeries::by_line(lines, [0.12; 8]).unwrap();
        assert!((g.k_tsa().unwrap() - 2.0 * 96.0 / 3.0).abs() < 1e-12);

        assert!(GrossIncomeSeries::by_line([[1.0; 3]; 8], [0.2; 8]).is_err());
        assert!(GrossIncomeSeries::totals([1.0; 3]).k_tsa().is_err());
    }
}
