//! Linear regression of capital on size indicators, and the nonlinear
//! power-coefficient model `R(x) = x·F(x)` with `F(x) = θ(x−A)^{1−α}/(1−α)`,
//! fitted by least squares or by quantile (check) loss.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OpcapError, Result};
use crate::numeric::nelder_mead::{minimize, NelderMeadOptions};

/// Responses `Y_j` and covariates `X_{i,j}` for `J` institutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionDataset {
    pub response_name: String,
    pub covariate_names: Vec<String>,
    pub responses: Vec<f64>,
    /// one row per institution
    pub covariates: Vec<Vec<f64>>,
}

impl RegressionDataset {
    pub fn new(
        response_name: impl Into<String>,
        covariate_names: Vec<String>,
        responses: Vec<f64>,
        covariates: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if responses.len() != covariates.len() {
            return Err(OpcapError::InvalidParameter(format!(
                "{} responses but {} covariate rows",
                responses.len(),
                covariates.len()
            )));
        }
        if let Some(row) = covariates.iter().find(|r| r.len() != covariate_names.len()) {
            return Err(OpcapError::InvalidParameter(format!(
                "covariate row has {} values, expected {}",
                row.len(),
                covariate_names.len()
            )));
        }
        if responses.iter().chain(covariates.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(OpcapError::InvalidParameter("dataset contains missing or non-finite values".into()));
        }
        Ok(RegressionDataset {
            response_name: response_name.into(),
            covariate_names,
            responses,
            covariates,
        })
    }

    /// Reads a CSV with a header row; `response` names the response column and
    /// every other column is a covariate.
    pub fn from_csv_reader<R: std::io::Read>(reader: R, response: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let yi = headers
            .iter()
            .position(|h| h == response)
            .ok_or_else(|| OpcapError::InvalidParameter(format!("no column named {response:?}")))?;
        let names: Vec<String> = headers.iter().enumerate().filter(|(i, _)| *i != yi).map(|(_, h)| h.clone()).collect();
        let (mut ys, mut xs) = (Vec::new(), Vec::new());
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let mut row = Vec::with_capacity(names.len());
            for (i, field) in record.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    OpcapError::InvalidParameter(format!("row {}: {:?} in column {} is not a number", line + 1, field, headers[i]))
                })?;
                if i == yi {
                    ys.push(v);
                } else {
                    row.push(v);
                }
            }
            xs.push(row);
        }
        Self::new(response, names, ys, xs)
    }

    pub fn from_csv_path(path: impl AsRef<Path>, response: &str) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?, response)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self
            .covariate_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| OpcapError::InvalidParameter(format!("no covariate named {name:?}")))?;
        Ok(self.covariates.iter().map(|r| r[i]).collect())
    }
}

#[derive(Debug, Clone, Default)]
pub struct OlsOptions {
    pub intercept: bool,
    /// covariates to use; all when `None`
    pub columns: Option<Vec<String>>,
    /// observation weights for weighted least squares
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OlsFit {
    /// parameter names, `intercept` first when present
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub r_squared: f64,
    pub residual_variance: f64,
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
}

/// Columns that are (numerically) linear combinations of earlier columns.
#[allow(clippy::needless_range_loop)]
fn collinear_columns(x: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let mut kept: Vec<usize> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let residual = if kept.is_empty() {
            norm
        } else {
            let basis = x.select_columns(&kept);
            match basis.clone().svd(true, true).solve(&col, 1e-12) {
                Ok(beta) => (&col - basis * beta).norm(),
                Err(_) => norm,
            }
        };
        if norm == 0.0 || residual <= 1e-9 * norm {
            bad.push(names[j].clone());
        } else {
            kept.push(j);
        }
    }
    bad
}

/// Ordinary (or weighted) least squares of the response on a subset of the
/// covariates, solved by QR.
pub fn ols_fit(data: &RegressionDataset, opts: &OlsOptions) -> Result<OlsFit> {
    let columns: Vec<String> = opts.columns.clone().unwrap_or_else(|| data.covariate_names.clone());
    let cols = columns.iter().map(|c| data.column(c)).collect::<Result<Vec<_>>>()?;
    let mut names = Vec::new();
    if opts.intercept {
        names.push("intercept".to_string());
    }
    names.extend(columns.iter().cloned());
    let n = data.len();
    let p = names.len();
    if p == 0 {
        return Err(OpcapError::InvalidParameter("no regressors selected".into()));
    }
    if n <= p {
        return Err(OpcapError::InsufficientData(format!("{n} observations for {p} parameters")));
    }
    let weights = match &opts.weights {
        Some(w) if w.len() != n => {
            return Err(OpcapError::InvalidParameter(format!("{} weights for {n} observations", w.len())))
        }
        Some(w) if w.iter().any(|&v| !(v.is_finite() && v > 0.0)) => {
            return Err(OpcapError::InvalidParameter("weights must be positive".into()))
        }
        Some(w) => w.clone(),
        None => vec![1.0; n],
    };
    let x = DMatrix::from_fn(n, p, |i, j| {
        if opts.intercept {
            if j == 0 {
                1.0
            } else {
                cols[j - 1][i]
            }
        } else {
            cols[j][i]
        }
    });
    let y = DVector::from_column_slice(&data.responses);
    let sw = DVector::from_iterator(n, weights.iter().map(|w| w.sqrt()));
    let xw = DMatrix::from_fn(n, p, |i, j| x[(i, j)] * sw[i]);
    let yw = y.component_mul(&sw);

    let bad = collinear_columns(&xw, &names);
    if !bad.is_empty() {
        return Err(OpcapError::RankDeficient { columns: bad });
    }
    let qr = xw.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * &yw;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| OpcapError::Numeric("singular triangular factor".into()))?;

    let fitted = &x * &beta;
    let residuals = &y - &fitted;
    let ssr: f64 = residuals.iter().zip(&weights).map(|(e, w)| w * e * e).sum();
    let wsum: f64 = weights.iter().sum();
    let center = if opts.intercept {
        y.iter().zip(&weights).map(|(v, w)| w * v).sum::<f64>() / wsum
    } else {
        0.0
    };
    let sst: f64 = y.iter().zip(&weights).map(|(v, w)| w * (v - center).powi(2)).sum();
    let residual_variance = ssr / (n - p) as f64;
    let r_inv = r
        .try_inverse()
        .ok_or_else(|| OpcapError::Numeric("singular triangular factor".into()))?;
    let cov = &r_inv * r_inv.transpose() * residual_variance;
    Ok(OlsFit {
        names,
        coefficients: beta.iter().copied().collect(),
        standard_errors: (0..p).map(|i| cov[(i, i)].sqrt()).collect(),
        r_squared: if sst > 0.0 { 1.0 - ssr / sst } else { f64::NAN },
        residual_variance,
        residuals: residuals.iter().copied().collect(),
        fitted: fitted.iter().copied().collect(),
    })
}

/// Check loss `ρ_τ(y) = y(τ − 1{y<0})`.
pub fn rho(tau: f64, y: f64) -> f64 {
    if y < 0.0 {
        y * (tau - 1.0)
    } else {
        y * tau
    }
}

/// `F(x) = θ(x−A)^{1−α}/(1−α)` with θ ≥ 0, α ∈ [0, 1), A ≤ 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCoefficientModel {
    pub theta: f64,
    pub alpha: f64,
    #[serde(rename = "A")]
    pub a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerEval {
    pub f: f64,
    pub r: f64,
    pub dr: f64,
    pub d2r: f64,
}

impl PowerCoefficientModel {
    pub fn new(theta: f64, alpha: f64, a: f64) -> Result<Self> {
        if !(theta.is_finite() && theta >= 0.0) {
            return Err(OpcapError::InvalidParameter(format!("θ must be >= 0, got {theta}")));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(OpcapError::InvalidParameter(format!("α must lie in [0, 1], got {alpha}")));
        }
        if alpha == 1.0 {
            return Err(OpcapError::Domain("α = 1 is the logarithmic limit, not supported".into()));
        }
        if !(a.is_finite() && a <= 0.0) {
            return Err(OpcapError::InvalidParameter(format!("A must be <= 0, got {a}")));
        }
        Ok(PowerCoefficientModel { theta, alpha, a })
    }

    /// `F`, `R = xF`, `R' = F + xF'` and `R'' = 2F' + xF''`.
    pub fn eval(&self, x: f64) -> Result<PowerEval> {
        if x.is_nan() || x <= self.a {
            return Err(OpcapError::Domain(format!("x = {x} must exceed A = {}", self.a)));
        }
        let (th, al) = (self.theta, self.alpha);
        let z = x - self.a;
        let f = th * z.powf(1.0 - al) / (1.0 - al);
        let f1 = th * z.powf(-al);
        let f2 = -al * th * z.powf(-al - 1.0);
        Ok(PowerEval {
            f,
            r: x * f,
            dr: f + x * f1,
            d2r: 2.0 * f1 + x * f2,
        })
    }

    pub fn predict(&self, x: f64) -> Result<f64> {
        Ok(self.eval(x)?.r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitObjective {
    LeastSquares,
    Quantile { tau: f64 },
}

impl FitObjective {
    pub fn loss(&self, residuals: impl Iterator<Item = f64>) -> f64 {
        match *self {
            FitObjective::LeastSquares => residuals.map(|e| e * e).sum(),
            FitObjective::Quantile { tau } => residuals.map(|e| rho(tau, e)).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerFit {
    pub model: PowerCoefficientModel,
    pub objective: FitObjective,
    pub loss: f64,
}

/// `R(x)/θ` for given (α, A).
fn shape_values(xs: &[f64], alpha: f64, a: f64) -> Vec<f64> {
    xs.iter().map(|&x| x * (x - a).powf(1.0 - alpha) / (1.0 - alpha)).collect()
}

/// Best θ ≥ 0 for `Y ≈ θ·g` under the objective. Both losses are convex in θ,
/// so the unconstrained minimizer is clamped at zero.
fn best_theta(ys: &[f64], g: &[f64], objective: FitObjective) -> f64 {
    let theta = match objective {
        FitObjective::LeastSquares => {
            let num: f64 = ys.iter().zip(g).map(|(y, g)| y * g).sum();
            let den: f64 = g.iter().map(|g| g * g).sum();
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        }
        FitObjective::Quantile { tau } => {
            // slope of Σ ρ_τ(y − θg) just right of θ
            let slope = |theta: f64| -> f64 {
                ys.iter()
                    .zip(g)
                    .filter(|(_, &g)| g != 0.0)
                    .map(|(&y, &g)| {
                        let e = y - theta * g;
                        let below = e < 0.0 || (e == 0.0 && g > 0.0);
                        -g * (tau - if below { 1.0 } else { 0.0 })
                    })
                    .sum()
            };
            let mut knots: Vec<f64> = ys.iter().zip(g).filter(|(_, &g)| g != 0.0).map(|(y, g)| y / g).collect();
            if knots.is_empty() {
                return 0.0;
            }
            knots.sort_by(f64::total_cmp);
            // first knot at which the right slope is non-negative
            let i = knots.partition_point(|&t| slope(t) < 0.0);
            knots[i.min(knots.len() - 1)]
        }
    };
    theta.max(0.0)
}

fn profile_loss(xs: &[f64], ys: &[f64], alpha: f64, a: f64, objective: FitObjective) -> (f64, f64) {
    let g = shape_values(xs, alpha, a);
    let theta = best_theta(ys, &g, objective);
    let loss = objective.loss(ys.iter().zip(&g).map(|(y, g)| y - theta * g));
    (theta, loss)
}

const ALPHA_MAX: f64 = 0.999;

/// Fits `Y ≈ R(x)` over the box θ ≥ 0, α ∈ [0, 0.999], A ≤ 0 with A below the
/// smallest x. θ is profiled out exactly; (α, A) are searched by Nelder–Mead
/// from the deterministic start grid α ∈ {0, 0.1, …, 0.9} × A ∈ {0, −x̄, −10x̄}.
pub fn power_model_fit(xs: &[f64], ys: &[f64], objective: FitObjective) -> Result<PowerFit> {
    if xs.len() != ys.len() {
        return Err(OpcapError::InvalidParameter("x and y lengths differ".into()));
    }
    if xs.len() < 4 {
        return Err(OpcapError::InsufficientData(format!("{} observations for 3 parameters", xs.len())));
    }
    if let FitObjective::Quantile { tau } = objective {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(OpcapError::InvalidParameter(format!("τ must lie in (0, 1), got {tau}")));
        }
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(OpcapError::InvalidParameter("non-finite data".into()));
    }
    if let Some(bad) = xs.iter().find(|&&x| x <= 0.0) {
        return Err(OpcapError::Domain(format!("covariate must be positive (A <= 0 < x), got {bad}")));
    }
    let xbar = xs.iter().sum::<f64>() / xs.len() as f64;
    // A is searched as A/x̄ so both coordinates are O(1)
    let a_lower = -100.0;
    let opts = NelderMeadOptions {
        max_evals: 4000,
        f_tol: 0.0,
        x_tol: 1e-12,
        initial_step: vec![0.05, 0.5],
        lower: vec![0.0, a_lower],
        upper: vec![ALPHA_MAX, 0.0],
    };
    let starts: Vec<[f64; 2]> = (0..10)
        .flat_map(|i| [0.0, -1.0, -10.0].map(|a| [i as f64 / 10.0, a]))
        .collect();
    let fits: Vec<(f64, f64, f64, f64)> = starts
        .par_iter()
        .map(|s| {
            let m = minimize(|p| profile_loss(xs, ys, p[0], p[1] * xbar, objective).1, s, &opts);
            let (alpha, a) = (m.x[0], m.x[1] * xbar);
            let (theta, loss) = profile_loss(xs, ys, alpha, a, objective);
            (loss, theta, alpha, a)
        })
        .collect();
    // first strict minimum in start order keeps the choice deterministic
    let best = fits
        .iter()
        .fold(None::<&(f64, f64, f64, f64)>, |acc, f| match acc {
            Some(b) if b.0 <= f.0 => Some(b),
            _ if f.0.is_finite() => Some(f),
            _ => acc,
        })
        .ok_or_else(|| OpcapError::NoSolution("no start produced a finite loss".into()))?;
    Ok(PowerFit {
        model: PowerCoefficientModel::new(best.1, best.2, best.3)?,
        objective,
        loss: best.0,
    })
}

/// Objective value of a given model on data.
pub fn power_model_loss(model: &PowerCoefficientModel, xs: &[f64], ys: &[f64], objective: FitObjective) -> Result<f64> {
    let preds = xs.iter().map(|&x| model.predict(x)).collect::<Result<Vec<_>>>()?;
    Ok(objective.loss(ys.iter().zip(preds).map(|(y, p)| y - p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn dataset(ys: Vec<f64>, cols: Vec<Vec<f64>>, names: &[&str]) -> RegressionDataset {
        let rows = (0..ys.len()).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        RegressionDataset::new("y", names.iter().map(|s| s.to_string()).collect(), ys, rows).unwrap()
    }

    #[test]
    fn exact_linear_recovery() {
        let x1: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let x2: Vec<f64> = (0..20).map(|i| ((i * 7) % 11) as f64).collect();
        let y: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| 3.0 + 2.0 * a - 0.5 * b).collect();
        let d = dataset(y, vec![x1, x2], &["a", "b"]);
        let fit = ols_fit(&d, &OlsOptions { intercept: true, ..Default::default() }).unwrap();
        for (c, t) in fit.coefficients.iter().zip([3.0, 2.0, -0.5]) {
            assert!((c - t).abs() < 1e-10, "{c} {t}");
        }
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_column_is_rank_error() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let d = dataset(x.clone(), vec![x.clone(), x.iter().map(|v| 2.0 * v).collect()], &["a", "a2"]);
        match ols_fit(&d, &OlsOptions::default()) {
            Err(OpcapError::RankDeficient { columns }) => assert_eq!(columns, vec!["a2".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gaussian_noise_within_standard_errors() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(17);
        let unit = Normal::new(0.0, 1.0).unwrap();
        let sigma = 2.0;
        let beta = [1.0, 0.5, -1.5, 3.0];
        let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..200).map(|_| unit.sample(&mut rng) * 5.0).collect()).collect();
        let y: Vec<f64> = (0..200)
            .map(|j| beta[0] + (0..3).map(|i| beta[i + 1] * cols[i][j]).sum::<f64>() + sigma * unit.sample(&mut rng))
            .collect();
        let d = dataset(y, cols.clone(), &["x1", "x2", "x3"]);
        let fit = ols_fit(&d, &OlsOptions { intercept: true, ..Default::default() }).unwrap();
        // analytic standard errors with the known noise level
        let x = DMatrix::from_fn(200, 4, |j, i| if i == 0 { 1.0 } else { cols[i - 1][j] });
        let cov = (x.transpose() * &x).try_inverse().unwrap() * sigma * sigma;
        for i in 0..4 {
            let se = cov[(i, i)].sqrt();
            assert!((fit.coefficients[i] - beta[i]).abs() < 3.0 * se, "{i}");
        }
        assert!((fit.residual_variance / 4.0 - 1.0).abs() < 0.3);
    }

    #[test]
    fn weighted_fit_equals_replicated_rows() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let y = vec![1.1, 1.9, 3.2, 3.9, 5.3];
        let d = dataset(y.clone(), vec![x.clone()], &["x"]);
        let w = ols_fit(
            &d,
            &OlsOptions { intercept: true, weights: Some(vec![1.0, 2.0, 1.0, 1.0, 1.0]), ..Default::default() },
        )
        .unwrap();
        let mut x2 = x.clone();
        let mut y2 = y.clone();
        x2.push(2.0);
        y2.push(1.9);
        let r = ols_fit(&dataset(y2, vec![x2], &["x"]), &OlsOptions { intercept: true, ..Default::default() }).unwrap();
        for (a, b) in w.coefficients.iter().zip(&r.coefficients) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_dataset() {
        let text = "bi,y,assets\n1,2,3\n4,5,6\n";
        let d = RegressionDataset::from_csv_reader(text.as_bytes(), "y").unwrap();
        assert_eq!(d.covariate_names, vec!["bi", "assets"]);
        assert_eq!(d.responses, vec![2.0, 5.0]);
        assert_eq!(d.covariates[1], vec![4.0, 6.0]);
        assert!(RegressionDataset::from_csv_reader(text.as_bytes(), "z").is_err());
        assert!(RegressionDataset::from_csv_reader("y,x\n1,\n".as_bytes(), "y").is_err());
    }

    #[test]
    fn rho_values() {
        assert_eq!(rho(0.5, 1.0), 0.5);
        assert_eq!(rho(0.5, -1.0), 0.5);
        assert_eq!(rho(0.9, 0.0), 0.0);
        assert!((rho(0.9, -2.0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn power_model_eval_cases() {
        let m = PowerCoefficientModel::new(3.0, 0.0, 0.0).unwrap();
        let e = m.eval(2.0).unwrap();
        assert_eq!((e.f, e.r), (6.0, 12.0));
        assert_eq!((e.dr, e.d2r), (12.0, 6.0));
        let z = PowerCoefficientModel::new(0.0, 0.3, -1.0).unwrap();
        assert_eq!(z.eval(5.0).unwrap().r, 0.0);
        assert!(PowerCoefficientModel::new(1.0, 1.0, 0.0).is_err());
        assert!(PowerCoefficientModel::new(1.0, 0.5, 1.0).is_err());
        assert!(PowerCoefficientModel::new(-1.0, 0.5, 0.0).is_err());
        assert!(m.eval(0.0).is_err());
    }

    #[test]
    fn power_fit_recovers_noise_free_parameters() {
        let truth = PowerCoefficientModel::new(2.0, 0.5, -1.0).unwrap();
        let xs: Vec<f64> = (0..40).map(|i| 0.5 + 2.5 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| truth.predict(x).unwrap()).collect();
        let fit = power_model_fit(&xs, &ys, FitObjective::LeastSquares).unwrap();
        let m = fit.model;
        assert!((m.theta - 2.0).abs() < 1e-4, "{m:?}");
        assert!((m.alpha - 0.5).abs() < 1e-4, "{m:?}");
        assert!((m.a + 1.0).abs() < 1e-4, "{m:?}");
    }

    #[test]
    fn quantile_fit_beats_perturbations() {
        let truth = PowerCoefficientModel::new(1.5, 0.3, -2.0).unwrap();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        let noise = Normal::new(0.0, 5.0).unwrap();
        let xs: Vec<f64> = (0..150).map(|i| 1.0 + 0.2 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| truth.predict(x).unwrap() + noise.sample(&mut rng)).collect();
        let obj = FitObjective::Quantile { tau: 0.5 };
        let fit = power_model_fit(&xs, &ys, obj).unwrap();
        let at_truth = power_model_loss(&truth, &xs, &ys, obj).unwrap();
        assert!(fit.loss <= at_truth + 1e-9);
        for (dt, da) in [(0.05, 0.0), (-0.05, 0.0), (0.0, 0.02), (0.0, -0.02)] {
            let p = PowerCoefficientModel::new(fit.model.theta + dt, fit.model.alpha + da, fit.model.a).unwrap();
            assert!(power_model_loss(&p, &xs, &ys, obj).unwrap() >= fit.loss - 1e-9);
        }
    }

    #[test]
    fn power_fit_rejects_nonpositive_covariates() {
        let xs = [-1.0, -2.0, -3.0, -4.0];
        assert!(power_model_fit(&xs, &[1.0; 4], FitObjective::LeastSquares).is_err());
    }
}
