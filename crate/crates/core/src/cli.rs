//! Command-line front end.
//!
//! Every subcommand prints a one-line summary on stdout and, with `--output`,
//! writes a CSV (JSON for `regress`) atomically. Stochastic subcommands refuse
//! to run without `--seed`. A `--config` JSON object supplies default flag
//! values: each key is a long flag name of the chosen subcommand, and flags
//! given on the command line win.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical or I/O
//! failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::OpcapError;
use crate::lda::{CompoundPoissonModel, SlaVariant};
use crate::opcar::{
    aggregate_statistics, fitted_var, grid_search_calibrate, model_average_var, opcar_filters, BankProfile,
    BlockStudySpec, CalibrationFamily, ConditionSet, Objective, ParamGrid, QisBankStatistics, Thresholds,
};
use crate::regression::{ols_fit, power_model_fit, FitObjective, OlsOptions, RegressionDataset};
use crate::rng::RngStream;
use crate::sma::{GrossIncomeSeries, LcThresholds, LossHistory};
use crate::studies::{
    implied_bi, instability_series, sensitivity_boxplot_data, sla_accuracy, split_analysis,
    superadditive_region, test_case_banks, InstabilityStudySpec, RegionSpec, SensitivitySpec, SplitSpec, VarMethod,
    SENSITIVITY_SIGMAS, SLA_ACCURACY_CASES,
};
use crate::table::{write_atomic, Cell, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "opcap", version, about = "SMA and LDA operational-risk capital toolkit")]
pub struct Cli {
    /// Worker threads (falls back to OPCAP_THREADS; results do not depend on it)
    #[arg(long, global = true, env = "OPCAP_THREADS")]
    pub threads: Option<usize>,

    /// JSON object of default flag values for the subcommand
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// SMA capital from BI and LC (or a loss history), with optional BIA/TSA
    Sma(SmaArgs),
    /// 0.999 VaR of a compound Poisson model by SLA or Monte Carlo
    LdaVar(LdaVarArgs),
    /// BI making long-term SMA capital equal to the LDA VaR
    ImpliedBi(ImpliedBiArgs),
    /// Year-on-year SMA capital relative to its long-term value
    Instability(InstabilityArgs),
    /// Capital-ratio box summaries across Lognormal σ
    Sensitivity(SensitivityArgs),
    /// Split of a bank into m similar entities
    Split(SplitArgs),
    /// Entity-1 implied BI where splitting is super-additive
    SuperaddRegion(RegionArgs),
    /// Calibrate severities from yearly threshold statistics
    Calibrate(CalibrateArgs),
    /// SLA versus Monte Carlo VaR for Poisson–Lognormal
    SlaAccuracy(SlaAccuracyArgs),
    /// Linear or power-coefficient regression of capital on indicators
    Regress(RegressArgs),
}

#[derive(Debug, Args)]
pub struct SmaArgs {
    /// Business indicator, Euro million
    #[arg(long)]
    pub bi: f64,
    /// Loss component, Euro million
    #[arg(long, conflicts_with = "losses")]
    pub lc: Option<f64>,
    /// JSON file with yearly loss lists (Euro million) to compute LC from
    #[arg(long)]
    pub losses: Option<PathBuf>,
    /// Three yearly gross incomes for the BIA charge
    #[arg(long, value_delimiter = ',')]
    pub gross_income: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10.0)]
    pub lc_low: f64,
    #[arg(long, default_value_t = 100.0)]
    pub lc_high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VarMethodArg {
    Sla,
    Mc,
}

/// Poisson–Lognormal model given on the command line, or a JSON model file.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Poisson rate
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Lognormal μ
    #[arg(long)]
    pub mu: Option<f64>,
    /// Lognormal σ
    #[arg(long)]
    pub sigma: Option<f64>,
    /// JSON list of {rate, severity} components instead of λ, μ, σ
    #[arg(long, conflicts_with_all = ["lambda", "mu", "sigma"])]
    pub model: Option<PathBuf>,
}

impl ModelArgs {
    /// `scale` converts the command-line μ (or the model file) into the
    /// working currency unit.
    fn build(&self, scale: f64) -> Result<CompoundPoissonModel, CliError> {
        let m = if let Some(path) = &self.model {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<CompoundPoissonModel>(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        } else {
            match (self.lambda, self.mu, self.sigma) {
                (Some(l), Some(m), Some(s)) => CompoundPoissonModel::poisson_lognormal(l, m, s).map_err(CliError::config_from)?,
                _ => return Err(CliError::config("give --lambda, --mu and --sigma, or --model")),
            }
        };
        if scale == 1.0 {
            Ok(m)
        } else {
            m.rescaled(scale).map_err(CliError::config_from)
        }
    }
}

#[derive(Debug, Args)]
pub struct LdaVarArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0.999)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = VarMethodArg::Sla)]
    pub method: VarMethodArg,
    #[arg(long, value_enum, default_value_t = SlaVariant::Corrected)]
    pub variant: SlaVariant,
    /// Simulated years for the Monte Carlo method
    #[arg(long, default_value_t = 1_000_000)]
    pub years: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Multiply all severities by this factor before computing
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
}

#[derive(Debug, Args)]
pub struct ImpliedBiArgs {
    /// Model with μ on the raw-Euro scale; results in Euro billion
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0.999)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = VarMethodArg::Sla)]
    pub method: VarMethodArg,
    #[arg(long, default_value_t = 1_000_000)]
    pub years: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grid mode: every (μ, σ) pair for Poisson(λ)–Lognormal, SLA only
    #[arg(long)]
    pub grid: bool,
    #[arg(long, value_delimiter = ',', default_values_t = [10.0, 12.0, 14.0])]
    pub mus: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.0])]
    pub sigmas: Vec<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BankSize {
    Small,
    Medium,
    Large,
    All,
}

#[derive(Debug, Args)]
pub struct InstabilityArgs {
    /// Two-process banks with σ = 2.5 (case 1) or 2.8 (case 2)
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub test_case: Option<u8>,
    #[arg(long, value_enum, default_value_t = BankSize::All)]
    pub bank: BankSize,
    /// Single Poisson–Lognormal bank (raw-Euro μ) instead of a test case
    #[command(flatten)]
    pub model: ModelArgs,
    /// Business indicator, Euro million; for a single model defaults to the
    /// SLA-implied BI
    #[arg(long)]
    pub bi: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub horizon: usize,
    #[arg(long, default_value_t = 10)]
    pub window: usize,
    #[arg(long, default_value_t = 10)]
    pub burn_in: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[arg(long, value_delimiter = ',', default_values_t = SENSITIVITY_SIGMAS)]
    pub sigmas: Vec<f64>,
    #[arg(long, default_value_t = 2000.0)]
    pub bi: f64,
    #[arg(long, default_value_t = 1000)]
    pub horizon: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long, default_value_t = 10.0)]
    pub lambda: f64,
    /// raw-Euro μ
    #[arg(long, default_value_t = 14.0)]
    pub mu: f64,
    /// one or more σ values (one output row each)
    #[arg(long, value_delimiter = ',', default_values_t = [2.0])]
    pub sigma: Vec<f64>,
    /// one or more entity counts
    #[arg(long, value_delimiter = ',', default_values_t = [2usize])]
    pub m: Vec<usize>,
    #[arg(long, default_value_t = 0.999)]
    pub alpha: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RegionArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [8.0, 9.0, 10.0, 11.0, 12.0, 13.0])]
    pub mu1: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [8.0, 9.0, 10.0, 11.0, 12.0, 13.0])]
    pub mu2: Vec<f64>,
    #[arg(long, default_value_t = 10.0)]
    pub joint_lambda: f64,
    #[arg(long, default_value_t = 12.0)]
    pub joint_mu: f64,
    #[arg(long, default_value_t = 2.5)]
    pub joint_sigma: f64,
    #[arg(long, default_value_t = 2.5)]
    pub entity_sigma: f64,
    #[arg(long, default_value_t = 10.0)]
    pub entity_lambda: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Demo {
    /// 200 five-year blocks from Poisson(1000)–Lognormal(10, 2)
    BlockStudy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridArg {
    Grid1,
    Grid2,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, conflicts_with = "stats")]
    pub demo: Option<Demo>,
    /// CSV of yearly statistics: year,n_tilde,n,S,M
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Families to fit (default: all)
    #[arg(long, value_enum, value_delimiter = ',')]
    pub family: Vec<CalibrationFamily>,
    #[arg(long, value_enum, default_value_t = ConditionSet::PercentileMoment)]
    pub conditions: ConditionSet,
    #[arg(long, value_enum, default_value_t = Objective::SumOfSquares)]
    pub objective: Objective,
    #[arg(long, value_enum, default_value_t = GridArg::Grid1)]
    pub grid: GridArg,
    /// Grid bounds "lo1,hi1,step1,lo2,hi2,step2" overriding --grid
    #[arg(long, value_delimiter = ',')]
    pub grid_bounds: Option<Vec<f64>>,
    #[arg(long, default_value_t = crate::opcar::DEFAULT_U)]
    pub u: f64,
    #[arg(long, default_value_t = crate::opcar::DEFAULT_U_TILDE)]
    pub u_tilde: f64,
    /// Total assets, Euro billion, for the frequency filter
    #[arg(long)]
    pub assets_bn: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub blocks: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Per-block fits of the demo study
    #[arg(long)]
    pub fits_output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SlaAccuracyArgs {
    /// λ values (paired with --sigma); defaults to the six standard cases
    #[arg(long, value_delimiter = ',')]
    pub lambda: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub sigma: Vec<f64>,
    #[arg(long, default_value_t = 3.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 10_000_000)]
    pub years: usize,
    #[arg(long, default_value_t = 0.999)]
    pub alpha: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegressModel {
    Linear,
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    LeastSquares,
    Quantile,
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    /// CSV dataset with a header row
    #[arg(long, required_unless_present = "synthetic")]
    pub data: Option<PathBuf>,
    /// Generate a synthetic dataset with this many banks instead (needs --seed)
    #[arg(long, conflicts_with = "data")]
    pub synthetic: Option<usize>,
    /// Where to save the synthetic dataset
    #[arg(long, requires = "synthetic")]
    pub dataset_output: Option<PathBuf>,
    #[arg(long, default_value = "capital")]
    pub response: String,
    /// Covariates to use (default: all); the power model uses the first
    #[arg(long, value_delimiter = ',')]
    pub columns: Vec<String>,
    #[arg(long, value_enum, default_value_t = RegressModel::Linear)]
    pub model: RegressModel,
    #[arg(long)]
    pub no_intercept: bool,
    /// Column of observation weights for weighted least squares
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long, value_enum, default_value_t = LossArg::LeastSquares)]
    pub loss: LossArg,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON file for the fitted model
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(msg: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: msg.into(),
        }
    }

    fn config_from(e: OpcapError) -> Self {
        Self::config(e.to_string())
    }
}

impl From<OpcapError> for CliError {
    fn from(e: OpcapError) -> Self {
        let code = match e {
            OpcapError::InvalidParameter(_) => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

const SUBCOMMANDS: [&str; 10] = [
    "sma",
    "lda-var",
    "implied-bi",
    "instability",
    "sensitivity",
    "split",
    "superadd-region",
    "calibrate",
    "sla-accuracy",
    "regress",
];

fn find_config(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Flags derived from a JSON config object.
fn config_flags(path: &Path) -> CliResult<Vec<OsString>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("config {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("config {}: {e}", path.display())))?;
    let obj = value
        .as_object()
        .ok_or_else(|| CliError::config("config must be a JSON object"))?;
    let scalar = |v: &serde_json::Value| -> CliResult<String> {
        match v {
            serde_json::Value::String(s) => Ok(s.clone()),
            serde_json::Value::Number(n) => Ok(n.to_string()),
            serde_json::Value::Bool(b) => Ok(b.to_string()),
            other => Err(CliError::config(format!("unsupported config value {other}"))),
        }
    };
    let mut flags = Vec::new();
    for (key, v) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        match v {
            serde_json::Value::Bool(true) => flags.push(flag.into()),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::Array(items) => {
                let parts = items.iter().map(scalar).collect::<CliResult<Vec<_>>>()?;
                flags.push(format!("{flag}={}", parts.join(",")).into());
            }
            other => flags.push(format!("{flag}={}", scalar(other)?).into()),
        }
    }
    Ok(flags)
}

/// Parses argv, folding in `--config` defaults placed before the
/// command-line flags so that the latter override them.
pub fn parse(args: Vec<OsString>) -> CliResult<Cli> {
    let mut argv = args;
    if let Some(path) = find_config(&argv) {
        let extra = config_flags(&path)?;
        if let Some(pos) = argv.iter().position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref())) {
            argv.splice(pos + 1..pos + 1, extra);
        }
    }
    let cmd = Cli::command().mut_subcommands(|s| s.args_override_self(true));
    let matches = match cmd.try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return Err(CliError {
                code,
                message: String::new(),
            });
        }
    };
    Cli::from_arg_matches(&matches).map_err(|e| CliError::config(e.to_string()))
}

/// Runs the CLI and returns the process exit code.
pub fn run(args: Vec<OsString>) -> i32 {
    let cli = match parse(args) {
        Ok(c) => c,
        Err(e) => {
            if !e.message.is_empty() {
                eprintln!("error: {}", e.message);
            }
            return e.code;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return EXIT_CONFIG;
        }
        // a second initialization in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(&cli.command) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn require_seed(seed: Option<u64>) -> CliResult<u64> {
    seed.ok_or_else(|| CliError::config("this command is stochastic: --seed is required"))
}

fn emit(table: &Table, output: &Option<PathBuf>) -> CliResult<()> {
    if let Some(path) = output {
        table.write_atomic(path).map_err(|e| CliError {
            code: EXIT_FAILURE,
            message: format!("writing {}: {e}", path.display()),
        })?;
    }
    Ok(())
}

fn emit_json<T: Serialize>(value: &T, output: &Option<PathBuf>) -> CliResult<()> {
    if let Some(path) = output {
        let mut text = serde_json::to_string_pretty(value).map_err(OpcapError::from)?;
        text.push('\n');
        write_atomic(path, text.as_bytes()).map_err(|e| CliError {
            code: EXIT_FAILURE,
            message: format!("writing {}: {e}", path.display()),
        })?;
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> CliResult<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::config(format!("--alpha must lie in (0, 1), got {alpha}")))
    }
}

fn dispatch(cmd: &Command) -> CliResult<String> {
    match cmd {
        Command::Sma(a) => cmd_sma(a),
        Command::LdaVar(a) => cmd_lda_var(a),
        Command::ImpliedBi(a) => cmd_implied_bi(a),
        Command::Instability(a) => cmd_instability(a),
        Command::Sensitivity(a) => cmd_sensitivity(a),
        Command::Split(a) => cmd_split(a),
        Command::SuperaddRegion(a) => cmd_region(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::SlaAccuracy(a) => cmd_sla_accuracy(a),
        Command::Regress(a) => cmd_regress(a),
    }
}

fn cmd_sma(a: &SmaArgs) -> CliResult<String> {
    let thresholds = LcThresholds {
        low: a.lc_low,
        high: a.lc_high,
    };
    let lc = match (&a.lc, &a.losses) {
        (Some(lc), None) => *lc,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            let h: LossHistory = serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            h.loss_component(thresholds)
        }
        _ => return Err(CliError::config("give --lc or --losses")),
    };
    let input = crate::sma::SmaInput::new(a.bi, lc)?;
    let mut line = format!(
        "{} (bucket {}, BIC {}, LC {})",
        input.capital(),
        input.bucket(),
        input.bic(),
        lc
    );
    if let Some(gi) = &a.gross_income {
        if gi.len() != 3 {
            return Err(CliError::config("--gross-income needs three values"));
        }
        let bia = GrossIncomeSeries::totals([gi[0], gi[1], gi[2]]).k_bia()?;
        line.push_str(&format!(", BIA {bia}"));
    }
    Ok(line)
}

fn cmd_lda_var(a: &LdaVarArgs) -> CliResult<String> {
    check_alpha(a.alpha)?;
    let model = a.model.build(a.scale)?;
    match a.method {
        VarMethodArg::Sla => Ok(format!("{}", model.sla_var(a.alpha, a.variant)?)),
        VarMethodArg::Mc => {
            let seed = require_seed(a.seed)?;
            let mc = model.mc_var(a.alpha, a.years, &RngStream::new(seed))?;
            Ok(format!(
                "{} (standard error {}, {:.3}%, {} years)",
                mc.var,
                mc.standard_error,
                100.0 * mc.relative_error(),
                mc.years
            ))
        }
    }
}

fn cmd_implied_bi(a: &ImpliedBiArgs) -> CliResult<String> {
    check_alpha(a.alpha)?;
    if a.grid {
        if a.method != VarMethodArg::Sla {
            return Err(CliError::config("--grid supports --method sla only"));
        }
        let lambda = a.model.lambda.unwrap_or(10.0);
        let cells = crate::studies::implied_bi_table(lambda, &a.mus, &a.sigmas, a.alpha)?;
        let mut headers = vec!["mu".to_string()];
        headers.extend(a.sigmas.iter().map(|s| format!("{s}")));
        let mut t = Table::new(headers);
        for (i, mu) in a.mus.iter().enumerate() {
            let mut row: Vec<Cell> = vec![(*mu).into()];
            row.extend(cells[i * a.sigmas.len()..(i + 1) * a.sigmas.len()].iter().map(|c| c.bi_bn.into()));
            t.push(row)?;
        }
        emit(&t, &a.output)?;
        return Ok(format!("implied BI grid: {} x {} cells, Euro billion", a.mus.len(), a.sigmas.len()));
    }
    let model = a.model.build(1e-6)?;
    let method = match a.method {
        VarMethodArg::Sla => VarMethod::Sla,
        VarMethodArg::Mc => VarMethod::Mc {
            years: a.years,
            seed: require_seed(a.seed)?,
        },
    };
    let r = implied_bi(&model, a.alpha, method, LcThresholds::default())?;
    let mut t = Table::new(["bi_bn", "bucket", "var", "long_term_lc", "capital"]);
    t.push(vec![r.bi_bn().into(), r.bucket.into(), r.var.into(), r.lc.into(), r.capital().into()])?;
    emit(&t, &a.output)?;
    Ok(format!(
        "{:.2} Euro billion (BI {} Euro million, bucket {}, VaR {}, long-term LC {})",
        r.bi_bn(),
        r.bi,
        r.bucket,
        r.var,
        r.lc
    ))
}

fn cmd_instability(a: &InstabilityArgs) -> CliResult<String> {
    let seed = require_seed(a.seed)?;
    let stream = RngStream::new(seed);
    let mut banks: Vec<(String, CompoundPoissonModel, f64)> = Vec::new();
    match a.test_case {
        Some(case) => {
            if a.model.lambda.is_some() || a.model.model.is_some() {
                return Err(CliError::config("--test-case and an explicit model are exclusive"));
            }
            let sigma = a.model.sigma.unwrap_or(if case == 1 { 2.5 } else { 2.8 });
            let bi = a.bi.unwrap_or(2000.0);
            for (name, m) in test_case_banks(sigma)? {
                let keep = match a.bank {
                    BankSize::All => true,
                    BankSize::Small => name == "small",
                    BankSize::Medium => name == "medium",
                    BankSize::Large => name == "large",
                };
                if keep {
                    banks.push((name.to_string(), m, bi));
                }
            }
        }
        None => {
            let model = a.model.build(1e-6)?;
            let bi = match a.bi {
                Some(b) => b,
                None => implied_bi(&model, 0.999, VarMethod::Sla, LcThresholds::default())?.bi,
            };
            banks.push(("custom".to_string(), model, bi));
        }
    }
    let mut t = Table::new(["bank", "year", "lc", "capital", "ratio"]);
    let mut parts = Vec::new();
    for (name, model, bi) in banks {
        let spec = InstabilityStudySpec {
            horizon: a.horizon,
            window: a.window,
            burn_in: a.burn_in,
            ..InstabilityStudySpec::new(model, bi)
        };
        let series = instability_series(&spec, &stream.labelled(&name))?;
        for r in &series.rows {
            t.push(vec![name.as_str().into(), r.year.into(), r.lc.into(), r.capital.into(), r.ratio.into()])?;
        }
        parts.push(format!("{name} max ratio {:.3}", series.max_ratio()));
    }
    emit(&t, &a.output)?;
    Ok(parts.join(", "))
}

fn cmd_sensitivity(a: &SensitivityArgs) -> CliResult<String> {
    let seed = require_seed(a.seed)?;
    let base = SensitivitySpec {
        bi: a.bi,
        horizon: a.horizon,
        ..Default::default()
    };
    let out = sensitivity_boxplot_data(&a.sigmas, &base, &RngStream::new(seed))?;
    let mut t = Table::new([
        "sigma",
        "min",
        "whisker_low",
        "q1",
        "median",
        "q3",
        "whisker_high",
        "max",
        "mean",
    ]);
    for b in &out {
        t.push(
            [b.sigma, b.min, b.whisker_low, b.q1, b.median, b.q3, b.whisker_high, b.max, b.mean]
                .into_iter()
                .map(Cell::from)
                .collect(),
        )?;
    }
    emit(&t, &a.output)?;
    Ok(out
        .iter()
        .map(|b| format!("σ={} median {:.3} max {:.3}", b.sigma, b.median, b.max))
        .collect::<Vec<_>>()
        .join(", "))
}

fn cmd_split(a: &SplitArgs) -> CliResult<String> {
    check_alpha(a.alpha)?;
    let mut t = Table::new([
        "m",
        "sigma",
        "bi_joint",
        "sma_joint",
        "sma_entity",
        "delta",
        "relative_delta",
        "lda_entity",
        "under_capitalization",
        "relative_under_capitalization",
    ]);
    let mut last = None;
    for &m in &a.m {
        for &sigma in &a.sigma {
            let r = split_analysis(&SplitSpec {
                rate: a.lambda,
                mu_euro: a.mu,
                sigma,
                m,
                alpha: a.alpha,
            })?;
            t.push(vec![
                r.m.into(),
                r.sigma.into(),
                r.bi_joint.into(),
                r.sma_joint.into(),
                r.sma_entity.into(),
                r.delta.into(),
                r.relative_delta.into(),
                r.lda_entity.into(),
                r.under_capitalization.into(),
                r.relative_under_capitalization.into(),
            ])?;
            last = Some(r);
        }
    }
    emit(&t, &a.output)?;
    let r = last.ok_or_else(|| CliError::config("no σ or m given"))?;
    Ok(format!(
        "m={} σ={}: joint SMA {:.1}, entity SMA {:.1}, entity LDA {:.1}, under-capitalization {:.1} ({} rows)",
        r.m,
        r.sigma,
        r.sma_joint,
        r.sma_entity,
        r.lda_entity,
        r.under_capitalization,
        t.len()
    ))
}

fn cmd_region(a: &RegionArgs) -> CliResult<String> {
    let spec = RegionSpec {
        joint_rate: a.joint_lambda,
        joint_mu_euro: a.joint_mu,
        joint_sigma: a.joint_sigma,
        rates: [a.entity_lambda; 2],
        sigmas: [a.entity_sigma; 2],
        ..Default::default()
    };
    let cells = superadditive_region(&spec, &a.mu1, &a.mu2)?;
    let mut headers = vec!["mu1".to_string()];
    headers.extend(a.mu2.iter().map(|m| format!("{m}")));
    let mut t = Table::new(headers);
    for (i, mu1) in a.mu1.iter().enumerate() {
        let mut row: Vec<Cell> = vec![(*mu1).into()];
        row.extend(cells[i * a.mu2.len()..(i + 1) * a.mu2.len()].iter().map(|c| c.bi1_bn.into()));
        t.push(row)?;
    }
    emit(&t, &a.output)?;
    let feasible = cells.iter().filter(|c| c.bi1_bn.is_some()).count();
    Ok(format!("{feasible} of {} cells super-additive", cells.len()))
}

fn grid_from(a: &CalibrateArgs) -> CliResult<ParamGrid> {
    if let Some(b) = &a.grid_bounds {
        if b.len() != 6 {
            return Err(CliError::config("--grid-bounds needs six values"));
        }
        return Ok(ParamGrid {
            first: crate::opcar::Axis::new(b[0], b[1], b[2])?,
            second: crate::opcar::Axis::new(b[3], b[4], b[5])?,
        });
    }
    Ok(match a.grid {
        GridArg::Grid1 => ParamGrid::grid1(),
        GridArg::Grid2 => ParamGrid::grid2(),
    })
}

fn cmd_calibrate(a: &CalibrateArgs) -> CliResult<String> {
    let thresholds = Thresholds::new(a.u, a.u_tilde)?;
    let grid = grid_from(a)?;
    match (&a.demo, &a.stats) {
        (Some(Demo::BlockStudy), None) => {
            let seed = require_seed(a.seed)?;
            if a.blocks == 0 {
                return Err(CliError::config("--blocks must be positive"));
            }
            let spec = BlockStudySpec {
                blocks: a.blocks,
                thresholds,
                grid,
                ..Default::default()
            };
            let r = spec.run(&RngStream::new(seed), a.objective)?;
            let mut t = Table::new([
                "objective",
                "blocks",
                "failed_blocks",
                "mean_lambda_u",
                "mean_lambda_u_tilde",
                "mean_mu_u",
                "mean_mu_hat",
                "sd_mu_hat",
                "rmse_mu_hat",
                "mean_sigma_hat",
                "sd_sigma_hat",
                "rmse_sigma_hat",
                "mean_lambda_hat",
                "sd_lambda_hat",
                "rmse_lambda_hat",
                "mean_var",
                "sd_var",
                "rmse_var",
            ]);
            let objective = a.objective.to_possible_value().expect("value").get_name().to_string();
            t.push(vec![
                objective.into(),
                a.blocks.into(),
                r.failed_blocks.into(),
                r.lambda_u.mean.into(),
                r.lambda_u_tilde.mean.into(),
                r.mu_u.mean.into(),
                r.mu_hat.mean.into(),
                r.mu_hat.sd.into(),
                r.mu_hat.rmse.into(),
                r.sigma_hat.mean.into(),
                r.sigma_hat.sd.into(),
                r.sigma_hat.rmse.into(),
                r.lambda_hat.mean.into(),
                r.lambda_hat.sd.into(),
                r.lambda_hat.rmse.into(),
                r.var.mean.into(),
                r.var.sd.into(),
                r.var.rmse.into(),
            ])?;
            emit(&t, &a.output)?;
            if a.fits_output.is_some() {
                let mut f = Table::new([
                    "block",
                    "lambda_u",
                    "lambda_u_tilde",
                    "mu_u",
                    "mu_hat",
                    "sigma_hat",
                    "lambda_hat",
                    "var",
                    "pareto_optimal",
                ]);
                for b in &r.fits {
                    f.push(vec![
                        b.block.into(),
                        b.lambda_u.into(),
                        b.lambda_u_tilde.into(),
                        b.mu_u.into(),
                        b.mu_hat.into(),
                        b.sigma_hat.into(),
                        b.lambda_hat.into(),
                        b.var.into(),
                        b.pareto_optimal.into(),
                    ])?;
                }
                emit(&f, &a.fits_output)?;
            }
            Ok(format!(
                "mean μ̂ {:.3}, σ̂ {:.3}, λ̂ {:.0}; λ_u {:.1}, λ_ũ {:.1}, μ_u {:.4e} over {} blocks",
                r.mu_hat.mean,
                r.sigma_hat.mean,
                r.lambda_hat.mean,
                r.lambda_u.mean,
                r.lambda_u_tilde.mean,
                r.mu_u.mean,
                r.fits.len()
            ))
        }
        (None, Some(path)) => {
            let stats = QisBankStatistics::from_csv_path(path, thresholds).map_err(|e| match e {
                OpcapError::Io(_) | OpcapError::Csv(_) => CliError::config(format!("{}: {e}", path.display())),
                other => other.into(),
            })?;
            let agg = aggregate_statistics(&stats)?;
            let families = if a.family.is_empty() {
                CalibrationFamily::value_variants().to_vec()
            } else {
                a.family.clone()
            };
            let mut t = Table::new([
                "family",
                "param1",
                "param2",
                "lambda",
                "o1",
                "o2",
                "converged",
                "passed_filters",
                "filter_reasons",
                "var",
            ]);
            let mut survivors = Vec::new();
            for fam in families {
                let r = grid_search_calibrate(&agg, fam, a.conditions, &grid, a.objective, thresholds)?;
                let outcome = a.assets_bn.map(|assets| {
                    opcar_filters(
                        &r,
                        &BankProfile {
                            total_assets_bn: assets,
                            lambda_u: agg.lambda_u,
                            lambda_u_tilde: agg.lambda_u_tilde,
                        },
                    )
                });
                let passed = outcome.as_ref().map_or(r.converged, |o| o.passed);
                let reasons = outcome
                    .as_ref()
                    .map(|o| o.reasons.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(";"))
                    .unwrap_or_default();
                let var = fitted_var(&r, 0.999, SlaVariant::Opcar).ok();
                let name = fam.to_possible_value().expect("value").get_name().to_string();
                t.push(vec![
                    name.into(),
                    r.params.map(|p| p.0).into(),
                    r.params.map(|p| p.1).into(),
                    r.lambda.into(),
                    r.residuals.map(|p| p.0).into(),
                    r.residuals.map(|p| p.1).into(),
                    r.converged.into(),
                    passed.into(),
                    reasons.into(),
                    var.into(),
                ])?;
                if passed && r.converged {
                    survivors.push(r);
                }
            }
            emit(&t, &a.output)?;
            match model_average_var(&survivors, 0.999) {
                Ok(v) => Ok(format!("{} of {} models survive; averaged VaR {}", survivors.len(), t.len(), v)),
                Err(_) => Ok(format!("no model survives out of {}", t.len())),
            }
        }
        _ => Err(CliError::config("give --demo block-study or --stats <csv>")),
    }
}

fn cmd_sla_accuracy(a: &SlaAccuracyArgs) -> CliResult<String> {
    check_alpha(a.alpha)?;
    let seed = require_seed(a.seed)?;
    let cases: Vec<(f64, f64)> = match (a.lambda.is_empty(), a.sigma.is_empty()) {
        (true, true) => SLA_ACCURACY_CASES.to_vec(),
        _ if a.lambda.len() == a.sigma.len() => a.lambda.iter().copied().zip(a.sigma.iter().copied()).collect(),
        _ => return Err(CliError::config("--lambda and --sigma need the same number of values")),
    };
    let stream = RngStream::new(seed);
    let mut t = Table::new([
        "lambda",
        "mu",
        "sigma",
        "mc_var",
        "mc_relative_error",
        "sla_var",
        "delta",
        "epsilon",
    ]);
    let mut parts = Vec::new();
    for (i, (lambda, sigma)) in cases.into_iter().enumerate() {
        let r = sla_accuracy(lambda, a.mu, sigma, a.alpha, a.years, &stream.substream(i as u64))?;
        t.push(vec![
            r.rate.into(),
            r.mu.into(),
            r.sigma.into(),
            r.mc_var.into(),
            r.mc_relative_error.into(),
            r.sla_var.into(),
            r.delta.into(),
            r.epsilon.into(),
        ])?;
        parts.push(format!("λ={lambda} σ={sigma}: ε {:.2}%", 100.0 * r.epsilon));
    }
    emit(&t, &a.output)?;
    Ok(parts.join(", "))
}

/// Bank-like synthetic data: lognormal BI, assets loosely tied to BI, and a
/// power-law capital response with multiplicative noise.
pub fn synthetic_dataset(banks: usize, seed: u64) -> crate::Result<RegressionDataset> {
    use rand_distr::{Distribution, Normal};
    let mut rng = RngStream::new(seed);
    let z = Normal::<f64>::new(0.0, 1.0).expect("unit normal");
    let mut rows = Vec::with_capacity(banks);
    let mut ys = Vec::with_capacity(banks);
    for _ in 0..banks {
        let bi = (7.5 + 1.2 * z.sample(&mut rng)).exp();
        let assets = bi * (3.0 + 0.3 * z.sample(&mut rng)).exp();
        let income = bi * (0.1 * z.sample(&mut rng)).exp();
        let capital = 0.15 * bi.powf(1.1) * (0.2 * z.sample(&mut rng)).exp();
        rows.push(vec![bi, assets, income]);
        ys.push(capital);
    }
    RegressionDataset::new("capital", vec!["bi".into(), "assets".into(), "income".into()], ys, rows)
}

fn dataset_table(d: &RegressionDataset) -> crate::Result<Table> {
    let mut headers = vec![d.response_name.clone()];
    headers.extend(d.covariate_names.iter().cloned());
    let mut t = Table::new(headers);
    for (y, row) in d.responses.iter().zip(&d.covariates) {
        let mut cells: Vec<Cell> = vec![(*y).into()];
        cells.extend(row.iter().map(|v| Cell::from(*v)));
        t.push(cells)?;
    }
    Ok(t)
}

fn cmd_regress(a: &RegressArgs) -> CliResult<String> {
    let data = match (&a.data, a.synthetic) {
        (Some(path), None) => RegressionDataset::from_csv_path(path, &a.response).map_err(|e| match e {
            OpcapError::Io(_) | OpcapError::Csv(_) => CliError::config(format!("{}: {e}", path.display())),
            other => CliError::config_from(other),
        })?,
        (None, Some(n)) => {
            let d = synthetic_dataset(n, require_seed(a.seed)?).map_err(CliError::config_from)?;
            if a.dataset_output.is_some() {
                emit(&dataset_table(&d)?, &a.dataset_output)?;
            }
            d
        }
        _ => return Err(CliError::config("give --data or --synthetic")),
    };
    let mut columns: Vec<String> = if a.columns.is_empty() {
        data.covariate_names.clone()
    } else {
        a.columns.clone()
    };
    let weights = match &a.weights {
        Some(w) => {
            columns.retain(|c| c != w);
            Some(data.column(w).map_err(CliError::config_from)?)
        }
        None => None,
    };
    for c in &columns {
        data.column(c).map_err(CliError::config_from)?;
    }
    match a.model {
        RegressModel::Linear => {
            let fit = ols_fit(
                &data,
                &OlsOptions {
                    intercept: !a.no_intercept,
                    columns: Some(columns),
                    weights,
                },
            )?;
            emit_json(&fit, &a.output)?;
            let coefs = fit
                .names
                .iter()
                .zip(&fit.coefficients)
                .map(|(n, c)| format!("{n}={c:.6}"))
                .collect::<Vec<_>>()
                .join(" ");
            Ok(format!("{coefs} R²={:.4}", fit.r_squared))
        }
        RegressModel::Power => {
            let x = data.column(&columns[0]).map_err(CliError::config_from)?;
            let objective = match a.loss {
                LossArg::LeastSquares => FitObjective::LeastSquares,
                LossArg::Quantile => FitObjective::Quantile { tau: a.tau },
            };
            let fit = power_model_fit(&x, &data.responses, objective)?;
            emit_json(&fit, &a.output)?;
            Ok(format!(
                "θ={} α={} A={} loss={}",
                fit.model.theta, fit.model.alpha, fit.model.a, fit.loss
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<OsString> {
        std::iter::once("opcap").chain(s.split_whitespace()).map(OsString::from).collect()
    }

    #[test]
    fn parses_subcommands() {
        let cli = parse(argv("sma --bi 2000 --lc 260")).unwrap();
        assert!(matches!(cli.command, Command::Sma(SmaArgs { bi, lc: Some(lc), .. }) if bi == 2000.0 && lc == 260.0));
        let cli = parse(argv("calibrate --demo block-study --seed 1 --objective pareto")).unwrap();
        match cli.command {
            Command::Calibrate(c) => assert_eq!(c.objective, Objective::ParetoOptimal),
            _ => panic!(),
        }
    }

    #[test]
    fn unknown_flag_is_config_error() {
        assert_eq!(parse(argv("sma --bogus 1")).unwrap_err().code, EXIT_CONFIG);
    }

    #[test]
    fn config_values_are_overridden_by_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"bi": 500, "lc": 1.0, "gross_income": [1, 2, 3]}"#).unwrap();
        let cli = parse(argv(&format!("sma --config {} --lc 7", p.display()))).unwrap();
        match cli.command {
            Command::Sma(s) => {
                assert_eq!(s.bi, 500.0);
                assert_eq!(s.lc, Some(7.0));
                assert_eq!(s.gross_income, Some(vec![1.0, 2.0, 3.0]));
            }
            _ => panic!(),
        }
        std::fs::write(&p, r#"{"unknown_key": 1}"#).unwrap();
        assert_eq!(parse(argv(&format!("sma --config {} --bi 1", p.display()))).unwrap_err().code, EXIT_CONFIG);
        std::fs::write(&p, "not json").unwrap();
        assert_eq!(parse(argv(&format!("sma --config {} --bi 1", p.display()))).unwrap_err().code, EXIT_CONFIG);
    }

    #[test]
    fn seed_is_required_for_stochastic_commands() {
        let cli = parse(argv("sensitivity --horizon 10")).unwrap();
        assert_eq!(dispatch(&cli.command).unwrap_err().code, EXIT_CONFIG);
    }
}
