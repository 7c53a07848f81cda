//! Flags, the `key = value` config file, and their resolution into a
//! [`RunConfig`].
//!
//! Every config key is the long flag name with `_` or `-` separators. The file
//! is spliced into the argument list ahead of the command-line flags, and
//! later occurrences of a flag win, so explicit flags override the file.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use roughvol_core::analytics::{DEFAULT_LAGS, DEFAULT_WINDOW};
use roughvol_core::calibrate::CalibrationSpec;
use roughvol_core::engine::{HestonParams, ModelKind, ModelParams, SimGrid};
use roughvol_core::hurst::HurstParams;
use roughvol_core::kernel::KernelParams;
use roughvol_core::pricing::OptionKind;
use roughvol_core::TRADING_DAYS;

use crate::error::{CliError, CliResult};
use crate::output::Format;

pub const DEFAULT_SEED: u64 = 20_250_831;

#[derive(Debug, Parser)]
#[command(
    name = "roughvol",
    version,
    about = "Rough Bergomi simulation, calibration and pricing with an EWMA-driven Hurst exponent"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Simulate paths and write terminal values or full grids
    Simulate(Settings),
    /// Calibrate (v0, nu, alpha, beta) to a price history
    Calibrate(Settings),
    /// Price European options, optionally against market quotes
    Price(Settings),
    /// Rolling volatility autocorrelations, model and empirical
    Acf(Settings),
    /// Jensen-Shannon distance between two return samples
    Jsdist(Settings),
    /// Monte Carlo check of the Novikov exponential moment
    Novikov(Settings),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Calibrate(_) => "calibrate",
            Command::Price(_) => "price",
            Command::Acf(_) => "acf",
            Command::Jsdist(_) => "jsdist",
            Command::Novikov(_) => "novikov",
        }
    }

    pub fn settings(&self) -> &Settings {
        match self {
            Command::Simulate(s)
            | Command::Calibrate(s)
            | Command::Price(s)
            | Command::Acf(s)
            | Command::Jsdist(s)
            | Command::Novikov(s) => s,
        }
    }
}

/// Flags shared by every subcommand; unset values fall back to the config
/// file, then to per-command defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Settings {
    /// Flat `key = value` file; flags override its entries
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Master seed [default: 20250831]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo paths
    #[arg(long)]
    pub paths: Option<usize>,
    /// Time steps per path [default: 252]
    #[arg(long)]
    pub steps: Option<usize>,
    /// Horizon in years; also the option maturity [default: 1]
    #[arg(long)]
    pub horizon: Option<f64>,
    /// ewma_rbergomi | const_rbergomi | heston
    #[arg(long)]
    pub model: Option<String>,
    /// Spot/volatility correlation [default: -0.7]
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    /// Risk-free rate [default: 0.05]
    #[arg(long, allow_hyphen_values = true)]
    pub rate: Option<f64>,
    /// Initial spot [default: 100]
    #[arg(long)]
    pub s0: Option<f64>,

    /// Initial variance [default: 0.04]
    #[arg(long)]
    pub v0: Option<f64>,
    /// Vol-of-vol [default: 1]
    #[arg(long, allow_hyphen_values = true)]
    pub nu: Option<f64>,
    /// Scale of the Hurst power map; 0 freezes H at beta
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Hurst intercept; the constant Hurst value for const_rbergomi
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    /// Exponent of the Hurst power map
    #[arg(long)]
    pub gamma: Option<f64>,
    /// EWMA decay rate per year
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Reference variance of the Hurst map [default: v0]
    #[arg(long)]
    pub theta_ref: Option<f64>,
    /// Initial Hurst value [default: clip(alpha + beta)]
    #[arg(long)]
    pub h0: Option<f64>,
    /// Lower Hurst clip [default: 0.05]
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Upper Hurst clip [default: 0.5]
    #[arg(long)]
    pub h_max: Option<f64>,

    /// Heston mean-reversion speed
    #[arg(long)]
    pub heston_kappa: Option<f64>,
    /// Heston long-run variance
    #[arg(long)]
    pub heston_theta: Option<f64>,
    /// Heston vol-of-variance
    #[arg(long)]
    pub heston_xi: Option<f64>,
    /// Heston initial variance
    #[arg(long)]
    pub heston_v0: Option<f64>,

    /// Price history CSV (`date,close`)
    #[arg(long, value_name = "FILE")]
    pub prices: Option<PathBuf>,
    /// Second price history for `jsdist`; without it the model is the other side
    #[arg(long, value_name = "FILE")]
    pub other_prices: Option<PathBuf>,
    /// Market quotes CSV (`strike,market_price,expiry`)
    #[arg(long, value_name = "FILE")]
    pub market: Option<PathBuf>,
    /// Comma-separated strikes
    #[arg(long, value_delimiter = ',')]
    pub strikes: Option<Vec<f64>>,
    /// call | put
    #[arg(long)]
    pub option: Option<String>,
    /// Also estimate vega in nu
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub greeks: Option<bool>,
    /// Hurst bump for dC/dH (off unless set)
    #[arg(long)]
    pub h_bump: Option<f64>,
    /// Constant perturbation direction for dC/dH [default: 1]
    #[arg(long, allow_hyphen_values = true)]
    pub eta: Option<f64>,

    /// Train and test return counts, e.g. `--split 752 165`
    #[arg(long, num_args = 2, value_names = ["TRAIN", "TEST"])]
    pub split: Option<Vec<usize>>,
    /// Comma-separated ACF lags [default: 1,5,10,20,40]
    #[arg(long, value_delimiter = ',')]
    pub lags: Option<Vec<usize>>,
    /// Rolling ACF window length [default: 120]
    #[arg(long)]
    pub window: Option<usize>,

    /// Calibration paths [default: 5000]
    #[arg(long)]
    pub cal_paths: Option<usize>,
    /// Calibration steps of one trading day [default: 252]
    #[arg(long)]
    pub cal_steps: Option<usize>,
    /// Calibration seed [default: the master seed]
    #[arg(long)]
    pub cal_seed: Option<u64>,
    /// Optimizer iteration cap [default: 100]
    #[arg(long)]
    pub cal_max_iter: Option<usize>,
    /// Penalty weight on the distance from the initial guess [default: 0.01]
    #[arg(long)]
    pub penalty: Option<f64>,
    /// Write the objective trace to this CSV
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,

    /// Write every grid point (s, sigma, h) instead of terminal values
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub full_grids: Option<bool>,
    /// Write the table here instead of stdout
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// table | csv | jsonl [default: table]
    #[arg(long)]
    pub format: Option<Format>,
}

/// Parses the command line, splicing in the config file when one is named.
pub fn parse_args(args: Vec<OsString>) -> Result<Cli, ParseFailure> {
    let command = Cli::command().mut_subcommands(|s| s.args_override_self(true));
    let args = splice_config(&command, args).map_err(ParseFailure::Config)?;
    let matches = command.try_get_matches_from(args).map_err(ParseFailure::Clap)?;
    Cli::from_arg_matches(&matches).map_err(ParseFailure::Clap)
}

#[derive(Debug)]
pub enum ParseFailure {
    Clap(clap::Error),
    Config(CliError),
}

fn config_path(rest: &[OsString]) -> Option<PathBuf> {
    let mut iter = rest.iter();
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            return iter.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn splice_config(command: &clap::Command, args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    if args.len() < 2 {
        return Ok(args);
    }
    let sub_name = args[1].to_string_lossy().to_string();
    let Some(sub) = command.find_subcommand(&sub_name) else {
        return Ok(args);
    };
    let Some(path) = config_path(&args[2..]) else {
        return Ok(args);
    };
    let known: Vec<String> = sub
        .get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect();
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    let tokens = config_tokens(&text, &path, &known)?;
    let mut out = args[..2].to_vec();
    out.extend(tokens);
    out.extend_from_slice(&args[2..]);
    Ok(out)
}

/// Turns config lines into flag tokens. Values with whitespace become
/// several arguments (`split = 752 165`).
pub fn config_tokens(text: &str, path: &Path, known: &[String]) -> CliResult<Vec<OsString>> {
    let mut tokens = Vec::new();
    let mut seen: Vec<(String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| CliError::validation(format!("{}:{line_no}: {msg}", path.display()));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected 'key = value', got '{line}'")))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key == "config" || !known.contains(&key) {
            return Err(bad(format!("unknown key '{}'", key.replace('-', "_"))));
        }
        if value.is_empty() {
            return Err(bad(format!("missing value for '{key}'")));
        }
        if let Some((_, first)) = seen.iter().find(|(k, _)| *k == key) {
            return Err(bad(format!("'{key}' already set on line {first}")));
        }
        seen.push((key.clone(), line_no));
        let parts: Vec<&str> = value.split_whitespace().collect();
        if parts.len() == 1 {
            tokens.push(OsString::from(format!("--{key}={value}")));
        } else {
            tokens.push(OsString::from(format!("--{key}")));
            tokens.extend(parts.into_iter().map(OsString::from));
        }
    }
    Ok(tokens)
}

/// Fully resolved inputs of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: ModelParams,
    pub grid: SimGrid,
    pub s0: f64,
    pub prices: Option<PathBuf>,
    pub other_prices: Option<PathBuf>,
    pub market: Option<PathBuf>,
    pub strikes: Vec<f64>,
    pub option: OptionKind,
    pub greeks: bool,
    pub h_bump: Option<f64>,
    pub eta: f64,
    pub split: Option<(usize, usize)>,
    pub lags: Vec<usize>,
    pub window: usize,
    pub calibration: CalibrationSpec,
    pub trace: Option<PathBuf>,
    pub full_grids: bool,
    pub out: Option<PathBuf>,
    pub format: Format,
}

/// Path count when `--paths` is absent.
fn default_paths(command: &str) -> usize {
    match command {
        "acf" => 100,
        "novikov" | "jsdist" => 5000,
        _ => 1000,
    }
}

impl RunConfig {
    pub fn resolve(command: &str, s: &Settings) -> CliResult<Self> {
        let kind: ModelKind = match &s.model {
            Some(m) => m.parse()?,
            None => ModelKind::EwmaRbergomi,
        };
        let kernel = KernelParams::new(s.epsilon.unwrap_or(0.05), s.h_max.unwrap_or(0.5))?;
        let defaults = HurstParams::default();
        let mut hurst = HurstParams {
            alpha: s.alpha.unwrap_or(defaults.alpha),
            beta: s.beta.unwrap_or(defaults.beta),
            gamma_exp: s.gamma.unwrap_or(defaults.gamma_exp),
            lambda_decay: s.lambda.unwrap_or(defaults.lambda_decay),
            theta_ref: s.theta_ref,
            h0: s.h0,
        };
        if kind == ModelKind::ConstRbergomi {
            if s.alpha.is_some_and(|a| a != 0.0) {
                return Err(CliError::validation(
                    "const_rbergomi takes its Hurst value from beta; alpha must be 0",
                ));
            }
            hurst.alpha = 0.0;
        }
        let heston = heston_params(s, kind)?;
        let v0 = match (kind, &heston) {
            (ModelKind::Heston, Some(h)) => h.v0,
            _ => s.v0.unwrap_or(0.04),
        };
        let params = ModelParams {
            v0,
            nu: s.nu.unwrap_or(1.0),
            rho: s.rho.unwrap_or(-0.7),
            r: s.rate.unwrap_or(0.05),
            hurst,
            kernel,
            kind,
            heston,
        };
        params.validate()?;

        let seed = s.seed.unwrap_or(DEFAULT_SEED);
        let grid = SimGrid::new(
            s.horizon.unwrap_or(1.0),
            s.steps.unwrap_or(252),
            s.paths.unwrap_or_else(|| default_paths(command)),
            seed,
        );
        grid.validate()?;
        let s0 = s.s0.unwrap_or(100.0);
        if !(s0 > 0.0 && s0.is_finite()) {
            return Err(CliError::validation(format!("s0 must be positive, got {s0}")));
        }

        let option = match s.option.as_deref().unwrap_or("call") {
            "call" => OptionKind::Call,
            "put" => OptionKind::Put,
            other => return Err(CliError::validation(format!("unknown option kind '{other}'"))),
        };
        let strikes = s.strikes.clone().unwrap_or_default();
        if strikes.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(CliError::validation("strikes must be positive"));
        }
        if let Some(b) = s.h_bump {
            if !(b > 0.0 && b.is_finite()) {
                return Err(CliError::validation(format!("h_bump must be positive, got {b}")));
            }
        }
        let split = match s.split.as_deref() {
            None => None,
            Some([train, test]) => {
                if *train == 0 || *test == 0 {
                    return Err(CliError::validation("split counts must be positive"));
                }
                Some((*train, *test))
            }
            Some(other) => {
                return Err(CliError::validation(format!(
                    "split takes two counts, got {}",
                    other.len()
                )))
            }
        };
        let lags = s.lags.clone().unwrap_or_else(|| DEFAULT_LAGS.to_vec());
        if lags.is_empty() || lags.contains(&0) {
            return Err(CliError::validation("lags must be positive"));
        }
        let window = s.window.unwrap_or(DEFAULT_WINDOW);

        let calibration = calibration_spec(s, &params, seed);

        for path in [&s.prices, &s.other_prices, &s.market].into_iter().flatten() {
            if !path.is_file() {
                return Err(CliError::Io(format!("input file {} not found", path.display())));
            }
        }

        Ok(Self {
            params,
            grid,
            s0,
            prices: s.prices.clone(),
            other_prices: s.other_prices.clone(),
            market: s.market.clone(),
            strikes,
            option,
            greeks: s.greeks.unwrap_or(false),
            h_bump: s.h_bump,
            eta: s.eta.unwrap_or(1.0),
            split,
            lags,
            window,
            calibration,
            trace: s.trace.clone(),
            full_grids: s.full_grids.unwrap_or(false),
            out: s.out.clone(),
            format: s.format.unwrap_or(Format::Table),
        })
    }
}

fn heston_params(s: &Settings, kind: ModelKind) -> CliResult<Option<HestonParams>> {
    let fields = [s.heston_kappa, s.heston_theta, s.heston_xi, s.heston_v0];
    match (kind, fields) {
        (ModelKind::Heston, [Some(kappa), Some(theta_bar), Some(xi), Some(v0)]) => Ok(Some(HestonParams {
            kappa,
            theta_bar,
            xi,
            v0,
        })),
        (ModelKind::Heston, _) => Err(CliError::validation(
            "heston model requires heston_kappa, heston_theta, heston_xi and heston_v0",
        )),
        _ => Ok(None),
    }
}

fn calibration_spec(s: &Settings, params: &ModelParams, seed: u64) -> CalibrationSpec {
    let theta0 = [params.v0, params.nu, params.hurst.alpha, params.hurst.beta];
    let mut spec = match params.kind {
        ModelKind::ConstRbergomi => {
            CalibrationSpec::const_hurst(params.clone(), params.v0, params.nu, params.hurst.beta)
        }
        _ => CalibrationSpec::ewma(params.clone(), theta0),
    };
    spec.sim_paths = s.cal_paths.unwrap_or(spec.sim_paths);
    spec.sim_steps = s.cal_steps.unwrap_or(spec.sim_steps);
    spec.step_years = 1.0 / TRADING_DAYS;
    spec.cal_seed = s.cal_seed.unwrap_or(seed);
    if let Some(n) = s.cal_max_iter {
        spec.optim.max_iter = n;
    }
    if let Some(w) = s.penalty {
        spec.penalty_weight = w;
    }
    spec
}
