//! Empirical price series preparation, rolling-window volatility correlations
//! and the Novikov integrability diagnostic.

use serde::{Deserialize, Serialize};

use crate::engine::PathSet;
use crate::stats::mean;
use crate::{Result, RoughVolError, TRADING_DAYS};

/// Returns per realised-variance window.
pub const REALIZED_WINDOW: usize = 20;

/// Default rolling-correlation lags, in observations.
pub const DEFAULT_LAGS: [usize; 5] = [1, 5, 10, 20, 40];

pub const DEFAULT_WINDOW: usize = 120;

/// Exponents above `ln(f64::MAX)` cannot be exponentiated in double precision.
pub const SAFE_EXPONENT: f64 = 709.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSeries {
    pub dates: Vec<String>,
    pub close: Vec<f64>,
    pub log_returns: Vec<f64>,
    /// Annualised 20-return rolling mean of squared log returns;
    /// `realized_var[i]` covers returns `i..i + 20`.
    pub realized_var: Vec<f64>,
}

impl EmpiricalSeries {
    /// Builds the series from closes already in date order.
    pub fn from_prices(dates: Vec<String>, close: Vec<f64>) -> Result<Self> {
        if dates.len() != close.len() {
            return Err(RoughVolError::domain(format!(
                "{} dates for {} prices",
                dates.len(),
                close.len()
            )));
        }
        if close.len() < 2 {
            return Err(RoughVolError::InsufficientData {
                needed: 2,
                got: close.len(),
            });
        }
        if let Some(i) = close.iter().position(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(RoughVolError::domain(format!(
                "non-positive close {} on {}",
                close[i], dates[i]
            )));
        }
        let log_returns: Vec<f64> = close.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
        let realized_var = realized_variance(&log_returns);
        Ok(Self {
            dates,
            close,
            log_returns,
            realized_var,
        })
    }

    /// Square root of the realised variance, the empirical volatility proxy.
    pub fn realized_vol(&self) -> Vec<f64> {
        self.realized_var.iter().map(|v| v.sqrt()).collect()
    }
}

pub fn realized_variance(log_returns: &[f64]) -> Vec<f64> {
    log_returns
        .windows(REALIZED_WINDOW)
        .map(|w| w.iter().map(|r| r * r).sum::<f64>() / REALIZED_WINDOW as f64 * TRADING_DAYS)
        .collect()
}

/// Pearson correlation of `(x_t, x_{t+lag})` over each window of
/// `window_len` consecutive `t`, using separate means and variances for the two
/// legs. Windows where either leg has no variance yield `None`.
pub fn rolling_corr(series: &[f64], lag: usize, window_len: usize) -> Result<Vec<Option<f64>>> {
    if lag == 0 {
        return Err(RoughVolError::domain("lag must be positive"));
    }
    if window_len < 3 {
        return Err(RoughVolError::domain(format!(
            "window length must be at least 3, got {window_len}"
        )));
    }
    if series.len() < window_len + lag {
        return Err(RoughVolError::InsufficientData {
            needed: window_len + lag,
            got: series.len(),
        });
    }
    let n_windows = series.len() - window_len - lag + 1;
    Ok((0..n_windows)
        .map(|t0| pearson(&series[t0..t0 + window_len], &series[t0 + lag..t0 + lag + window_len]))
        .collect())
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let n = x.len() as f64;
    let flat = |ss: f64, m: f64| {
        let sd = (ss / n).sqrt();
        !(sd > 1e-13 * m.abs())
    };
    if flat(sxx, mx) || flat(syy, my) {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagCorrelations {
    pub lag: usize,
    /// Cross-path mean of the model correlation per window start.
    pub model_mean: Vec<Option<f64>>,
    /// Cross-path standard deviation per window start.
    pub model_sd: Vec<Option<f64>>,
    pub empirical: Option<Vec<Option<f64>>>,
}

impl LagCorrelations {
    /// Average over windows of the cross-path mean, ignoring undefined windows.
    pub fn model_average(&self) -> Option<f64> {
        defined_mean(&self.model_mean)
    }

    pub fn empirical_average(&self) -> Option<f64> {
        self.empirical.as_deref().and_then(defined_mean)
    }
}

fn defined_mean(xs: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = xs.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| mean(&defined))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfReport {
    pub window_len: usize,
    pub lags: Vec<LagCorrelations>,
}

/// Rolling correlations of each path's `sigma`, aggregated across paths, with
/// the empirical volatility proxy alongside when supplied.
pub fn model_volatility_acf(
    paths: &PathSet,
    lags: &[usize],
    window_len: usize,
    empirical_vol: Option<&[f64]>,
) -> Result<AcfReport> {
    if paths.paths.is_empty() {
        return Err(RoughVolError::InsufficientData { needed: 1, got: 0 });
    }
    let mut out = Vec::with_capacity(lags.len());
    for &lag in lags {
        let per_path = paths
            .paths
            .iter()
            .map(|p| rolling_corr(&p.sigma, lag, window_len))
            .collect::<Result<Vec<_>>>()?;
        let n_windows = per_path[0].len();
        let mut model_mean = Vec::with_capacity(n_windows);
        let mut model_sd = Vec::with_capacity(n_windows);
        for w in 0..n_windows {
            let vals: Vec<f64> = per_path.iter().filter_map(|c| c[w]).collect();
            if vals.is_empty() {
                model_mean.push(None);
                model_sd.push(None);
                continue;
            }
            let m = mean(&vals);
            model_mean.push(Some(m));
            model_sd.push(if vals.len() > 1 {
                Some((vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() - 1) as f64).sqrt())
            } else {
                None
            });
        }
        let empirical = empirical_vol
            .map(|e| rolling_corr(e, lag, window_len))
            .transpose()?;
        out.push(LagCorrelations {
            lag,
            model_mean,
            model_sd,
            empirical,
        });
    }
    Ok(AcfReport {
        window_len,
        lags: out,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NovikovReport {
    /// `ln` of the sample mean of `exp(e_i)`; always finite.
    pub log_mean: f64,
    /// The sample mean itself, `None` when it overflows a double.
    pub mean_estimate: Option<f64>,
    pub max_exponent: f64,
    pub fraction_overflowed: f64,
    pub heavy_tail_warning: bool,
}

/// Sample estimate of `E[exp(0.5 * int_0^T sigma_t^2 dt)]` with
/// `e_i = 0.5 * sum_{n<N} sigma_n^2 dt` per path, averaged via log-sum-exp.
pub fn novikov_diagnostic(paths: &PathSet) -> NovikovReport {
    let dt = paths.dt();
    let exponents: Vec<f64> = paths
        .paths
        .iter()
        .map(|p| {
            let n = p.sigma.len().saturating_sub(1);
            0.5 * p.sigma[..n].iter().map(|s| s * s).sum::<f64>() * dt
        })
        .collect();
    if exponents.is_empty() {
        return NovikovReport {
            log_mean: f64::NAN,
            mean_estimate: None,
            max_exponent: f64::NAN,
            fraction_overflowed: 0.0,
            heavy_tail_warning: false,
        };
    }
    let max_exponent = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum_scaled: f64 = exponents.iter().map(|e| (e - max_exponent).exp()).sum();
    let log_mean = max_exponent + sum_scaled.ln() - (exponents.len() as f64).ln();
    let mean_estimate = if log_mean <= SAFE_EXPONENT {
        // not below 1: every exponent is non-negative
        Some(log_mean.exp().max(1.0))
    } else {
        None
    };
    let overflowed = exponents.iter().filter(|&&e| e > SAFE_EXPONENT).count();
    let fraction_overflowed = overflowed as f64 / exponents.len() as f64;
    if overflowed > 0 {
        log::warn!(
            "Novikov diagnostic: {overflowed} of {} paths have exponents above {SAFE_EXPONENT}",
            exponents.len()
        );
    }
    NovikovReport {
        log_mean,
        mean_estimate,
        max_exponent,
        fraction_overflowed,
        heavy_tail_warning: overflowed > 0,
    }
}
