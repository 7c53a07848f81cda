//! The six subcommands. Each returns its result table; human-oriented notes
//! (resolved seed, summaries, warnings) go to `notes`.

use std::fs::File;
use std::io::{BufWriter, Write};

use roughvol_core::analytics::{model_volatility_acf, novikov_diagnostic};
use roughvol_core::calibrate::{calibrate, model_js, CalibrationResult, PARAM_NAMES};
use roughvol_core::engine::{pooled_log_returns, simulate, Eta, ModelKind};
use roughvol_core::metrics::{js_distance_samples, silverman_bandwidth};
use roughvol_core::pricing::{greeks, h_sensitivity, price_european, relative_error, OptionSpec};
use roughvol_core::stats::mean_and_stderr;

use crate::config::{Command, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io::{load_market, load_prices};
use crate::output::{Cell, Table};

pub fn execute(command: &Command, rc: &RunConfig, notes: &mut Vec<String>) -> CliResult<Table> {
    notes.push(format!("seed: {}", rc.grid.master_seed));
    match command {
        Command::Simulate(_) => cmd_simulate(rc, notes),
        Command::Calibrate(_) => cmd_calibrate(rc, notes),
        Command::Price(_) => cmd_price(rc, notes),
        Command::Acf(_) => cmd_acf(rc, notes),
        Command::Jsdist(_) => cmd_jsdist(rc, notes),
        Command::Novikov(_) => cmd_novikov(rc, notes),
    }
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.fold(None, |acc, x| match acc {
        None => Some((x, x)),
        Some((lo, hi)) => Some((lo.min(x), hi.max(x))),
    })
}

pub fn cmd_simulate(rc: &RunConfig, notes: &mut Vec<String>) -> CliResult<Table> {
    let ps = simulate(&rc.params, &rc.grid, rc.s0)?;
    let df = (-rc.params.r * rc.grid.horizon_t).exp();
    let discounted: Vec<f64> = ps.paths.iter().map(|p| df * p.terminal()).collect();
    let (m, se) = mean_and_stderr(&discounted);
    notes.push(format!("mean discounted S_T: {m} (std err {se})"));
    if let Some((lo, hi)) = range(ps.paths.iter().flat_map(|p| p.sigma.iter().copied())) {
        notes.push(format!("sigma range: [{lo}, {hi}]"));
    }
    if let Some((lo, hi)) = range(ps.paths.iter().flat_map(|p| p.h.iter().copied())) {
        notes.push(format!("H range: [{lo}, {hi}]"));
    }

    let rough = rc.params.kind != ModelKind::Heston;
    let dt = rc.grid.dt();
    if rc.full_grids {
        let mut t = Table::new(&["path", "step", "t", "s", "sigma", "h"]);
        for (i, p) in ps.paths.iter().enumerate() {
            for n in 0..p.s.len() {
                t.push(vec![
                    i.into(),
                    n.into(),
                    (n as f64 * dt).into(),
                    p.s[n].into(),
                    p.sigma[n].into(),
                    Cell::opt(rough.then(|| p.h[n])),
                ]);
            }
        }
        Ok(t)
    } else {
        let mut t = Table::new(&["path", "s_t", "discounted_s_t", "sigma_t", "h_t"]);
        for (i, p) in ps.paths.iter().enumerate() {
            t.push(vec![
                i.into(),
                p.terminal().into(),
                discounted[i].into(),
                (*p.sigma.last().expect("non-empty path")).into(),
                Cell::opt(p.h.last().copied()),
            ]);
        }
        Ok(t)
    }
}

/// Train and test slices of the return series. With a split `(a, b)` the most
/// recent `a + b` returns are used, the last `b` of them for testing.
pub fn split_returns(returns: &[f64], split: Option<(usize, usize)>) -> CliResult<(&[f64], &[f64])> {
    match split {
        None => Ok((returns, &[])),
        Some((train, test)) => {
            let needed = train + test;
            if returns.len() < needed {
                return Err(CliError::validation(format!(
                    "split {train}/{test} needs {needed} returns ({} price rows), got {} returns",
                    needed + 1,
                    returns.len()
                )));
            }
            let used = &returns[returns.len() - needed..];
            Ok((&used[..train], &used[train..]))
        }
    }
}

pub fn cmd_calibrate(rc: &RunConfig, notes: &mut Vec<String>) -> CliResult<Table> {
    let path = rc
        .prices
        .as_ref()
        .ok_or_else(|| CliError::validation("calibrate needs --prices"))?;
    let series = load_prices(path)?;
    let (train, test) = split_returns(&series.log_returns, rc.split)?;
    let dropped = series.log_returns.len() - train.len() - test.len();
    if dropped > 0 {
        notes.push(format!("split uses the last {} returns; {dropped} earlier returns unused", train.len() + test.len()));
    }
    let spec = &rc.calibration;
    notes.push(format!("cal_seed: {}", spec.cal_seed));
    let res = calibrate(spec, train)?;
    let js_test = if test.is_empty() {
        None
    } else {
        model_js(&res.theta_star, spec, test)?
    };
    notes.push(format!(
        "calibration {} after {} iterations ({})",
        if res.converged { "converged" } else { "stopped" },
        res.iterations,
        res.reason
    ));
    if let Some(path) = &rc.trace {
        write_trace(path, &res)?;
    }

    let mut t = Table::new(&[
        "model",
        "v0",
        "nu",
        "alpha",
        "beta",
        "js_train",
        "js_test",
        "objective",
        "n_train",
        "n_test",
        "converged",
        "reason",
        "iterations",
        "evaluations",
        "cal_seed",
    ]);
    let th = res.theta_star;
    t.push(vec![
        spec.base.kind.name().into(),
        th[0].into(),
        th[1].into(),
        th[2].into(),
        th[3].into(),
        res.js_at_optimum.into(),
        Cell::opt(js_test),
        res.objective_at_optimum.into(),
        train.len().into(),
        test.len().into(),
        res.converged.into(),
        res.reason.clone().into(),
        res.iterations.into(),
        res.objective_trace.len().into(),
        res.cal_seed.into(),
    ]);
    Ok(t)
}

fn write_trace(path: &std::path::Path, res: &CalibrationResult) -> CliResult<()> {
    let file = File::create(path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
    let mut cols = vec!["evaluation"];
    cols.extend(PARAM_NAMES);
    cols.extend(["js", "objective"]);
    let mut t = Table::new(&cols);
    for (i, e) in res.objective_trace.iter().enumerate() {
        let mut row: Vec<Cell> = vec![i.into()];
        row.extend(e.theta.iter().map(|&x| Cell::Num(x)));
        row.push(e.js.into());
        row.push(e.objective.into());
        t.push(row);
    }
    let mut w = BufWriter::new(file);
    t.write(crate::output::Format::Csv, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn cmd_price(rc: &RunConfig, notes: &mut Vec<String>) -> CliResult<Table> {
    if rc.strikes.is_empty() {
        return Err(CliError::validation("price needs at least one strike (--strikes)"));
    }
    let quotes = match &rc.market {
        Some(p) => load_market(p)?,
        None => Vec::new(),
    };
    for q in &quotes {
        if !rc.strikes.contains(&q.strike) {
            notes.push(format!("market quote for strike {} not requested; ignored", q.strike));
        }
    }
    let maturity = rc.grid.horizon_t;
    let mut t = Table::new(&[
        "strike",
        "price",
        "ci_lo",
        "ci_hi",
        "std_err",
        "delta",
        "vega",
        "dc_dh",
        "market_price",
        "relative_error_pct",
        "expiry",
    ]);
    for &k in &rc.strikes {
        let opt = OptionSpec {
            strike: k,
            maturity,
            kind: rc.option,
            s0: rc.s0,
        };
        let res = price_european(&rc.params, &rc.grid, &opt)?;
        let vega = if rc.greeks {
            let g = greeks(&rc.params, &rc.grid, &opt)?;
            if g.vega_one_sided {
                notes.push(format!("strike {k}: vega from a one-sided difference"));
            }
            Some(g.vega)
        } else {
            None
        };
        let dc_dh = match rc.h_bump {
            Some(bump) => {
                let s = h_sensitivity(&rc.params, &rc.grid, &opt, &Eta::Constant(rc.eta), bump)?;
                if s.clipped_up_fraction > 0.0 || s.clipped_down_fraction > 0.0 {
                    notes.push(format!(
                        "strike {k}: Hurst bump clipped on {:.1}% (up) / {:.1}% (down) of grid points",
                        100.0 * s.clipped_up_fraction,
                        100.0 * s.clipped_down_fraction
                    ));
                }
                Some(s.estimate)
            }
            None => None,
        };
        let quote = quotes.iter().find(|q| q.strike == k);
        let rel = quote
            .map(|q| relative_error(res.price, q.market_price))
            .transpose()?;
        t.push(vec![
            k.into(),
            res.price.into(),
            res.ci95.0.into(),
            res.ci95.1.into(),
            res.std_err.into(),
            res.delta.into(),
            Cell::opt(vega),
            Cell::opt(dc_dh),
            Cell::opt(quote.map(|q| q.market_price)),
            Cell::opt(rel),
            quote.map_or(Cell::Empty, |q| q.expiry.format("%Y-%m-%d").to_string().into()),
        ]);
    }
    Ok(t)
}

pub fn cmd_acf(rc: &RunConfig, notes: &mut Vec<String>) -> CliResult<Table> {
    let empirical = match &rc.prices {
        Some(p) => Some(load_prices(p)?.realized_vol()),
        None => None,
    };
    let ps = simulate(&rc.params, &rc.grid, rc.s0)?;
    let report = model_volatility_acf(&ps, &rc.lags, rc.window, empirical.as_deref())?;
    let mut t = Table::new(&["lag", "window_start", "source", "correlation"]);
    for lag in &report.lags {
        let mut emit = |source: &str, values: &[Option<f64>]| {
            for (w, c) in values.iter().enumerate() {
                t.push(vec![lag.lag.into(), w.into(), source.into(), Cell::opt(*c)]);
            }
        };
        emit("model_mean", &lag.model_mean);
        emit("model_sd", &lag.model_sd);
        if let Some(e) = &lag.empirical {
            emit("empirical", e);
        }
        let fmt = |x: Option<f64>| x.map_or("undefined".to_string(), |v| format!("{v:.4}"));
        notes.push(format!(
            "lag {}: model {} empirical {}",
            lag.lag,
            fmt(lag.model_average()),
            fmt(lag.empirical_average())
        ));
    }
    Ok(t)
}

pub fn cmd_jsdist(rc: &RunConfig, notes: &mut Vec<String>) -> CliResult<Table> {
    let path = rc
        .prices
        .as_ref()
        .ok_or_else(|| CliError::validation("jsdist needs --prices"))?;
    let a = load_prices(path)?.log_returns;
    let (b, source) = match &rc.other_prices {
        Some(p) => (load_prices(p)?.log_returns, p.display().to_string()),
        None => (
            pooled_log_returns(&rc.params, &rc.grid, rc.s0)?,
            rc.params.kind.name().to_string(),
        ),
    };
    let js = js_distance_samples(&a, &b)?;
    notes.push(format!("JS distance: {js}"));
    let mut t = Table::new(&["js", "n_a", "n_b", "bandwidth_a", "bandwidth_b", "source_b"]);
    t.push(vec![
        js.into(),
        a.len().into(),
        b.len().into(),
        silverman_bandwidth(&a)?.into(),
        silverman_bandwidth(&b)?.into(),
        source.into(),
    ]);
    Ok(t)
}

pub fn cmd_novikov(rc: &RunConfig, notes: &mut Vec<String>) -> CliResult<Table> {
    let ps = simulate(&rc.params, &rc.grid, rc.s0)?;
    let rep = novikov_diagnostic(&ps);
    if rep.heavy_tail_warning {
        notes.push(format!(
            "warning: {:.2}% of paths exceed the safe exponent; the moment estimate is unreliable",
            100.0 * rep.fraction_overflowed
        ));
    }
    let mut t = Table::new(&[
        "log_mean",
        "mean_estimate",
        "max_exponent",
        "fraction_overflowed",
        "heavy_tail_warning",
        "n_paths",
    ]);
    t.push(vec![
        rep.log_mean.into(),
        Cell::opt(rep.mean_estimate),
        rep.max_exponent.into(),
        rep.fraction_overflowed.into(),
        rep.heavy_tail_warning.into(),
        ps.paths.len().into(),
    ]);
    Ok(t)
}
