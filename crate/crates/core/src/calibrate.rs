//! Calibration of `(V0, nu, alpha, beta)` by minimising the Jensen-Shannon
//! distance between empirical and simulated one-step log returns, plus a
//! quadratic penalty on the distance from the initial guess.
//!
//! Every objective evaluation reuses the same simulation seed, so the
//! objective is a deterministic (and smooth) function of the parameters and
//! finite-difference gradients are meaningful.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::engine::{pooled_log_returns, ModelKind, ModelParams, SimGrid};
use crate::metrics::{js_distance_prepared, PreparedSample};
use crate::optim::{minimize_bounded, OptimOptions};
use crate::{Result, RoughVolError, TRADING_DAYS};

pub const PARAM_NAMES: [&str; 4] = ["v0", "nu", "alpha", "beta"];

/// Objective value returned when the simulation overflows.
pub const OVERFLOW_SENTINEL: f64 = 1e6;

pub const DEFAULT_PENALTY: f64 = 0.01;

pub const DEFAULT_BOUNDS: [(f64, f64); 4] = [(1e-4, 1.0), (0.1, 5.0), (-0.5, 0.5), (0.01, 0.5)];

pub const MIN_EMPIRICAL_RETURNS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSpec {
    /// Supplies every parameter that is not calibrated (rho, r, gamma, lambda,
    /// kernel bounds, model kind).
    pub base: ModelParams,
    /// Initial guess `(v0, nu, alpha, beta)`; also the penalty anchor.
    pub theta0: [f64; 4],
    pub bounds: [(f64, f64); 4],
    /// Coordinates the optimiser may move; the rest stay at `theta0`.
    pub free: [bool; 4],
    pub penalty_weight: f64,
    pub sim_paths: usize,
    pub sim_steps: usize,
    /// Simulation step in years, matching the sampling interval of the data.
    pub step_years: f64,
    pub cal_seed: u64,
    pub optim: OptimOptions,
}

impl CalibrationSpec {
    /// Default protocol for the EWMA model: all four parameters free,
    /// 5000 paths of 252 daily steps.
    pub fn ewma(base: ModelParams, theta0: [f64; 4]) -> Self {
        Self {
            base: ModelParams {
                kind: ModelKind::EwmaRbergomi,
                ..base
            },
            theta0,
            bounds: DEFAULT_BOUNDS,
            free: [true; 4],
            penalty_weight: DEFAULT_PENALTY,
            sim_paths: 5000,
            sim_steps: 252,
            step_years: 1.0 / TRADING_DAYS,
            cal_seed: 20_250_831,
            optim: OptimOptions::default(),
        }
    }

    /// Constant-Hurst rBergomi: alpha pinned at zero, `beta` is the Hurst exponent.
    pub fn const_hurst(base: ModelParams, v0: f64, nu: f64, h: f64) -> Self {
        let mut spec = Self::ewma(base, [v0, nu, 0.0, h]);
        spec.base.kind = ModelKind::ConstRbergomi;
        spec.base.hurst.alpha = 0.0;
        spec.free = [true, true, false, true];
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.base.kind == ModelKind::Heston {
            return Err(RoughVolError::invalid(
                "calibration fits (v0, nu, alpha, beta) of the rough Bergomi variants only",
            ));
        }
        if self.base.kind == ModelKind::ConstRbergomi && (self.free[2] || self.theta0[2] != 0.0) {
            return Err(RoughVolError::invalid("const_rbergomi calibration keeps alpha at 0"));
        }
        if !self.free.iter().any(|&f| f) {
            return Err(RoughVolError::invalid("no free parameters"));
        }
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo <= hi) {
                return Err(RoughVolError::invalid(format!(
                    "empty bounds for {}: [{lo}, {hi}]",
                    PARAM_NAMES[i]
                )));
            }
            if self.free[i] && !(lo < hi) {
                return Err(RoughVolError::invalid(format!(
                    "free parameter {} needs lower < upper",
                    PARAM_NAMES[i]
                )));
            }
        }
        self.check_bounds(&self.theta0)?;
        if !(self.penalty_weight >= 0.0) {
            return Err(RoughVolError::invalid("penalty weight must be non-negative"));
        }
        if self.sim_paths == 0 || self.sim_steps == 0 || !(self.step_years > 0.0) {
            return Err(RoughVolError::invalid("simulation size must be positive"));
        }
        self.params_at(&self.theta0).validate()
    }

    fn check_bounds(&self, theta: &[f64; 4]) -> Result<()> {
        for (i, (&x, &(lo, hi))) in theta.iter().zip(&self.bounds).enumerate() {
            if !(x >= lo && x <= hi) {
                return Err(RoughVolError::domain(format!(
                    "{} = {x} outside [{lo}, {hi}]",
                    PARAM_NAMES[i]
                )));
            }
        }
        Ok(())
    }

    /// Model parameters at `theta`.
    pub fn params_at(&self, theta: &[f64; 4]) -> ModelParams {
        let mut p = self.base.clone();
        p.v0 = theta[0];
        p.nu = theta[1];
        p.hurst.alpha = theta[2];
        p.hurst.beta = theta[3];
        p
    }

    pub fn sim_grid(&self) -> SimGrid {
        SimGrid::new(
            self.sim_steps as f64 * self.step_years,
            self.sim_steps,
            self.sim_paths,
            self.cal_seed,
        )
    }

    fn penalty(&self, theta: &[f64; 4]) -> f64 {
        self.penalty_weight
            * theta
                .iter()
                .zip(&self.theta0)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub theta: [f64; 4],
    pub js: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub theta_star: [f64; 4],
    pub js_at_optimum: f64,
    pub objective_at_optimum: f64,
    pub objective_trace: Vec<TraceEntry>,
    pub converged: bool,
    pub reason: String,
    pub iterations: usize,
    pub cal_seed: u64,
}

impl CalibrationResult {
    pub fn params(&self, spec: &CalibrationSpec) -> ModelParams {
        spec.params_at(&self.theta_star)
    }
}

/// JS distance of the model at `theta` to `empirical_returns`, without the
/// penalty. Simulation overflow yields `Ok(None)`.
pub fn model_js(theta: &[f64; 4], spec: &CalibrationSpec, empirical_returns: &[f64]) -> Result<Option<f64>> {
    model_js_prepared(theta, spec, &PreparedSample::new(empirical_returns)?)
}

fn model_js_prepared(theta: &[f64; 4], spec: &CalibrationSpec, empirical: &PreparedSample) -> Result<Option<f64>> {
    let params = spec.params_at(theta);
    match pooled_log_returns(&params, &spec.sim_grid(), 1.0) {
        Ok(model) => js_distance_prepared(empirical, &PreparedSample::new(&model)?).map(Some),
        Err(RoughVolError::NumericalOverflow { path, step, .. }) => {
            log::warn!("simulation overflow at theta = {theta:?} (path {path}, step {step})");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn evaluate(theta: &[f64; 4], spec: &CalibrationSpec, empirical: &PreparedSample) -> Result<TraceEntry> {
    spec.check_bounds(theta)?;
    Ok(match model_js_prepared(theta, spec, empirical)? {
        Some(js) => TraceEntry {
            theta: *theta,
            js,
            objective: js + spec.penalty(theta),
        },
        None => TraceEntry {
            theta: *theta,
            js: f64::NAN,
            objective: OVERFLOW_SENTINEL,
        },
    })
}

/// Penalised objective `JS + w * |theta - theta0|^2`.
pub fn objective(theta: &[f64; 4], spec: &CalibrationSpec, empirical_returns: &[f64]) -> Result<f64> {
    Ok(evaluate(theta, spec, &PreparedSample::new(empirical_returns)?)?.objective)
}

/// Runs the bounded quasi-Newton search and returns the best evaluated point.
pub fn calibrate(spec: &CalibrationSpec, empirical_returns: &[f64]) -> Result<CalibrationResult> {
    spec.validate()?;
    if empirical_returns.len() < MIN_EMPIRICAL_RETURNS {
        return Err(RoughVolError::InsufficientData {
            needed: MIN_EMPIRICAL_RETURNS,
            got: empirical_returns.len(),
        });
    }
    let empirical = PreparedSample::new(empirical_returns)?;
    let free: Vec<usize> = (0..4).filter(|&i| spec.free[i]).collect();
    let embed = |x: &[f64]| {
        let mut theta = spec.theta0;
        for (k, &i) in free.iter().enumerate() {
            theta[i] = x[k];
        }
        theta
    };
    let trace = RefCell::new(Vec::new());
    let failure = RefCell::new(None);
    let f = |x: &[f64]| {
        let theta = embed(x);
        match evaluate(&theta, spec, &empirical) {
            Ok(entry) => {
                trace.borrow_mut().push(entry);
                entry.objective
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::INFINITY
            }
        }
    };
    let x0: Vec<f64> = free.iter().map(|&i| spec.theta0[i]).collect();
    let lower: Vec<f64> = free.iter().map(|&i| spec.bounds[i].0).collect();
    let upper: Vec<f64> = free.iter().map(|&i| spec.bounds[i].1).collect();
    let outcome = minimize_bounded(f, &x0, &lower, &upper, &spec.optim);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let trace = trace.into_inner();
    let best = trace
        .iter()
        .filter(|e| e.objective < OVERFLOW_SENTINEL)
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .copied()
        .ok_or_else(|| RoughVolError::CalibrationFailed {
            evaluations: trace.len(),
            reason: "every evaluation overflowed".into(),
        })?;
    Ok(CalibrationResult {
        theta_star: best.theta,
        js_at_optimum: best.js,
        objective_at_optimum: best.objective,
        objective_trace: trace,
        converged: outcome.converged,
        reason: outcome.reason,
        iterations: outcome.iterations,
        cal_seed: spec.cal_seed,
    })
}
