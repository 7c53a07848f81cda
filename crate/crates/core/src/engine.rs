//! Monte Carlo path generation.
//!
//! For the rough Bergomi variants each step `n >= 1` runs in a fixed order:
//!
//! 1. draw `(xi, xi_perp)`, set `dW = sqrt(dt) xi` and
//!    `dZ = rho dW + sqrt(1 - rho^2) sqrt(dt) xi_perp`;
//! 2. evaluate the driver `(v_n, a_n)` from `H_0..H_{n-1}` and `dZ_0..dZ_{n-1}`;
//! 3. advance the EWMA filter with `sigma_{n-1}^2`;
//! 4. map the filter to the clipped Hurst value `H_n`;
//! 5. `sigma_n = sqrt(V0) exp(nu v_n - nu^2 a_n / 2)`;
//! 6. `X_n = X_{n-1} + (r - sigma_{n-1}^2 / 2) dt + sigma_{n-1} dW`.
//!
//! The log-price update uses the left-endpoint volatility, so nothing drawn at
//! step `n` feeds back into the increment it multiplies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hurst::{clip_hurst, filter_step, HurstParams};
use crate::kernel::{DriverHistory, KernelMatrix, KernelParams, LagTable};
use crate::rng::PathRng;
use crate::{Result, RoughVolError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    EwmaRbergomi,
    ConstRbergomi,
    Heston,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::EwmaRbergomi => "ewma_rbergomi",
            ModelKind::ConstRbergomi => "const_rbergomi",
            ModelKind::Heston => "heston",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = RoughVolError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ewma_rbergomi" | "ewma" => Ok(ModelKind::EwmaRbergomi),
            "const_rbergomi" | "rbergomi" | "const" => Ok(ModelKind::ConstRbergomi),
            "heston" => Ok(ModelKind::Heston),
            other => Err(RoughVolError::invalid(format!("unknown model kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonParams {
    pub kappa: f64,
    pub theta_bar: f64,
    pub xi: f64,
    pub v0: f64,
}

impl HestonParams {
    fn validate(&self) -> Result<()> {
        // kappa = 0 and xi = 0 are allowed degenerate cases
        if !(self.kappa >= 0.0 && self.theta_bar > 0.0 && self.xi >= 0.0 && self.v0 > 0.0) {
            return Err(RoughVolError::invalid(format!(
                "Heston parameters need kappa >= 0, theta_bar > 0, xi >= 0, v0 > 0: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub v0: f64,
    pub nu: f64,
    pub rho: f64,
    pub r: f64,
    pub hurst: HurstParams,
    pub kernel: KernelParams,
    pub kind: ModelKind,
    pub heston: Option<HestonParams>,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            v0: 0.04,
            nu: 1.0,
            rho: -0.7,
            r: 0.05,
            hurst: HurstParams::default(),
            kernel: KernelParams::default(),
            kind: ModelKind::EwmaRbergomi,
            heston: None,
        }
    }
}

impl ModelParams {
    pub fn ewma(v0: f64, nu: f64, rho: f64, r: f64, hurst: HurstParams) -> Self {
        Self {
            v0,
            nu,
            rho,
            r,
            hurst,
            ..Self::default()
        }
    }

    pub fn const_rbergomi(v0: f64, nu: f64, rho: f64, r: f64, h: f64) -> Self {
        Self {
            v0,
            nu,
            rho,
            r,
            hurst: HurstParams::constant(h),
            kind: ModelKind::ConstRbergomi,
            ..Self::default()
        }
    }

    pub fn heston(heston: HestonParams, rho: f64, r: f64) -> Self {
        Self {
            v0: heston.v0,
            rho,
            r,
            kind: ModelKind::Heston,
            heston: Some(heston),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v0 > 0.0 && self.v0.is_finite()) {
            return Err(RoughVolError::invalid(format!("v0 must be positive, got {}", self.v0)));
        }
        if !self.nu.is_finite() || !self.r.is_finite() {
            return Err(RoughVolError::invalid("nu and r must be finite"));
        }
        if !(self.rho.abs() <= 1.0) {
            return Err(RoughVolError::invalid(format!(
                "rho must lie in [-1, 1], got {}",
                self.rho
            )));
        }
        self.kernel.validate()?;
        self.hurst.validate(&self.kernel)?;
        match self.kind {
            ModelKind::ConstRbergomi if self.hurst.alpha != 0.0 => Err(RoughVolError::invalid(
                "const_rbergomi requires alpha = 0 (beta is the Hurst exponent)",
            )),
            ModelKind::Heston => self
                .heston
                .as_ref()
                .ok_or_else(|| RoughVolError::invalid("heston model requires heston parameters"))?
                .validate(),
            _ => Ok(()),
        }
    }

    pub fn theta_ref(&self) -> f64 {
        self.hurst.theta_ref.unwrap_or(self.v0)
    }

    pub fn initial_hurst(&self) -> f64 {
        self.hurst.initial_hurst(&self.kernel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimGrid {
    pub horizon_t: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub master_seed: u64,
}

impl SimGrid {
    pub fn new(horizon_t: f64, n_steps: usize, n_paths: usize, master_seed: u64) -> Self {
        Self {
            horizon_t,
            n_steps,
            n_paths,
            master_seed,
        }
    }

    pub fn dt(&self) -> f64 {
        self.horizon_t / self.n_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(RoughVolError::invalid("n_steps must be at least 1"));
        }
        if self.n_paths == 0 {
            return Err(RoughVolError::invalid("n_paths must be at least 1"));
        }
        if !(self.horizon_t > 0.0 && self.horizon_t.is_finite()) {
            return Err(RoughVolError::invalid(format!(
                "horizon must be positive, got {}",
                self.horizon_t
            )));
        }
        Ok(())
    }
}

/// One simulated path on the grid `t_0..t_N`.
///
/// For Heston paths `v` holds the (untruncated) variance, and `a`, `h`, `theta`
/// are empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub s: Vec<f64>,
    pub sigma: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    pub h: Vec<f64>,
    pub theta: Vec<f64>,
    /// Grid points where a Hurst perturbation had to be clipped back into range.
    pub clip_events: usize,
}

impl PathRecord {
    pub fn terminal(&self) -> f64 {
        *self.s.last().expect("path has at least one point")
    }

    fn reset(&mut self, len: usize, rough: bool) {
        for buf in [&mut self.s, &mut self.sigma, &mut self.v] {
            buf.clear();
            buf.resize(len, 0.0);
        }
        let rough_len = if rough { len } else { 0 };
        for buf in [&mut self.a, &mut self.h, &mut self.theta] {
            buf.clear();
            buf.resize(rough_len, 0.0);
        }
        self.clip_events = 0;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub params: ModelParams,
    pub grid: SimGrid,
    pub s0: f64,
    pub paths: Vec<PathRecord>,
}

impl PathSet {
    pub fn dt(&self) -> f64 {
        self.grid.dt()
    }
}

/// Additive shift of the Hurst path, `H_n -> clip(H_n + scale * eta_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HurstPerturbation {
    pub eta: Eta,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Eta {
    Constant(f64),
    /// One value per grid point `t_0..t_N`.
    Path(Vec<f64>),
}

impl HurstPerturbation {
    pub fn constant(eta: f64, scale: f64) -> Self {
        Self {
            eta: Eta::Constant(eta),
            scale,
        }
    }

    fn at(&self, n: usize) -> f64 {
        match &self.eta {
            Eta::Constant(e) => self.scale * e,
            Eta::Path(p) => self.scale * p[n],
        }
    }

    fn validate(&self, n_steps: usize) -> Result<()> {
        let finite = match &self.eta {
            Eta::Constant(e) => e.is_finite(),
            Eta::Path(p) => {
                if p.len() != n_steps + 1 {
                    return Err(RoughVolError::invalid(format!(
                        "perturbation path has {} points, grid has {}",
                        p.len(),
                        n_steps + 1
                    )));
                }
                p.iter().all(|e| e.is_finite())
            }
        };
        if !finite || !self.scale.is_finite() {
            return Err(RoughVolError::invalid("perturbation must be finite"));
        }
        Ok(())
    }
}

/// Run-wide quantities shared by every path.
struct Prepared<'a> {
    params: &'a ModelParams,
    grid: SimGrid,
    s0: f64,
    dt: f64,
    sqrt_dt: f64,
    rho_perp: f64,
    sqrt_v0: f64,
    decay: f64,
    theta_ref: f64,
    lags: LagTable,
    bump: Option<&'a HurstPerturbation>,
    /// Present when the Hurst path is the same on every path (alpha = 0).
    fixed: Option<FixedHurst>,
}

struct FixedHurst {
    h: Vec<f64>,
    clip_events: usize,
    matrix: KernelMatrix,
}

impl<'a> Prepared<'a> {
    fn new(
        params: &'a ModelParams,
        grid: &SimGrid,
        s0: f64,
        bump: Option<&'a HurstPerturbation>,
    ) -> Result<Self> {
        params.validate()?;
        grid.validate()?;
        if !(s0 > 0.0 && s0.is_finite()) {
            return Err(RoughVolError::invalid(format!("spot must be positive, got {s0}")));
        }
        if let Some(b) = bump {
            b.validate(grid.n_steps)?;
        }
        let dt = grid.dt();
        let lags = LagTable::new(dt, grid.n_steps);
        let mut prep = Self {
            params,
            grid: *grid,
            s0,
            dt,
            sqrt_dt: dt.sqrt(),
            rho_perp: (1.0 - params.rho * params.rho).max(0.0).sqrt(),
            sqrt_v0: params.v0.sqrt(),
            decay: (-params.hurst.lambda_decay * dt).exp(),
            theta_ref: params.theta_ref(),
            lags,
            bump,
            fixed: None,
        };
        if params.kind != ModelKind::Heston && params.hurst.alpha == 0.0 {
            let mut h = Vec::with_capacity(grid.n_steps + 1);
            let mut clip_events = 0;
            for n in 0..=grid.n_steps {
                let base = if n == 0 {
                    params.initial_hurst()
                } else {
                    params.hurst.map(0.0, prep.theta_ref, &params.kernel)
                };
                let (value, clipped) = prep.perturb(n, base);
                clip_events += clipped as usize;
                h.push(value);
            }
            let matrix = KernelMatrix::new(&h[..grid.n_steps], &prep.lags);
            prep.fixed = Some(FixedHurst {
                h,
                clip_events,
                matrix,
            });
        }
        Ok(prep)
    }

    #[inline]
    fn perturb(&self, n: usize, base: f64) -> (f64, bool) {
        match self.bump {
            None => (base, false),
            Some(b) => {
                let raw = base + b.at(n);
                let kp = &self.params.kernel;
                let clipped = raw < kp.epsilon || raw > kp.h_max;
                (clip_hurst(raw, kp.epsilon, kp.h_max), clipped)
            }
        }
    }

    fn overflow(&self, path: usize, step: usize, what: &str, value: f64) -> RoughVolError {
        RoughVolError::NumericalOverflow {
            path,
            step,
            detail: format!("{what} = {value}; parameters: {:?}", self.params),
        }
    }
}

#[derive(Default)]
struct Workspace {
    record: PathRecord,
    history: DriverHistory,
    increments: Vec<f64>,
}

fn simulate_rough(prep: &Prepared, index: usize, ws: &mut Workspace) -> Result<()> {
    let p = prep.params;
    let n_steps = prep.grid.n_steps;
    let mut rng = PathRng::new(prep.grid.master_seed, index as u64);
    let Workspace {
        record: rec,
        history,
        increments,
    } = ws;
    rec.reset(n_steps + 1, true);
    history.clear();
    increments.clear();

    let half_nu_sq = 0.5 * p.nu * p.nu;
    let mut x = prep.s0.ln();
    rec.s[0] = prep.s0;
    rec.sigma[0] = prep.sqrt_v0;
    rec.theta[0] = p.v0;
    match &prep.fixed {
        Some(f) => {
            rec.h.copy_from_slice(&f.h);
            rec.clip_events = f.clip_events;
        }
        None => {
            let (h0, clipped) = prep.perturb(0, p.initial_hurst());
            rec.h[0] = h0;
            rec.clip_events += clipped as usize;
        }
    }

    for n in 1..=n_steps {
        let (xi, xi_perp) = rng.normal_pair();
        let dw = prep.sqrt_dt * xi;
        let dz = p.rho * dw + prep.rho_perp * prep.sqrt_dt * xi_perp;

        let (v, a) = match &prep.fixed {
            Some(f) => {
                increments.push(dz);
                f.matrix.evaluate(n, increments)
            }
            None => {
                history.push(rec.h[n - 1], dz);
                history.evaluate(&prep.lags)
            }
        };
        rec.v[n] = v;
        rec.a[n] = a;

        let sigma_prev = rec.sigma[n - 1];
        rec.theta[n] = filter_step(rec.theta[n - 1], sigma_prev * sigma_prev, prep.decay);
        if prep.fixed.is_none() {
            let base = p.hurst.map(rec.theta[n], prep.theta_ref, &p.kernel);
            let (h, clipped) = prep.perturb(n, base);
            rec.h[n] = h;
            rec.clip_events += clipped as usize;
        }

        let sigma = prep.sqrt_v0 * (p.nu * v - half_nu_sq * a).exp();
        if !sigma.is_finite() {
            return Err(prep.overflow(index, n, "sigma", sigma));
        }
        rec.sigma[n] = sigma;

        x += (p.r - 0.5 * sigma_prev * sigma_prev) * prep.dt + sigma_prev * dw;
        let s = x.exp();
        if !s.is_finite() || s <= 0.0 {
            return Err(prep.overflow(index, n, "S", s));
        }
        rec.s[n] = s;
    }
    Ok(())
}

/// Full-truncation Euler for Heston.
fn simulate_heston_path(prep: &Prepared, index: usize, ws: &mut Workspace) -> Result<()> {
    let p = prep.params;
    let hp = p.heston.expect("validated heston parameters");
    let n_steps = prep.grid.n_steps;
    let mut rng = PathRng::new(prep.grid.master_seed, index as u64);
    let rec = &mut ws.record;
    rec.reset(n_steps + 1, false);

    let mut x = prep.s0.ln();
    rec.s[0] = prep.s0;
    rec.v[0] = hp.v0;
    rec.sigma[0] = hp.v0.sqrt();
    for n in 1..=n_steps {
        let (xi, xi_perp) = rng.normal_pair();
        let dw = prep.sqrt_dt * xi;
        let db = p.rho * dw + prep.rho_perp * prep.sqrt_dt * xi_perp;
        let v_prev = rec.v[n - 1];
        let v_plus = v_prev.max(0.0);
        let vol = v_plus.sqrt();
        let v = v_prev + hp.kappa * (hp.theta_bar - v_plus) * prep.dt + hp.xi * vol * db;
        if !v.is_finite() {
            return Err(prep.overflow(index, n, "variance", v));
        }
        rec.v[n] = v;
        rec.sigma[n] = v.max(0.0).sqrt();
        x += (p.r - 0.5 * v_plus) * prep.dt + vol * dw;
        let s = x.exp();
        if !s.is_finite() || s <= 0.0 {
            return Err(prep.overflow(index, n, "S", s));
        }
        rec.s[n] = s;
    }
    Ok(())
}

fn simulate_one(prep: &Prepared, index: usize, ws: &mut Workspace) -> Result<()> {
    match prep.params.kind {
        ModelKind::Heston => simulate_heston_path(prep, index, ws),
        _ => simulate_rough(prep, index, ws),
    }
}

/// Simulates every path and hands each finished path to `visit`, collecting
/// the results in path order.
///
/// Paths run in parallel on the current rayon pool; because each path owns
/// its random stream, the output does not depend on the number of workers.
/// On failure the error of the lowest-indexed failing path is returned.
pub fn map_paths<R, F>(
    params: &ModelParams,
    grid: &SimGrid,
    s0: f64,
    bump: Option<&HurstPerturbation>,
    visit: F,
) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(usize, &PathRecord) -> R + Sync,
{
    let prep = Prepared::new(params, grid, s0, bump)?;
    let results: Vec<Result<R>> = (0..grid.n_paths)
        .into_par_iter()
        .map_init(Workspace::default, |ws, i| {
            simulate_one(&prep, i, ws)?;
            Ok(visit(i, &ws.record))
        })
        .collect();
    results.into_iter().collect()
}

/// Simulates the full path set (all state arrays on every grid point).
pub fn simulate(params: &ModelParams, grid: &SimGrid, s0: f64) -> Result<PathSet> {
    simulate_perturbed(params, grid, s0, None)
}

pub fn simulate_perturbed(
    params: &ModelParams,
    grid: &SimGrid,
    s0: f64,
    bump: Option<&HurstPerturbation>,
) -> Result<PathSet> {
    let paths = map_paths(params, grid, s0, bump, |_, rec| rec.clone())?;
    Ok(PathSet {
        params: params.clone(),
        grid: *grid,
        s0,
        paths,
    })
}

/// Heston baseline; `params.kind` must be [`ModelKind::Heston`].
pub fn simulate_heston(params: &ModelParams, grid: &SimGrid, s0: f64) -> Result<PathSet> {
    if params.kind != ModelKind::Heston {
        return Err(RoughVolError::invalid("simulate_heston called with a non-Heston model"));
    }
    simulate(params, grid, s0)
}

/// Terminal prices `S_T`, one per path.
pub fn terminal_prices(
    params: &ModelParams,
    grid: &SimGrid,
    s0: f64,
    bump: Option<&HurstPerturbation>,
) -> Result<Vec<f64>> {
    map_paths(params, grid, s0, bump, |_, rec| rec.terminal())
}

/// One-step log returns of every path, concatenated in path order.
pub fn pooled_log_returns(params: &ModelParams, grid: &SimGrid, s0: f64) -> Result<Vec<f64>> {
    let per_path = map_paths(params, grid, s0, None, |_, rec| log_returns(&rec.s))?;
    Ok(per_path.concat())
}

pub(crate) fn log_returns(s: &[f64]) -> Vec<f64> {
    s.windows(2).map(|w| (w[1] / w[0]).ln()).collect()
}
