//! European Monte Carlo pricing, Greeks and sensitivity to the Hurst path.

use serde::{Deserialize, Serialize};

use crate::engine::{map_paths, terminal_prices, Eta, HurstPerturbation, ModelKind, ModelParams, SimGrid};
use crate::stats::mean_and_stderr;
use crate::{Result, RoughVolError};

pub const Z_95: f64 = 1.96;

/// Relative bump applied to `nu` for the finite-difference vega.
pub const VEGA_REL_BUMP: f64 = 0.01;

/// Absolute bump used when `nu = 0`.
pub const VEGA_ABS_BUMP: f64 = 0.01;

pub const DEFAULT_H_BUMP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    Call,
    Put,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    pub strike: f64,
    pub maturity: f64,
    pub kind: OptionKind,
    pub s0: f64,
}

impl OptionSpec {
    pub fn call(s0: f64, strike: f64, maturity: f64) -> Self {
        Self {
            strike,
            maturity,
            kind: OptionKind::Call,
            s0,
        }
    }

    pub fn put(s0: f64, strike: f64, maturity: f64) -> Self {
        Self {
            kind: OptionKind::Put,
            ..Self::call(s0, strike, maturity)
        }
    }

    pub fn payoff(&self, s_t: f64) -> f64 {
        match self.kind {
            OptionKind::Call => (s_t - self.strike).max(0.0),
            OptionKind::Put => (self.strike - s_t).max(0.0),
        }
    }

    /// Pathwise `d payoff / d S0`, using `S_T` proportional to `S0`.
    fn pathwise_delta(&self, s_t: f64) -> f64 {
        let ratio = s_t / self.s0;
        match self.kind {
            OptionKind::Call if s_t > self.strike => ratio,
            OptionKind::Put if s_t < self.strike => -ratio,
            _ => 0.0,
        }
    }

    fn validate(&self, grid: &SimGrid) -> Result<()> {
        if !(self.strike > 0.0) || !(self.maturity > 0.0) || !(self.s0 > 0.0) {
            return Err(RoughVolError::invalid(format!(
                "option needs positive strike, maturity and spot: {self:?}"
            )));
        }
        if (grid.horizon_t - self.maturity).abs() > 1e-12 * self.maturity {
            return Err(RoughVolError::invalid(format!(
                "grid horizon {} does not match maturity {}",
                grid.horizon_t, self.maturity
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingResult {
    pub price: f64,
    pub std_err: f64,
    pub ci95: (f64, f64),
    pub delta: f64,
    pub delta_std_err: f64,
    pub vega: Option<f64>,
    pub vega_std_err: Option<f64>,
    pub h_sensitivity: Option<f64>,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Greeks {
    pub delta: f64,
    pub delta_std_err: f64,
    pub vega: f64,
    pub vega_std_err: f64,
    /// Set when a one-sided difference replaced the central one.
    pub vega_one_sided: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdEstimate {
    pub value: f64,
    pub std_err: f64,
}

fn discount(params: &ModelParams, opt: &OptionSpec) -> f64 {
    (-params.r * opt.maturity).exp()
}

/// Discounted mean payoff with its Monte Carlo standard error, 95% interval
/// and pathwise delta. Vega and the Hurst sensitivity are left empty.
pub fn price_european(params: &ModelParams, grid: &SimGrid, opt: &OptionSpec) -> Result<PricingResult> {
    opt.validate(grid)?;
    let terminals = terminal_prices(params, grid, opt.s0, None)?;
    let df = discount(params, opt);
    let payoffs: Vec<f64> = terminals.iter().map(|&s| df * opt.payoff(s)).collect();
    let deltas: Vec<f64> = terminals.iter().map(|&s| df * opt.pathwise_delta(s)).collect();
    let (price, std_err) = mean_and_stderr(&payoffs);
    let (delta, delta_std_err) = mean_and_stderr(&deltas);
    Ok(PricingResult {
        price,
        std_err,
        ci95: (price - Z_95 * std_err, price + Z_95 * std_err),
        delta,
        delta_std_err,
        vega: None,
        vega_std_err: None,
        h_sensitivity: None,
        n_paths: grid.n_paths,
        seed: grid.master_seed,
    })
}

fn discounted_payoffs(
    params: &ModelParams,
    grid: &SimGrid,
    opt: &OptionSpec,
    bump: Option<&HurstPerturbation>,
) -> Result<Vec<f64>> {
    let df = discount(params, opt);
    Ok(terminal_prices(params, grid, opt.s0, bump)?
        .into_iter()
        .map(|s| df * opt.payoff(s))
        .collect())
}

/// Per-path paired difference quotient `(f(hi) - f(lo)) / width` under
/// common random numbers.
fn paired_difference(hi: &[f64], lo: &[f64], width: f64) -> FdEstimate {
    let diffs: Vec<f64> = hi.iter().zip(lo).map(|(a, b)| (a - b) / width).collect();
    let (value, std_err) = mean_and_stderr(&diffs);
    FdEstimate { value, std_err }
}

/// One-sided vega `(C(nu + step) - C(nu)) / step`; `step` may be negative.
pub fn vega_one_sided(params: &ModelParams, grid: &SimGrid, opt: &OptionSpec, step: f64) -> Result<FdEstimate> {
    opt.validate(grid)?;
    let base = discounted_payoffs(params, grid, opt, None)?;
    let bumped = ModelParams {
        nu: params.nu + step,
        ..params.clone()
    };
    let moved = discounted_payoffs(&bumped, grid, opt, None)?;
    Ok(paired_difference(&moved, &base, step))
}

/// Pathwise delta and finite-difference vega (relative bump 1% of `nu`,
/// common random numbers). At `nu = 0` the backward leg would cross zero, so
/// a forward difference with an absolute bump is used and flagged.
pub fn greeks(params: &ModelParams, grid: &SimGrid, opt: &OptionSpec) -> Result<Greeks> {
    if params.kind == ModelKind::Heston {
        return Err(RoughVolError::invalid("vega in nu is undefined for the Heston baseline"));
    }
    let base = price_european(params, grid, opt)?;
    let bump = if params.nu == 0.0 {
        VEGA_ABS_BUMP
    } else {
        VEGA_REL_BUMP * params.nu.abs()
    };
    let up = ModelParams {
        nu: params.nu + bump,
        ..params.clone()
    };
    let up_payoffs = discounted_payoffs(&up, grid, opt, None)?;
    let crosses_zero = params.nu == 0.0 || (params.nu - bump).signum() != params.nu.signum();
    let (vega, one_sided) = if crosses_zero {
        log::warn!("vega bump crosses nu = 0; using a forward difference");
        let base_payoffs = discounted_payoffs(params, grid, opt, None)?;
        (paired_difference(&up_payoffs, &base_payoffs, bump), true)
    } else {
        let down = ModelParams {
            nu: params.nu - bump,
            ..params.clone()
        };
        let down_payoffs = discounted_payoffs(&down, grid, opt, None)?;
        (paired_difference(&up_payoffs, &down_payoffs, 2.0 * bump), false)
    };
    Ok(Greeks {
        delta: base.delta,
        delta_std_err: base.delta_std_err,
        vega: vega.value,
        vega_std_err: vega.std_err,
        vega_one_sided: one_sided,
    })
}

/// Price plus the full set of Greeks.
pub fn price_with_greeks(params: &ModelParams, grid: &SimGrid, opt: &OptionSpec) -> Result<PricingResult> {
    let mut res = price_european(params, grid, opt)?;
    let g = greeks(params, grid, opt)?;
    res.vega = Some(g.vega);
    res.vega_std_err = Some(g.vega_std_err);
    Ok(res)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HSensitivity {
    pub estimate: f64,
    pub std_err: f64,
    /// Share of grid points (over all paths) clipped after the upward bump.
    pub clipped_up_fraction: f64,
    pub clipped_down_fraction: f64,
    /// Both bumped Hurst paths fully pinned at the clip bounds.
    pub saturated: bool,
}

/// Directional derivative `dC/dH[eta]` by a central difference with common
/// random numbers.
///
/// Bumped Hurst values are clipped back into `[epsilon, h_max]`. Clipped
/// grid points are treated as unshifted, so the difference is divided by
/// `bump * ((1 - f_up) + (1 - f_down))`, where `f` is the clipped share on
/// each side: with one side fully clipped this is the one-sided quotient.
pub fn h_sensitivity(
    params: &ModelParams,
    grid: &SimGrid,
    opt: &OptionSpec,
    eta: &Eta,
    bump: f64,
) -> Result<HSensitivity> {
    opt.validate(grid)?;
    if params.kind == ModelKind::Heston {
        return Err(RoughVolError::invalid("the Heston baseline has no Hurst path"));
    }
    if !(bump > 0.0) {
        return Err(RoughVolError::invalid(format!("bump must be positive, got {bump}")));
    }
    let df = discount(params, opt);
    let run = |sign: f64| -> Result<(Vec<f64>, f64)> {
        let pert = HurstPerturbation {
            eta: eta.clone(),
            scale: sign * bump,
        };
        let out = map_paths(params, grid, opt.s0, Some(&pert), |_, rec| {
            (df * opt.payoff(rec.terminal()), rec.clip_events)
        })?;
        let clips: usize = out.iter().map(|(_, c)| c).sum();
        let fraction = clips as f64 / (grid.n_paths * (grid.n_steps + 1)) as f64;
        Ok((out.into_iter().map(|(p, _)| p).collect(), fraction))
    };
    let (up, f_up) = run(1.0)?;
    let (down, f_down) = run(-1.0)?;
    let effective = bump * ((1.0 - f_up) + (1.0 - f_down));
    let saturated = f_up >= 1.0 && f_down >= 1.0;
    if saturated {
        log::warn!("Hurst bump {bump} saturates the clip bounds in both directions");
        return Ok(HSensitivity {
            estimate: 0.0,
            std_err: 0.0,
            clipped_up_fraction: f_up,
            clipped_down_fraction: f_down,
            saturated,
        });
    }
    let fd = paired_difference(&up, &down, effective);
    Ok(HSensitivity {
        estimate: fd.value,
        std_err: fd.std_err,
        clipped_up_fraction: f_up,
        clipped_down_fraction: f_down,
        saturated,
    })
}

/// `|model - market| / market` in percent.
pub fn relative_error(model_price: f64, market_price: f64) -> Result<f64> {
    if !(market_price > 0.0) {
        return Err(RoughVolError::domain(format!(
            "market price must be positive, got {market_price}"
        )));
    }
    Ok((model_price - market_price).abs() / market_price * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hurst::HurstParams;

    fn flat() -> ModelParams {
        ModelParams {
            nu: 0.0,
            rho: 0.0,
            hurst: HurstParams::constant(0.1),
            kind: ModelKind::ConstRbergomi,
            ..ModelParams::default()
        }
    }

    #[test]
    fn relative_error_examples() {
        assert_eq!(format!("{:.2}", relative_error(153.08, 149.39).unwrap()), "2.47");
        assert_eq!(format!("{:.2}", relative_error(243.86, 248.99).unwrap()), "2.06");
        assert_eq!(relative_error(10.0, 10.0).unwrap(), 0.0);
        assert!(relative_error(1.0, 0.0).is_err());
        assert!(relative_error(1.0, -2.0).is_err());
    }

    #[test]
    fn ci_brackets_price() {
        let grid = SimGrid::new(1.0, 16, 2000, 3);
        let res = price_european(&flat(), &grid, &OptionSpec::call(100.0, 100.0, 1.0)).unwrap();
        assert!(res.ci95.0 < res.price && res.price < res.ci95.1);
        let width = res.ci95.1 - res.ci95.0;
        assert!((width - 2.0 * Z_95 * res.std_err).abs() < 1e-12);
        assert_eq!(res.n_paths, 2000);
        assert_eq!(res.seed, 3);
    }

    #[test]
    fn deep_otm_call_is_near_zero() {
        let grid = SimGrid::new(0.1, 16, 2000, 3);
        let res = price_european(&flat(), &grid, &OptionSpec::call(100.0, 1000.0, 0.1)).unwrap();
        assert!(res.price >= 0.0);
        assert!(res.price <= 3.0 * res.std_err + 1e-12);
    }

    #[test]
    fn call_prices_fall_with_strike() {
        let params = ModelParams::default();
        let grid = SimGrid::new(0.5, 32, 500, 8);
        let mut prev = f64::INFINITY;
        for k in [80.0, 90.0, 100.0, 110.0, 120.0] {
            let p = price_european(&params, &grid, &OptionSpec::call(100.0, k, 0.5)).unwrap().price;
            assert!(p <= prev);
            prev = p;
        }
    }

    #[test]
    fn maturity_must_match_grid() {
        let grid = SimGrid::new(1.0, 16, 10, 3);
        assert!(price_european(&flat(), &grid, &OptionSpec::call(100.0, 100.0, 0.5)).is_err());
        assert!(price_european(&flat(), &grid, &OptionSpec::call(100.0, -1.0, 1.0)).is_err());
    }

    #[test]
    fn null_perturbation_has_zero_sensitivity() {
        let grid = SimGrid::new(1.0, 32, 200, 3);
        let opt = OptionSpec::call(100.0, 100.0, 1.0);
        let s = h_sensitivity(&ModelParams::default(), &grid, &opt, &Eta::Constant(0.0), 0.01).unwrap();
        assert_eq!(s.estimate, 0.0);
        let s = h_sensitivity(&ModelParams::default(), &grid, &opt, &Eta::Path(vec![0.0; 33]), 0.01).unwrap();
        assert_eq!(s.estimate, 0.0);
    }

    #[test]
    fn saturated_upper_bound_reports_full_clipping() {
        let params = ModelParams {
            rho: 0.0,
            hurst: HurstParams::constant(0.5),
            kind: ModelKind::ConstRbergomi,
            ..ModelParams::default()
        };
        let grid = SimGrid::new(1.0, 32, 400, 3);
        let opt = OptionSpec::call(100.0, 100.0, 1.0);
        let s = h_sensitivity(&params, &grid, &opt, &Eta::Constant(1.0), 0.01).unwrap();
        assert_eq!(s.clipped_up_fraction, 1.0);
        assert_eq!(s.clipped_down_fraction, 0.0);
        assert!(!s.saturated);

        // the estimate equals the one-sided backward quotient
        let df = (-params.r).exp();
        let base = terminal_prices(&params, &grid, 100.0, None).unwrap();
        let down = terminal_prices(&params, &grid, 100.0, Some(&HurstPerturbation::constant(1.0, -0.01))).unwrap();
        let q: f64 = base
            .iter()
            .zip(&down)
            .map(|(b, d)| (df * opt.payoff(*b) - df * opt.payoff(*d)) / 0.01)
            .sum::<f64>()
            / base.len() as f64;
        assert!((s.estimate - q).abs() < 1e-9 * q.abs().max(1.0));
    }

    #[test]
    fn huge_bump_saturates_both_sides() {
        let grid = SimGrid::new(1.0, 16, 50, 3);
        let opt = OptionSpec::call(100.0, 100.0, 1.0);
        let s = h_sensitivity(&flat(), &grid, &opt, &Eta::Constant(1.0), 5.0).unwrap();
        assert!(s.saturated);
    }

    #[test]
    fn vega_at_zero_nu_is_flagged_one_sided() {
        let grid = SimGrid::new(1.0, 16, 200, 3);
        let g = greeks(&flat(), &grid, &OptionSpec::call(100.0, 100.0, 1.0)).unwrap();
        assert!(g.vega_one_sided);
        let params = ModelParams {
            nu: 1.0,
            ..flat()
        };
        let g = greeks(&params, &grid, &OptionSpec::call(100.0, 100.0, 1.0)).unwrap();
        assert!(!g.vega_one_sided);
        assert!(g.vega.is_finite());
    }
}
