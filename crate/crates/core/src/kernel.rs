//! Adapted Volterra kernel `K(t, u) = (t - u)^(H_u - 1/2) / Gamma(H_u + 1/2)` and
//! the Gaussian variance driver built from it.
//!
//! The stochastic integral is discretised with left-point evaluation: on the
//! uniform grid `t_k = k dt`,
//!
//! ```text
//! v_n = sum_{k<n} K(t_n, t_k) dZ_k,      a_n = sum_{k<n} K(t_n, t_k)^2 dt
//! ```
//!
//! so `a_n` is exactly the conditional variance of `v_n` given the Hurst path.

use serde::{Deserialize, Serialize};

use crate::gamma::gamma;
use crate::{Result, RoughVolError};

const GAMMA_BOUND_GRID: usize = 1000;

/// Admissible Hurst range `[epsilon, h_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub epsilon: f64,
    pub h_max: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            h_max: 0.5,
        }
    }
}

impl KernelParams {
    pub fn new(epsilon: f64, h_max: f64) -> Result<Self> {
        let kp = Self { epsilon, h_max };
        kp.validate()?;
        Ok(kp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < self.h_max && self.h_max <= 0.5) {
            return Err(RoughVolError::invalid(format!(
                "kernel bounds must satisfy 0 < epsilon < h_max <= 1/2, got epsilon={}, h_max={}",
                self.epsilon, self.h_max
            )));
        }
        Ok(())
    }

    pub fn contains(&self, h: f64) -> bool {
        h >= self.epsilon && h <= self.h_max
    }

    /// `(c_Gamma, C_Gamma)`: min and max of `Gamma(h + 1/2)` over `h` in
    /// `[epsilon, h_max]`, sampled on a fine grid including both endpoints.
    pub fn gamma_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..=GAMMA_BOUND_GRID {
            let h = self.epsilon + (self.h_max - self.epsilon) * i as f64 / GAMMA_BOUND_GRID as f64;
            let g = gamma(h + 0.5);
            lo = lo.min(g);
            hi = hi.max(g);
        }
        (lo, hi)
    }

    /// Upper bound `t^(2 eps) / (2 eps c_Gamma^2)` on the conditional variance `A_t`.
    pub fn l2_bound(&self, t: f64) -> f64 {
        let (c_gamma, _) = self.gamma_bounds();
        l2_bound_with(self.epsilon, c_gamma, t)
    }
}

pub(crate) fn l2_bound_with(epsilon: f64, c_gamma: f64, t: f64) -> f64 {
    t.powf(2.0 * epsilon) / (2.0 * epsilon * c_gamma * c_gamma)
}

/// Kernel weight `K(t, u)` for a Hurst value `h_u` fixed at time `u`.
pub fn kernel_value(t: f64, u: f64, h_u: f64, kp: &KernelParams) -> Result<f64> {
    if !(u >= 0.0 && u < t) {
        return Err(RoughVolError::domain(format!(
            "kernel requires 0 <= u < t, got u={u}, t={t}"
        )));
    }
    if !kp.contains(h_u) {
        return Err(RoughVolError::domain(format!(
            "Hurst value {h_u} outside [{}, {}]",
            kp.epsilon, kp.h_max
        )));
    }
    Ok((t - u).powf(h_u - 0.5) / gamma(h_u + 0.5))
}

/// `ln(j dt)` for `j = 1..=n`, shared by every path on one grid.
#[derive(Debug, Clone)]
pub struct LagTable {
    dt: f64,
    log_lags: Vec<f64>,
}

impl LagTable {
    pub fn new(dt: f64, n_steps: usize) -> Self {
        let log_lags = (1..=n_steps).map(|j| (j as f64 * dt).ln()).collect();
        Self { dt, log_lags }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.log_lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_lags.is_empty()
    }
}

/// Per-path record of the Hurst values and driver increments seen so far.
///
/// Stores `H_k - 1/2`, the memoised `1 / Gamma(H_k + 1/2)` and `dZ_k`; kernel
/// powers are recomputed on every evaluation since they depend on both `t_n`
/// and `H_k`.
#[derive(Debug, Clone, Default)]
pub struct DriverHistory {
    exponents: Vec<f64>,
    inv_gamma: Vec<f64>,
    increments: Vec<f64>,
}

impl DriverHistory {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            exponents: Vec::with_capacity(n),
            inv_gamma: Vec::with_capacity(n),
            increments: Vec::with_capacity(n),
        }
    }

    pub fn clear(&mut self) {
        self.exponents.clear();
        self.inv_gamma.clear();
        self.increments.clear();
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// Appends `(H_k, dZ_k)`; `h` must already lie in the kernel range.
    pub fn push(&mut self, h: f64, dz: f64) {
        debug_assert!(h.is_finite() && dz.is_finite());
        self.exponents.push(h - 0.5);
        self.inv_gamma.push(1.0 / gamma(h + 0.5));
        self.increments.push(dz);
    }

    /// `(v_n, a_n)` at `t_n` with `n = self.len()`.
    pub fn evaluate(&self, lags: &LagTable) -> (f64, f64) {
        let n = self.len();
        assert!(n <= lags.len(), "lag table shorter than driver history");
        let mut v = 0.0;
        let mut a = 0.0;
        for k in 0..n {
            let weight = (self.exponents[k] * lags.log_lags[n - k - 1]).exp() * self.inv_gamma[k];
            v += weight * self.increments[k];
            a += weight * weight;
        }
        (v, a * lags.dt)
    }
}

/// Driver value and conditional variance at `t_n = n dt` from the first `n`
/// Hurst values and increments.
pub fn driver_step(
    hursts: &[f64],
    increments: &[f64],
    dt: f64,
    kp: &KernelParams,
) -> Result<(f64, f64)> {
    if hursts.len() != increments.len() {
        return Err(RoughVolError::domain(format!(
            "{} Hurst values for {} increments",
            hursts.len(),
            increments.len()
        )));
    }
    if !(dt > 0.0) {
        return Err(RoughVolError::domain(format!("step must be positive, got {dt}")));
    }
    let mut history = DriverHistory::with_capacity(hursts.len());
    for (&h, &dz) in hursts.iter().zip(increments) {
        if !kp.contains(h) {
            return Err(RoughVolError::domain(format!(
                "Hurst value {h} outside [{}, {}]",
                kp.epsilon, kp.h_max
            )));
        }
        if !dz.is_finite() {
            return Err(RoughVolError::domain("non-finite driver increment"));
        }
        history.push(h, dz);
    }
    Ok(history.evaluate(&LagTable::new(dt, hursts.len())))
}

/// Lower-triangular kernel matrix for a Hurst path fixed in advance.
///
/// When the Hurst path does not depend on the simulated variance (alpha = 0),
/// every path shares the same weights and the same `a_n`, so the `O(N^2)`
/// powers are evaluated once per run.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    rows: Vec<Vec<f64>>,
    variances: Vec<f64>,
}

impl KernelMatrix {
    /// `hursts[k]` is the Hurst value attached to the increment over `[t_k, t_{k+1})`.
    pub fn new(hursts: &[f64], lags: &LagTable) -> Self {
        let n_steps = hursts.len();
        let mut history = DriverHistory::with_capacity(n_steps);
        let mut rows = Vec::with_capacity(n_steps + 1);
        let mut variances = Vec::with_capacity(n_steps + 1);
        rows.push(Vec::new());
        variances.push(0.0);
        for (n, &h) in hursts.iter().enumerate() {
            history.push(h, 0.0);
            let len = n + 1;
            let mut row = Vec::with_capacity(len);
            let mut a = 0.0;
            for k in 0..len {
                let w = (history.exponents[k] * lags.log_lags[len - k - 1]).exp()
                    * history.inv_gamma[k];
                row.push(w);
                a += w * w;
            }
            rows.push(row);
            variances.push(a * lags.dt);
        }
        Self { rows, variances }
    }

    /// `(v_n, a_n)` given the first `n` increments.
    pub fn evaluate(&self, n: usize, increments: &[f64]) -> (f64, f64) {
        let row = &self.rows[n];
        let v = row
            .iter()
            .zip(&increments[..n])
            .fold(0.0, |acc, (w, dz)| acc + w * dz);
        (v, self.variances[n])
    }

    pub fn variance(&self, n: usize) -> f64 {
        self.variances[n]
    }
}
