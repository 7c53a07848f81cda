//! EWMA variance filter `Theta` and the clipped power map to the Hurst exponent:
//!
//! ```text
//! H = min(max(alpha (Theta / theta_ref)^gamma + beta, epsilon), h_max)
//! ```

use serde::{Deserialize, Serialize};

use crate::kernel::KernelParams;
use crate::{Result, RoughVolError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurstParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma_exp: f64,
    /// EWMA decay rate, per year.
    pub lambda_decay: f64,
    /// Reference variance; `None` ties it to the model's initial variance.
    pub theta_ref: Option<f64>,
    /// Initial Hurst value; `None` means `clip(alpha + beta)`, the map's value
    /// at `Theta_0 = theta_ref`.
    pub h0: Option<f64>,
}

impl Default for HurstParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.1,
            gamma_exp: 1.0,
            lambda_decay: 10.0,
            theta_ref: None,
            h0: None,
        }
    }
}

impl HurstParams {
    /// Constant Hurst exponent `h` (alpha = 0, beta = h).
    pub fn constant(h: f64) -> Self {
        Self {
            alpha: 0.0,
            beta: h,
            ..Self::default()
        }
    }

    pub fn validate(&self, kp: &KernelParams) -> Result<()> {
        if !(self.lambda_decay > 0.0) {
            return Err(RoughVolError::invalid(format!(
                "EWMA decay must be positive, got {}",
                self.lambda_decay
            )));
        }
        if !(self.gamma_exp > 0.0) {
            return Err(RoughVolError::invalid(format!(
                "power-map exponent must be positive, got {}",
                self.gamma_exp
            )));
        }
        if let Some(t) = self.theta_ref {
            if !(t > 0.0) {
                return Err(RoughVolError::invalid(format!(
                    "reference variance must be positive, got {t}"
                )));
            }
        }
        if let Some(h0) = self.h0 {
            if !kp.contains(h0) {
                return Err(RoughVolError::invalid(format!(
                    "initial Hurst {h0} outside [{}, {}]",
                    kp.epsilon, kp.h_max
                )));
            }
        }
        if !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(RoughVolError::invalid("alpha and beta must be finite"));
        }
        Ok(())
    }

    pub fn initial_hurst(&self, kp: &KernelParams) -> f64 {
        self.h0
            .unwrap_or_else(|| clip_hurst(self.alpha + self.beta, kp.epsilon, kp.h_max))
    }

    /// Clipped Hurst value for filter level `theta`.
    pub fn map(&self, theta: f64, theta_ref: f64, kp: &KernelParams) -> f64 {
        let raw = if self.alpha == 0.0 {
            self.beta
        } else {
            self.alpha * (theta / theta_ref).powf(self.gamma_exp) + self.beta
        };
        clip_hurst(raw, kp.epsilon, kp.h_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EwmaState {
    pub theta: f64,
    pub h: f64,
}

pub fn clip_hurst(raw: f64, eps: f64, h_max: f64) -> f64 {
    raw.max(eps).min(h_max)
}

/// Exact one-step solve of `dTheta = lambda (sigma^2 - Theta) dt` with the
/// input held constant over the step, followed by the Hurst map.
pub fn ewma_update(
    state: EwmaState,
    sigma_sq: f64,
    dt: f64,
    params: &HurstParams,
    theta_ref: f64,
    kp: &KernelParams,
) -> Result<EwmaState> {
    if !(sigma_sq >= 0.0) {
        return Err(RoughVolError::domain(format!(
            "EWMA input must be a non-negative variance, got {sigma_sq}"
        )));
    }
    if !(dt > 0.0) {
        return Err(RoughVolError::domain(format!("step must be positive, got {dt}")));
    }
    let theta = filter_step(state.theta, sigma_sq, (-params.lambda_decay * dt).exp());
    Ok(EwmaState {
        theta,
        h: params.map(theta, theta_ref, kp),
    })
}

#[inline]
pub(crate) fn filter_step(theta: f64, input: f64, decay: f64) -> f64 {
    decay * theta + (1.0 - decay) * input
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kp() -> KernelParams {
        KernelParams::default()
    }

    #[test]
    fn constant_input_is_fixed_point() {
        let p = HurstParams::default();
        for c in [0.0, 0.04, 1.3] {
            let s = ewma_update(EwmaState { theta: c, h: 0.2 }, c, 0.1, &p, 0.04, &kp()).unwrap();
            assert!((s.theta - c).abs() <= 1e-15 * c.max(1.0));
        }
    }

    #[test]
    fn zero_alpha_is_constant_hurst() {
        let p = HurstParams::constant(0.25);
        for theta in [0.0, 0.01, 0.5, 10.0] {
            let s = ewma_update(EwmaState { theta, h: 0.25 }, 0.3, 0.1, &p, 0.04, &kp()).unwrap();
            assert_eq!(s.h, 0.25);
        }
    }

    #[test]
    fn reference_update() {
        let p = HurstParams {
            alpha: 0.2,
            beta: 0.05,
            gamma_exp: 1.0,
            lambda_decay: 1.0,
            theta_ref: Some(0.04),
            h0: None,
        };
        let kp = KernelParams::new(0.05, 0.5).unwrap();
        let s = ewma_update(EwmaState { theta: 0.04, h: 0.25 }, 0.09, 0.5, &p, 0.04, &kp).unwrap();
        // theta' = e^-0.5 * 0.04 + (1 - e^-0.5) * 0.09 and
        // h' = 0.2 * theta' / 0.04 + 0.05, evaluated to 30 digits.
        let theta_want = 0.059_673_467_014_368_328_82;
        let h_want = 0.348_367_335_071_841_660_7;
        assert!((s.theta - theta_want).abs() < 1e-14);
        assert!((s.h - h_want).abs() < 1e-14);
    }

    #[test]
    fn negative_input_rejected() {
        let p = HurstParams::default();
        let st = EwmaState { theta: 0.04, h: 0.2 };
        assert!(ewma_update(st, -1e-9, 0.1, &p, 0.04, &kp()).is_err());
        assert!(ewma_update(st, 0.04, 0.0, &p, 0.04, &kp()).is_err());
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip_hurst(0.7, 0.05, 0.5), 0.5);
        assert_eq!(clip_hurst(-0.1, 0.05, 0.5), 0.05);
        assert_eq!(clip_hurst(0.3, 0.05, 0.5), 0.3);
    }

    #[test]
    fn decay_limits() {
        let fast = HurstParams {
            lambda_decay: 1e6,
            ..HurstParams::default()
        };
        let slow = HurstParams {
            lambda_decay: 1e-12,
            ..HurstParams::default()
        };
        let st = EwmaState { theta: 0.04, h: 0.2 };
        let s = ewma_update(st, 0.09, 0.1, &fast, 0.04, &kp()).unwrap();
        assert!((s.theta - 0.09).abs() < 1e-15);
        let s = ewma_update(st, 0.09, 0.1, &slow, 0.04, &kp()).unwrap();
        assert!((s.theta - 0.04).abs() < 1e-12);
    }

    #[test]
    fn initial_hurst_defaults_to_map_at_reference() {
        let p = HurstParams {
            alpha: 0.3,
            beta: 0.3,
            ..HurstParams::default()
        };
        assert_eq!(p.initial_hurst(&kp()), 0.5);
        assert_eq!(HurstParams::constant(0.2).initial_hurst(&kp()), 0.2);
    }

    proptest! {
        #[test]
        fn clip_is_idempotent_and_bounded(raw in -10.0f64..10.0) {
            let once = clip_hurst(raw, 0.05, 0.5);
            prop_assert!((0.05..=0.5).contains(&once));
            prop_assert_eq!(clip_hurst(once, 0.05, 0.5), once);
        }

        #[test]
        fn update_is_convex_combination(
            theta in 0.0f64..2.0,
            input in 0.0f64..2.0,
            lambda in 0.01f64..1000.0,
            dt in 1e-4f64..1.0,
        ) {
            let p = HurstParams { lambda_decay: lambda, ..HurstParams::default() };
            let s = ewma_update(EwmaState { theta, h: 0.2 }, input, dt, &p, 0.04, &kp()).unwrap();
            let (lo, hi) = if theta < input { (theta, input) } else { (input, theta) };
            prop_assert!(s.theta >= 0.0);
            prop_assert!(s.theta >= lo - 1e-15 && s.theta <= hi + 1e-15);
        }

        #[test]
        fn hurst_map_monotone_in_theta(
            t1 in 0.0f64..1.0,
            t2 in 0.0f64..1.0,
            alpha in 0.0f64..1.0,
            beta in -0.5f64..0.5,
            gamma_exp in 0.1f64..3.0,
        ) {
            let p = HurstParams { alpha, beta, gamma_exp, ..HurstParams::default() };
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(p.map(lo, 0.04, &kp()) <= p.map(hi, 0.04, &kp()));
        }
    }
}
