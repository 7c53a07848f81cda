//! Box-constrained quasi-Newton minimisation with forward-difference
//! gradients.
//!
//! Projected BFGS: variables live in the unit box after an affine rescaling,
//! the search direction is restricted to coordinates not pinned at a bound,
//! and an Armijo backtracking search runs along the projected path.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimOptions {
    pub max_iter: usize,
    /// Stop when the projected gradient's max norm (unit-box scale) falls below this.
    pub grad_tol: f64,
    /// Stop when an accepted step improves `f` by less than `ftol * max(1, |f|)`.
    pub ftol: f64,
    /// Forward-difference step relative to `max(|x_i|, FD_FLOOR)`.
    pub fd_rel_step: f64,
    /// Largest first step, as a fraction of each box width.
    pub initial_step: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            grad_tol: 1e-6,
            ftol: 1e-9,
            fd_rel_step: 1e-4,
            initial_step: 0.05,
        }
    }
}

const FD_FLOOR: f64 = 1e-2;
const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub reason: String,
}

struct Problem<'a, F> {
    f: F,
    lower: &'a [f64],
    upper: &'a [f64],
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> f64> Problem<'_, F> {
    fn to_x(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.lower.iter().zip(self.upper))
            .map(|(y, (l, u))| (l + y * (u - l)).clamp(*l, *u))
            .collect()
    }

    fn eval(&mut self, y: &[f64]) -> f64 {
        self.evaluations += 1;
        let x = self.to_x(y);
        let v = (self.f)(&x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    /// Forward differences in `x`, converted to unit-box scale. A step that
    /// would leave the box is taken backwards instead.
    fn gradient(&mut self, y: &[f64], fy: f64, rel: f64) -> Vec<f64> {
        let x = self.to_x(y);
        let mut g = vec![0.0; y.len()];
        for i in 0..y.len() {
            let width = self.upper[i] - self.lower[i];
            let mut h = rel * x[i].abs().max(FD_FLOOR);
            if x[i] + h > self.upper[i] {
                h = -h;
            }
            let mut yp = y.to_vec();
            yp[i] = ((x[i] + h) - self.lower[i]) / width;
            let fp = self.eval(&yp);
            g[i] = (fp - fy) / h * width;
        }
        g
    }
}

fn project(y: &mut [f64]) {
    for v in y.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}

/// Coordinates pinned at a bound with the gradient pointing outward.
fn pinned(y: &[f64], g: &[f64]) -> Vec<bool> {
    y.iter()
        .zip(g)
        .map(|(&y, &g)| (y <= 0.0 && g > 0.0) || (y >= 1.0 && g < 0.0))
        .collect()
}

fn projected_grad_norm(y: &[f64], g: &[f64]) -> f64 {
    pinned(y, g)
        .iter()
        .zip(g)
        .map(|(&p, &g)| if p { 0.0 } else { g.abs() })
        .fold(0.0, f64::max)
}

/// Minimises `f` over the box `[lower, upper]` starting from `x0`.
///
/// The returned point is the best one accepted by the line search; callers
/// that also need the best of every evaluation (gradient probes included)
/// should track it inside `f`.
pub fn minimize_bounded<F>(f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &OptimOptions) -> OptimOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    let d = x0.len();
    assert!(lower.len() == d && upper.len() == d, "bound dimensions");
    assert!(
        lower.iter().zip(upper).all(|(l, u)| l < u),
        "each lower bound must be below its upper bound"
    );
    let mut prob = Problem {
        f,
        lower,
        upper,
        evaluations: 0,
    };
    let mut y: Vec<f64> = x0
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(x, (l, u))| (x - l) / (u - l))
        .collect();
    project(&mut y);

    let mut fy = prob.eval(&y);
    let mut g = prob.gradient(&y, fy, opts.fd_rel_step);
    let mut hess_inv: Option<Vec<Vec<f64>>> = None;
    let mut iterations = 0;
    let (converged, reason) = loop {
        if projected_grad_norm(&y, &g) < opts.grad_tol {
            break (true, "projected gradient below tolerance".to_string());
        }
        if iterations >= opts.max_iter {
            break (false, format!("iteration limit {} reached", opts.max_iter));
        }
        iterations += 1;

        let free: Vec<bool> = pinned(&y, &g).iter().map(|p| !p).collect();
        let gmax = projected_grad_norm(&y, &g);
        let h = hess_inv.get_or_insert_with(|| identity(d, opts.initial_step / gmax));
        let mut dir = direction(h, &g, &free);
        let mut slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            *h = identity(d, opts.initial_step / gmax);
            dir = direction(h, &g, &free);
            slope = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial: Vec<f64> = y.iter().zip(&dir).map(|(y, d)| y + t * d).collect();
            project(&mut trial);
            let decrease: f64 = trial.iter().zip(&y).zip(&g).map(|((a, b), g)| (a - b) * g).sum();
            let ft = prob.eval(&trial);
            if ft <= fy + ARMIJO_C * decrease.min(0.0) && ft < fy {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((y_new, f_new)) = accepted else {
            if slope < 0.0 && hess_inv.as_ref().is_some_and(|h| !is_scaled_identity(h)) {
                hess_inv = None;
                continue;
            }
            break (true, "line search cannot improve further".to_string());
        };

        let g_new = prob.gradient(&y_new, f_new, opts.fd_rel_step);
        let s: Vec<f64> = y_new.iter().zip(&y).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let improvement = fy - f_new;
        y = y_new;
        g = g_new;
        fy = f_new;
        if let Some(h) = hess_inv.as_mut() {
            bfgs_update(h, &s, &yv);
        }
        if improvement <= opts.ftol * fy.abs().max(1.0) {
            break (true, "objective change below tolerance".to_string());
        }
    };

    OptimOutcome {
        x: prob.to_x(&y),
        f: fy,
        iterations,
        evaluations: prob.evaluations,
        converged,
        reason,
    }
}

fn identity(d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..d)
        .map(|i| (0..d).map(|j| if i == j { scale } else { 0.0 }).collect())
        .collect()
}

fn is_scaled_identity(h: &[Vec<f64>]) -> bool {
    let s = h[0][0];
    h.iter()
        .enumerate()
        .all(|(i, row)| row.iter().enumerate().all(|(j, &v)| if i == j { v == s } else { v == 0.0 }))
}

fn direction(h: &[Vec<f64>], g: &[f64], free: &[bool]) -> Vec<f64> {
    (0..g.len())
        .map(|i| {
            if !free[i] {
                return 0.0;
            }
            -(0..g.len()).filter(|&j| free[j]).map(|j| h[i][j] * g[j]).sum::<f64>()
        })
        .collect()
}

fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64]) {
    let sy: f64 = s.iter().zip(y).map(|(a, b)| a * b).sum();
    let yy: f64 = y.iter().map(|v| v * v).sum();
    if !(sy > 1e-12 * yy.sqrt() * s.iter().map(|v| v * v).sum::<f64>().sqrt()) {
        return;
    }
    let d = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..d).map(|i| (0..d).map(|j| h[i][j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..d {
        for j in 0..d {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_interior_minimum() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + 10.0 * (x[1] + 0.2).powi(2);
        let out = minimize_bounded(f, &[0.9, 0.8], &[-1.0, -1.0], &[1.0, 1.0], &OptimOptions::default());
        assert!(out.converged, "{}", out.reason);
        assert!((out.x[0] - 0.3).abs() < 1e-3, "{:?}", out.x);
        assert!((out.x[1] + 0.2).abs() < 1e-3, "{:?}", out.x);
    }

    #[test]
    fn minimum_on_a_bound() {
        let f = |x: &[f64]| (x[0] - 2.0).powi(2) + (x[1] - 0.5).powi(2);
        let out = minimize_bounded(f, &[0.0, 0.0], &[-1.0, -1.0], &[1.0, 1.0], &OptimOptions::default());
        assert_eq!(out.x[0], 1.0);
        assert!((out.x[1] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn rosenbrock_in_a_box() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = OptimOptions {
            max_iter: 500,
            ..OptimOptions::default()
        };
        let out = minimize_bounded(f, &[-1.2, 1.0], &[-2.0, -2.0], &[2.0, 2.0], &opts);
        // forward differences with a 1e-4 relative step limit the final accuracy
        assert!(out.f < 1e-3, "{out:?}");
        assert!((out.x[0] - 1.0).abs() < 0.05 && (out.x[1] - 1.0).abs() < 0.1);
    }

    #[test]
    fn never_returns_worse_than_start_and_stays_in_box() {
        let lower = [0.1, -0.5];
        let upper = [5.0, 0.5];
        let f = |x: &[f64]| {
            assert!(x[0] >= 0.1 && x[0] <= 5.0 && x[1] >= -0.5 && x[1] <= 0.5);
            (x[0] * 3.0).sin() + x[1].powi(2) + 0.1 * x[0]
        };
        let x0 = [2.0, 0.3];
        let f0 = f(&x0);
        let out = minimize_bounded(f, &x0, &lower, &upper, &OptimOptions::default());
        assert!(out.f <= f0);
    }
}
