//! Distributional checks of the engine against closed forms.

use num_complex::Complex64;
use roughvol_core::engine::{
    pooled_log_returns, simulate, simulate_heston, HestonParams, ModelParams, SimGrid,
};
use roughvol_core::hurst::HurstParams;
use roughvol_core::stats::mean_and_stderr;

fn bs_limit() -> ModelParams {
    ModelParams::const_rbergomi(0.04, 0.0, -0.7, 0.05, 0.3)
}

#[test]
fn zero_vol_of_vol_log_price_is_gaussian() {
    let p = bs_limit();
    let grid = SimGrid::new(1.0, 252, 100_000, 17);
    let logs = roughvol_core::engine::map_paths(&p, &grid, 100.0, None, |_, rec| {
        (rec.terminal() / 100.0).ln()
    })
    .unwrap();
    let (m, se) = mean_and_stderr(&logs);
    let want_mean = 0.05 - 0.02;
    assert!((m - want_mean).abs() <= 3.0 * se, "mean {m} vs {want_mean} (se {se})");

    // sample variance against V0 T; its standard error from the fourth moment
    let dev: Vec<f64> = logs.iter().map(|x| (x - m) * (x - m)).collect();
    let (var, var_se) = mean_and_stderr(&dev);
    assert!((var - 0.04).abs() <= 3.0 * var_se, "variance {var} (se {var_se})");
}

#[test]
fn zero_vol_of_vol_pooled_returns_have_step_variance() {
    let p = bs_limit();
    let grid = SimGrid::new(1.0, 252, 4000, 23);
    let r = pooled_log_returns(&p, &grid, 1.0).unwrap();
    assert_eq!(r.len(), 4000 * 252);
    let var = roughvol_core::stats::sample_variance(&r);
    let want = 0.04 / 252.0;
    assert!((var / want - 1.0).abs() < 0.05, "{var} vs {want}");
}

#[test]
fn discounted_price_is_a_martingale_without_correlation() {
    let p = ModelParams::ewma(0.04, 1.0, 0.0, 0.05, HurstParams::default());
    let grid = SimGrid::new(1.0, 126, 20_000, 41);
    let disc = (-0.05f64).exp();
    let st = roughvol_core::engine::terminal_prices(&p, &grid, 100.0, None).unwrap();
    let xs: Vec<f64> = st.iter().map(|s| disc * s).collect();
    let (m, se) = mean_and_stderr(&xs);
    assert!((m - 100.0).abs() <= 3.0 * se, "{m} (se {se})");
}

#[test]
fn second_moment_of_sigma_matches_lognormal_identity() {
    let p = ModelParams::const_rbergomi(0.04, 1.0, -0.7, 0.05, 0.2);
    let grid = SimGrid::new(1.0, 64, 20_000, 5);
    let ps = simulate(&p, &grid, 100.0).unwrap();
    let a = &ps.paths[0].a;
    for n in [16, 32, 64] {
        assert!(ps.paths.iter().all(|rec| rec.a[n] == a[n]));
        let sq: Vec<f64> = ps.paths.iter().map(|rec| rec.sigma[n] * rec.sigma[n]).collect();
        let (m, se) = mean_and_stderr(&sq);
        let want = 0.04 * (a[n]).exp();
        assert!((m - want).abs() <= 3.0 * se, "n={n}: {m} vs {want} (se {se})");
    }
}

#[test]
fn first_moment_of_sigma_is_square_root_of_v0() {
    // p = 1 in E[sigma^p] = V0^{p/2} exp(p (p - 1) / 2 nu^2 a): the mean of
    // sigma is sqrt(V0) whatever a is
    let p = ModelParams::const_rbergomi(0.04, 1.0, -0.7, 0.05, 0.2);
    let grid = SimGrid::new(1.0, 64, 20_000, 6);
    let ps = simulate(&p, &grid, 100.0).unwrap();
    for n in [16, 64] {
        let s: Vec<f64> = ps.paths.iter().map(|rec| rec.sigma[n]).collect();
        let (m, se) = mean_and_stderr(&s);
        assert!((m - 0.2).abs() <= 3.0 * se, "n={n}: {m} (se {se})");
    }
}

/// Heston call by Fourier inversion of the log-price characteristic function
/// (the rotation-safe form with `g = (b - d) / (b + d)`).
fn heston_call_fourier(s0: f64, k: f64, r: f64, t: f64, hp: &HestonParams, rho: f64) -> f64 {
    let i = Complex64::i();
    let phi = |u: Complex64| -> Complex64 {
        let b = hp.kappa - rho * hp.xi * i * u;
        let d = (b * b + hp.xi * hp.xi * (i * u + u * u)).sqrt();
        let g = (b - d) / (b + d);
        let e = (-d * t).exp();
        let c = hp.kappa / (hp.xi * hp.xi) * ((b - d) * t - 2.0 * ((1.0 - g * e) / (1.0 - g)).ln());
        let dd = (b - d) / (hp.xi * hp.xi) * (1.0 - e) / (1.0 - g * e);
        (i * u * (s0.ln() + r * t) + c * hp.theta_bar + dd * hp.v0).exp()
    };
    let lk = k.ln();
    let forward = phi(-i);
    let integrand = |u: f64, shift: Complex64, norm: Complex64| -> f64 {
        let z = Complex64::new(u, 0.0);
        ((-i * z * lk).exp() * phi(z + shift) / (i * z * norm)).re
    };
    // composite Simpson on (0, 200]; the integrands are smooth and decay fast
    let n = 40_000;
    let (lo, hi) = (1e-10, 200.0);
    let h = (hi - lo) / n as f64;
    let simpson = |f: &dyn Fn(f64) -> f64| -> f64 {
        let mut acc = f(lo) + f(hi);
        for j in 1..n {
            let w = if j % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(lo + j as f64 * h);
        }
        acc * h / 3.0
    };
    let one = Complex64::new(1.0, 0.0);
    let p2 = 0.5 + simpson(&|u| integrand(u, Complex64::new(0.0, 0.0), one)) / std::f64::consts::PI;
    let p1 = 0.5 + simpson(&|u| integrand(u, -i, forward)) / std::f64::consts::PI;
    s0 * p1 - k * (-r * t).exp() * p2
}

fn heston_case() -> HestonParams {
    HestonParams {
        kappa: 2.0,
        theta_bar: 0.04,
        xi: 0.3,
        v0: 0.04,
    }
}

#[test]
fn fourier_oracle_reproduces_reference_value() {
    // 30-digit quadrature of the same integrals, frozen
    let want = 10.394_218_565_150_161;
    let got = heston_call_fourier(100.0, 100.0, 0.05, 1.0, &heston_case(), -0.7);
    assert!((got - want).abs() < 1e-7, "{got}");
}

#[test]
fn heston_monte_carlo_matches_fourier_price() {
    let hp = heston_case();
    let p = ModelParams::heston(hp, -0.7, 0.05);
    let grid = SimGrid::new(1.0, 252, 100_000, 2024);
    let ps = simulate_heston(&p, &grid, 100.0).unwrap();
    let disc = (-0.05f64).exp();
    let pay: Vec<f64> = ps.paths.iter().map(|rec| disc * (rec.terminal() - 100.0).max(0.0)).collect();
    let (price, se) = mean_and_stderr(&pay);
    let want = heston_call_fourier(100.0, 100.0, 0.05, 1.0, &hp, -0.7);
    assert!((price - want).abs() <= 3.0 * se, "MC {price} (se {se}) vs {want}");
}

#[test]
fn heston_with_frozen_variance_is_black_scholes() {
    let hp = HestonParams {
        kappa: 1.5,
        theta_bar: 0.04,
        xi: 0.0,
        v0: 0.04,
    };
    let p = ModelParams::heston(hp, 0.0, 0.05);
    let ps = simulate_heston(&p, &SimGrid::new(1.0, 50, 50_000, 8), 100.0).unwrap();
    let disc = (-0.05f64).exp();
    let pay: Vec<f64> = ps.paths.iter().map(|rec| disc * (rec.terminal() - 100.0).max(0.0)).collect();
    let (price, se) = mean_and_stderr(&pay);
    assert!((price - 10.450_583_572_185_565).abs() <= 3.0 * se, "{price} (se {se})");
}
