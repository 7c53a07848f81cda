//! The engine checked against a straight-line re-implementation of the step
//! loop, plus the structural invariants (non-anticipativity, determinism under
//! different worker counts, clipping and the kernel bound).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use roughvol_core::engine::{simulate, ModelParams, PathRecord, SimGrid};
use roughvol_core::hurst::HurstParams;
use roughvol_core::kernel::KernelParams;

/// ln Gamma by upward recurrence past 16 and the Stirling series there.
fn ln_gamma_stirling(x: f64) -> f64 {
    let mut shift = 0.0;
    let mut z = x;
    while z < 16.0 {
        shift += z.ln();
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 / 1188.0))));
    (z - 0.5) * z.ln() - z + 0.5 * (2.0 * std::f64::consts::PI).ln() + series - shift
}

fn gamma_oracle(x: f64) -> f64 {
    ln_gamma_stirling(x).exp()
}

struct OraclePath {
    s: Vec<f64>,
    sigma: Vec<f64>,
    v: Vec<f64>,
    a: Vec<f64>,
    h: Vec<f64>,
    theta: Vec<f64>,
}

/// Every quantity recomputed from scratch at each step: kernel weights by
/// `powf`, the EWMA by its closed-form one-step solution, no caching.
#[allow(clippy::too_many_arguments)]
fn oracle_path(
    v0: f64,
    nu: f64,
    rho: f64,
    r: f64,
    alpha: f64,
    beta: f64,
    gamma_exp: f64,
    lambda: f64,
    theta_ref: f64,
    eps: f64,
    h_max: f64,
    t_end: f64,
    n_steps: usize,
    seed: u64,
    index: u64,
    s0: f64,
) -> OraclePath {
    let dt = t_end / n_steps as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let clip = |x: f64| x.max(eps).min(h_max);

    let mut out = OraclePath {
        s: vec![s0],
        sigma: vec![v0.sqrt()],
        v: vec![0.0],
        a: vec![0.0],
        h: vec![clip(alpha + beta)],
        theta: vec![v0],
    };
    let mut dz = Vec::new();
    let mut x = s0.ln();
    for n in 1..=n_steps {
        let xi: f64 = rng.sample(StandardNormal);
        let xi_perp: f64 = rng.sample(StandardNormal);
        let dw = dt.sqrt() * xi;
        dz.push(rho * dw + (1.0 - rho * rho).sqrt() * dt.sqrt() * xi_perp);

        let t_n = n as f64 * dt;
        let mut v = 0.0;
        let mut a = 0.0;
        for k in 0..n {
            let t_k = k as f64 * dt;
            let hk = out.h[k];
            let w = (t_n - t_k).powf(hk - 0.5) / gamma_oracle(hk + 0.5);
            v += w * dz[k];
            a += w * w * dt;
        }

        let sig_prev = out.sigma[n - 1];
        let keep = (-lambda * dt).exp();
        let theta = keep * out.theta[n - 1] + (1.0 - keep) * sig_prev * sig_prev;
        let h = clip(alpha * (theta / theta_ref).powf(gamma_exp) + beta);
        let sigma = v0.sqrt() * (nu * v - 0.5 * nu * nu * a).exp();
        x += (r - 0.5 * sig_prev * sig_prev) * dt + sig_prev * dw;

        out.v.push(v);
        out.a.push(a);
        out.theta.push(theta);
        out.h.push(h);
        out.sigma.push(sigma);
        out.s.push(x.exp());
    }
    out
}

fn close(got: &[f64], want: &[f64], what: &str) {
    assert_eq!(got.len(), want.len(), "{what} length");
    for (n, (g, w)) in got.iter().zip(want).enumerate() {
        let tol = 1e-12 * w.abs().max(1.0);
        assert!((g - w).abs() <= tol, "{what}[{n}]: engine {g} vs oracle {w}");
    }
}

fn full_params() -> ModelParams {
    ModelParams {
        v0: 0.05,
        nu: 1.4,
        rho: -0.6,
        r: 0.03,
        hurst: HurstParams {
            alpha: 0.25,
            beta: 0.08,
            gamma_exp: 1.5,
            lambda_decay: 12.0,
            theta_ref: Some(0.045),
            h0: None,
        },
        kernel: KernelParams::new(0.05, 0.5).unwrap(),
        ..ModelParams::default()
    }
}

#[test]
fn engine_matches_straight_line_reimplementation() {
    let p = full_params();
    let grid = SimGrid::new(0.5, 8, 2, 314_159);
    let ps = simulate(&p, &grid, 100.0).unwrap();
    for (i, rec) in ps.paths.iter().enumerate() {
        let o = oracle_path(
            p.v0, p.nu, p.rho, p.r, 0.25, 0.08, 1.5, 12.0, 0.045, 0.05, 0.5, 0.5, 8, 314_159,
            i as u64, 100.0,
        );
        close(&rec.s, &o.s, "s");
        close(&rec.sigma, &o.sigma, "sigma");
        close(&rec.v, &o.v, "v");
        close(&rec.a, &o.a, "a");
        close(&rec.h, &o.h, "h");
        close(&rec.theta, &o.theta, "theta");
    }
}

#[test]
fn oracle_hurst_path_actually_moves() {
    // guards the comparison above against a parameter set where H is static
    let o = oracle_path(
        0.05, 1.4, -0.6, 0.03, 0.25, 0.08, 1.5, 12.0, 0.045, 0.05, 0.5, 0.5, 8, 314_159, 0, 100.0,
    );
    let lo = o.h.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = o.h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(hi - lo > 1e-3, "H range {lo}..{hi}");
}

#[test]
fn stirling_oracle_agrees_with_known_gamma_values() {
    assert!((gamma_oracle(0.5) - std::f64::consts::PI.sqrt()).abs() < 2e-14);
    assert!((gamma_oracle(1.0) - 1.0).abs() < 2e-14);
    assert!((gamma_oracle(0.7) - 1.298_055_332_647_557_8).abs() < 2e-14);
}

fn prefix_equal(short: &PathRecord, long: &PathRecord, n: usize) -> bool {
    let fields = |r: &PathRecord| [r.s.clone(), r.sigma.clone(), r.v.clone(), r.a.clone(), r.h.clone(), r.theta.clone()];
    fields(short)
        .iter()
        .zip(fields(long).iter())
        .all(|(a, b)| a[..=n] == b[..=n])
}

#[test]
fn extending_the_horizon_leaves_the_past_untouched() {
    // dt = 2^-8 so that both horizons reproduce the same step exactly
    let dt = 1.0 / 256.0;
    let p = ModelParams::default();
    let mut seeds = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let seed: u64 = seeds.random();
        let n = seeds.random_range(1..40usize);
        let n_long = n + seeds.random_range(1..40usize);
        let short = simulate(&p, &SimGrid::new(n as f64 * dt, n, 3, seed), 100.0).unwrap();
        let long = simulate(&p, &SimGrid::new(n_long as f64 * dt, n_long, 3, seed), 100.0).unwrap();
        for (a, b) in short.paths.iter().zip(&long.paths) {
            assert!(prefix_equal(a, b, n), "seed {seed}, n {n}, n' {n_long}");
        }
    }
}

#[test]
fn worker_count_does_not_change_output() {
    let p = full_params();
    let grid = SimGrid::new(1.0, 50, 64, 99);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate(&p, &grid, 100.0).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one, four);
    let bits = |ps: &roughvol_core::engine::PathSet| -> Vec<u64> {
        ps.paths.iter().flat_map(|r| r.s.iter().map(|x| x.to_bits())).collect()
    };
    assert_eq!(bits(&one), bits(&four));
}

#[test]
fn hurst_stays_clipped_and_kernel_variance_bounded() {
    let mut p = full_params();
    // large alpha to push the raw map outside the admissible range
    p.hurst.alpha = 0.45;
    p.hurst.beta = 0.02;
    let grid = SimGrid::new(1.0, 100, 50, 3);
    let ps = simulate(&p, &grid, 100.0).unwrap();
    let kp = p.kernel;
    let mut hit_floor = false;
    let mut hit_cap = false;
    for rec in &ps.paths {
        for (n, (&h, &a)) in rec.h.iter().zip(&rec.a).enumerate() {
            assert!(h >= kp.epsilon && h <= kp.h_max);
            hit_floor |= h == kp.epsilon;
            hit_cap |= h == kp.h_max;
            let t = n as f64 * grid.dt();
            assert!(a <= kp.l2_bound(t) * (1.0 + 1e-12), "a[{n}] = {a}");
        }
    }
    assert!(hit_floor || hit_cap, "the clip was never exercised");
}
