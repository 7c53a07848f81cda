//! Return-density estimation and the Jensen-Shannon distance.
//!
//! Densities are Gaussian kernel estimates with Silverman's bandwidth,
//! evaluated on an equally spaced grid (512 points unless the bandwidth calls
//! for a finer one) and renormalised into a probability mass vector. The JS
//! distance is taken between two such mass vectors on a shared grid, with
//! base-2 logarithms so it lies in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::engine::{log_returns, PathSet};
use crate::stats::{mean, quantile_sorted};
use crate::{Result, RoughVolError};

pub const GRID_POINTS: usize = 512;

/// Upper limit for the refined shared grid.
pub const MAX_GRID_POINTS: usize = 1 << 17;

/// Grid points per bandwidth required on the shared grid. A heavy-tailed
/// sample stretches the pooled range, and once the spacing exceeds the
/// bandwidth the point-evaluated kernels alias and the distance jumps around.
const POINTS_PER_BANDWIDTH: f64 = 4.0;

/// Kernel contributions beyond this many bandwidths are dropped (`exp(-32)`).
const KERNEL_CUTOFF: f64 = 8.0;

/// Grid margin, in bandwidths, beyond the pooled sample range.
const GRID_MARGIN: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid_points: Vec<f64>,
    pub masses: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityEstimate {
    /// Wraps precomputed masses, normalising them to sum to one.
    pub fn from_masses(grid_points: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if grid_points.len() != masses.len() || masses.is_empty() {
            return Err(RoughVolError::IncompatibleGrids);
        }
        if masses.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(RoughVolError::domain("masses must be finite and non-negative"));
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(RoughVolError::domain("masses sum to zero"));
        }
        Ok(Self {
            grid_points,
            masses: masses.into_iter().map(|m| m / total).collect(),
            bandwidth: f64::NAN,
        })
    }

    pub fn mean(&self) -> f64 {
        self.grid_points
            .iter()
            .zip(&self.masses)
            .map(|(x, m)| x * m)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.grid_points
            .iter()
            .zip(&self.masses)
            .map(|(x, m)| m * (x - mu) * (x - mu))
            .sum()
    }
}

/// `0.9 min(sd, IQR / 1.34) n^(-1/5)`; falls back to the standard deviation
/// when the interquartile range is zero.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    Ok(sorted_with_bandwidth(samples)?.1)
}

/// Sorted copy of the samples with their Silverman bandwidth.
fn sorted_with_bandwidth(samples: &[f64]) -> Result<(Vec<f64>, f64)> {
    if samples.len() < 2 {
        return Err(RoughVolError::InsufficientData {
            needed: 2,
            got: samples.len(),
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(RoughVolError::DegenerateSample("non-finite sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = bandwidth_sorted(&sorted)?;
    Ok((sorted, h))
}

fn bandwidth_sorted(sorted: &[f64]) -> Result<f64> {
    let n = sorted.len() as f64;
    let m = mean(sorted);
    let sd = (sorted.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt();
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(spread > 0.0) || spread <= 1e-14 * m.abs() {
        return Err(RoughVolError::DegenerateSample(
            "samples have zero spread".into(),
        ));
    }
    Ok(0.9 * spread * n.powf(-0.2))
}

/// Evaluation points `lo + (hi - lo) i / 511`.
pub fn density_grid(grid_lo: f64, grid_hi: f64) -> Vec<f64> {
    grid_with(grid_lo, grid_hi, GRID_POINTS)
}

fn grid_with(grid_lo: f64, grid_hi: f64, points: usize) -> Vec<f64> {
    let last = (points - 1) as f64;
    (0..points)
        .map(|i| grid_lo + (grid_hi - grid_lo) * (i as f64 / last))
        .collect()
}

/// Number of points for a shared grid over `[lo, hi]` whose narrower kernel
/// has bandwidth `h`: at least [`GRID_POINTS`], at most [`MAX_GRID_POINTS`].
pub fn shared_grid_points(lo: f64, hi: f64, h: f64) -> usize {
    let wanted = ((hi - lo) / h * POINTS_PER_BANDWIDTH).ceil() + 1.0;
    if wanted.is_finite() {
        (wanted as usize).clamp(GRID_POINTS, MAX_GRID_POINTS)
    } else {
        MAX_GRID_POINTS
    }
}

/// KDE on the standard 512-point grid over `[grid_lo, grid_hi]`.
pub fn estimate_density(samples: &[f64], grid_lo: f64, grid_hi: f64) -> Result<DensityEstimate> {
    estimate_density_with(samples, grid_lo, grid_hi, GRID_POINTS)
}

pub fn estimate_density_with(
    samples: &[f64],
    grid_lo: f64,
    grid_hi: f64,
    points: usize,
) -> Result<DensityEstimate> {
    if points < 2 {
        return Err(RoughVolError::invalid("a density grid needs at least 2 points"));
    }
    let (sorted, bandwidth) = sorted_with_bandwidth(samples)?;
    density_sorted(&sorted, bandwidth, grid_lo, grid_hi, points)
}

/// KDE of an ascending sample. Accumulating in sorted order makes the
/// estimate independent of the order the samples arrived in.
fn density_sorted(
    sorted: &[f64],
    bandwidth: f64,
    grid_lo: f64,
    grid_hi: f64,
    points: usize,
) -> Result<DensityEstimate> {
    if !(grid_lo < grid_hi) || !grid_lo.is_finite() || !grid_hi.is_finite() {
        return Err(RoughVolError::domain(format!(
            "density grid needs lo < hi, got [{grid_lo}, {grid_hi}]"
        )));
    }
    let grid_points = grid_with(grid_lo, grid_hi, points);
    let step = (grid_hi - grid_lo) / (points - 1) as f64;
    let reach = KERNEL_CUTOFF * bandwidth;
    let inv_h = 1.0 / bandwidth;
    let d = step * inv_h;
    let ratio_step = (-d * d).exp();
    let mut density = vec![0.0; points];
    for &x in sorted {
        let first = ((x - reach - grid_lo) / step).ceil().max(0.0);
        let last = ((x + reach - grid_lo) / step).floor().min((points - 1) as f64);
        if first > last {
            continue;
        }
        // exp(-u^2/2) along the equally spaced grid by the exact recurrence
        // e_{i+1} = e_i r_i, r_{i+1} = r_i exp(-d^2), with d the spacing in
        // bandwidths
        let first = first as usize;
        let u = (grid_points[first] - x) * inv_h;
        let mut e = (-0.5 * u * u).exp();
        let mut r = (-u * d - 0.5 * d * d).exp();
        for slot in &mut density[first..=last as usize] {
            *slot += e;
            e *= r;
            r *= ratio_step;
        }
    }
    let total: f64 = density.iter().sum();
    if !(total > 0.0) {
        return Err(RoughVolError::domain(
            "density grid does not cover the samples",
        ));
    }
    let masses = density.into_iter().map(|d| d / total).collect();
    Ok(DensityEstimate {
        grid_points,
        masses,
        bandwidth,
    })
}

/// Shared evaluation range for two samples: pooled min/max widened by three
/// times the larger of the two bandwidths.
pub fn shared_grid(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    let (sa, ha) = sorted_with_bandwidth(a)?;
    let (sb, hb) = sorted_with_bandwidth(b)?;
    Ok(shared_range(&sa, ha, &sb, hb))
}

fn shared_range(sa: &[f64], ha: f64, sb: &[f64], hb: f64) -> (f64, f64) {
    let h = ha.max(hb);
    let lo = sa[0].min(sb[0]);
    let hi = sa[sa.len() - 1].max(sb[sb.len() - 1]);
    (lo - GRID_MARGIN * h, hi + GRID_MARGIN * h)
}

pub fn js_distance(p: &DensityEstimate, q: &DensityEstimate) -> Result<f64> {
    if p.grid_points != q.grid_points || p.masses.len() != q.masses.len() {
        return Err(RoughVolError::IncompatibleGrids);
    }
    let mut kl_p = 0.0;
    let mut kl_q = 0.0;
    for (&pi, &qi) in p.masses.iter().zip(&q.masses) {
        let m = 0.5 * (pi + qi);
        if m <= 0.0 {
            continue;
        }
        if pi > 0.0 {
            kl_p += pi * (pi / m).log2();
        }
        if qi > 0.0 {
            kl_q += qi * (qi / m).log2();
        }
    }
    let js = 0.5 * kl_p + 0.5 * kl_q;
    Ok(js.max(0.0).sqrt().min(1.0))
}

/// A sample sorted once, with its Silverman bandwidth, for repeated
/// comparisons against other samples.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    sorted: Vec<f64>,
    bandwidth: f64,
}

impl PreparedSample {
    pub fn new(samples: &[f64]) -> Result<Self> {
        let (sorted, bandwidth) = sorted_with_bandwidth(samples)?;
        Ok(Self { sorted, bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }
}

/// JS distance between the KDEs of two raw samples on their shared grid,
/// refined beyond 512 points when the pooled range is wide relative to the
/// narrower bandwidth.
pub fn js_distance_samples(a: &[f64], b: &[f64]) -> Result<f64> {
    js_distance_prepared(&PreparedSample::new(a)?, &PreparedSample::new(b)?)
}

pub fn js_distance_prepared(a: &PreparedSample, b: &PreparedSample) -> Result<f64> {
    let (sa, ha) = (&a.sorted, a.bandwidth);
    let (sb, hb) = (&b.sorted, b.bandwidth);
    let (lo, hi) = shared_range(sa, ha, sb, hb);
    let points = shared_grid_points(lo, hi, ha.min(hb));
    js_distance(
        &density_sorted(sa, ha, lo, hi, points)?,
        &density_sorted(sb, hb, lo, hi, points)?,
    )
}

/// One-step log returns `ln(s[n+1] / s[n])` pooled over every path and step.
pub fn model_return_distribution(paths: &PathSet) -> Vec<f64> {
    paths.paths.iter().flat_map(|p| log_returns(&p.s)).collect()
}
