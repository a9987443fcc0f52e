//! Pointwise solution statistics pooled across sampled meshes.
//!
//! Every solve contributes its (x_k, u_k) pairs to a binned accumulator over
//! [0, 1]. Bins keep (count, sum, sum of squares), which makes accumulators
//! mergeable by plain addition: the parallel harness gives each batch its
//! own accumulator and merges them in a fixed order, so results are
//! bit-identical no matter how many workers ran.

use crate::error::{Error, Result};
use crate::solvers::SampledSolution;

/// Per-bin retention of the joint (x, u) distribution. Opt-in because it
/// costs bins * u_bins cells.
#[derive(Debug, Clone, PartialEq)]
struct DensityRetention {
    u_min: f64,
    u_max: f64,
    u_bins: usize,
    /// Row-major (x bin, u bin) counts.
    counts: Vec<u64>,
    retained: u64,
}

/// Streaming accumulator of pointwise solution moments.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    edges: Vec<f64>,
    count: Vec<u64>,
    sum: Vec<f64>,
    sumsq: Vec<f64>,
    solutions: u64,
    density: Option<DensityRetention>,
}

impl PointCloud {
    /// Accumulator with `bins` uniform bins over [0, 1].
    pub fn new(bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidArgument(
                "point cloud needs at least 2 bins".into(),
            ));
        }
        let edges = (0..=bins).map(|j| j as f64 / bins as f64).collect();
        Self::with_edges(edges)
    }

    /// Accumulator over a custom partition of [0, 1]. The edges must start
    /// at 0, end at 1, and be strictly increasing.
    pub fn with_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 3 {
            return Err(Error::InvalidArgument(
                "point cloud needs at least 2 bins".into(),
            ));
        }
        if edges[0] != 0.0 || *edges.last().unwrap() != 1.0 {
            return Err(Error::InvalidArgument(
                "bin edges must run from 0 to 1".into(),
            ));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "bin edges must be strictly increasing".into(),
            ));
        }
        let bins = edges.len() - 1;
        Ok(Self {
            edges,
            count: vec![0; bins],
            sum: vec![0.0; bins],
            sumsq: vec![0.0; bins],
            solutions: 0,
            density: None,
        })
    }

    pub fn bins(&self) -> usize {
        self.count.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Number of solutions accumulated so far.
    pub fn solutions(&self) -> u64 {
        self.solutions
    }

    /// Turns on (x, u) retention over `[u_min, u_max]` with `u_bins` cells
    /// per x bin. Must be configured before anything is accumulated.
    pub fn enable_density_retention(&mut self, u_min: f64, u_max: f64, u_bins: usize) -> Result<()> {
        if self.solutions > 0 {
            return Err(Error::InvalidState(
                "density retention must be enabled before accumulation".into(),
            ));
        }
        if !(u_min.is_finite() && u_max.is_finite()) || u_min >= u_max {
            return Err(Error::InvalidArgument(format!(
                "density range [{u_min}, {u_max}] is empty or not finite"
            )));
        }
        if u_bins < 1 {
            return Err(Error::InvalidArgument(
                "density retention needs at least 1 u bin".into(),
            ));
        }
        self.density = Some(DensityRetention {
            u_min,
            u_max,
            u_bins,
            counts: vec![0; self.count.len() * u_bins],
            retained: 0,
        });
        Ok(())
    }

    fn x_bin(&self, x: f64) -> usize {
        // Last edge <= x; interior points satisfy 0 < x < 1 so the index is
        // always a valid bin.
        self.edges.partition_point(|&e| e <= x) - 1
    }

    /// Deposits every (x_k, u_k) pair of `sol`.
    pub fn accumulate(&mut self, sol: &SampledSolution) {
        let bins = self.count.len();
        for (&x, &u) in sol.mesh().interior().iter().zip(sol.values()) {
            let j = self.x_bin(x).min(bins - 1);
            self.count[j] += 1;
            self.sum[j] += u;
            self.sumsq[j] += u * u;
            if let Some(d) = self.density.as_mut() {
                if u >= d.u_min && u <= d.u_max {
                    let width = (d.u_max - d.u_min) / d.u_bins as f64;
                    let cell = (((u - d.u_min) / width) as usize).min(d.u_bins - 1);
                    d.counts[j * d.u_bins + cell] += 1;
                    d.retained += 1;
                }
            }
        }
        self.solutions += 1;
    }

    /// Adds another accumulator with identical binning into this one.
    pub fn merge(&mut self, other: &PointCloud) -> Result<()> {
        if self.edges != other.edges {
            return Err(Error::InvalidArgument(
                "cannot merge point clouds with different bin edges".into(),
            ));
        }
        match (&mut self.density, &other.density) {
            (None, None) => {}
            (Some(a), Some(b)) => {
                if a.u_min != b.u_min || a.u_max != b.u_max || a.u_bins != b.u_bins {
                    return Err(Error::InvalidArgument(
                        "cannot merge point clouds with different density retention".into(),
                    ));
                }
                for (c, o) in a.counts.iter_mut().zip(&b.counts) {
                    *c += o;
                }
                a.retained += b.retained;
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "cannot merge point clouds with different density retention".into(),
                ));
            }
        }
        for j in 0..self.count.len() {
            self.count[j] += other.count[j];
            self.sum[j] += other.sum[j];
            self.sumsq[j] += other.sumsq[j];
        }
        self.solutions += other.solutions;
        Ok(())
    }

    /// Estimates pointwise mean and variance per bin. Bins with fewer than
    /// two points cannot carry an unbiased variance; their mean and variance
    /// are filled by linear interpolation between the nearest estimated bins
    /// (clamped beyond the outermost ones) and flagged as filled.
    pub fn finalize_moments(&self) -> Result<MomentField> {
        let bins = self.count.len();
        let valid: Vec<bool> = self.count.iter().map(|&c| c >= 2).collect();
        if !valid.iter().any(|&v| v) {
            return Err(Error::InsufficientData(
                "no bin holds two or more samples".into(),
            ));
        }
        let centers: Vec<f64> = (0..bins)
            .map(|j| 0.5 * (self.edges[j] + self.edges[j + 1]))
            .collect();
        let mut mu = vec![0.0; bins];
        let mut var = vec![0.0; bins];
        for j in 0..bins {
            if valid[j] {
                let c = self.count[j] as f64;
                mu[j] = self.sum[j] / c;
                // Unbiased (n-1) estimator; clamp the tiny negatives that
                // cancellation can produce.
                var[j] = ((self.sumsq[j] - self.sum[j] * self.sum[j] / c) / (c - 1.0)).max(0.0);
            }
        }
        // Fill invalid bins between/beyond their nearest valid neighbors.
        let valid_idx: Vec<usize> = (0..bins).filter(|&j| valid[j]).collect();
        for j in 0..bins {
            if valid[j] {
                continue;
            }
            let right_pos = valid_idx.partition_point(|&v| v < j);
            let left = right_pos.checked_sub(1).map(|p| valid_idx[p]);
            let right = valid_idx.get(right_pos).copied();
            match (left, right) {
                (Some(l), Some(r)) => {
                    let t = (centers[j] - centers[l]) / (centers[r] - centers[l]);
                    mu[j] = mu[l] + t * (mu[r] - mu[l]);
                    var[j] = var[l] + t * (var[r] - var[l]);
                }
                (Some(l), None) => {
                    mu[j] = mu[l];
                    var[j] = var[l];
                }
                (None, Some(r)) => {
                    mu[j] = mu[r];
                    var[j] = var[r];
                }
                (None, None) => unreachable!("at least one valid bin exists"),
            }
        }
        let filled = valid.iter().map(|&v| !v).collect();
        Ok(MomentField {
            edges: self.edges.clone(),
            centers,
            mu,
            var,
            count: self.count.clone(),
            filled,
            solutions: self.solutions,
            periodic: false,
        })
    }
}

/// Pointwise moment estimates on the bin grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentField {
    edges: Vec<f64>,
    centers: Vec<f64>,
    mu: Vec<f64>,
    var: Vec<f64>,
    count: Vec<u64>,
    filled: Vec<bool>,
    solutions: u64,
    periodic: bool,
}

impl MomentField {
    #[cfg(test)]
    pub(crate) fn from_parts(
        edges: Vec<f64>,
        mu: Vec<f64>,
        var: Vec<f64>,
        solutions: u64,
    ) -> Self {
        let bins = edges.len() - 1;
        assert_eq!(mu.len(), bins);
        assert_eq!(var.len(), bins);
        let centers = (0..bins)
            .map(|j| 0.5 * (edges[j] + edges[j + 1]))
            .collect();
        Self {
            edges,
            centers,
            mu,
            var,
            count: vec![2; bins],
            filled: vec![false; bins],
            solutions,
            periodic: false,
        }
    }

    /// Marks the field as living on a periodic domain (x = 0 and x = 1
    /// identified), which derivative estimates consume to wrap their
    /// stencils instead of using one-sided boundary formulas.
    pub fn with_periodic(mut self, periodic: bool) -> Self {
        self.periodic = periodic;
        self
    }

    /// Whether the field lives on a periodic domain.
    pub fn periodic(&self) -> bool {
        self.periodic
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// Bin centers, the grid on which the moments live.
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Pointwise mean estimate per bin.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Pointwise (unbiased) variance estimate per bin.
    pub fn var(&self) -> &[f64] {
        &self.var
    }

    pub fn count(&self) -> &[u64] {
        &self.count
    }

    /// True where the bin had fewer than two points and was interpolated.
    pub fn filled(&self) -> &[bool] {
        &self.filled
    }

    pub fn solutions(&self) -> u64 {
        self.solutions
    }
}

/// Scalar summary of a moment field's variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingDiagnostics {
    /// Bin-width-weighted average of the pointwise variance over [0, 1].
    pub vbar: f64,
    /// Number of solutions behind the estimate.
    pub m_used: u64,
}

/// Averages the pointwise variance over the domain, weighting each bin by
/// its width.
pub fn average_variance(field: &MomentField) -> SamplingDiagnostics {
    let mut vbar = 0.0;
    for j in 0..field.len() {
        let width = field.edges[j + 1] - field.edges[j];
        vbar += field.var[j] * width;
    }
    SamplingDiagnostics {
        vbar,
        m_used: field.solutions,
    }
}

/// Normalized joint density of (x, u) over the retention rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    x_edges: Vec<f64>,
    u_min: f64,
    u_max: f64,
    u_bins: usize,
    /// Row-major (x bin, u bin) densities.
    values: Vec<f64>,
}

impl DensityGrid {
    pub fn x_bins(&self) -> usize {
        self.x_edges.len() - 1
    }

    pub fn u_bins(&self) -> usize {
        self.u_bins
    }

    pub fn x_edges(&self) -> &[f64] {
        &self.x_edges
    }

    pub fn u_range(&self) -> (f64, f64) {
        (self.u_min, self.u_max)
    }

    pub fn value(&self, x_bin: usize, u_bin: usize) -> f64 {
        self.values[x_bin * self.u_bins + u_bin]
    }

    /// Center of u bin `j`.
    pub fn u_center(&self, j: usize) -> f64 {
        let width = (self.u_max - self.u_min) / self.u_bins as f64;
        self.u_min + (j as f64 + 0.5) * width
    }
}

/// Extracts the normalized (x, u) density from a cloud with retention
/// enabled. `u_bins` must match the retention configuration; the result
/// integrates to 1 over the retention rectangle.
pub fn density_grid(cloud: &PointCloud, u_bins: usize) -> Result<DensityGrid> {
    let d = cloud.density.as_ref().ok_or_else(|| {
        Error::InvalidState("density retention was not enabled on this cloud".into())
    })?;
    if u_bins != d.u_bins {
        return Err(Error::InvalidArgument(format!(
            "requested {u_bins} u bins but the cloud retained {}",
            d.u_bins
        )));
    }
    if d.retained == 0 {
        return Err(Error::InsufficientData(
            "no points fell inside the density retention rectangle".into(),
        ));
    }
    let u_width = (d.u_max - d.u_min) / d.u_bins as f64;
    let total = d.retained as f64;
    let bins = cloud.count.len();
    let mut values = vec![0.0; bins * d.u_bins];
    for j in 0..bins {
        let x_width = cloud.edges[j + 1] - cloud.edges[j];
        let cell_area = x_width * u_width;
        for k in 0..d.u_bins {
            values[j * d.u_bins + k] = d.counts[j * d.u_bins + k] as f64 / (total * cell_area);
        }
    }
    Ok(DensityGrid {
        x_edges: cloud.edges.clone(),
        u_min: d.u_min,
        u_max: d.u_max,
        u_bins: d.u_bins,
        values,
    })
}
