//! Construction of mesh mappings from estimated solution moments.
//!
//! A moment field gives mean and variance estimates on bin centers. From
//! them we form a steepness integrand g, integrate it into a normalized
//! cumulative F(x) = q(x)/q(1), and return Q = F⁻¹ as a tabulated mapping:
//! pushing a uniform mesh through Q piles points where g is large.

use crate::error::{Error, Result};
use crate::mesh::MeshMapping;
use crate::moments::MomentField;

/// Which steepness integrand drives the mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriterionKind {
    /// Integrand √|μ̂′|: targets steep gradients.
    Q1,
    /// Integrand |μ̂″|^a · v̂^b: targets curvature the sampled meshes
    /// disagree about, where the variance is high.
    Q2,
}

/// Configuration of the mapping criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct QCriterion {
    pub kind: CriterionKind,
    /// Odd moving-average width applied to μ̂ before differencing; 1 means
    /// no smoothing. Monte Carlo noise amplifies under differentiation, so
    /// the defaults smooth more for the second derivative.
    pub smoothing_window: usize,
    /// Relative floor added to the integrand, as a fraction of its maximum.
    /// Keeps F strictly increasing where the integrand vanishes.
    pub epsilon_floor: f64,
    /// Exponent on |μ̂″| in the Q2 integrand.
    pub curvature_exponent: f64,
    /// Exponent on v̂ in the Q2 integrand.
    pub variance_exponent: f64,
}

impl QCriterion {
    /// Gradient-based criterion with its default smoothing width.
    pub fn q1() -> Self {
        Self {
            kind: CriterionKind::Q1,
            smoothing_window: 5,
            epsilon_floor: 1e-6,
            curvature_exponent: 2.0,
            variance_exponent: 3.0,
        }
    }

    /// Curvature-and-variance criterion with its default smoothing width.
    pub fn q2() -> Self {
        Self {
            smoothing_window: 7,
            ..Self::q1()
        }
        .with_kind(CriterionKind::Q2)
    }

    fn with_kind(mut self, kind: CriterionKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_smoothing_window(mut self, window: usize) -> Result<Self> {
        self.smoothing_window = window;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.smoothing_window == 0 || self.smoothing_window % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "smoothing window must be an odd positive integer, got {}",
                self.smoothing_window
            )));
        }
        if !self.epsilon_floor.is_finite() || self.epsilon_floor <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "epsilon floor must be positive, got {}",
                self.epsilon_floor
            )));
        }
        if !self.curvature_exponent.is_finite() || !self.variance_exponent.is_finite() {
            return Err(Error::InvalidArgument(
                "criterion exponents must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Moving average with symmetric windows that shrink toward the ends, so
/// every output is an average of real samples centered on its index.
fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    if window == 1 {
        return values.to_vec();
    }
    let half = (window - 1) / 2;
    let last = values.len() - 1;
    (0..values.len())
        .map(|j| {
            let hw = half.min(j).min(last - j);
            let slice = &values[j - hw..=j + hw];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

/// Moving average on a periodic grid: the window wraps around the seam, so
/// every output averages exactly `window` samples.
fn smooth_periodic(values: &[f64], window: usize) -> Vec<f64> {
    if window == 1 {
        return values.to_vec();
    }
    let len = values.len();
    let half = (window - 1) / 2;
    (0..len)
        .map(|j| {
            let mut sum = 0.0;
            for k in 0..window {
                sum += values[(j + len + k - half) % len];
            }
            sum / window as f64
        })
        .collect()
}

/// Shared validation for the derivative estimators: checks lengths, order,
/// window, and grid uniformity, and returns the grid spacing.
fn validate_derivative_args(
    values: &[f64],
    grid: &[f64],
    order: u32,
    smoothing_window: usize,
) -> Result<f64> {
    let len = values.len();
    if len < 3 {
        return Err(Error::InvalidArgument(format!(
            "derivative needs at least 3 points, got {len}"
        )));
    }
    if grid.len() != len {
        return Err(Error::InvalidArgument(format!(
            "grid has {} points but values has {len}",
            grid.len()
        )));
    }
    if !(order == 1 || order == 2) {
        return Err(Error::InvalidArgument(format!(
            "derivative order must be 1 or 2, got {order}"
        )));
    }
    if smoothing_window == 0 || smoothing_window % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "smoothing window must be an odd positive integer, got {smoothing_window}"
        )));
    }
    let h = (grid[len - 1] - grid[0]) / (len - 1) as f64;
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::InvalidArgument("grid must be increasing".into()));
    }
    for w in grid.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h {
            return Err(Error::InvalidArgument(
                "derivative grid must be uniform".into(),
            ));
        }
    }
    Ok(h)
}

/// First or second finite-difference derivative on a uniform grid, with
/// optional moving-average pre-smoothing of the input (`smoothing_window`
/// of 1 disables it). Interior points use centered differences; the first
/// derivative uses second-order one-sided stencils at the ends, and the
/// second derivative copies its nearest interior estimate there.
pub fn numeric_derivative(
    values: &[f64],
    grid: &[f64],
    order: u32,
    smoothing_window: usize,
) -> Result<Vec<f64>> {
    let h = validate_derivative_args(values, grid, order, smoothing_window)?;
    let len = values.len();
    let v = smooth(values, smoothing_window);
    let mut out = vec![0.0; len];
    match order {
        1 => {
            for j in 1..len - 1 {
                out[j] = (v[j + 1] - v[j - 1]) / (2.0 * h);
            }
            out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
            out[len - 1] = (3.0 * v[len - 1] - 4.0 * v[len - 2] + v[len - 3]) / (2.0 * h);
        }
        _ => {
            for j in 1..len - 1 {
                out[j] = (v[j - 1] - 2.0 * v[j] + v[j + 1]) / (h * h);
            }
            out[0] = out[1];
            out[len - 1] = out[len - 2];
        }
    }
    Ok(out)
}

/// The periodic counterpart of [`numeric_derivative`] for values on a grid
/// that covers the unit circle (x = 0 and x = 1 identified): smoothing and
/// the centered stencils wrap around the seam, so no one-sided formulas are
/// needed. The wrap gap `grid[0] + 1 - grid[last]` must equal the grid
/// spacing, which holds for the centers of any uniform bin partition of
/// [0, 1].
pub fn numeric_derivative_periodic(
    values: &[f64],
    grid: &[f64],
    order: u32,
    smoothing_window: usize,
) -> Result<Vec<f64>> {
    let h = validate_derivative_args(values, grid, order, smoothing_window)?;
    let len = values.len();
    if smoothing_window >= len {
        return Err(Error::InvalidArgument(format!(
            "smoothing window {smoothing_window} must be smaller than the grid ({len} points)"
        )));
    }
    let wrap = grid[0] + 1.0 - grid[len - 1];
    if (wrap - h).abs() > 1e-9 * h {
        return Err(Error::InvalidArgument(format!(
            "periodic derivative needs a wrap gap equal to the spacing, got {wrap:.3e} vs {h:.3e}"
        )));
    }
    let v = smooth_periodic(values, smoothing_window);
    let mut out = vec![0.0; len];
    for j in 0..len {
        let prev = (j + len - 1) % len;
        let next = (j + 1) % len;
        out[j] = match order {
            1 => (v[next] - v[prev]) / (2.0 * h),
            _ => (v[prev] - 2.0 * v[j] + v[next]) / (h * h),
        };
    }
    Ok(out)
}

/// Builds the mesh mapping Q from a moment field under the given criterion.
///
/// The integrand is evaluated on the bin centers, extended to the domain
/// endpoints by clamping, raised onto the floor, and integrated with the
/// trapezoid rule. The normalized cumulative F is strictly increasing, so
/// Q = F⁻¹ is realized exactly by swapping knot coordinates.
pub fn build_q(field: &MomentField, crit: &QCriterion) -> Result<MeshMapping> {
    crit.validate()?;
    let centers = field.centers();
    let deriv = if field.periodic() {
        numeric_derivative_periodic
    } else {
        numeric_derivative
    };
    let mut g = match crit.kind {
        CriterionKind::Q1 => deriv(field.mu(), centers, 1, crit.smoothing_window)?
            .into_iter()
            .map(|d| d.abs().sqrt())
            .collect::<Vec<f64>>(),
        CriterionKind::Q2 => {
            let d2 = deriv(field.mu(), centers, 2, crit.smoothing_window)?;
            d2.iter()
                .zip(field.var())
                .map(|(&c, &v)| c.abs().powf(crit.curvature_exponent) * v.powf(crit.variance_exponent))
                .collect()
        }
    };
    let gmax = g.iter().copied().fold(0.0_f64, f64::max);
    if !gmax.is_finite() {
        return Err(Error::DegenerateCriterion(
            "criterion integrand is not finite".into(),
        ));
    }
    if gmax <= 0.0 {
        return Err(Error::DegenerateCriterion(
            "criterion integrand vanishes identically; the moment field carries no steepness signal"
                .into(),
        ));
    }
    let floor = crit.epsilon_floor * gmax;
    for v in &mut g {
        *v += floor;
    }
    // Extend to the domain endpoints so the mapping's knots span [0, 1]
    // exactly: clamped integrand values on a Dirichlet domain, the wrapped
    // average at the seam on a periodic one (both endpoints are the same
    // physical point there).
    let (g_left, g_right) = if field.periodic() {
        let seam = 0.5 * (g[0] + *g.last().unwrap());
        (seam, seam)
    } else {
        (g[0], *g.last().unwrap())
    };
    let mut xs = Vec::with_capacity(g.len() + 2);
    xs.push(0.0);
    xs.extend_from_slice(centers);
    xs.push(1.0);
    let mut gs = Vec::with_capacity(g.len() + 2);
    gs.push(g_left);
    gs.extend_from_slice(&g);
    gs.push(g_right);

    let mut q = vec![0.0; xs.len()];
    for i in 1..xs.len() {
        q[i] = q[i - 1] + 0.5 * (gs[i - 1] + gs[i]) * (xs[i] - xs[i - 1]);
    }
    let q_total = q[xs.len() - 1];
    if !(q_total.is_finite() && q_total > 0.0) {
        return Err(Error::DegenerateCriterion(format!(
            "criterion integral is {q_total} even after flooring"
        )));
    }
    let mut knots: Vec<(f64, f64)> = q
        .iter()
        .zip(&xs)
        .map(|(&qi, &xi)| (qi / q_total, xi))
        .collect();
    knots[0] = (0.0, 0.0);
    let last = knots.len() - 1;
    knots[last] = (1.0, 1.0);
    MeshMapping::tabulated(knots)
}

/// Side-by-side evaluation of several mappings on a common set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingTable {
    labels: Vec<String>,
    points: Vec<f64>,
    /// One column per mapping, each aligned with `points`.
    columns: Vec<Vec<f64>>,
}

impl MappingTable {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }
}

/// Tabulates Q(x) for each labeled mapping at `eval_points`.
pub fn compare_mappings(mappings: &[(String, &MeshMapping)], eval_points: &[f64]) -> MappingTable {
    let columns = mappings
        .iter()
        .map(|(_, q)| eval_points.iter().map(|&s| q.evaluate(s)).collect())
        .collect();
    MappingTable {
        labels: mappings.iter().map(|(l, _)| l.clone()).collect(),
        points: eval_points.to_vec(),
        columns,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn uniform_centers(bins: usize) -> Vec<f64> {
        (0..bins).map(|j| (j as f64 + 0.5) / bins as f64).collect()
    }

    fn field_from_mu(mu: Vec<f64>) -> MomentField {
        let bins = mu.len();
        let edges = (0..=bins).map(|j| j as f64 / bins as f64).collect();
        MomentField::from_parts(edges, mu, vec![1.0; bins], 100)
    }

    #[test]
    fn derivatives_of_linear_data() {
        let grid = uniform_centers(101);
        let d1 = numeric_derivative(&grid, &grid, 1, 5).unwrap();
        let d2 = numeric_derivative(&grid, &grid, 2, 5).unwrap();
        for j in 0..grid.len() {
            assert_relative_eq!(d1[j], 1.0, epsilon = 1e-10);
            assert!(d2[j].abs() < 1e-8);
        }
    }

    #[test]
    fn second_derivative_exact_on_quadratics() {
        let grid = uniform_centers(101);
        let values: Vec<f64> = grid.iter().map(|x| x * x).collect();
        let d2 = numeric_derivative(&values, &grid, 2, 1).unwrap();
        for &d in &d2 {
            assert_relative_eq!(d, 2.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn first_derivative_of_sine_on_101_points() {
        let grid: Vec<f64> = (0..101).map(|j| j as f64 / 100.0).collect();
        let values: Vec<f64> = grid.iter().map(|x| (2.0 * PI * x).sin()).collect();
        let d1 = numeric_derivative(&values, &grid, 1, 1).unwrap();
        let max_err = d1
            .iter()
            .zip(&grid)
            .map(|(&d, &x)| (d - 2.0 * PI * (2.0 * PI * x).cos()).abs())
            .fold(0.0_f64, f64::max);
        assert!(max_err <= 0.02, "max derivative error {max_err}");
    }

    #[test]
    fn derivative_validates_its_inputs() {
        let grid = uniform_centers(11);
        let values = vec![0.0; 11];
        assert!(numeric_derivative(&values[..2], &grid[..2], 1, 1).is_err());
        assert!(numeric_derivative(&values, &grid, 3, 1).is_err());
        assert!(numeric_derivative(&values, &grid, 1, 4).is_err());
        assert!(numeric_derivative(&values, &grid, 1, 0).is_err());
        let skewed = vec![0.0, 0.1, 0.5, 0.6, 1.0];
        assert!(numeric_derivative(&vec![0.0; 5], &skewed, 1, 1).is_err());
    }

    #[test]
    fn periodic_derivatives_of_sine_are_accurate_at_the_seam() {
        // Bin centers of a uniform partition of [0, 1]: the wrap gap equals
        // the spacing, the setting the periodic stencils are for.
        let grid = uniform_centers(101);
        let values: Vec<f64> = grid.iter().map(|x| (2.0 * PI * x).sin()).collect();
        let d1 = numeric_derivative_periodic(&values, &grid, 1, 1).unwrap();
        let d2 = numeric_derivative_periodic(&values, &grid, 2, 1).unwrap();
        for j in 0..grid.len() {
            let x = grid[j];
            assert!(
                (d1[j] - 2.0 * PI * (2.0 * PI * x).cos()).abs() <= 0.02,
                "d1 error at bin {j}: {}",
                d1[j]
            );
            assert!(
                (d2[j] + 4.0 * PI * PI * (2.0 * PI * x).sin()).abs() <= 0.3,
                "d2 error at bin {j}: {}",
                d2[j]
            );
        }
    }

    #[test]
    fn periodic_derivative_rejects_a_grid_that_does_not_wrap() {
        // Grid points including both endpoints: the wrap gap is zero, so the
        // grid does not cover the circle evenly.
        let grid: Vec<f64> = (0..101).map(|j| j as f64 / 100.0).collect();
        let values = vec![0.0; 101];
        assert!(numeric_derivative_periodic(&values, &grid, 1, 1).is_err());
        // Window as large as the grid cannot wrap meaningfully either.
        let centers = uniform_centers(5);
        assert!(numeric_derivative_periodic(&vec![0.0; 5], &centers, 1, 5).is_err());
    }

    #[test]
    fn periodic_smoothing_wraps_across_the_seam() {
        // A spike at bin 0 smears onto the last bin through the seam.
        let mut values = vec![0.0; 10];
        values[0] = 3.0;
        let sm = smooth_periodic(&values, 3);
        assert_relative_eq!(sm[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sm[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sm[9], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sm[5], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_mean_yields_identity_mapping() {
        let field = field_from_mu(uniform_centers(101));
        let q = build_q(&field, &QCriterion::q1()).unwrap();
        for &s in &[0.0, 0.1, 0.25, 0.5, 0.7, 0.9, 1.0] {
            assert_relative_eq!(q.evaluate(s), s, epsilon = 1e-10);
        }
    }

    #[test]
    fn quadratic_mean_recovers_two_thirds_power() {
        // mu = xi^2 gives F(x) = x^{3/2}, hence Q(s) = s^{2/3}.
        let mu = uniform_centers(101).iter().map(|x| x * x).collect();
        let q = build_q(&field_from_mu(mu), &QCriterion::q1()).unwrap();
        assert!(
            (q.evaluate(0.5) - 0.629_960_524_947_436_6).abs() < 2e-3,
            "Q(0.5) = {}",
            q.evaluate(0.5)
        );
    }

    #[test]
    fn constant_curvature_and_variance_yield_identity() {
        // mu = xi^2 has constant second derivative; with constant variance
        // the unsmoothed integrand is constant, so Q is the identity.
        let mu = uniform_centers(101).iter().map(|x| x * x).collect();
        let crit = QCriterion::q2().with_smoothing_window(1).unwrap();
        let q = build_q(&field_from_mu(mu), &crit).unwrap();
        for &s in &[0.0, 0.2, 0.5, 0.8, 1.0] {
            assert_relative_eq!(q.evaluate(s), s, epsilon = 1e-10);
        }
    }

    #[test]
    fn flat_mean_is_degenerate() {
        let field = field_from_mu(vec![3.0; 101]);
        match build_q(&field, &QCriterion::q1()) {
            Err(crate::error::Error::DegenerateCriterion(_)) => {}
            other => panic!("expected degenerate criterion, got {other:?}"),
        }
    }

    #[test]
    fn criterion_validation_rejects_bad_windows() {
        assert!(QCriterion::q1().with_smoothing_window(4).is_err());
        assert!(QCriterion::q1().with_smoothing_window(0).is_err());
        assert!(QCriterion::q1().with_smoothing_window(9).is_ok());
        let mut crit = QCriterion::q2();
        crit.epsilon_floor = 0.0;
        assert!(crit.validate().is_err());
    }

    #[test]
    fn built_mappings_are_monotone_and_pinned() {
        let mu = uniform_centers(101)
            .iter()
            .map(|x| (3.0 * x).exp())
            .collect();
        let q = build_q(&field_from_mu(mu), &QCriterion::q1()).unwrap();
        assert_eq!(q.evaluate(0.0), 0.0);
        assert_eq!(q.evaluate(1.0), 1.0);
        let mut prev = -1.0;
        for j in 0..=1000 {
            let v = q.evaluate(j as f64 / 1000.0);
            assert!(v > prev, "mapping not strictly increasing at knot {j}");
            prev = v;
        }
    }

    #[test]
    fn comparison_table_tabulates_each_mapping() {
        let identity = MeshMapping::identity();
        let power = MeshMapping::power(0.265).unwrap();
        let points = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        let table = compare_mappings(
            &[
                ("uniform".to_string(), &identity),
                ("power-0.265".to_string(), &power),
            ],
            &points,
        );
        assert_eq!(table.labels(), ["uniform", "power-0.265"]);
        assert_eq!(table.column(0), points.as_slice());
        assert_relative_eq!(table.column(1)[2], 0.832_198_734_711_524_5, epsilon = 1e-12);
        for col in 0..2 {
            let c = table.column(col);
            assert!(c.windows(2).all(|w| w[0] < w[1]));
        }
    }

    proptest! {
        // Whatever the moment field looks like, a successfully built
        // mapping is strictly increasing and pinned to the unit interval.
        #[test]
        fn built_mapping_is_always_monotone(
            seed_vals in proptest::collection::vec(-5.0_f64..5.0, 24..64),
            window in (0_usize..4).prop_map(|k| 2 * k + 1),
        ) {
            let bins = seed_vals.len();
            let edges: Vec<f64> = (0..=bins).map(|j| j as f64 / bins as f64).collect();
            let var: Vec<f64> = seed_vals.iter().map(|v| v.abs() * 0.5).collect();
            let field = MomentField::from_parts(edges, seed_vals, var, 50);
            let crit = QCriterion::q1().with_smoothing_window(window).unwrap();
            if let Ok(q) = build_q(&field, &crit) {
                let mut prev = -f64::EPSILON;
                for j in 0..=200 {
                    let v = q.evaluate(j as f64 / 200.0);
                    prop_assert!(v > prev);
                    prev = v;
                }
                prop_assert_eq!(q.evaluate(0.0), 0.0);
                prop_assert_eq!(q.evaluate(1.0), 1.0);
            }
        }
    }
}
