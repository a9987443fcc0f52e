//! Meshes on the unit interval, mesh mappings, and the random mesh sampler.
//!
//! A mesh stores only its interior points; the boundary nodes 0 and 1 are
//! implicit. Sampled meshes are order statistics of i.i.d. uniform draws,
//! one independent RNG stream per sample index so that samples can be drawn
//! in any order (or in parallel) with identical results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Points closer than this (to each other or to a boundary) are treated as
/// colliding: the sampler redraws them and `MeshMapping::apply` rejects them.
pub const COLLISION_TOL: f64 = 1e-12;

/// Strictly increasing interior points of a mesh on [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    interior: Vec<f64>,
}

impl Mesh {
    /// Builds a mesh from interior points, which must be finite, strictly
    /// increasing, and inside the open interval (0, 1).
    pub fn new(interior: Vec<f64>) -> Result<Self> {
        if interior.is_empty() {
            return Err(Error::InvalidArgument(
                "mesh needs at least one interior point".into(),
            ));
        }
        for &x in &interior {
            if !x.is_finite() || x <= 0.0 || x >= 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "mesh point {x} lies outside (0, 1)"
                )));
            }
        }
        if interior.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "mesh points must be strictly increasing".into(),
            ));
        }
        Ok(Self { interior })
    }

    /// Interior points, ascending.
    pub fn interior(&self) -> &[f64] {
        &self.interior
    }

    /// Number of interior points.
    pub fn len(&self) -> usize {
        self.interior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interior.is_empty()
    }

    /// All n + 2 node positions including the boundaries 0 and 1.
    pub fn full_points(&self) -> Vec<f64> {
        let mut pts = Vec::with_capacity(self.interior.len() + 2);
        pts.push(0.0);
        pts.extend_from_slice(&self.interior);
        pts.push(1.0);
        pts
    }

    /// The n + 1 gaps between consecutive nodes, boundaries included.
    /// `gaps()[k]` is the gap to the left of interior node k (0-indexed).
    pub fn gaps(&self) -> Vec<f64> {
        let pts = self.full_points();
        pts.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Largest gap between consecutive nodes, boundaries included.
    pub fn max_gap(&self) -> f64 {
        self.gaps().into_iter().fold(0.0, f64::max)
    }
}

/// The uniform mesh with interior points k/(n+1), k = 1..=n.
pub fn uniform_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("uniform mesh needs n >= 1".into()));
    }
    let h = 1.0 / (n as f64 + 1.0);
    Mesh::new((1..=n).map(|k| k as f64 * h).collect())
}

/// Point distribution used by the sampler. Only the uniform distribution on
/// the open unit interval is defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Distribution {
    #[default]
    UniformOnUnitInterval,
}

/// Parameters of a mesh-sampling run: `m` meshes of `n` interior points each,
/// all derived from one master seed.
#[derive(Debug, Clone)]
pub struct SamplingConfig {
    pub m: usize,
    pub n: usize,
    pub master_seed: u64,
    pub distribution: Distribution,
}

impl SamplingConfig {
    pub fn new(m: usize, n: usize, master_seed: u64) -> Result<Self> {
        let cfg = Self {
            m,
            n,
            master_seed,
            distribution: Distribution::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::InvalidArgument("sampling needs m >= 1".into()));
        }
        if self.n < 1 {
            return Err(Error::InvalidArgument("sampling needs n >= 1".into()));
        }
        Ok(())
    }
}

/// Draws mesh number `sample_index` of the run described by `cfg`.
///
/// Each sample uses its own ChaCha stream (`master_seed`, stream =
/// `sample_index`), so the result depends only on the pair and not on how
/// many other samples were drawn or on which thread. Draws that collide with
/// an already-accepted point or sit within [`COLLISION_TOL`] of a boundary
/// are redrawn.
pub fn sample_sorted_mesh(cfg: &SamplingConfig, sample_index: usize) -> Result<Mesh> {
    cfg.validate()?;
    if sample_index >= cfg.m {
        return Err(Error::InvalidArgument(format!(
            "sample index {sample_index} out of range for m = {}",
            cfg.m
        )));
    }
    let Distribution::UniformOnUnitInterval = cfg.distribution;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    rng.set_stream(sample_index as u64);

    let mut pts: Vec<f64> = Vec::with_capacity(cfg.n);
    while pts.len() < cfg.n {
        let u: f64 = rng.random();
        if u < COLLISION_TOL || u > 1.0 - COLLISION_TOL {
            continue;
        }
        if pts.iter().any(|&p| (p - u).abs() < COLLISION_TOL) {
            continue;
        }
        pts.push(u);
    }
    pts.sort_unstable_by(f64::total_cmp);
    Mesh::new(pts)
}

#[derive(Debug, Clone, PartialEq)]
enum MappingForm {
    Identity,
    Power { exponent: f64 },
    Tabulated { knots: Vec<(f64, f64)> },
}

/// A monotone map Q : [0, 1] -> [0, 1] with Q(0) = 0 and Q(1) = 1, used to
/// push a uniform mesh onto a problem-adapted one.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshMapping {
    form: MappingForm,
}

impl MeshMapping {
    /// Q(s) = s.
    pub fn identity() -> Self {
        Self {
            form: MappingForm::Identity,
        }
    }

    /// Q(s) = s^exponent for a positive finite exponent.
    pub fn power(exponent: f64) -> Result<Self> {
        if !exponent.is_finite() || exponent <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "power mapping needs a positive exponent, got {exponent}"
            )));
        }
        Ok(Self {
            form: MappingForm::Power { exponent },
        })
    }

    /// Piecewise-linear map through `knots` = [(s_0, q_0), ...]. The knots
    /// must start at (0, 0), end at (1, 1), and be strictly increasing in
    /// both coordinates.
    pub fn tabulated(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidArgument(
                "tabulated mapping needs at least two knots".into(),
            ));
        }
        let first = knots[0];
        let last = knots[knots.len() - 1];
        if first != (0.0, 0.0) || last != (1.0, 1.0) {
            return Err(Error::InvalidArgument(
                "tabulated mapping must run from (0, 0) to (1, 1)".into(),
            ));
        }
        for w in knots.windows(2) {
            if !(w[0].0 < w[1].0 && w[0].1 < w[1].1) {
                return Err(Error::InvalidArgument(
                    "tabulated mapping knots must be strictly increasing in both coordinates"
                        .into(),
                ));
            }
        }
        if knots.iter().any(|&(s, q)| !s.is_finite() || !q.is_finite()) {
            return Err(Error::InvalidArgument(
                "tabulated mapping knots must be finite".into(),
            ));
        }
        Ok(Self {
            form: MappingForm::Tabulated { knots },
        })
    }

    /// The knot table of a tabulated mapping, if this is one.
    pub fn knots(&self) -> Option<&[(f64, f64)]> {
        match &self.form {
            MappingForm::Tabulated { knots } => Some(knots),
            _ => None,
        }
    }

    /// Evaluates Q(s). Arguments are clamped to [0, 1].
    pub fn evaluate(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        match &self.form {
            MappingForm::Identity => s,
            MappingForm::Power { exponent } => s.powf(*exponent),
            MappingForm::Tabulated { knots } => {
                // Index of the first knot with s-coordinate > s; the segment
                // [idx-1, idx] brackets s. Endpoints map exactly.
                if s == 0.0 {
                    return 0.0;
                }
                if s == 1.0 {
                    return 1.0;
                }
                let idx = knots.partition_point(|&(sk, _)| sk <= s);
                let (s0, q0) = knots[idx - 1];
                let (s1, q1) = knots[idx];
                q0 + (q1 - q0) * (s - s0) / (s1 - s0)
            }
        }
    }

    /// Maps each interior point of `mesh` through Q. Fails with a
    /// degenerate-mesh error if any mapped gap (boundaries included) falls
    /// below [`COLLISION_TOL`].
    pub fn apply(&self, mesh: &Mesh) -> Result<Mesh> {
        let mapped: Vec<f64> = mesh.interior().iter().map(|&x| self.evaluate(x)).collect();
        let mut prev = 0.0;
        for &q in mapped.iter().chain(std::iter::once(&1.0)) {
            if q - prev < COLLISION_TOL {
                return Err(Error::DegenerateMesh(format!(
                    "mapped points collide near {q}"
                )));
            }
            prev = q;
        }
        Mesh::new(mapped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_mesh_places_equispaced_points() {
        let mesh = uniform_mesh(3).unwrap();
        assert_eq!(mesh.interior(), &[0.25, 0.5, 0.75]);
        let single = uniform_mesh(1).unwrap();
        assert_eq!(single.interior(), &[0.5]);
        assert!(uniform_mesh(0).is_err());
    }

    #[test]
    fn mesh_rejects_disorder_and_out_of_range_points() {
        assert!(Mesh::new(vec![]).is_err());
        assert!(Mesh::new(vec![0.5, 0.5]).is_err());
        assert!(Mesh::new(vec![0.7, 0.3]).is_err());
        assert!(Mesh::new(vec![0.0, 0.5]).is_err());
        assert!(Mesh::new(vec![0.5, 1.0]).is_err());
        assert!(Mesh::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn gaps_include_boundaries() {
        let mesh = Mesh::new(vec![0.1, 0.2]).unwrap();
        assert_relative_eq!(mesh.gaps()[0], 0.1);
        assert_relative_eq!(mesh.gaps()[1], 0.1);
        assert_relative_eq!(mesh.gaps()[2], 0.8);
        assert_relative_eq!(mesh.max_gap(), 0.8);

        let mesh = uniform_mesh(3).unwrap();
        assert_relative_eq!(mesh.max_gap(), 0.25);
    }

    #[test]
    fn sampling_is_deterministic_per_index() {
        let cfg = SamplingConfig::new(100, 12, 42).unwrap();
        let a = sample_sorted_mesh(&cfg, 7).unwrap();
        let b = sample_sorted_mesh(&cfg, 7).unwrap();
        assert_eq!(a.interior(), b.interior());
        let c = sample_sorted_mesh(&cfg, 8).unwrap();
        assert_ne!(a.interior(), c.interior());
    }

    #[test]
    fn sampling_rejects_out_of_range_index() {
        let cfg = SamplingConfig::new(10, 3, 1).unwrap();
        assert!(sample_sorted_mesh(&cfg, 10).is_err());
        assert!(SamplingConfig::new(0, 3, 1).is_err());
        assert!(SamplingConfig::new(10, 0, 1).is_err());
    }

    #[test]
    fn sampled_meshes_are_strictly_increasing_inside_unit_interval() {
        // Invariant check over many random configurations.
        let mut meta = ChaCha8Rng::seed_from_u64(999);
        for _ in 0..10_000 {
            let n = meta.random_range(1..=32);
            let seed: u64 = meta.random();
            let cfg = SamplingConfig::new(1, n, seed).unwrap();
            let mesh = sample_sorted_mesh(&cfg, 0).unwrap();
            let pts = mesh.interior();
            assert!(pts[0] > 0.0 && pts[pts.len() - 1] < 1.0);
            assert!(pts.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn sample_minimum_matches_order_statistic_mean() {
        // E[min of 10 uniforms] = 1/11.
        let m = 100_000;
        let cfg = SamplingConfig::new(m, 10, 4242).unwrap();
        let mut acc = 0.0;
        for i in 0..m {
            acc += sample_sorted_mesh(&cfg, i).unwrap().interior()[0];
        }
        let mean = acc / m as f64;
        assert!((mean - 1.0 / 11.0).abs() < 0.002, "mean = {mean}");
    }

    #[test]
    fn single_point_max_gap_mean_matches_expected_value() {
        // E[max(x, 1 - x)] = 3/4 for x uniform.
        let m = 100_000;
        let cfg = SamplingConfig::new(m, 1, 31337).unwrap();
        let mut acc = 0.0;
        for i in 0..m {
            acc += sample_sorted_mesh(&cfg, i).unwrap().max_gap();
        }
        let mean = acc / m as f64;
        assert!((mean - 0.75).abs() < 0.01, "mean = {mean}");
    }

    #[test]
    fn power_mapping_matches_closed_form() {
        let q = MeshMapping::power(0.265).unwrap();
        assert_relative_eq!(q.evaluate(0.5), 0.832_198_734_711_524_5, epsilon = 1e-12);
        let q = MeshMapping::power(0.15).unwrap();
        assert_relative_eq!(q.evaluate(0.5), 0.901_250_462_610_830_2, epsilon = 1e-12);
        assert_eq!(q.evaluate(0.0), 0.0);
        assert_eq!(q.evaluate(1.0), 1.0);
        assert!(MeshMapping::power(0.0).is_err());
        assert!(MeshMapping::power(-1.0).is_err());
        assert!(MeshMapping::power(f64::INFINITY).is_err());
    }

    #[test]
    fn identity_mapping_fixes_meshes() {
        let mesh = Mesh::new(vec![0.3, 0.7]).unwrap();
        let mapped = MeshMapping::identity().apply(&mesh).unwrap();
        assert_eq!(mapped.interior(), mesh.interior());
    }

    #[test]
    fn tabulated_mapping_interpolates_linearly() {
        let q = MeshMapping::tabulated(vec![(0.0, 0.0), (0.5, 0.25), (1.0, 1.0)]).unwrap();
        assert_relative_eq!(q.evaluate(0.25), 0.125);
        assert_relative_eq!(q.evaluate(0.75), 0.625);
        assert_eq!(q.evaluate(0.0), 0.0);
        assert_eq!(q.evaluate(1.0), 1.0);
        assert!(q.knots().is_some());
        assert!(MeshMapping::identity().knots().is_none());
    }

    #[test]
    fn tabulated_mapping_rejects_bad_knot_tables() {
        assert!(MeshMapping::tabulated(vec![(0.0, 0.0)]).is_err());
        assert!(MeshMapping::tabulated(vec![(0.1, 0.0), (1.0, 1.0)]).is_err());
        assert!(MeshMapping::tabulated(vec![(0.0, 0.0), (0.9, 1.0)]).is_err());
        // Non-monotone q coordinate.
        assert!(
            MeshMapping::tabulated(vec![(0.0, 0.0), (0.4, 0.6), (0.6, 0.5), (1.0, 1.0)]).is_err()
        );
        // Duplicate s coordinate.
        assert!(
            MeshMapping::tabulated(vec![(0.0, 0.0), (0.5, 0.2), (0.5, 0.4), (1.0, 1.0)]).is_err()
        );
    }

    #[test]
    fn apply_rejects_collapsing_mappings() {
        // Almost all of [0.4, 0.6] lands inside a 1e-13-wide window.
        let q = MeshMapping::tabulated(vec![(0.0, 0.0), (0.4, 1e-13), (0.6, 2e-13), (1.0, 1.0)])
            .unwrap();
        let mesh = Mesh::new(vec![0.45, 0.55]).unwrap();
        match q.apply(&mesh) {
            Err(Error::DegenerateMesh(_)) => {}
            other => panic!("expected degenerate-mesh error, got {other:?}"),
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn power_mapping_preserves_order(
                exponent in 0.05f64..5.0,
                a in 1e-6f64..1.0,
                delta in 1e-6f64..0.5,
            ) {
                let b = (a + delta).min(1.0);
                prop_assume!(a < b);
                let q = MeshMapping::power(exponent).unwrap();
                prop_assert!(q.evaluate(a) < q.evaluate(b));
            }

            #[test]
            fn mapped_meshes_stay_sorted(seed in any::<u64>(), n in 1usize..24) {
                let cfg = SamplingConfig::new(1, n, seed).unwrap();
                let mesh = sample_sorted_mesh(&cfg, 0).unwrap();
                let q = MeshMapping::power(0.265).unwrap();
                let mapped = q.apply(&mesh).unwrap();
                prop_assert!(mapped.interior().windows(2).all(|w| w[0] < w[1]));
            }
        }
    }
}
