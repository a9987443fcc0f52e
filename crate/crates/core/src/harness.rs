//! Study orchestration: the sample → solve → moments → mapping → re-solve
//! pipeline, plus the spectral, gap, and sampling-adequacy diagnostics.
//!
//! The sample/solve loop is the only parallel region. Samples are split
//! into fixed-size batches; each batch accumulates a private point cloud
//! and the coordinator merges them in ascending index order, so results
//! are bit-identical for any worker count.

use std::time::Instant;

use rayon::prelude::*;

use crate::discretize::{assemble_second_derivative, inverse_eigenvalue_magnitudes, MAX_EIGEN_ORDER};
use crate::error::{Error, Result};
use crate::mesh::{sample_sorted_mesh, uniform_mesh, MeshMapping, SamplingConfig};
use crate::moments::{
    average_variance, density_grid, DensityGrid, MomentField, PointCloud,
};
use crate::qbuild::{build_q, QCriterion};
use crate::solvers::{exact_error, solve, BoundaryConditions, BvpProblem, ErrorNorm};

/// Number of bins used when callers don't have a reason to choose.
pub const DEFAULT_BINS: usize = 101;

/// Samples per parallel work unit. Fixed so the batch boundaries — and
/// therefore the merge order and every partial sum — do not depend on the
/// worker count.
const SAMPLE_BATCH: usize = 256;

/// Absolute tolerance on v̄ corresponding to three stable decimal digits.
pub const VBAR_THREE_DIGIT_TOLERANCE: f64 = 5e-4;

/// Which mesh the convergence stage solves on.
#[derive(Debug, Clone, PartialEq)]
pub enum MappingChoice {
    /// The untouched uniform mesh.
    Uniform,
    /// The mapping built from the sampled moments by the study's criterion.
    Computed,
    /// A fixed analytic power mapping x^exponent.
    Power { exponent: f64 },
}

impl MappingChoice {
    /// Stable identifier used in output tables.
    pub fn id(&self) -> String {
        match self {
            MappingChoice::Uniform => "uniform".to_string(),
            MappingChoice::Computed => "computed".to_string(),
            MappingChoice::Power { exponent } => format!("power-{exponent}"),
        }
    }

    fn resolve(&self, computed: &MeshMapping) -> Result<MeshMapping> {
        match self {
            MappingChoice::Uniform => Ok(MeshMapping::identity()),
            MappingChoice::Computed => Ok(computed.clone()),
            MappingChoice::Power { exponent } => MeshMapping::power(*exponent),
        }
    }
}

/// Optional retention of the joint (x, u) distribution during sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityRequest {
    pub u_min: f64,
    pub u_max: f64,
    pub u_bins: usize,
}

/// Everything a full study needs.
#[derive(Debug)]
pub struct StudyConfig {
    pub problem: BvpProblem,
    pub sampling: SamplingConfig,
    pub criterion: QCriterion,
    /// Moment bins over [0, 1].
    pub bins: usize,
    /// Mesh sizes for the convergence stage; strictly increasing.
    pub eval_ns: Vec<usize>,
    /// Mappings to compare in the convergence stage.
    pub mappings: Vec<MappingChoice>,
    /// Norm the study treats as primary when summarizing records.
    pub norm: ErrorNorm,
    pub density: Option<DensityRequest>,
}

impl StudyConfig {
    /// Study with the default bins, evaluation sizes, and uniform-versus-
    /// computed mapping comparison.
    pub fn new(problem: BvpProblem, sampling: SamplingConfig, criterion: QCriterion) -> Self {
        Self {
            problem,
            sampling,
            criterion,
            bins: DEFAULT_BINS,
            eval_ns: vec![10, 20, 40, 80, 160],
            mappings: vec![MappingChoice::Uniform, MappingChoice::Computed],
            norm: ErrorNorm::Max,
            density: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sampling.validate()?;
        self.criterion.validate()?;
        if self.bins < 2 {
            return Err(Error::InvalidArgument(
                "study needs at least 2 moment bins".into(),
            ));
        }
        if self.eval_ns.is_empty() {
            return Err(Error::InvalidArgument(
                "study needs at least one evaluation mesh size".into(),
            ));
        }
        if self.eval_ns[0] == 0 || self.eval_ns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "evaluation mesh sizes must be positive and strictly increasing".into(),
            ));
        }
        if self.mappings.is_empty() {
            return Err(Error::InvalidArgument(
                "study needs at least one mapping to evaluate".into(),
            ));
        }
        if !self.problem.has_exact() {
            return Err(Error::InvalidArgument(format!(
                "problem '{}' has no reference solution to measure convergence against",
                self.problem.name()
            )));
        }
        if let Some(d) = &self.density {
            if !(d.u_min.is_finite() && d.u_max.is_finite()) || d.u_min >= d.u_max || d.u_bins == 0
            {
                return Err(Error::InvalidArgument(
                    "density retention needs a non-empty finite u range and at least 1 bin".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One convergence measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRecord {
    pub mapping_id: String,
    pub n: usize,
    pub error_max: f64,
    pub error_rms: f64,
    /// Wall time of this solve. Informational; excluded from deterministic
    /// output tables.
    pub runtime_ms: f64,
}

impl StudyRecord {
    pub fn error(&self, norm: ErrorNorm) -> f64 {
        match norm {
            ErrorNorm::Max => self.error_max,
            ErrorNorm::Rms => self.error_rms,
        }
    }
}

/// Wall time spent in each pipeline stage, in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageRuntimes {
    pub sampling_ms: f64,
    pub moments_ms: f64,
    pub qbuild_ms: f64,
    pub eval_ms: f64,
}

/// Everything a pipeline run produces.
#[derive(Debug)]
pub struct StudyOutput {
    pub moments: MomentField,
    pub mapping: MeshMapping,
    pub records: Vec<StudyRecord>,
    /// Samples dropped by the failure policy (below the abort threshold).
    pub failed_samples: usize,
    pub density: Option<DensityGrid>,
    pub stage_runtimes: StageRuntimes,
}

fn new_cloud(bins: usize, density: Option<&DensityRequest>) -> Result<PointCloud> {
    let mut cloud = PointCloud::new(bins)?;
    if let Some(d) = density {
        cloud.enable_density_retention(d.u_min, d.u_max, d.u_bins)?;
    }
    Ok(cloud)
}

/// The parallel sampling stage: solve the problem on every sampled mesh and
/// pool the results. Returns the pooled cloud and the number of dropped
/// samples. Nonlinear non-convergence and singular systems drop the sample;
/// a failure rate above 1% aborts the run.
pub fn sample_cloud(
    problem: &BvpProblem,
    sampling: &SamplingConfig,
    bins: usize,
    density: Option<&DensityRequest>,
) -> Result<(PointCloud, usize)> {
    sampling.validate()?;
    let m = sampling.m;
    let batches = m.div_ceil(SAMPLE_BATCH);
    let partials: Vec<(PointCloud, usize)> = (0..batches)
        .into_par_iter()
        .map(|b| -> Result<(PointCloud, usize)> {
            let lo = b * SAMPLE_BATCH;
            let hi = (lo + SAMPLE_BATCH).min(m);
            let mut cloud = new_cloud(bins, density)?;
            let mut failed = 0usize;
            for i in lo..hi {
                let mesh = sample_sorted_mesh(sampling, i)?;
                match solve(problem, &mesh) {
                    Ok(sol) => cloud.accumulate(&sol),
                    Err(e @ (Error::NonlinearSolverFailure { .. } | Error::SingularOperator(_))) => {
                        log::warn!("sample {i} dropped: {e}");
                        failed += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok((cloud, failed))
        })
        .collect::<Result<_>>()?;

    let mut cloud = new_cloud(bins, density)?;
    let mut failed = 0usize;
    for (partial, f) in &partials {
        cloud.merge(partial)?;
        failed += f;
    }
    if failed * 100 > m {
        return Err(Error::FailureRateExceeded { failed, total: m });
    }
    Ok((cloud, failed))
}

/// Convenience wrapper over the sampling stage that finalizes the moments.
pub fn sample_moments(
    problem: &BvpProblem,
    sampling: &SamplingConfig,
    bins: usize,
) -> Result<MomentField> {
    let (cloud, _) = sample_cloud(problem, sampling, bins, None)?;
    Ok(cloud
        .finalize_moments()?
        .with_periodic(problem.boundary() == BoundaryConditions::Periodic))
}

/// Runs a full study: sample and solve m sparse meshes in parallel, pool
/// the moments, build the mapping, then solve the problem on each mapped
/// mesh size and record the error against the reference solution.
pub fn run_pipeline(cfg: &StudyConfig) -> Result<StudyOutput> {
    cfg.validate()?;
    let mut runtimes = StageRuntimes::default();

    let t = Instant::now();
    let (cloud, failed_samples) =
        sample_cloud(&cfg.problem, &cfg.sampling, cfg.bins, cfg.density.as_ref())?;
    runtimes.sampling_ms = t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let moments = cloud
        .finalize_moments()?
        .with_periodic(cfg.problem.boundary() == BoundaryConditions::Periodic);
    let density = match &cfg.density {
        Some(d) => Some(density_grid(&cloud, d.u_bins)?),
        None => None,
    };
    runtimes.moments_ms = t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let mapping = build_q(&moments, &cfg.criterion)?;
    runtimes.qbuild_ms = t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let mut records = Vec::with_capacity(cfg.mappings.len() * cfg.eval_ns.len());
    for choice in &cfg.mappings {
        let map = choice.resolve(&mapping)?;
        let id = choice.id();
        for &n in &cfg.eval_ns {
            let solve_start = Instant::now();
            let mesh = map.apply(&uniform_mesh(n)?)?;
            let sol = solve(&cfg.problem, &mesh)?;
            let error_max = exact_error(&cfg.problem, &sol, ErrorNorm::Max)?;
            let error_rms = exact_error(&cfg.problem, &sol, ErrorNorm::Rms)?;
            records.push(StudyRecord {
                mapping_id: id.clone(),
                n,
                error_max,
                error_rms,
                runtime_ms: solve_start.elapsed().as_secs_f64() * 1e3,
            });
        }
    }
    runtimes.eval_ms = t.elapsed().as_secs_f64() * 1e3;

    Ok(StudyOutput {
        moments,
        mapping,
        records,
        failed_samples,
        density,
        stage_runtimes: runtimes,
    })
}

/// One row of the spectral diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralRecord {
    pub n: usize,
    /// Smallest inverse-operator eigenvalue magnitude seen across samples.
    pub min_mag: f64,
    /// Largest inverse-operator eigenvalue magnitude seen across samples.
    pub max_mag: f64,
    pub uniform_min_mag: f64,
    pub uniform_max_mag: f64,
}

/// For each mesh size, assembles the second-difference operator on
/// `sampling.m` random meshes and records the extreme eigenvalue magnitudes
/// of its inverse, alongside the uniform-mesh reference.
pub fn spectral_diagnostic(sampling: &SamplingConfig, ns: &[usize]) -> Result<Vec<SpectralRecord>> {
    if let Some(&bad) = ns.iter().find(|&&n| n == 0 || n > MAX_EIGEN_ORDER) {
        return Err(Error::InvalidArgument(format!(
            "spectral diagnostic needs mesh sizes in 1..={MAX_EIGEN_ORDER}, got {bad}"
        )));
    }
    let mut out = Vec::with_capacity(ns.len());
    for &n in ns {
        let cfg = SamplingConfig {
            n,
            ..sampling.clone()
        };
        cfg.validate()?;
        let extremes: Vec<(f64, f64)> = (0..cfg.m)
            .into_par_iter()
            .map(|i| -> Result<(f64, f64)> {
                let mesh = sample_sorted_mesh(&cfg, i)?;
                let op = assemble_second_derivative(&mesh)?;
                inverse_eigenvalue_magnitudes(&op)
            })
            .collect::<Result<_>>()?;
        // min/max are order-independent, so the parallel fold is exact.
        let (min_mag, max_mag) = extremes
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(a, b)| {
                (lo.min(a), hi.max(b))
            });
        let uniform_op = assemble_second_derivative(&uniform_mesh(n)?)?;
        let (uniform_min_mag, uniform_max_mag) = inverse_eigenvalue_magnitudes(&uniform_op)?;
        out.push(SpectralRecord {
            n,
            min_mag,
            max_mag,
            uniform_min_mag,
            uniform_max_mag,
        });
    }
    Ok(out)
}

/// One row of the largest-gap diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct GapRecord {
    pub n: usize,
    pub mean_max_gap: f64,
    pub median_max_gap: f64,
    pub p90_max_gap: f64,
    /// Uniform-mesh gap 1/(n+1).
    pub uniform_gap: f64,
}

/// Distribution of the largest inter-point gap over `samples_per_n` random
/// meshes at each size. `sampling` supplies the seed; its own m and n are
/// ignored.
pub fn gap_diagnostic(
    sampling: &SamplingConfig,
    ns: &[usize],
    samples_per_n: usize,
) -> Result<Vec<GapRecord>> {
    if samples_per_n == 0 {
        return Err(Error::InvalidArgument(
            "gap diagnostic needs at least one sample per mesh size".into(),
        ));
    }
    let mut out = Vec::with_capacity(ns.len());
    for &n in ns {
        let cfg = SamplingConfig {
            m: samples_per_n,
            n,
            ..sampling.clone()
        };
        cfg.validate()?;
        let mut gaps: Vec<f64> = (0..cfg.m)
            .into_par_iter()
            .map(|i| sample_sorted_mesh(&cfg, i).map(|mesh| mesh.max_gap()))
            .collect::<Result<_>>()?;
        gaps.sort_unstable_by(f64::total_cmp);
        let len = gaps.len();
        let mean_max_gap = gaps.iter().sum::<f64>() / len as f64;
        let median_max_gap = if len % 2 == 1 {
            gaps[len / 2]
        } else {
            0.5 * (gaps[len / 2 - 1] + gaps[len / 2])
        };
        // Nearest-rank 90th percentile.
        let p90_idx = (((len - 1) as f64) * 0.9).round() as usize;
        out.push(GapRecord {
            n,
            mean_max_gap,
            median_max_gap,
            p90_max_gap: gaps[p90_idx],
            uniform_gap: 1.0 / (n + 1) as f64,
        });
    }
    Ok(out)
}

/// One cell of the sampling-adequacy sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct VbarRecord {
    pub m: usize,
    pub n: usize,
    pub vbar: f64,
    pub rel_error_vs_reference: f64,
}

/// Per mesh size: the smallest sample count whose v̄ already agrees with
/// the reference to three decimal digits, if any prefix achieved it.
#[derive(Debug, Clone, PartialEq)]
pub struct VbarThreshold {
    pub n: usize,
    pub smallest_m_for_3_digits: Option<usize>,
}

/// Result of the sampling-adequacy sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct VbarSweep {
    pub records: Vec<VbarRecord>,
    pub thresholds: Vec<VbarThreshold>,
}

/// Measures how fast v̄ converges in the sample count. For each mesh size,
/// accumulates `reference_m` solutions once and evaluates v̄ on every
/// prefix, so v̄(m) for each requested m is the estimate an m-sample run
/// with the same seed would have produced; the reference is the full-prefix
/// value, making the m = reference_m error exactly zero. Also reports, per
/// mesh size, the first prefix within [`VBAR_THREE_DIGIT_TOLERANCE`] of the
/// reference.
pub fn vbar_sweep(
    problem: &BvpProblem,
    ms: &[usize],
    ns: &[usize],
    reference_m: usize,
    master_seed: u64,
) -> Result<VbarSweep> {
    if ms.is_empty() || ns.is_empty() {
        return Err(Error::InvalidArgument(
            "sweep needs at least one sample count and one mesh size".into(),
        ));
    }
    let max_m = *ms.iter().max().unwrap();
    if reference_m < max_m || reference_m < 2 {
        return Err(Error::InvalidArgument(format!(
            "reference sample count {reference_m} must be at least 2 and at least max requested ({max_m})"
        )));
    }
    let mut records = Vec::with_capacity(ms.len() * ns.len());
    let mut thresholds = Vec::with_capacity(ns.len());
    for &n in ns {
        let cfg = SamplingConfig::new(reference_m, n, master_seed.wrapping_add(n as u64))?;
        let mut cloud = PointCloud::new(DEFAULT_BINS)?;
        // v̄ after every prefix; None while no bin has two points yet.
        let mut prefix_vbar: Vec<Option<f64>> = Vec::with_capacity(reference_m);
        for i in 0..reference_m {
            let mesh = sample_sorted_mesh(&cfg, i)?;
            cloud.accumulate(&solve(problem, &mesh)?);
            match cloud.finalize_moments() {
                Ok(field) => prefix_vbar.push(Some(average_variance(&field).vbar)),
                Err(Error::InsufficientData(_)) => prefix_vbar.push(None),
                Err(e) => return Err(e),
            }
        }
        let reference = prefix_vbar[reference_m - 1].ok_or_else(|| {
            Error::InsufficientData("reference v̄ could not be estimated".into())
        })?;
        for &m in ms {
            let Some(vbar) = prefix_vbar[m - 1] else {
                continue;
            };
            let diff = (vbar - reference).abs();
            let rel_error_vs_reference = if reference == 0.0 { diff } else { diff / reference.abs() };
            records.push(VbarRecord {
                m,
                n,
                vbar,
                rel_error_vs_reference,
            });
        }
        let smallest = prefix_vbar
            .iter()
            .position(|v| matches!(v, Some(x) if (x - reference).abs() < VBAR_THREE_DIGIT_TOLERANCE))
            .map(|idx| idx + 1);
        thresholds.push(VbarThreshold {
            n,
            smallest_m_for_3_digits: smallest,
        });
    }
    Ok(VbarSweep {
        records,
        thresholds,
    })
}
