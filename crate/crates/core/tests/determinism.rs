//! The parallel sampling stage must be bit-reproducible for any worker
//! count: fixed batch boundaries and an ordered merge make every floating
//! partial sum identical.

use stochmesh::harness::{run_pipeline, sample_moments, StudyConfig};
use stochmesh::mesh::SamplingConfig;
use stochmesh::qbuild::QCriterion;
use stochmesh::solvers::BvpProblem;

fn with_threads<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(job)
}

#[test]
fn moment_fields_are_bitwise_identical_across_worker_counts() {
    let problem = BvpProblem::singular(0.85, 10.0).unwrap();
    // More samples than one batch so the merge path actually runs.
    let sampling = SamplingConfig::new(700, 6, 4242).unwrap();
    let single = with_threads(1, || sample_moments(&problem, &sampling, 101).unwrap());
    let pooled = with_threads(8, || sample_moments(&problem, &sampling, 101).unwrap());
    // PartialEq on the field compares every f64 exactly.
    assert_eq!(single, pooled);
}

#[test]
fn study_records_are_bitwise_identical_across_worker_counts() {
    let run = || {
        let problem = BvpProblem::singular(0.85, 10.0).unwrap();
        let sampling = SamplingConfig::new(600, 7, 77).unwrap();
        let mut cfg = StudyConfig::new(problem, sampling, QCriterion::q1());
        cfg.eval_ns = vec![5, 10, 20];
        run_pipeline(&cfg).unwrap()
    };
    let a = with_threads(1, run);
    let b = with_threads(8, run);
    assert_eq!(a.moments, b.moments);
    assert_eq!(a.mapping.knots(), b.mapping.knots());
    assert_eq!(a.records.len(), b.records.len());
    for (ra, rb) in a.records.iter().zip(&b.records) {
        assert_eq!(ra.mapping_id, rb.mapping_id);
        assert_eq!(ra.n, rb.n);
        // Bit-level equality, not approximate.
        assert_eq!(ra.error_max.to_bits(), rb.error_max.to_bits());
        assert_eq!(ra.error_rms.to_bits(), rb.error_rms.to_bits());
    }
}
