//! Stochastic mesh generation for two-point boundary value problems.
//!
//! The idea: solve a problem on many cheap random sparse meshes, pool the
//! solutions into pointwise mean and variance estimates, and turn those
//! estimates into a mesh mapping Q that concentrates points where the
//! solution is steep or uncertain. A uniform mesh pushed through Q then
//! resolves the problem far better than its size suggests.
//!
//! The pipeline, end to end:
//!
//! 1. [`mesh`] — sample sorted random meshes and apply mesh mappings.
//! 2. [`solvers`] — solve the built-in problem families on any mesh with
//!    non-uniform finite-difference stencils ([`discretize`]).
//! 3. [`moments`] — pool (location, value) pairs into binned moments.
//! 4. [`qbuild`] — integrate a steepness criterion into the mapping Q.
//! 5. [`harness`] — run full studies and diagnostics, in parallel, with
//!    bit-reproducible results for any worker count.

pub mod discretize;
pub mod error;
pub mod harness;
pub mod mesh;
pub mod moments;
pub mod qbuild;
pub mod solvers;

mod bfgs;

pub use error::{Error, Result};
pub use harness::{run_pipeline, MappingChoice, StudyConfig, StudyOutput, StudyRecord};
pub use mesh::{sample_sorted_mesh, uniform_mesh, Mesh, MeshMapping, SamplingConfig};
pub use moments::{MomentField, PointCloud};
pub use qbuild::{build_q, CriterionKind, QCriterion};
pub use solvers::{solve, BvpProblem, ErrorNorm, SampledSolution};
