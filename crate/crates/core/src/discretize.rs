//! Non-uniform three-point difference operators and their direct solver.
//!
//! The stencil weights come from undetermined coefficients on the local
//! Taylor expansion: with left gap h_l and right gap h_r, the weights
//! (c, b, a) of (u_{k-1}, u_k, u_{k+1}) satisfy
//!
//! ```text
//! c + b + a               = 0   (constants are annihilated)
//! a * h_r - c * h_l       = 0   (linears are annihilated)
//! (c * h_l^2 + a * h_r^2) / 2 = 1   (curvature is reproduced)
//! ```
//!
//! which gives c = 2/(h_l (h_l + h_r)), b = -2/(h_l h_r),
//! a = 2/(h_r (h_l + h_r)). On a uniform mesh this reduces to the familiar
//! (1, -2, 1)/h^2 stencil; row sums vanish identically either way.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, COLLISION_TOL};

/// Absolute pivot tolerance of the elimination sweep.
pub const PIVOT_TOL: f64 = 1e-14;

/// Largest matrix order accepted by the dense eigensolve. The eigensolve
/// exists for spectrum diagnostics only, never on a solve path.
pub const MAX_EIGEN_ORDER: usize = 256;

/// Second-derivative stencil weights (c, b, a) for (u_{k-1}, u_k, u_{k+1})
/// given the gaps to the left and right neighbors.
pub fn stencil_coeffs(h_left: f64, h_right: f64) -> Result<(f64, f64, f64)> {
    if !(h_left.is_finite() && h_right.is_finite()) || h_left <= 0.0 || h_right <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "stencil gaps must be positive, got ({h_left}, {h_right})"
        )));
    }
    let span = h_left + h_right;
    Ok((
        2.0 / (h_left * span),
        -2.0 / (h_left * h_right),
        2.0 / (h_right * span),
    ))
}

/// Tridiagonal operator acting on the interior unknowns of a mesh, plus the
/// stencil weights that reach the two boundary nodes.
///
/// `sub[k]` couples row k+1 to column k, `sup[k]` couples row k to column
/// k+1, so both have length n - 1. `boundary` holds (row 0 -> u(0),
/// row n-1 -> u(1)).
#[derive(Debug, Clone)]
pub struct TridiagonalOperator {
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
    boundary: (f64, f64),
}

impl TridiagonalOperator {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn sub(&self) -> &[f64] {
        &self.sub
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn sup(&self) -> &[f64] {
        &self.sup
    }

    /// Stencil weights reaching u(0) from the first row and u(1) from the
    /// last row.
    pub fn boundary_couplings(&self) -> (f64, f64) {
        self.boundary
    }

    /// Adds `delta[k]` to the k-th diagonal entry. Used to fold a zeroth
    /// order (reaction) term into the operator.
    pub fn shift_diagonal(&mut self, delta: &[f64]) -> Result<()> {
        if delta.len() != self.diag.len() {
            return Err(Error::InvalidArgument(format!(
                "diagonal shift length {} does not match operator order {}",
                delta.len(),
                self.diag.len()
            )));
        }
        for (d, &s) in self.diag.iter_mut().zip(delta) {
            *d += s;
        }
        Ok(())
    }

    /// Matrix-vector product over the interior unknowns only.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.apply_with_boundary(x, 0.0, 0.0)
    }

    /// Applies the full stencil, substituting the boundary values for u(0)
    /// and u(1) in the first and last rows.
    pub fn apply_with_boundary(&self, x: &[f64], left: f64, right: f64) -> Vec<f64> {
        let n = self.len();
        assert_eq!(x.len(), n, "operator order mismatch");
        let mut y = vec![0.0; n];
        for k in 0..n {
            let mut acc = self.diag[k] * x[k];
            if k > 0 {
                acc += self.sub[k - 1] * x[k - 1];
            } else {
                acc += self.boundary.0 * left;
            }
            if k + 1 < n {
                acc += self.sup[k] * x[k + 1];
            } else {
                acc += self.boundary.1 * right;
            }
            y[k] = acc;
        }
        y
    }
}

fn assemble(mesh: &Mesh, w: impl Fn(f64) -> f64) -> Result<TridiagonalOperator> {
    let pts = mesh.full_points();
    let gaps = mesh.gaps();
    if gaps.iter().any(|&h| h < COLLISION_TOL) {
        return Err(Error::SingularOperator(
            "mesh gap below collision tolerance".into(),
        ));
    }
    let n = mesh.len();
    let mut sub = Vec::with_capacity(n.saturating_sub(1));
    let mut diag = Vec::with_capacity(n);
    let mut sup = Vec::with_capacity(n.saturating_sub(1));
    let mut boundary = (0.0, 0.0);
    for k in 0..n {
        let (h_l, h_r) = (gaps[k], gaps[k + 1]);
        let w_l = w(0.5 * (pts[k] + pts[k + 1]));
        let w_r = w(0.5 * (pts[k + 1] + pts[k + 2]));
        if !(w_l.is_finite() && w_r.is_finite()) || w_l <= 0.0 || w_r <= 0.0 {
            return Err(Error::InvalidArgument(
                "diffusion coefficient must be positive and finite at mesh midpoints".into(),
            ));
        }
        let span = h_l + h_r;
        let c = 2.0 * w_l / (h_l * span);
        let a = 2.0 * w_r / (h_r * span);
        if k == 0 {
            boundary.0 = c;
        } else {
            sub.push(c);
        }
        if k + 1 == n {
            boundary.1 = a;
        } else {
            sup.push(a);
        }
        diag.push(-(c + a));
    }
    Ok(TridiagonalOperator {
        sub,
        diag,
        sup,
        boundary,
    })
}

/// Assembles the three-point second-derivative operator on `mesh`.
pub fn assemble_second_derivative(mesh: &Mesh) -> Result<TridiagonalOperator> {
    assemble(mesh, |_| 1.0)
}

/// Assembles the conservative discretization of (w(x) u')' on `mesh`, with
/// the coefficient evaluated at cell midpoints:
///
/// ```text
/// [w_{k+1/2} (u_{k+1} - u_k)/h_{k+1} - w_{k-1/2} (u_k - u_{k-1})/h_k] * 2/(h_k + h_{k+1})
/// ```
///
/// Midpoint evaluation keeps coefficients with a boundary singularity (such
/// as x^alpha near 0) finite, since no midpoint touches the boundary.
pub fn assemble_variable_coefficient(
    mesh: &Mesh,
    w: impl Fn(f64) -> f64,
) -> Result<TridiagonalOperator> {
    assemble(mesh, w)
}

/// Moves the boundary terms of `op` to the right-hand side: rhs_k = f_k,
/// minus the boundary couplings times the Dirichlet data in the first and
/// last rows.
pub fn boundary_adjusted_rhs(
    op: &TridiagonalOperator,
    f: &[f64],
    left: f64,
    right: f64,
) -> Result<Vec<f64>> {
    let n = op.len();
    if f.len() != n {
        return Err(Error::InvalidArgument(format!(
            "rhs length {} does not match operator order {}",
            f.len(),
            n
        )));
    }
    let mut rhs = f.to_vec();
    rhs[0] -= op.boundary.0 * left;
    rhs[n - 1] -= op.boundary.1 * right;
    Ok(rhs)
}

/// Solves `op * x = rhs` by the elimination sweep for tridiagonal systems.
/// Pivots smaller than [`PIVOT_TOL`] in magnitude abort with a
/// singular-operator error.
pub fn solve_tridiagonal(op: &TridiagonalOperator, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = op.len();
    if rhs.len() != n || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "rhs length {} does not match operator order {}",
            rhs.len(),
            n
        )));
    }
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    let mut denom = op.diag[0];
    if denom.abs() < PIVOT_TOL {
        return Err(Error::SingularOperator("zero pivot in row 0".into()));
    }
    if n > 1 {
        c_prime[0] = op.sup[0] / denom;
    }
    d_prime[0] = rhs[0] / denom;
    for k in 1..n {
        denom = op.diag[k] - op.sub[k - 1] * c_prime[k - 1];
        if denom.abs() < PIVOT_TOL {
            return Err(Error::SingularOperator(format!("zero pivot in row {k}")));
        }
        if k + 1 < n {
            c_prime[k] = op.sup[k] / denom;
        }
        d_prime[k] = (rhs[k] - op.sub[k - 1] * d_prime[k - 1]) / denom;
    }
    let mut x = d_prime;
    for k in (0..n - 1).rev() {
        let next = x[k + 1];
        x[k] -= c_prime[k] * next;
    }
    Ok(x)
}

/// First derivative by centered differences on a (possibly non-uniform)
/// mesh: (u_{k+1} - u_{k-1}) / (h_k + h_{k+1}).
///
/// With `periodic` set, indices wrap around the unit circle (the gap from
/// the last point back to the first runs through the identified boundary).
/// Otherwise the two end nodes fall back to one-sided differences.
pub fn centered_first_derivative(mesh: &Mesh, u: &[f64], periodic: bool) -> Result<Vec<f64>> {
    let n = mesh.len();
    if u.len() != n {
        return Err(Error::InvalidArgument(format!(
            "value vector length {} does not match mesh size {}",
            u.len(),
            n
        )));
    }
    if periodic {
        if n < 3 {
            return Err(Error::InvalidArgument(
                "periodic differences need at least 3 points".into(),
            ));
        }
        let pts = mesh.interior();
        // circ_gap[i] is the distance from node i-1 to node i on the circle.
        let mut circ_gap = vec![0.0; n];
        circ_gap[0] = pts[0] + 1.0 - pts[n - 1];
        for i in 1..n {
            circ_gap[i] = pts[i] - pts[i - 1];
        }
        let mut d = vec![0.0; n];
        for i in 0..n {
            let prev = (i + n - 1) % n;
            let next = (i + 1) % n;
            let span = circ_gap[i] + circ_gap[next];
            d[i] = (u[next] - u[prev]) / span;
        }
        Ok(d)
    } else {
        if n < 2 {
            return Err(Error::InvalidArgument(
                "one-sided differences need at least 2 points".into(),
            ));
        }
        let gaps = mesh.gaps();
        let mut d = vec![0.0; n];
        d[0] = (u[1] - u[0]) / gaps[1];
        for i in 1..n - 1 {
            d[i] = (u[i + 1] - u[i - 1]) / (gaps[i] + gaps[i + 1]);
        }
        d[n - 1] = (u[n - 1] - u[n - 2]) / gaps[n - 1];
        Ok(d)
    }
}

/// Eigenvalues of the operator, all real: the matrix has positive
/// off-diagonal products, so it is diagonally similar to a symmetric
/// tridiagonal matrix with off-diagonals sqrt(sub * sup), and that matrix is
/// handed to a dense symmetric eigensolve.
pub fn operator_eigenvalues(op: &TridiagonalOperator) -> Result<Vec<f64>> {
    let n = op.len();
    if n == 0 || n > MAX_EIGEN_ORDER {
        return Err(Error::InvalidArgument(format!(
            "eigensolve accepts orders 1..={MAX_EIGEN_ORDER}, got {n}"
        )));
    }
    let mut dense = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        dense[(k, k)] = op.diag[k];
    }
    for k in 0..n.saturating_sub(1) {
        let prod = op.sub[k] * op.sup[k];
        if prod <= 0.0 {
            return Err(Error::InvalidArgument(
                "operator is not symmetrizable: off-diagonal product is not positive".into(),
            ));
        }
        let b = prod.sqrt();
        dense[(k, k + 1)] = b;
        dense[(k + 1, k)] = b;
    }
    let eigen = nalgebra::linalg::SymmetricEigen::new(dense);
    Ok(eigen.eigenvalues.iter().copied().collect())
}

/// (min, max) magnitude over the spectrum of the operator's inverse.
pub fn inverse_eigenvalue_magnitudes(op: &TridiagonalOperator) -> Result<(f64, f64)> {
    let eigs = operator_eigenvalues(op)?;
    let mut min_abs = f64::INFINITY;
    let mut max_abs = 0.0f64;
    for lambda in eigs {
        let mag = lambda.abs();
        if mag < PIVOT_TOL {
            return Err(Error::SingularOperator(
                "operator has a numerically zero eigenvalue".into(),
            ));
        }
        min_abs = min_abs.min(mag);
        max_abs = max_abs.max(mag);
    }
    Ok((1.0 / max_abs, 1.0 / min_abs))
}
