//! Dense BFGS minimizer for the nonlinear residual objective.
//!
//! Small and deliberately plain: identity initial inverse Hessian, Armijo
//! backtracking with step halving, and the standard rank-two inverse-Hessian
//! update. The systems it sees have at most a few hundred unknowns.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) struct Settings {
    pub grad_tol: f64,
    /// Fallback acceptance when the iteration budget runs out. Residuals built
    /// from divided differences on meshes with tiny cells carry rounding noise
    /// amplified by the 1/h² stencil scale, which puts a floor of roughly
    /// 1e-9..1e-7 under the achievable gradient norm; iterates stuck at that
    /// floor are minimizers to evaluation precision and are accepted.
    pub floor_grad_tol: f64,
    pub max_iterations: usize,
    pub armijo_c: f64,
    /// Cap on the infinity norm of a single accepted step. Residual systems
    /// with divided differences produce gradients of magnitude 1/h on meshes
    /// with tiny cells; an unclamped first step then jumps clear out of the
    /// basin of the nearby minimizer into a remote one. Clamping the trial
    /// step keeps the iterate in the basin it started in; near convergence
    /// steps are far below the cap and the method is untouched.
    pub max_step: f64,
    /// Half-width of a box constraint centered on `box_center` (or on the
    /// start iterate when no center is given); infinity disables it.
    /// Candidates are clamped into the box inside the line search
    /// (projected-arc backtracking), so minimizers far from the center are
    /// unreachable by construction. Use it when only stationary points near
    /// the center are meaningful answers.
    pub box_radius: f64,
    /// Center of the box constraint; defaults to the start iterate. A caller
    /// chaining several minimizations (warm starts, continuation) sets this
    /// so the box stays anchored instead of drifting with each start.
    pub box_center: Option<DVector<f64>>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            floor_grad_tol: 1e-6,
            max_iterations: 500,
            armijo_c: 1e-4,
            max_step: 1.0,
            box_radius: f64::INFINITY,
            box_center: None,
        }
    }
}

#[derive(Debug)]
pub(crate) struct Minimum {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Minimizes `objective` (value and gradient together) starting from `x0`.
/// Fails with a nonlinear-solver error if the gradient norm is still above
/// the floor tolerance after the iteration budget, or if a search direction
/// admits no decrease at any representable step.
pub(crate) fn minimize<F>(mut objective: F, x0: DVector<f64>, settings: &Settings) -> Result<Minimum>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let n = x0.len();
    let center = settings.box_center.as_ref().unwrap_or(&x0);
    let lower = center.map(|v| v - settings.box_radius);
    let upper = center.map(|v| v + settings.box_radius);
    let clamp = |v: DVector<f64>| v.zip_map(&lower, f64::max).zip_map(&upper, f64::min);
    let mut x = clamp(x0);
    let (mut fx, mut g) = objective(&x);
    let mut h = DMatrix::<f64>::identity(n, n);

    for iter in 0..settings.max_iterations {
        let grad_norm = g.norm();
        if grad_norm <= settings.grad_tol {
            return Ok(Minimum {
                x,
                value: fx,
                grad_norm,
                iterations: iter,
            });
        }

        let mut d = -(&h * &g);
        if !(d.dot(&g) < 0.0) {
            // Curvature information went stale; restart from steepest descent.
            h = DMatrix::identity(n, n);
            d = -g.clone();
        }

        // Projected-arc backtracking: the candidate is clamped into the box
        // and the Armijo decrease is measured along the projected step, so
        // with an infinite box this is plain backtracking on the ray x + t d.
        // The quasi-Newton direction can fail to descend along the projected
        // arc when components pin to the box; steepest descent projected onto
        // the active face still descends whenever any descent exists, so it
        // gets a second attempt before the iteration is declared stuck.
        let mut accepted = None;
        'directions: for attempt in 0..2 {
            if attempt == 1 {
                if settings.box_radius.is_infinite() {
                    break;
                }
                h = DMatrix::identity(n, n);
                d = -g.clone();
            }
            let d_inf = d.amax();
            let mut t = if d_inf > settings.max_step {
                settings.max_step / d_inf
            } else {
                1.0
            };
            while t >= 1e-20 {
                let candidate = clamp(&x + &d * t);
                let step = &candidate - &x;
                let decrease = g.dot(&step);
                if decrease < 0.0 {
                    let (f_t, g_t) = objective(&candidate);
                    if f_t <= fx + settings.armijo_c * decrease {
                        accepted = Some((candidate, f_t, g_t));
                        break 'directions;
                    }
                }
                t *= 0.5;
            }
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            // No direction admits a representable decrease. At a gradient
            // norm within the evaluation-noise floor that is convergence to
            // the precision the objective supports, not a failure.
            if grad_norm <= settings.floor_grad_tol {
                return Ok(Minimum {
                    x,
                    value: fx,
                    grad_norm,
                    iterations: iter,
                });
            }
            return Err(Error::NonlinearSolverFailure {
                iterations: iter,
                grad_norm,
            });
        };

        // The quadratic model H approximates curvature on the current active
        // face; when the set of pinned components changes, that model is for
        // the wrong subspace and is discarded.
        let pinned = |v: &DVector<f64>| -> u64 {
            let mut mask = 0u64;
            for i in 0..n {
                if v[i] <= lower[i] || v[i] >= upper[i] {
                    mask |= 1 << (i % 64);
                }
            }
            mask
        };
        let face_changed =
            settings.box_radius.is_finite() && pinned(&x_new) != pinned(&x);

        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        // Skip the update when the curvature condition is numerically void.
        if face_changed {
            h = DMatrix::identity(n, n);
        } else if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // (I - rho s y^T) H (I - rho y s^T) + rho s s^T, expanded into
            // three rank-one updates.
            h.ger(-rho, &s, &hy, 1.0);
            h.ger(-rho, &hy, &s, 1.0);
            h.ger(rho * rho * yhy + rho, &s, &s, 1.0);
        }

        x = x_new;
        fx = f_new;
        g = g_new;
    }

    let grad_norm = g.norm();
    if grad_norm <= settings.floor_grad_tol {
        Ok(Minimum {
            x,
            value: fx,
            grad_norm,
            iterations: settings.max_iterations,
        })
    } else {
        Err(Error::NonlinearSolverFailure {
            iterations: settings.max_iterations,
            grad_norm,
        })
    }
}
