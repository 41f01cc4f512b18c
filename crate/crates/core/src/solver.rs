//! Gauss-Newton hyperbolic multilateration.
//!
//! Minimizes the squared mismatch between measured range differences and
//! the layout's distance-difference function, iterating
//! `p += beta * (H^T H)^-1 H^T (rstd_m - h(p))` with a backtracking step
//! factor and Levenberg-style damping for near-degenerate geometries.

use crate::error::{Error, Result};
use crate::geometry::{BsLayout, Point2};
use crate::scalar::Scalar;

/// Iteration controls. Defaults suit the meter-scale layouts used here.
#[derive(Clone, Debug)]
pub struct SolverOptions<F> {
    pub max_iter: usize,
    /// Stop once the accepted step is shorter than this, meters.
    pub step_tol: F,
    /// Starting point; `None` picks the BS centroid nudged off-center,
    /// where the distance differences are smooth.
    pub initial_point: Option<Point2<F>>,
    /// Scale of the diagonal damping applied when the normal matrix is
    /// ill-conditioned.
    pub damping_floor: F,
    /// Halve the step while it increases the residual norm.
    pub backtracking: bool,
}

impl<F: Scalar> Default for SolverOptions<F> {
    fn default() -> Self {
        Self {
            max_iter: 50,
            step_tol: F::from(1e-3).unwrap(),
            initial_point: None,
            damping_floor: F::from(1e-9).unwrap(),
            backtracking: true,
        }
    }
}

/// Final iterate and convergence diagnostics.
#[derive(Clone, Debug)]
pub struct SolveResult<F> {
    pub estimate: Point2<F>,
    pub iterations: usize,
    pub final_residual_norm: F,
    pub converged: bool,
    /// Residual two-norm at the initial point and after each accepted step.
    pub residual_norms: Vec<F>,
}

const COND_LIMIT: f64 = 1e12;
const MAX_BACKTRACKS: usize = 10;

/// Residual vector `u_i(p) = rstd_m[i] - h_i(p)` in meters.
pub fn residual<F: Scalar>(
    p: Point2<F>,
    rstd_m: &[F],
    layout: &BsLayout<F>,
) -> Result<Vec<F>> {
    check_lengths(rstd_m.len(), layout.n_bs())?;
    Ok(residual_at(p, rstd_m, layout.positions()))
}

fn residual_at<F: Scalar>(p: Point2<F>, rstd_m: &[F], positions: &[Point2<F>]) -> Vec<F> {
    let d0 = p.dist(positions[0]);
    rstd_m
        .iter()
        .zip(&positions[1..])
        .map(|(&m, &bs)| m - (p.dist(bs) - d0))
        .collect()
}

/// Jacobian of the distance-difference vector: row `i` is the unit vector
/// from neighbor `i` toward `p` minus the unit vector from the serving BS
/// toward `p`.
pub fn jacobian<F: Scalar>(p: Point2<F>, layout: &BsLayout<F>) -> Result<Vec<[F; 2]>> {
    jacobian_at(p, layout.positions())
}

fn jacobian_at<F: Scalar>(p: Point2<F>, positions: &[Point2<F>]) -> Result<Vec<[F; 2]>> {
    let mut rows = Vec::with_capacity(positions.len() - 1);
    let r0 = p - positions[0];
    let d0 = r0.norm();
    if d0 == F::zero() {
        return Err(Error::SingularGeometry(
            "point coincides with the serving BS".into(),
        ));
    }
    let u0 = Point2::new(r0.x / d0, r0.y / d0);
    for &bs in &positions[1..] {
        let r = p - bs;
        let d = r.norm();
        if d == F::zero() {
            return Err(Error::SingularGeometry("point coincides with a BS".into()));
        }
        rows.push([r.x / d - u0.x, r.y / d - u0.y]);
    }
    Ok(rows)
}

/// Gauss-Newton solve against a layout. `rstd_m` holds the measured range
/// differences in meters, one per neighbor.
pub fn solve<F: Scalar>(
    rstd_m: &[F],
    layout: &BsLayout<F>,
    opts: &SolverOptions<F>,
) -> Result<SolveResult<F>> {
    check_lengths(rstd_m.len(), layout.n_bs())?;
    solve_at(rstd_m, layout.positions(), opts)
}

/// Same as [`solve`] over a raw position list whose first entry is the
/// reference BS; the positions need not be anchored at the origin.
pub fn solve_at<F: Scalar>(
    rstd_m: &[F],
    positions: &[Point2<F>],
    opts: &SolverOptions<F>,
) -> Result<SolveResult<F>> {
    if positions.len() < 3 {
        return Err(Error::Underdetermined(format!(
            "2D position needs at least 3 BSs, got {}",
            positions.len()
        )));
    }
    if rstd_m.len() != positions.len() - 1 {
        return Err(Error::dimension(format!(
            "expected {} range differences, got {}",
            positions.len() - 1,
            rstd_m.len()
        )));
    }

    let half = F::from(0.5).unwrap();
    let mut p = opts.initial_point.unwrap_or_else(|| default_start(positions));
    let mut res = residual_at(p, rstd_m, positions);
    let mut r_norm = two_norm(&res);
    let mut norms = vec![r_norm];
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..opts.max_iter {
        let rows = jacobian_at(p, positions)?;

        // 2x2 normal equations, assembled and solved in closed form
        let mut a = F::zero();
        let mut b = F::zero();
        let mut d = F::zero();
        let mut gx = F::zero();
        let mut gy = F::zero();
        for (row, &u) in rows.iter().zip(&res) {
            a += row[0] * row[0];
            b += row[0] * row[1];
            d += row[1] * row[1];
            gx += row[0] * u;
            gy += row[1] * u;
        }
        if condition_estimate(a, b, d) > F::from(COND_LIMIT).unwrap() {
            let lambda = opts.damping_floor * (a + d);
            a += lambda;
            d += lambda;
        }
        let det = a * d - b * b;
        if !(det > F::zero()) {
            return Err(Error::SingularGeometry(format!(
                "normal matrix is singular (det = {det})"
            )));
        }
        let sx = (d * gx - b * gy) / det;
        let sy = (a * gy - b * gx) / det;
        let step_len = (sx * sx + sy * sy).sqrt();

        // backtracking line search on the residual two-norm
        let mut beta = F::one();
        let mut accepted = None;
        for _ in 0..=MAX_BACKTRACKS {
            let trial = Point2::new(p.x + beta * sx, p.y + beta * sy);
            let trial_res = residual_at(trial, rstd_m, positions);
            let trial_norm = two_norm(&trial_res);
            if !opts.backtracking || trial_norm <= r_norm {
                accepted = Some((trial, trial_res, trial_norm, beta));
                break;
            }
            beta = beta * half;
        }
        let Some((trial, trial_res, trial_norm, beta)) = accepted else {
            // no step factor reduces the residual: stationary point
            converged = true;
            break;
        };
        p = trial;
        res = trial_res;
        r_norm = trial_norm;
        iterations += 1;
        norms.push(r_norm);
        if beta * step_len < opts.step_tol {
            converged = true;
            break;
        }
    }

    Ok(SolveResult {
        estimate: p,
        iterations,
        final_residual_norm: r_norm,
        converged,
        residual_norms: norms,
    })
}

/// Centroid of the BSs plus a fixed off-center nudge of a tenth of the
/// reference spacing per coordinate. The exact centroid of a symmetric
/// layout coincides with the serving BS, where h is non-differentiable.
fn default_start<F: Scalar>(positions: &[Point2<F>]) -> Point2<F> {
    let n = F::from(positions.len()).unwrap();
    let mut cx = F::zero();
    let mut cy = F::zero();
    for bs in positions {
        cx += bs.x;
        cy += bs.y;
    }
    let nudge = positions[0].dist(positions[1]) / F::from(10.0).unwrap();
    Point2::new(cx / n + nudge, cy / n + nudge)
}

fn two_norm<F: Scalar>(v: &[F]) -> F {
    v.iter().map(|&x| x * x).sum::<F>().sqrt()
}

/// Ratio of the eigenvalues of the symmetric 2x2 matrix [[a, b], [b, d]];
/// infinite when the matrix is not positive definite.
fn condition_estimate<F: Scalar>(a: F, b: F, d: F) -> F {
    let half = F::from(0.5).unwrap();
    let half_tr = (a + d) * half;
    let det = a * d - b * b;
    let disc = (half_tr * half_tr - det).max(F::zero()).sqrt();
    let lo = half_tr - disc;
    if lo > F::zero() {
        (half_tr + disc) / lo
    } else {
        F::infinity()
    }
}

fn check_lengths(rstd_len: usize, n_bs: usize) -> Result<()> {
    if rstd_len != n_bs - 1 {
        return Err(Error::dimension(format!(
            "expected {} range differences for {} BSs, got {}",
            n_bs - 1,
            n_bs,
            rstd_len
        )));
    }
    Ok(())
}
