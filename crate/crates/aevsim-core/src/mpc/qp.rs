//! Direction generator for the horizon solver: a box-constrained convex
//! piecewise-quadratic program. Linearized state constraints enter as
//! one-sided quadratic hinge penalties (`weight * max(0, bound - a.x)^2`),
//! so the only hard constraints are the variable box. Solved by projected
//! Newton with an active-set reduction and backtracking line search.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{Cholesky, Mat};

/// One soft constraint `a.x >= bound`, penalized below the bound by
/// `linear_weight * d + quad_weight * d^2` with `d = max(0, bound - a.x)`.
/// The linear term is the exact penalty matching the outer merit function;
/// the quadratic term supplies curvature for the Newton model.
/// Coefficients are sparse `(index, value)` pairs.
pub struct HingeRow {
    pub coeffs: Vec<(usize, f64)>,
    pub bound: f64,
    pub linear_weight: f64,
    pub quad_weight: f64,
}

impl HingeRow {
    fn dot(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, v)| v * x[j]).sum()
    }
}

/// Box-constrained convex piecewise linear-quadratic problem
/// `min g.x + x'Hx/2 + sum_r penalty_r(max(0, b_r - a_r.x))` over
/// `lo <= x <= hi`.
pub struct BoxQp {
    pub h: Mat,
    pub g: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub rows: Vec<HingeRow>,
}

pub struct QpSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Infinity norm of the projected gradient at the returned point.
    pub projected_gradient: f64,
}

const MAX_NEWTON: usize = 40;
const GRAD_TOL: f64 = 1e-9;

fn objective(qp: &BoxQp, x: &[f64]) -> f64 {
    let hx = qp.h.mul_vec(x);
    let mut val = 0.0;
    for j in 0..x.len() {
        val += qp.g[j] * x[j] + 0.5 * x[j] * hx[j];
    }
    for r in &qp.rows {
        let d = r.bound - r.dot(x);
        if d > 0.0 {
            val += r.linear_weight * d + r.quad_weight * d * d;
        }
    }
    val
}

fn gradient(qp: &BoxQp, x: &[f64]) -> Vec<f64> {
    let mut grad = qp.h.mul_vec(x);
    for j in 0..x.len() {
        grad[j] += qp.g[j];
    }
    for r in &qp.rows {
        let d = r.bound - r.dot(x);
        if d > 0.0 {
            let s = -(r.linear_weight + 2.0 * r.quad_weight * d);
            for &(j, v) in &r.coeffs {
                grad[j] += s * v;
            }
        }
    }
    grad
}

/// Solve the problem starting at the box-projected origin.
pub fn solve_box_qp(qp: &BoxQp) -> QpSolution {
    let n = qp.g.len();
    let mut x = vec![0.0; n];
    for j in 0..n {
        x[j] = x[j].clamp(qp.lo[j], qp.hi[j]);
    }
    let mut obj = objective(qp, &x);
    let mut iterations = 0;
    let mut pg_norm = f64::MAX;

    while iterations < MAX_NEWTON {
        iterations += 1;
        let grad = gradient(qp, &x);

        // projected-gradient optimality measure
        pg_norm = 0.0;
        for j in 0..n {
            let step = (x[j] - grad[j]).clamp(qp.lo[j], qp.hi[j]) - x[j];
            pg_norm = pg_norm.max(step.abs());
        }
        if pg_norm < GRAD_TOL {
            break;
        }

        // free set: variables not pinned at a bound by the gradient sign
        let mut free: Vec<usize> = Vec::with_capacity(n);
        for j in 0..n {
            let at_lo = x[j] <= qp.lo[j] + 1e-12 && grad[j] > 0.0;
            let at_hi = x[j] >= qp.hi[j] - 1e-12 && grad[j] < 0.0;
            if !(at_lo || at_hi) {
                free.push(j);
            }
        }
        if free.is_empty() {
            break;
        }

        // reduced Newton system over the free set with active hinges
        let nf = free.len();
        let mut hess = Mat::zeros(nf, nf);
        for (a, &ja) in free.iter().enumerate() {
            for (b, &jb) in free.iter().enumerate() {
                *hess.at_mut(a, b) = qp.h.at(ja, jb);
            }
        }
        let mut pos = vec![usize::MAX; n];
        for (a, &j) in free.iter().enumerate() {
            pos[j] = a;
        }
        for r in &qp.rows {
            if r.bound - r.dot(&x) > 0.0 {
                let w2 = 2.0 * r.quad_weight;
                for &(j1, v1) in &r.coeffs {
                    let a = pos[j1];
                    if a == usize::MAX {
                        continue;
                    }
                    for &(j2, v2) in &r.coeffs {
                        let b = pos[j2];
                        if b != usize::MAX {
                            *hess.at_mut(a, b) += w2 * v1 * v2;
                        }
                    }
                }
            }
        }
        let rhs: Vec<f64> = free.iter().map(|&j| -grad[j]).collect();
        let mut p_free = match Cholesky::new(&hess) {
            Some(chol) => chol.solve(&rhs),
            // fall back to steepest descent when the reduced system is
            // numerically degenerate
            None => rhs.clone(),
        };
        // cap the step so backtracking spans the whole box
        let p_max = p_free.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let span = qp
            .lo
            .iter()
            .zip(&qp.hi)
            .fold(1.0_f64, |m, (l, h)| m.max(h - l));
        if p_max > 4.0 * span {
            let s = 4.0 * span / p_max;
            for p in &mut p_free {
                *p *= s;
            }
        }

        // backtracking line search on the projected path
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let mut x_new = x.clone();
            for (a, &j) in free.iter().enumerate() {
                x_new[j] = (x[j] + t * p_free[a]).clamp(qp.lo[j], qp.hi[j]);
            }
            let obj_new = objective(qp, &x_new);
            if obj_new < obj - 1e-14 {
                x = x_new;
                obj = obj_new;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    QpSolution { x, iterations, projected_gradient: pg_norm }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(vals: &[f64]) -> Mat {
        let n = vals.len();
        let mut m = Mat::zeros(n, n);
        for (i, v) in vals.iter().enumerate() {
            *m.at_mut(i, i) = *v;
        }
        m
    }

    #[test]
    fn unconstrained_quadratic_minimum_inside_box() {
        let qp = BoxQp {
            h: diag(&[2.0, 2.0]),
            g: vec![-2.0, 4.0],
            lo: vec![-5.0, -5.0],
            hi: vec![5.0, 5.0],
            rows: vec![],
        };
        let sol = solve_box_qp(&qp);
        assert!((sol.x[0] - 1.0).abs() < 1e-8, "{:?}", sol.x);
        assert!((sol.x[1] + 2.0).abs() < 1e-8, "{:?}", sol.x);
    }

    #[test]
    fn linear_cost_pins_to_box_corner() {
        let qp = BoxQp {
            h: diag(&[1e-3, 1e-3, 1e-3]),
            g: vec![1.0, -2.0, 0.5],
            lo: vec![-1.0; 3],
            hi: vec![1.0; 3],
            rows: vec![],
        };
        let sol = solve_box_qp(&qp);
        assert!((sol.x[0] + 1.0).abs() < 1e-6);
        assert!((sol.x[1] - 1.0).abs() < 1e-6);
        assert!((sol.x[2] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn hinge_pulls_solution_to_the_constraint() {
        // min x^2 + mu*max(0, 3 - (x1 + x2))^2 over [0, 2]^2
        let qp = BoxQp {
            h: diag(&[2.0, 2.0]),
            g: vec![0.0, 0.0],
            lo: vec![0.0, 0.0],
            hi: vec![2.0, 2.0],
            rows: vec![HingeRow {
                coeffs: vec![(0, 1.0), (1, 1.0)],
                bound: 3.0,
                linear_weight: 1e4,
                quad_weight: 1e7,
            }],
        };
        let sol = solve_box_qp(&qp);
        assert!((sol.x[0] - 1.5).abs() < 1e-3, "{:?}", sol.x);
        assert!((sol.x[1] - 1.5).abs() < 1e-3, "{:?}", sol.x);
    }

    #[test]
    fn competing_hinges_balance_by_weight() {
        // one-dimensional tug of war: heavy hinge wants x >= 1, light linear
        // cost pushes down; solution sits just below 1
        let qp = BoxQp {
            h: diag(&[1e-3]),
            g: vec![1.0],
            lo: vec![-10.0],
            hi: vec![10.0],
            rows: vec![HingeRow {
                coeffs: vec![(0, 1.0)],
                bound: 1.0,
                linear_weight: 1e3,
                quad_weight: 1e6,
            }],
        };
        let sol = solve_box_qp(&qp);
        // the linear exact penalty (1e3 > cost slope 1) lands at the bound,
        // possibly overshooting to the feasible side by linear/quad
        assert!(sol.x[0] >= 1.0 - 1e-6 && sol.x[0] <= 1.0 + 1e-3, "{:?}", sol.x);
    }
}
