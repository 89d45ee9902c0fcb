//! Box-constrained convex quadratic programs
//! `min ½ xᵀHx + gᵀx  s.t.  lo ≤ x ≤ hi`.
//!
//! ADMM with a cached Cholesky factor gets close to the optimum; a
//! primal-dual active-set pass then solves the reduced KKT system exactly.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct BoxQpSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn objective(h: &DMatrix<f64>, g: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(h * x)) + g.dot(x)
}

fn project(x: &mut DVector<f64>, lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Solves the reduced system with the active set fixed; returns `None` if
/// the free block is not positive definite.
fn solve_active(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    fixed: &[Option<f64>],
    reg: f64,
) -> Option<DVector<f64>> {
    let n = g.len();
    let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
    let mut x = DVector::from_iterator(n, fixed.iter().map(|f| f.unwrap_or(0.0)));
    if free.is_empty() {
        return Some(x);
    }
    let m = free.len();
    let mut hff = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    for (a, &i) in free.iter().enumerate() {
        let mut r = -g[i];
        for j in 0..n {
            if let Some(v) = fixed[j] {
                r -= h[(i, j)] * v;
            }
        }
        rhs[a] = r;
        for (b, &j) in free.iter().enumerate() {
            hff[(a, b)] = h[(i, j)];
        }
        hff[(a, a)] += reg;
    }
    let chol = hff.cholesky()?;
    let sol = chol.solve(&rhs);
    for (a, &i) in free.iter().enumerate() {
        x[i] = sol[a];
    }
    Some(x)
}

pub fn solve_box_qp(h: &DMatrix<f64>, g: &DVector<f64>, lo: &[f64], hi: &[f64], x0: &[f64]) -> BoxQpSolution {
    let n = g.len();
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-12);
    // tiny ridge keeps flat directions (e.g. a straight line shifted
    // sideways) well posed; they then resolve toward zero offset
    let reg = 1e-10 * scale;
    let rho = (0..n).map(|i| h[(i, i)]).sum::<f64>() / n as f64 + reg;
    let mut hr = h.clone();
    for i in 0..n {
        hr[(i, i)] += reg + rho;
    }
    let chol = hr.cholesky().expect("H + ρI is positive definite");

    let mut z = DVector::from_column_slice(x0);
    project(&mut z, lo, hi);
    let mut u = DVector::zeros(n);
    let mut iterations = 0;
    let tol = 1e-8 * (1.0 + z.amax());
    for k in 0..2000 {
        iterations = k + 1;
        let rhs = (&z - &u) * rho - g;
        let x = chol.solve(&rhs);
        let z_prev = z.clone();
        z = &x + &u;
        project(&mut z, lo, hi);
        u += &x - &z;
        let primal = (&x - &z).amax();
        let dual = (&z - &z_prev).amax();
        if primal < tol && dual < tol {
            break;
        }
    }
    let admm = z.clone();

    // active-set polish
    let mut best = admm.clone();
    let mut best_obj = objective(h, g, &best);
    let mut converged = false;
    let mut fixed: Vec<Option<f64>> = (0..n)
        .map(|i| {
            let grad = (h.row(i) * &admm)[0] + g[i];
            if admm[i] <= lo[i] + 1e-9 && grad > 0.0 {
                Some(lo[i])
            } else if admm[i] >= hi[i] - 1e-9 && grad < 0.0 {
                Some(hi[i])
            } else {
                None
            }
        })
        .collect();
    for _ in 0..50 {
        let Some(cand) = solve_active(h, g, &fixed, reg) else { break };
        let grad = h * &cand + g;
        let mut next = fixed.clone();
        let mut changed = false;
        for i in 0..n {
            match fixed[i] {
                None if cand[i] < lo[i] - 1e-12 => {
                    next[i] = Some(lo[i]);
                    changed = true;
                }
                None if cand[i] > hi[i] + 1e-12 => {
                    next[i] = Some(hi[i]);
                    changed = true;
                }
                Some(v) if v == lo[i] && grad[i] < 0.0 => {
                    next[i] = None;
                    changed = true;
                }
                Some(v) if v == hi[i] && grad[i] > 0.0 => {
                    next[i] = None;
                    changed = true;
                }
                _ => {}
            }
        }
        let mut feasible = cand.clone();
        project(&mut feasible, lo, hi);
        let obj = objective(h, g, &feasible);
        if obj <= best_obj {
            best = feasible;
            best_obj = obj;
        }
        if !changed {
            converged = true;
            break;
        }
        fixed = next;
    }

    BoxQpSolution {
        x: best.iter().copied().collect(),
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_minimum_inside_box() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let g = DVector::from_vec(vec![-1.0, -1.0]);
        let sol = solve_box_qp(&h, &g, &[-10.0, -10.0], &[10.0, 10.0], &[0.0, 0.0]);
        let exact = h.clone().cholesky().unwrap().solve(&(-&g));
        assert!((sol.x[0] - exact[0]).abs() < 1e-9);
        assert!((sol.x[1] - exact[1]).abs() < 1e-9);
        assert!(sol.converged);
    }

    #[test]
    fn active_bound() {
        // minimise (x-3)² + (y+2)² in the unit box
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0]));
        let g = DVector::from_vec(vec![-6.0, 4.0]);
        let sol = solve_box_qp(&h, &g, &[-1.0, -1.0], &[1.0, 1.0], &[0.0, 0.0]);
        assert_eq!(sol.x, vec![1.0, -1.0]);
    }

    #[test]
    fn matches_brute_force_on_small_problem() {
        let h = DMatrix::from_row_slice(3, 3, &[4.0, -2.0, 0.5, -2.0, 3.0, -1.0, 0.5, -1.0, 2.0]);
        let g = DVector::from_vec(vec![1.0, -3.0, 2.5]);
        let lo = [-0.5, -0.5, -0.5];
        let hi = [0.5, 0.5, 0.5];
        let sol = solve_box_qp(&h, &g, &lo, &hi, &[0.0; 3]);
        let f = |x: &[f64]| objective(&h, &g, &DVector::from_column_slice(x));
        let best = f(&sol.x);
        let steps = 100;
        for i in 0..=steps {
            for j in 0..=steps {
                for k in 0..=steps {
                    let p = [
                        -0.5 + i as f64 / steps as f64,
                        -0.5 + j as f64 / steps as f64,
                        -0.5 + k as f64 / steps as f64,
                    ];
                    assert!(f(&p) >= best - 1e-12);
                }
            }
        }
    }
}
