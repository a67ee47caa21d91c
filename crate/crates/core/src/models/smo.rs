// SPDX-License-Identifier: Apache-2.0

//! Sequential minimal optimization for box- and equality-constrained
//! quadratic programs of the form
//!
//! ```text
//! min  0.5 a'Qa + p'a   s.t.  y'a = 0,  0 <= a_i <= C
//! ```
//!
//! with `y_i` in {-1, +1}. Working pairs come from maximal-violation /
//! second-order selection, and the offset `rho` follows the usual
//! free-variable average. Both the C-SVC and epsilon-SVR duals map onto
//! this form.

/// Stopping tolerance on the maximal KKT violation.
pub const KKT_TOLERANCE: f64 = 1e-9;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Problem<'a> {
    /// Dense `n x n` matrix, `q[i][j] = y_i y_j K_ij`.
    pub q: &'a [Vec<f64>],
    pub p: &'a [f64],
    pub y: &'a [f64],
    pub c: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    /// Maximal violation `m(a) - M(a)` at exit.
    pub kkt_gap: f64,
    /// Primal-form objective after each iteration, when tracing.
    pub objective_trace: Vec<f64>,
}

pub fn objective(q: &[Vec<f64>], p: &[f64], alpha: &[f64]) -> f64 {
    let mut f = 0.0;
    for i in 0..alpha.len() {
        if alpha[i] == 0.0 {
            continue;
        }
        let qa: f64 = q[i].iter().zip(alpha).map(|(a, b)| a * b).sum();
        f += alpha[i] * (0.5 * qa + p[i]);
    }
    f
}

pub fn solve(prob: &Problem<'_>, trace: bool) -> Solution {
    let n = prob.p.len();
    let (q, y, c) = (prob.q, prob.y, prob.c);
    let mut alpha = vec![0.0; n];
    let mut grad = prob.p.to_vec();
    let max_iter = 10_000_000usize.max(100 * n);
    let mut trace_out = Vec::new();
    let mut iter = 0;
    let in_up = |a: f64, yt: f64| if yt > 0.0 { a < c } else { a > 0.0 };
    let in_low = |a: f64, yt: f64| if yt > 0.0 { a > 0.0 } else { a < c };
    let mut gap;
    loop {
        // i: maximal -y G over I_up.
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if in_up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i_sel = t;
                }
            }
        }
        // j: second-order choice over I_low.
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut obj_min = f64::INFINITY;
        for t in 0..n {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let v = y[t] * grad[t];
            if v > gmax2 {
                gmax2 = v;
            }
            if i_sel == usize::MAX {
                continue;
            }
            let b = gmax + v;
            if b > 0.0 {
                let a = q[i_sel][i_sel] + q[t][t] - 2.0 * y[i_sel] * y[t] * q[i_sel][t];
                let a = if a > 0.0 { a } else { TAU };
                let o = -(b * b) / a;
                if o <= obj_min {
                    obj_min = o;
                    j_sel = t;
                }
            }
        }
        gap = gmax + gmax2;
        if i_sel == usize::MAX || j_sel == usize::MAX || gap < KKT_TOLERANCE || iter >= max_iter {
            break;
        }
        iter += 1;
        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (q[i][i] + q[j][j] + 2.0 * q[i][j]).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (q[i][i] + q[j][j] - 2.0 * q[i][j]).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q[t][i] * di + q[t][j] * dj;
        }
        if trace {
            trace_out.push(objective(q, prob.p, &alpha));
        }
    }

    let rho = compute_rho(&alpha, &grad, y, c);
    Solution {
        alpha,
        rho,
        iterations: iter,
        kkt_gap: gap.max(0.0),
        objective_trace: trace_out,
    }
}

fn compute_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else {
        lb
    }
}
