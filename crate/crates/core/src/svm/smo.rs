//! Sequential minimal optimization for the C-SVC dual
//!
//! ```text
//! min_a  0.5 a'Qa - e'a    s.t.  y'a = 0,  0 <= a_i <= C,   Q_ij = y_i y_j K_ij
//! ```
//!
//! Working pairs are the maximal KKT violators; ties go to the lowest index.
//! No shrinking.

use ndarray::ArrayView2;

use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub alpha: Vec<f64>,
    /// Decision function is `sum_i a_i y_i K(x_i, x) - rho`.
    pub rho: f64,
    /// Final maximal violation `m(a) - M(a)`.
    pub violation: f64,
}

fn in_up(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// Returns `(i, j, m - M)` for the maximal violating pair.
fn select_pair(y: &[f64], alpha: &[f64], grad: &[f64], c: f64) -> (usize, usize, f64) {
    let mut gmax = f64::NEG_INFINITY;
    let mut gmin = f64::INFINITY;
    let (mut i, mut j) = (usize::MAX, usize::MAX);
    for t in 0..y.len() {
        let v = -y[t] * grad[t];
        if in_up(y[t], alpha[t], c) && v > gmax {
            gmax = v;
            i = t;
        }
        if in_low(y[t], alpha[t], c) && v < gmin {
            gmin = v;
            j = t;
        }
    }
    (i, j, gmax - gmin)
}

pub(crate) fn solve(k: ArrayView2<f64>, y: &[f64], c: f64, eps: f64) -> Result<Solution> {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = (100 * n).max(10_000_000);

    let mut violation;
    let mut iter = 0;
    loop {
        let (i, j, gap) = select_pair(y, &alpha, &grad, c);
        violation = gap;
        if i == usize::MAX || j == usize::MAX || gap < eps {
            break;
        }
        if iter >= max_iter {
            return Err(Error::NotConverged {
                iterations: iter,
                violation,
            });
        }
        iter += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = (k[[i, i]] + k[[j, j]] - 2.0 * k[[i, j]]).max(TAU);
        let (mut ai, mut aj) = (old_i, old_j);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;

        let (di, dj) = (ai - old_i, aj - old_j);
        let (yi, yj) = (y[i], y[j]);
        let (ki, kj) = (k.row(i), k.row(j));
        for t in 0..n {
            grad[t] += y[t] * (yi * ki[t] * di + yj * kj[t] * dj);
        }
    }

    let rho = compute_rho(y, &alpha, &grad, c);
    Ok(Solution {
        alpha,
        rho,
        violation,
    })
}

fn compute_rho(y: &[f64], alpha: &[f64], grad: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free = 0usize;
    let mut sum = 0.0;
    for t in 0..y.len() {
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
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// `sum a - 0.5 sum_ij a_i a_j y_i y_j K_ij` (the maximization form).
pub fn dual_objective(k: ArrayView2<f64>, y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[[i, j]];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}
