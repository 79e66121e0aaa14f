//! Levenberg–Marquardt for small dense problems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmOptions {
    pub initial_damping: f64,
    /// Damping is multiplied by this on a rejected step and divided by it on
    /// an accepted one.
    pub damping_factor: f64,
    /// Stop when an accepted step lowers the SSE by less than this fraction.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            initial_damping: 1e-3,
            damping_factor: 10.0,
            rel_tol: 1e-12,
            max_iter: 500,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LmOutcome {
    pub x: Vec<f64>,
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// SSE after every accepted step, starting with the initial point.
    pub history: Vec<f64>,
}

fn sse(r: &DVector<f64>) -> f64 {
    r.norm_squared()
}

/// Minimizes `‖r(x)‖²`. `residual` returns `None` outside the admissible
/// domain, which counts as a rejected step.
pub(crate) fn minimize(
    mut residual: impl FnMut(&[f64]) -> Option<DVector<f64>>,
    mut jacobian: impl FnMut(&[f64]) -> Option<DMatrix<f64>>,
    x0: &[f64],
    opts: &LmOptions,
) -> Result<LmOutcome> {
    let mut x = x0.to_vec();
    let mut r = residual(&x).ok_or_else(|| Error::Domain("initial point outside the model domain".into()))?;
    let mut cost = sse(&r);
    if !cost.is_finite() {
        return Err(Error::Domain("initial residual is not finite".into()));
    }
    let mut history = vec![cost];
    let mut mu = opts.initial_damping;
    let n = x.len();
    let mut iterations = 0;
    let mut converged = cost == 0.0;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let j = jacobian(&x).ok_or_else(|| Error::Domain("jacobian undefined at the current point".into()))?;
        let jtj = j.transpose() * &j;
        let grad = j.transpose() * &r;
        let floor = jtj.diagonal().max() * 1e-30;
        let mut accepted = false;
        while !accepted {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += mu * jtj[(i, i)].max(floor).max(f64::MIN_POSITIVE);
            }
            let step = a.cholesky().map(|c| c.solve(&(-&grad)));
            if let Some(step) = step {
                let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                if let Some(rt) = residual(&trial) {
                    let ct = sse(&rt);
                    if ct.is_finite() && ct <= cost {
                        let drop = cost - ct;
                        x = trial;
                        r = rt;
                        cost = ct;
                        history.push(cost);
                        mu = (mu / opts.damping_factor).max(1e-300);
                        accepted = true;
                        if cost == 0.0 || drop <= opts.rel_tol * (cost + drop) {
                            converged = true;
                        }
                        continue;
                    }
                }
            }
            mu *= opts.damping_factor;
            if mu > 1e16 {
                // no downhill step exists at working precision
                converged = true;
                break;
            }
        }
    }
    Ok(LmOutcome {
        x,
        sse: cost,
        iterations,
        converged,
        history,
    })
}

/// Singular values of `j` (descending).
pub(crate) fn singular_values(j: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = j.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Linearized covariance `s² (JᵀJ)⁺` with `s² = SSE / (m − n)`.
pub(crate) fn covariance(j: &DMatrix<f64>, sse: f64) -> DMatrix<f64> {
    let (m, n) = j.shape();
    let dof = if m > n { (m - n) as f64 } else { 1.0 };
    let jtj = j.transpose() * j;
    let pinv = jtj
        .clone()
        .pseudo_inverse(1e-14 * jtj.norm())
        .unwrap_or_else(|_| DMatrix::from_element(n, n, f64::NAN));
    pinv * (sse / dof)
}
