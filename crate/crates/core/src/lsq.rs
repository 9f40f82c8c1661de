//! Bounded Levenberg–Marquardt for small weighted least-squares problems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Converged once every step component is below `rel_step·(|p| + abs_floor)`.
    pub rel_step: f64,
    pub abs_floor: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iter: 200, rel_step: 1e-10, abs_floor: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmSolution {
    pub params: Vec<f64>,
    /// `(JᵀJ)⁻¹` of the weighted residuals at the solution.
    pub covariance: DMatrix<f64>,
    /// Sum of squared weighted residuals.
    pub chi2: f64,
    pub iterations: usize,
}

fn clamp(p: &mut [f64], bounds: &[(f64, f64)]) {
    for (x, &(lo, hi)) in p.iter_mut().zip(bounds) {
        *x = x.clamp(lo, hi);
    }
}

/// Minimizes `|r(p)|²` where `eval(p)` returns the weighted residual vector
/// and its Jacobian `∂r/∂p`. Iterates are projected onto `bounds`.
pub fn levenberg_marquardt<F>(eval: F, p0: &[f64], bounds: &[(f64, f64)], opts: &LmOptions) -> Result<LmSolution>
where
    F: Fn(&[f64]) -> (DVector<f64>, DMatrix<f64>),
{
    let np = p0.len();
    let mut p = p0.to_vec();
    clamp(&mut p, bounds);
    let (mut r, mut j) = eval(&p);
    let mut cost = r.norm_squared();
    let mut mu = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        // parameters pinned at a bound with the descent direction pointing outward
        let active: Vec<bool> = (0..np)
            .map(|k| (p[k] <= bounds[k].0 && g[k] > 0.0) || (p[k] >= bounds[k].1 && g[k] < 0.0))
            .collect();
        let mut rhs = -&g;
        for k in (0..np).filter(|&k| active[k]) {
            rhs[k] = 0.0;
        }
        let mut accepted = false;
        while mu < 1e16 {
            let mut a = jtj.clone();
            for k in 0..np {
                a[(k, k)] += mu * jtj[(k, k)].max(1e-300);
                if active[k] {
                    for m in 0..np {
                        a[(k, m)] = 0.0;
                        a[(m, k)] = 0.0;
                    }
                    a[(k, k)] = 1.0;
                }
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&rhs)) else {
                mu *= 4.0;
                continue;
            };
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, s)| x + s).collect();
            clamp(&mut trial, bounds);
            let small = trial
                .iter()
                .zip(&p)
                .all(|(t, x)| (t - x).abs() <= opts.rel_step * (x.abs() + opts.abs_floor));
            let (tr, tj) = eval(&trial);
            let tc = tr.norm_squared();
            if tc.is_finite() && tc < cost {
                p = trial;
                r = tr;
                j = tj;
                cost = tc;
                mu = (mu / 3.0).max(1e-12);
                accepted = true;
                converged = small;
                break;
            }
            if small {
                // no downhill step exists at any damping: stationary point
                converged = true;
                break;
            }
            mu *= 4.0;
        }
        if converged {
            break;
        }
        if !accepted {
            // damping exhausted without progress; the gradient vanishes numerically
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence(iterations));
    }
    let jtj = j.transpose() * &j;
    let covariance = covariance(&jtj, &p, bounds).ok_or(Error::Singular)?;
    Ok(LmSolution { params: p, covariance, chi2: cost, iterations })
}

/// Inverse normal matrix. Parameters pinned at a bound with no curvature are
/// dropped from the inversion and get zero variance.
fn covariance(jtj: &DMatrix<f64>, p: &[f64], bounds: &[(f64, f64)]) -> Option<DMatrix<f64>> {
    if let Some(inv) = jtj.clone().try_inverse() {
        return Some(inv);
    }
    let n = p.len();
    let scale = (0..n).map(|k| jtj[(k, k)]).fold(0.0, f64::max);
    let free: Vec<usize> = (0..n)
        .filter(|&k| {
            let pinned = p[k] == bounds[k].0 || p[k] == bounds[k].1;
            !(pinned && jtj[(k, k)] <= 1e-14 * scale)
        })
        .collect();
    if free.len() == n {
        return None;
    }
    let sub = DMatrix::from_fn(free.len(), free.len(), |a, b| jtj[(free[a], free[b])]);
    let inv = sub.try_inverse()?;
    let mut out = DMatrix::zeros(n, n);
    for (a, &ka) in free.iter().enumerate() {
        for (b, &kb) in free.iter().enumerate() {
            out[(ka, kb)] = inv[(a, b)];
        }
    }
    Some(out)
}
