//! Damped least squares (Levenberg-Marquardt) with a forward-difference
//! Jacobian, optional box bounds (by projection) and covariance estimation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative cost reduction below which an accepted step terminates.
    pub ftol: f64,
    /// Relative step size below which an accepted step terminates.
    pub xtol: f64,
    /// Relative forward-difference step.
    pub fd_step: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            ftol: 1e-12,
            xtol: 1e-11,
            fd_step: 1e-8,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    fn project(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    /// Previous accepted iterate (equals `x` when no step was accepted).
    pub previous_x: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub jacobian: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LmOutcome {
    pub fn dof(&self) -> usize {
        self.residuals.len().saturating_sub(self.x.len())
    }

    /// Parameter covariance `(JᵀJ)⁻¹ · SSR/(m-n)`.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        covariance(&self.jacobian, self.cost, self.dof())
    }
}

pub fn covariance(jac: &DMatrix<f64>, cost: f64, dof: usize) -> Result<DMatrix<f64>> {
    let n = jac.ncols();
    let jtj = jac.transpose() * jac;
    // rank check on column-normalized JᵀJ
    let scale: Vec<f64> = (0..n).map(|i| jtj[(i, i)].sqrt()).collect();
    let max_scale = scale.iter().cloned().fold(0.0, f64::max);
    // a column this small relative to the others is pure round-off
    if scale.iter().any(|s| !(*s > 1e-9 * max_scale) || !s.is_finite()) {
        return Err(Error::SingularJacobian);
    }
    let normalized = DMatrix::from_fn(n, n, |i, j| jtj[(i, j)] / (scale[i] * scale[j]));
    let svd = normalized.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-14 * smax) {
        return Err(Error::SingularJacobian);
    }
    let inv = normalized.try_inverse().ok_or(Error::SingularJacobian)?;
    let variance = if dof > 0 { cost / dof as f64 } else { 0.0 };
    Ok(DMatrix::from_fn(n, n, |i, j| {
        inv[(i, j)] / (scale[i] * scale[j]) * variance
    }))
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Forward-difference Jacobian of `f` at `x` with residuals `r0`.
fn jacobian<F>(f: &F, x: &[f64], r0: &[f64], bounds: &Bounds, step: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let m = r0.len();
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let mut h = step * x[j].abs().max(1.0);
        if x[j] + h > bounds.upper[j] {
            h = -h;
        }
        xp[j] = x[j] + h;
        let h_actual = xp[j] - x[j];
        let rp = f(&xp).or_else(|| {
            // try the other side if the forward point left the domain
            xp[j] = x[j] - h;
            f(&xp)
        });
        let h_used = xp[j] - x[j];
        if let Some(rp) = rp {
            let h_eff = if h_used != 0.0 { h_used } else { h_actual };
            for i in 0..m {
                jac[(i, j)] = (rp[i] - r0[i]) / h_eff;
            }
        }
        xp[j] = x[j];
    }
    jac
}

/// Minimizes `Σ r_i(x)²`. `f` returns `None` when `x` is outside the model
/// domain; such trial steps are rejected.
pub fn minimize<F>(f: F, x0: &[f64], bounds: Option<&Bounds>, opts: &LmOptions) -> Result<LmOutcome>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = x0.len();
    let bounds = bounds.cloned().unwrap_or_else(|| Bounds::unbounded(n));
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let mut r = f(&x).ok_or_else(|| Error::param("initial guess", "outside model domain"))?;
    let m = r.len();
    if m < n {
        return Err(Error::InsufficientPoints { needed: n, got: m });
    }
    let mut cost = sum_sq(&r);
    let mut lambda = opts.initial_lambda;
    let mut diag_scale = vec![0.0f64; n];
    let mut previous_x = x.clone();
    let mut iterations = 0;
    let mut converged = false;
    let mut jac = jacobian(&f, &x, &r, &bounds, opts.fd_step);

    'outer: while iterations < opts.max_iterations {
        iterations += 1;
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let grad = &jt * DVector::from_column_slice(&r);
        for i in 0..n {
            diag_scale[i] = diag_scale[i].max(jtj[(i, i)]);
        }
        let max_diag = diag_scale.iter().cloned().fold(0.0, f64::max);
        if max_diag == 0.0 {
            return Err(Error::SingularJacobian);
        }
        if cost == 0.0 {
            converged = true;
            break;
        }
        loop {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * diag_scale[i].max(1e-12 * max_diag);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e20 {
                        converged = true;
                        break 'outer;
                    }
                    continue;
                }
            };
            let mut trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            bounds.project(&mut trial);
            let accepted = match f(&trial) {
                Some(rt) => {
                    let ct = sum_sq(&rt);
                    if ct.is_finite() && ct < cost {
                        Some((rt, ct))
                    } else {
                        None
                    }
                }
                None => None,
            };
            match accepted {
                Some((rt, ct)) => {
                    let dx: f64 = trial.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    let xn: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let rel_red = (cost - ct) / cost;
                    previous_x = std::mem::replace(&mut x, trial);
                    r = rt;
                    cost = ct;
                    lambda = (lambda / 10.0).max(1e-15);
                    if rel_red <= opts.ftol || dx <= opts.xtol * (xn + opts.xtol) {
                        converged = true;
                        jac = jacobian(&f, &x, &r, &bounds, opts.fd_step);
                        break 'outer;
                    }
                    jac = jacobian(&f, &x, &r, &bounds, opts.fd_step);
                    break;
                }
                None => {
                    lambda *= 10.0;
                    if lambda > 1e20 {
                        // no descent direction left at working precision
                        converged = true;
                        break 'outer;
                    }
                }
            }
        }
    }

    Ok(LmOutcome {
        x,
        previous_x,
        residuals: r,
        cost,
        jacobian: jac,
        iterations,
        converged,
    })
}

/// Propagates an internal-coordinate covariance through `to_phys` using a
/// finite-difference Jacobian of the mapping; returns per-parameter standard
/// deviations in physical units.
pub fn propagate_std_errors<G>(x: &[f64], cov: &DMatrix<f64>, to_phys: G) -> Vec<f64>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    let p0 = to_phys(x);
    let np = p0.len();
    let n = x.len();
    let mut t = DMatrix::zeros(np, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = 1e-7 * x[j].abs().max(1e-3);
        xp[j] = x[j] + h;
        let pp = to_phys(&xp);
        xp[j] = x[j] - h;
        let pm = to_phys(&xp);
        xp[j] = x[j];
        for i in 0..np {
            t[(i, j)] = (pp[i] - pm[i]) / (2.0 * h);
        }
    }
    let c = &t * cov * t.transpose();
    (0..np).map(|i| c[(i, i)].max(0.0).sqrt()).collect()
}
