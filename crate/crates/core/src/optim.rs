//! Small dense quasi-Newton (BFGS) minimizer with central-difference
//! gradients and backtracking line search. Used for the low-dimensional
//! profile objectives of the constrained estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub struct OptimOptions {
    pub grad_step: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            grad_step: 1e-6,
            grad_tol: 1e-7,
            max_iter: 300,
        }
    }
}

pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

fn gradient(f: &impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let orig = xp[j];
        xp[j] = orig + h;
        let fp = f(&xp);
        xp[j] = orig - h;
        let fm = f(&xp);
        xp[j] = orig;
        g[j] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Minimize `f` starting from `x0`. Converges when the gradient norm
/// drops below `grad_tol` (scaled by 1 + |f|).
pub fn minimize(f: impl Fn(&[f64]) -> f64, x0: &[f64], opts: &OptimOptions) -> Result<OptimResult> {
    let d = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice());
    let mut g = gradient(&f, x.as_slice(), opts.grad_step);
    let mut hinv = DMatrix::<f64>::identity(d, d);

    let mut iterations = 0;
    for iter in 1..=opts.max_iter {
        iterations = iter;
        let gnorm = g.norm();
        if gnorm <= opts.grad_tol * (1.0 + fx.abs()) {
            return Ok(OptimResult {
                x: x.as_slice().to_vec(),
                value: fx,
                grad_norm: gnorm,
                iterations,
            });
        }

        let mut dir = -(&hinv * &g);
        if dir.dot(&g) >= 0.0 {
            // Hessian approximation lost descent property; reset.
            hinv = DMatrix::identity(d, d);
            dir = -g.clone();
        }

        // backtracking Armijo line search
        let slope = dir.dot(&g);
        let mut step = 1.0;
        let mut accepted = false;
        let mut x_new = x.clone();
        let mut f_new = fx;
        for _ in 0..60 {
            x_new = &x + step * &dir;
            f_new = f(x_new.as_slice());
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // cannot make progress along this direction; treat the current
            // point as the solution if the gradient is already small
            if gnorm <= 1e2 * opts.grad_tol * (1.0 + fx.abs()) {
                return Ok(OptimResult {
                    x: x.as_slice().to_vec(),
                    value: fx,
                    grad_norm: gnorm,
                    iterations,
                });
            }
            return Err(Error::OptimNonConvergence(gnorm));
        }

        let g_new = gradient(&f, x_new.as_slice(), opts.grad_step);
        let s = &x_new - &x;
        let yv = &g_new - &g;
        let sy = s.dot(&yv);
        if sy > 1e-12 {
            // BFGS inverse update
            let rho = 1.0 / sy;
            let hy = &hinv * &yv;
            let yhy = yv.dot(&hy);
            let ss = &s * s.transpose();
            let hys = &hy * s.transpose();
            hinv = &hinv + (sy + yhy) * rho * rho * &ss - rho * (&hys + hys.transpose());
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }

    let gnorm = g.norm();
    if gnorm <= 1e2 * opts.grad_tol * (1.0 + fx.abs()) {
        Ok(OptimResult {
            x: x.as_slice().to_vec(),
            value: fx,
            grad_norm: gnorm,
            iterations,
        })
    } else {
        Err(Error::OptimNonConvergence(gnorm))
    }
}
