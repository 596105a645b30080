//! Maximization: BFGS with an Armijo line search, damped Newton when the
//! caller has an analytic Hessian, and central finite differences.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OptimOptions {
    /// Stop once the gradient sup-norm falls below this.
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub argmax: Vec<f64>,
    pub value: f64,
    /// H = −∇²f at the argmax.
    pub neg_hessian: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Central-difference step h = ε^{1/3}·max(1, |x|).
pub fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|j| {
            let h = fd_step(x[j]);
            p[j] = x[j] + h;
            let up = f(&p);
            p[j] = x[j] - h;
            let dn = f(&p);
            p[j] = x[j];
            (up - dn) / (2.0 * h)
        })
        .collect()
}

/// Hessian from function values with step ε^{1/4}·max(1, |x|).
pub fn fd_hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> DMatrix<f64> {
    let d = x.len();
    let h: Vec<f64> = x.iter().map(|v| f64::EPSILON.powf(0.25) * v.abs().max(1.0)).collect();
    let mut p = x.to_vec();
    let mut out = DMatrix::zeros(d, d);
    let f0 = f(x);
    for j in 0..d {
        p[j] = x[j] + h[j];
        let up = f(&p);
        p[j] = x[j] - h[j];
        let dn = f(&p);
        p[j] = x[j];
        out[(j, j)] = (up - 2.0 * f0 + dn) / (h[j] * h[j]);
        for k in 0..j {
            let mut eval = |sj: f64, sk: f64| {
                p[j] = x[j] + sj * h[j];
                p[k] = x[k] + sk * h[k];
                let v = f(&p);
                p[j] = x[j];
                p[k] = x[k];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * h[j] * h[k]);
            out[(j, k)] = v;
            out[(k, j)] = v;
        }
    }
    out
}

/// Symmetrized central-difference Jacobian of a gradient.
pub fn fd_jacobian<G: Fn(&[f64]) -> Vec<f64>>(g: &G, x: &[f64]) -> DMatrix<f64> {
    let d = x.len();
    let mut p = x.to_vec();
    let mut out = DMatrix::zeros(d, d);
    for j in 0..d {
        let h = fd_step(x[j]);
        p[j] = x[j] + h;
        let up = g(&p);
        p[j] = x[j] - h;
        let dn = g(&p);
        p[j] = x[j];
        for i in 0..d {
            out[(i, j)] = (up[i] - dn[i]) / (2.0 * h);
        }
    }
    (&out + out.transpose()) * 0.5
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Quasi-Newton ascent with finite-difference gradients.
pub fn maximize<F: Fn(&[f64]) -> f64>(f: F, init: &[f64], opts: OptimOptions) -> Result<OptimResult> {
    let g = |x: &[f64]| fd_gradient(&f, x);
    let (x, fx, _, converged, iterations) = bfgs(&f, &g, init, opts)?;
    let neg_hessian = -fd_hessian(&f, &x);
    Ok(OptimResult {
        argmax: x,
        value: fx,
        neg_hessian,
        converged,
        iterations,
    })
}

/// Quasi-Newton ascent with an analytic gradient; the returned negative
/// Hessian is a central difference of that gradient.
pub fn maximize_with_gradient<F, G>(f: F, g: G, init: &[f64], opts: OptimOptions) -> Result<OptimResult>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let (x, fx, _, converged, iterations) = bfgs(&f, &g, init, opts)?;
    let neg_hessian = -fd_jacobian(&g, &x);
    Ok(OptimResult {
        argmax: x,
        value: fx,
        neg_hessian,
        converged,
        iterations,
    })
}

type BfgsOut = (Vec<f64>, f64, Vec<f64>, bool, usize);

fn bfgs<F, G>(f: &F, g: &G, init: &[f64], opts: OptimOptions) -> Result<BfgsOut>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let d = init.len();
    let mut x = DVector::from_column_slice(init);
    let mut fx = f(init);
    if !fx.is_finite() {
        return Err(Error::NonFiniteObjective { last: init.to_vec() });
    }
    let mut gx = DVector::from_vec(g(init));
    let mut hinv = DMatrix::<f64>::identity(d, d);
    let mut first = true;
    let mut iter = 0;
    while iter < opts.max_iter {
        if sup_norm(gx.as_slice()) <= opts.grad_tol {
            return Ok((x.as_slice().to_vec(), fx, gx.as_slice().to_vec(), true, iter));
        }
        iter += 1;
        let mut p = &hinv * &gx;
        let mut slope = gx.dot(&p);
        if !(slope > 0.0) {
            hinv = DMatrix::identity(d, d);
            p = gx.clone();
            slope = gx.dot(&p);
        }
        let max_len = 10.0 * x.norm().max(1.0);
        let pn = p.norm();
        if pn > max_len {
            p *= max_len / pn;
            slope *= max_len / pn;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + &p * step;
            let fxn = f(xn.as_slice());
            if fxn.is_finite() && fxn >= fx + 1e-4 * step * slope {
                accepted = Some((xn, fxn));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fxn)) = accepted else {
            if !first {
                hinv = DMatrix::identity(d, d);
                first = true;
                continue;
            }
            break;
        };
        let gn = DVector::from_vec(g(xn.as_slice()));
        if gn.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteObjective { last: x.as_slice().to_vec() });
        }
        let s = &xn - &x;
        let y = &gx - &gn;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if first {
                hinv = DMatrix::identity(d, d) * (sy / y.norm_squared());
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
            first = false;
        }
        x = xn;
        fx = fxn;
        gx = gn;
    }
    let converged = sup_norm(gx.as_slice()) <= opts.grad_tol;
    if !converged {
        log::warn!("BFGS stopped after {iter} iterations with gradient sup-norm {:.3e}", sup_norm(gx.as_slice()));
    }
    Ok((x.as_slice().to_vec(), fx, gx.as_slice().to_vec(), converged, iter))
}

/// Damped Newton ascent. `fgh` returns (f, ∇f, ∇²f) or `None` outside the
/// domain. Where −∇²f is not positive definite a multiple of the identity is
/// added until it is.
pub fn newton_maximize<F>(fgh: F, init: &[f64], opts: OptimOptions) -> Result<OptimResult>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>, DMatrix<f64>)>,
{
    let d = init.len();
    let mut x = DVector::from_column_slice(init);
    let (mut fx, g0, mut hx) =
        fgh(init).ok_or_else(|| Error::NonFiniteObjective { last: init.to_vec() })?;
    if !fx.is_finite() {
        return Err(Error::NonFiniteObjective { last: init.to_vec() });
    }
    let mut gx = DVector::from_vec(g0);
    let mut iter = 0;
    let mut converged = false;
    while iter < opts.max_iter {
        if sup_norm(gx.as_slice()) <= opts.grad_tol {
            converged = true;
            break;
        }
        iter += 1;
        let neg = -&hx;
        let mut tau = 0.0;
        let p = loop {
            let m = &neg + DMatrix::<f64>::identity(d, d) * tau;
            if let Some(c) = m.cholesky() {
                break c.solve(&gx);
            }
            let scale = neg.diagonal().abs().max().max(1e-8);
            tau = if tau == 0.0 { 1e-6 * scale } else { tau * 10.0 };
            if tau > 1e12 * scale {
                break gx.clone();
            }
        };
        let slope = gx.dot(&p);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + &p * step;
            if let Some((fxn, gn, hn)) = fgh(xn.as_slice()) {
                // near the optimum f is flat to rounding; fall back to the gradient
                let flat = (fxn - fx).abs() <= 1e-12 * fx.abs().max(1.0) && sup_norm(&gn) < sup_norm(gx.as_slice());
                if fxn.is_finite() && (fxn >= fx + 1e-4 * step * slope || flat) {
                    accepted = Some((xn, fxn, gn, hn));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fxn, gn, hn)) = accepted else {
            break;
        };
        let stalled = (fxn - fx).abs() <= 1e-15 * fx.abs().max(1.0) && step < 1e-6;
        x = xn;
        fx = fxn;
        gx = DVector::from_vec(gn);
        hx = hn;
        if stalled {
            break;
        }
    }
    if !converged {
        converged = sup_norm(gx.as_slice()) <= opts.grad_tol;
    }
    Ok(OptimResult {
        argmax: x.as_slice().to_vec(),
        value: fx,
        neg_hessian: -hx,
        converged,
        iterations: iter,
    })
}

/// Mode of a smooth unimodal 1-D function and its curvature there.
#[derive(Debug, Clone, Copy)]
pub struct Mode1D {
    pub argmax: f64,
    pub value: f64,
    /// f''(argmax), negative at a strict maximum.
    pub curvature: f64,
    pub newton_converged: bool,
}

/// Newton ascent with central-difference derivatives (step `h`), falling
/// back to golden-section search on [x0 − width, x0 + width] when the
/// curvature turns non-negative or Newton fails to settle.
pub fn maximize_1d<F: FnMut(f64) -> f64>(mut f: F, x0: f64, h: f64, width: f64) -> Result<Mode1D> {
    let mut x = x0;
    let mut fx = f(x);
    if !fx.is_finite() {
        return Err(Error::NonFiniteObjective { last: vec![x0] });
    }
    for _ in 0..50 {
        let (fm, fp) = (f(x - h), f(x + h));
        let g = (fp - fm) / (2.0 * h);
        let c = (fp - 2.0 * fx + fm) / (h * h);
        if !(c < 0.0) || !g.is_finite() {
            break;
        }
        let mut step = -g / c;
        if step.abs() > width {
            step = width * step.signum();
        }
        let xn = x + step;
        let fxn = f(xn);
        if !fxn.is_finite() {
            break;
        }
        if step.abs() <= 1e-9 * x.abs().max(1.0) {
            return Ok(Mode1D {
                argmax: xn,
                value: fxn,
                curvature: c,
                newton_converged: true,
            });
        }
        if fxn < fx - 1e-12 * fx.abs().max(1.0) {
            break;
        }
        x = xn;
        fx = fxn;
    }
    // golden-section fallback
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (x0 - width, x0 + width);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > 1e-9 * (1.0 + x0.abs()) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let xm = 0.5 * (a + b);
    let fm = f(xm);
    let curvature = (f(xm + h) - 2.0 * fm + f(xm - h)) / (h * h);
    if !fm.is_finite() {
        return Err(Error::NonFiniteObjective { last: vec![xm] });
    }
    Ok(Mode1D {
        argmax: xm,
        value: fm,
        curvature,
        newton_converged: false,
    })
}
