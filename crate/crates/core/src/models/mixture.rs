//! Two-component Gaussian mixture null.
//!
//! Prior: w₁ ~ Beta(2,2), σ_j² ~ Inv-Gamma(1, ½), μ_j | σ_j² ~ N(0, σ_j²).
//! Posterior draws come from the latent-allocation Gibbs sampler. The
//! marginal is a two-mode Laplace approximation (the posterior is symmetric
//! under relabelling), and copies are drawn coordinate-wise by
//! Metropolis–Hastings with a two-normal proposal fitted to −log ĝ.

use nalgebra::{DMatrix, DVector, Matrix5, Vector5};

use crate::acss::{CopySet, DataShape, ModelPlugin, PosteriorDraws};
use crate::error::{Error, Result};
use crate::mcmc::{self, ChainConfig, CoordinateSweep, CoordinateUpdater, Move};
use crate::numerics::cluster::kmeans_1d;
use crate::numerics::dist::{beta, inv_gamma, normal, uniform};
use crate::numerics::optim::{newton_maximize, OptimOptions};
use crate::numerics::quad::linspace;
use crate::numerics::special::{ln_2pi, log_add_exp, sigmoid, softplus, LN_SQRT_2PI};
use crate::rng::{label, substream, Rng};

type V5 = Vector5<f64>;
type M5 = Matrix5<f64>;

/// Restarts for the k-means initialization of the Laplace arms.
pub const KMEANS_RESTARTS: usize = 25;
/// Nodes at which ζ is evaluated.
pub const ZETA_NODES: usize = 20;
/// Candidate breakpoints for the piecewise-quadratic fit.
pub const BREAKPOINTS: usize = 400;
/// Variance floor ε for an arm with non-positive curvature.
pub const VARIANCE_FLOOR: f64 = 1e-8;

const LN_6: f64 = 1.791_759_469_228_055;
/// Newton decrement gᵀH⁻¹g below which the quadratic extrapolation is exact
/// to well under 1e-12.
const REFINE_DECREMENT_TOL: f64 = 1e-10;
const REFINE_MAX_PASSES: usize = 30;
const ARM_OPTIONS: OptimOptions = OptimOptions {
    grad_tol: 1e-8,
    max_iter: 500,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureParams {
    pub w1: f64,
    pub mu1: f64,
    pub sigma2_1: f64,
    pub mu2: f64,
    pub sigma2_2: f64,
}

pub type MixtureData = Vec<f64>;

impl MixtureParams {
    /// Relabelled copy: (w₁, μ₁, σ₁²) ↔ (1−w₁, μ₂, σ₂²).
    pub fn swapped(&self) -> Self {
        Self {
            w1: 1.0 - self.w1,
            mu1: self.mu2,
            sigma2_1: self.sigma2_2,
            mu2: self.mu1,
            sigma2_2: self.sigma2_1,
        }
    }

    /// ϑ = (logit w₁, μ₁, log σ₁², μ₂, log σ₂²).
    pub fn to_unconstrained(&self) -> [f64; 5] {
        [
            (self.w1 / (1.0 - self.w1)).ln(),
            self.mu1,
            self.sigma2_1.ln(),
            self.mu2,
            self.sigma2_2.ln(),
        ]
    }

    pub fn from_unconstrained(v: &[f64]) -> Self {
        Self {
            w1: sigmoid(v[0]),
            mu1: v[1],
            sigma2_1: v[2].exp(),
            mu2: v[3],
            sigma2_2: v[4].exp(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.w1 > 0.0
            && self.w1 < 1.0
            && self.sigma2_1 > 0.0
            && self.sigma2_2 > 0.0
            && [self.mu1, self.mu2, self.sigma2_1, self.sigma2_2].iter().all(|v| v.is_finite())
    }

    /// log(w₁φ(x; μ₁, σ₁²) + (1−w₁)φ(x; μ₂, σ₂²)).
    pub fn log_density(&self, x: f64) -> f64 {
        ComponentTerms::new(self).log_density(x)
    }
}

/// Per-parameter constants for fast density evaluation.
#[derive(Debug, Clone, Copy)]
struct ComponentTerms {
    c1: f64,
    c2: f64,
    mu1: f64,
    mu2: f64,
    iv1: f64,
    iv2: f64,
}

impl ComponentTerms {
    fn new(p: &MixtureParams) -> Self {
        Self {
            c1: p.w1.ln() - 0.5 * p.sigma2_1.ln() - LN_SQRT_2PI,
            c2: (1.0 - p.w1).ln() - 0.5 * p.sigma2_2.ln() - LN_SQRT_2PI,
            mu1: p.mu1,
            mu2: p.mu2,
            iv1: 1.0 / p.sigma2_1,
            iv2: 1.0 / p.sigma2_2,
        }
    }

    fn log_density(&self, x: f64) -> f64 {
        let d1 = x - self.mu1;
        let d2 = x - self.mu2;
        log_add_exp(self.c1 - 0.5 * d1 * d1 * self.iv1, self.c2 - 0.5 * d2 * d2 * self.iv2)
    }
}

/// One observation's log-likelihood with gradient and Hessian in ϑ.
fn point_terms(xi: f64, v: &V5) -> (f64, V5, M5) {
    let w = sigmoid(v[0]);
    let iv1 = (-v[2]).exp();
    let iv2 = (-v[4]).exp();
    let d1 = xi - v[1];
    let d2 = xi - v[3];
    let a1 = -softplus(-v[0]) - 0.5 * v[2] - 0.5 * d1 * d1 * iv1 - LN_SQRT_2PI;
    let a2 = -softplus(v[0]) - 0.5 * v[4] - 0.5 * d2 * d2 * iv2 - LN_SQRT_2PI;
    let l = log_add_exp(a1, a2);
    let r1 = (a1 - l).exp();
    let r2 = (a2 - l).exp();
    let g1 = V5::new(1.0 - w, d1 * iv1, -0.5 + 0.5 * d1 * d1 * iv1, 0.0, 0.0);
    let g2 = V5::new(-w, 0.0, 0.0, d2 * iv2, -0.5 + 0.5 * d2 * d2 * iv2);
    let diff = g1 - g2;
    let mut h = diff * diff.transpose() * (r1 * r2);
    h[(0, 0)] -= w * (1.0 - w);
    h[(1, 1)] -= r1 * iv1;
    h[(1, 2)] -= r1 * d1 * iv1;
    h[(2, 1)] -= r1 * d1 * iv1;
    h[(2, 2)] -= r1 * 0.5 * d1 * d1 * iv1;
    h[(3, 3)] -= r2 * iv2;
    h[(3, 4)] -= r2 * d2 * iv2;
    h[(4, 3)] -= r2 * d2 * iv2;
    h[(4, 4)] -= r2 * 0.5 * d2 * d2 * iv2;
    (l, g1 * r1 + g2 * r2, h)
}

/// log π(θ(ϑ)) with gradient and Hessian in ϑ (no Jacobian term).
fn prior_terms(v: &V5) -> (f64, V5, M5) {
    let w = sigmoid(v[0]);
    let mut f = LN_6 - softplus(-v[0]) - softplus(v[0]);
    let mut g = V5::zeros();
    let mut h = M5::zeros();
    g[0] = 1.0 - 2.0 * w;
    h[(0, 0)] = -2.0 * w * (1.0 - w);
    for (m, s) in [(1, 2), (3, 4)] {
        let mu = v[m];
        let e = (-v[s]).exp();
        let k = 0.5 + 0.5 * mu * mu;
        f += 0.5f64.ln() - 2.5 * v[s] - k * e - 0.5 * ln_2pi();
        g[m] = -mu * e;
        g[s] = -2.5 + k * e;
        h[(m, m)] = -e;
        h[(m, s)] = mu * e;
        h[(s, m)] = mu * e;
        h[(s, s)] = -k * e;
    }
    (f, g, h)
}

/// Ψ(ϑ), ∇Ψ and −∇²Ψ over the data, optionally leaving out one index.
/// Same sums as accumulating [`point_terms`], with the point-independent
/// factors hoisted out of the loop.
fn full_pass(x: &[f64], skip: Option<usize>, v: &V5) -> (f64, V5, M5) {
    let w = sigmoid(v[0]);
    let iv1 = (-v[2]).exp();
    let iv2 = (-v[4]).exp();
    let c1 = -softplus(-v[0]) - 0.5 * v[2] - LN_SQRT_2PI;
    let c2 = -softplus(v[0]) - 0.5 * v[4] - LN_SQRT_2PI;
    let mut f = 0.0;
    let mut count = 0.0;
    // Σ r_j, Σ r_j d_j, Σ r_j d_j²
    let mut m1 = [0.0; 3];
    let mut m2 = [0.0; 3];
    // upper triangle of Σ r₁r₂ (∇a₁−∇a₂)(∇a₁−∇a₂)ᵀ
    let mut outer = [0.0; 15];
    for (i, &xi) in x.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        count += 1.0;
        let d1 = xi - v[1];
        let d2 = xi - v[3];
        let a1 = c1 - 0.5 * d1 * d1 * iv1;
        let a2 = c2 - 0.5 * d2 * d2 * iv2;
        let (l, r1, r2) = if a1 >= a2 {
            let t = (a2 - a1).exp();
            (a1 + t.ln_1p(), 1.0 / (1.0 + t), t / (1.0 + t))
        } else {
            let t = (a1 - a2).exp();
            (a2 + t.ln_1p(), t / (1.0 + t), 1.0 / (1.0 + t))
        };
        f += l;
        m1[0] += r1;
        m1[1] += r1 * d1;
        m1[2] += r1 * d1 * d1;
        m2[0] += r2;
        m2[1] += r2 * d2;
        m2[2] += r2 * d2 * d2;
        let q = r1 * r2;
        let e = [
            1.0,
            d1 * iv1,
            -0.5 + 0.5 * d1 * d1 * iv1,
            -d2 * iv2,
            0.5 - 0.5 * d2 * d2 * iv2,
        ];
        let mut k = 0;
        for a in 0..5 {
            let qa = q * e[a];
            for b in a..5 {
                outer[k] += qa * e[b];
                k += 1;
            }
        }
    }
    let mut h = M5::zeros();
    let mut k = 0;
    for a in 0..5 {
        for b in a..5 {
            h[(a, b)] = outer[k];
            h[(b, a)] = outer[k];
            k += 1;
        }
    }
    h[(0, 0)] -= count * w * (1.0 - w);
    h[(1, 1)] -= iv1 * m1[0];
    h[(1, 2)] -= iv1 * m1[1];
    h[(2, 1)] -= iv1 * m1[1];
    h[(2, 2)] -= 0.5 * iv1 * m1[2];
    h[(3, 3)] -= iv2 * m2[0];
    h[(3, 4)] -= iv2 * m2[1];
    h[(4, 3)] -= iv2 * m2[1];
    h[(4, 4)] -= 0.5 * iv2 * m2[2];
    let g = V5::new(
        m1[0] - count * w,
        iv1 * m1[1],
        -0.5 * m1[0] + 0.5 * iv1 * m1[2],
        iv2 * m2[1],
        -0.5 * m2[0] + 0.5 * iv2 * m2[2],
    );
    let (pf, pg, ph) = prior_terms(v);
    (f + pf, g + pg, -(h + ph))
}

/// Σ log J_ii for θ = θ(ϑ): J = diag(w(1−w), 1, σ₁², 1, σ₂²).
fn log_jacobian(v: &V5) -> f64 {
    -softplus(-v[0]) - softplus(v[0]) + v[2] + v[4]
}

fn chol_logdet(c: &nalgebra::Cholesky<f64, nalgebra::Const<5>>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// A local maximum of Ψ together with its Laplace contribution
/// L = Ψ(θ̃) − ½ log det H_θ + (5/2) log 2π.
#[derive(Debug, Clone)]
pub struct LaplaceArm {
    pub mode: MixtureParams,
    pub log_posterior: f64,
    /// log det of −∇²Ψ in the original θ coordinates.
    pub log_det_hessian: f64,
    pub log_contribution: f64,
    vartheta: V5,
    neg_hess: M5,
}

impl LaplaceArm {
    fn build(vartheta: V5, value: f64, neg_hess: M5) -> Option<Self> {
        let chol = neg_hess.cholesky()?;
        let log_det_hessian = chol_logdet(&chol) - 2.0 * log_jacobian(&vartheta);
        let log_contribution = value - 0.5 * log_det_hessian + 2.5 * ln_2pi();
        log_contribution.is_finite().then(|| Self {
            mode: MixtureParams::from_unconstrained(vartheta.as_slice()),
            log_posterior: value,
            log_det_hessian,
            log_contribution,
            vartheta,
            neg_hess,
        })
    }
}

/// Undamped Newton from a nearby start; `None` if the Hessian leaves the
/// positive-definite cone or convergence is not reached.
fn refine(x: &[f64], skip: Option<usize>, start: V5) -> Option<LaplaceArm> {
    let mut v = start;
    for _ in 0..REFINE_MAX_PASSES {
        let (f, g, hn) = full_pass(x, skip, &v);
        if !f.is_finite() {
            return None;
        }
        let chol = hn.cholesky()?;
        let mut step = chol.solve(&g);
        let decrement = g.dot(&step);
        if decrement < REFINE_DECREMENT_TOL {
            // quadratic extrapolation to the exact maximum
            return LaplaceArm::build(v, f + 0.5 * decrement, hn);
        }
        let big = step.amax();
        if big > 1.0 {
            step /= big;
        }
        v += step;
    }
    None
}

fn optimize_arm(x: &[f64], skip: Option<usize>, start: V5, arm: usize) -> Result<LaplaceArm> {
    if let Some(a) = refine(x, skip, start) {
        return Ok(a);
    }
    let r = newton_maximize(
        |t| {
            let v = V5::from_column_slice(t);
            let (f, g, hn) = full_pass(x, skip, &v);
            f.is_finite()
                .then(|| (f, g.as_slice().to_vec(), DMatrix::from_column_slice(5, 5, (-hn).as_slice())))
        },
        start.as_slice(),
        ARM_OPTIONS,
    )?;
    refine(x, skip, V5::from_column_slice(&r.argmax)).ok_or_else(|| {
        Error::Singular(format!("mixture Laplace arm {arm}: Hessian at the mode is not positive definite"))
    })
}

/// Warm-started arm with a cold k-means restart as fallback.
fn track_arm(x: &[f64], skip: Option<usize>, start: V5) -> Result<LaplaceArm> {
    optimize_arm(x, skip, start, 1).or_else(|_| {
        let y: Vec<f64> = x.iter().enumerate().filter(|(i, _)| Some(*i) != skip).map(|(_, v)| *v).collect();
        let (i1, _) = kmeans_initializations(&y)?;
        optimize_arm(&y, None, V5::from(i1), 1)
    })
}

fn variance(x: &[f64], center: f64, denom: f64) -> f64 {
    x.iter().map(|v| (v - center).powi(2)).sum::<f64>() / denom
}

/// The two label-swapped k-means initializations ϑ₁⁽⁰⁾, ϑ₂⁽⁰⁾.
pub fn kmeans_initializations(x: &[f64]) -> Result<([f64; 5], [f64; 5])> {
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidParameter("mixture marginal needs n >= 2".into()));
    }
    let mut rng = substream(label("mixture-kmeans"), &[]);
    let fit = kmeans_1d(x, 2, KMEANS_RESTARTS, &mut rng)?;
    let mean = x.iter().sum::<f64>() / n as f64;
    let overall = variance(x, mean, (n - 1) as f64);
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| fit.centers[a].total_cmp(&fit.centers[b]));
    let stats: Vec<(f64, f64, f64)> = order
        .iter()
        .map(|&k| {
            let members: Vec<f64> = x.iter().zip(&fit.labels).filter(|(_, &l)| l == k).map(|(v, _)| *v).collect();
            let c = fit.centers[k];
            let mut tau2 = if members.len() > 1 {
                variance(&members, c, (members.len() - 1) as f64)
            } else {
                overall
            };
            if tau2 <= 0.0 {
                tau2 = if overall > 0.0 { overall } else { 1.0 };
            }
            (members.len() as f64 / n as f64, c, tau2)
        })
        .collect();
    let (w1, c1, t1) = stats[0];
    let (w2, c2, t2) = stats[1];
    let p1 = MixtureParams {
        w1,
        mu1: c1,
        sigma2_1: t1,
        mu2: c2,
        sigma2_2: t2,
    };
    let p2 = MixtureParams {
        w1: w2,
        mu1: c2,
        sigma2_1: t2,
        mu2: c1,
        sigma2_2: t1,
    };
    Ok((p1.to_unconstrained(), p2.to_unconstrained()))
}

/// Two-normal density w·φ(·; m_L, v_L) + (1−w)·φ(·; m_R, v_R).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoNormalProposal {
    pub w: f64,
    pub m_left: f64,
    pub v_left: f64,
    pub m_right: f64,
    pub v_right: f64,
}

impl TwoNormalProposal {
    pub fn log_pdf(&self, x: f64) -> f64 {
        let l = self.w.ln() + normal_logpdf(x, self.m_left, self.v_left);
        let r = (1.0 - self.w).ln() + normal_logpdf(x, self.m_right, self.v_right);
        log_add_exp(l, r)
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        if uniform(rng, 0.0, 1.0) < self.w {
            normal(rng, self.m_left, self.v_left.sqrt())
        } else {
            normal(rng, self.m_right, self.v_right.sqrt())
        }
    }
}

fn normal_logpdf(x: f64, m: f64, v: f64) -> f64 {
    crate::numerics::dist::normal_logpdf(x, m, v)
}

/// Fitted surrogate Q(ξ; c, β).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiecewiseQuadratic {
    pub breakpoint: f64,
    /// (β₀, β_1L, β_2L, β_1R, β_2R).
    pub beta: [f64; 5],
    pub sse: f64,
}

impl PiecewiseQuadratic {
    pub fn eval(&self, xi: f64) -> f64 {
        let d = xi - self.breakpoint;
        let b = &self.beta;
        if xi <= self.breakpoint {
            b[0] + b[1] * d + b[2] * d * d
        } else {
            b[0] + b[3] * d + b[4] * d * d
        }
    }

    /// Gaussian arms and the magnitude-matched weight of the left arm.
    pub fn to_proposal(&self) -> TwoNormalProposal {
        let c = self.breakpoint;
        let b = &self.beta;
        let v_left = VARIANCE_FLOOR.max(1.0 / (2.0 * b[2]));
        let v_right = VARIANCE_FLOOR.max(1.0 / (2.0 * b[4]));
        let v_left = if v_left.is_finite() { v_left } else { VARIANCE_FLOOR };
        let v_right = if v_right.is_finite() { v_right } else { VARIANCE_FLOOR };
        let m_left = c - b[1] * v_left;
        let m_right = c - b[3] * v_right;
        let w = match self.match_weights(m_left, v_left, m_right, v_right) {
            Some(w) => w.clamp(0.01, 0.99),
            None => {
                log::warn!("piecewise-quadratic weight system is singular; using w = 1/2");
                0.5
            }
        };
        TwoNormalProposal {
            w,
            m_left,
            v_left,
            m_right,
            v_right,
        }
    }

    fn match_weights(&self, ml: f64, vl: f64, mr: f64, vr: f64) -> Option<f64> {
        let phi = |x: f64, m: f64, v: f64| normal_logpdf(x, m, v).exp();
        let (a11, a12, a21, a22) = (phi(ml, ml, vl), phi(ml, mr, vr), phi(mr, ml, vl), phi(mr, mr, vr));
        let ql = self.eval(ml);
        let qr = self.eval(mr);
        let qmin = ql.min(qr);
        let (bl, br) = ((qmin - ql).exp(), (qmin - qr).exp());
        let det = a11 * a22 - a12 * a21;
        if !(det.is_finite() && det.abs() > 1e-12 * (a11 * a22).abs()) {
            return None;
        }
        let p = (bl * a22 - a12 * br) / det;
        let q = (a11 * br - a21 * bl) / det;
        let w = p / (p + q);
        (w.is_finite() && p + q > 0.0).then_some(w)
    }
}

/// Precomputed least-squares machinery for a fixed node range [a, b].
#[derive(Debug, Clone)]
pub struct PiecewiseQuadraticFitter {
    nodes: Vec<f64>,
    candidates: Vec<f64>,
    /// Orthonormal basis of each candidate's design columns, stored
    /// column by column (5 vectors of length K).
    bases: Vec<[[f64; ZETA_NODES]; 5]>,
    /// Minimum-norm pseudo-inverse of each candidate's design (5 × K).
    pinvs: Vec<DMatrix<f64>>,
}

impl PiecewiseQuadraticFitter {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter(format!("piecewise fit needs a < b, got [{a}, {b}]")));
        }
        let nodes = linspace(a, b, ZETA_NODES);
        let candidates: Vec<f64> = (1..=BREAKPOINTS)
            .map(|j| a + (b - a) * j as f64 / (BREAKPOINTS + 1) as f64)
            .collect();
        let mut kept = Vec::with_capacity(BREAKPOINTS);
        let mut bases = Vec::with_capacity(BREAKPOINTS);
        let mut pinvs = Vec::with_capacity(BREAKPOINTS);
        for &c in &candidates {
            let design = DMatrix::from_fn(ZETA_NODES, 5, |j, k| {
                let d = nodes[j] - c;
                let left = nodes[j] <= c;
                match k {
                    0 => 1.0,
                    1 if left => d,
                    2 if left => d * d,
                    3 if !left => d,
                    4 if !left => d * d,
                    _ => 0.0,
                }
            });
            let svd = design.svd(true, true);
            let tol = 1e-12 * svd.singular_values.max() * ZETA_NODES as f64;
            // a single node on one side leaves that arm unidentified
            if svd.singular_values.iter().any(|&s| s <= tol) {
                continue;
            }
            let u = svd.u.as_ref().expect("computed");
            let basis = std::array::from_fn(|r| std::array::from_fn(|j| u[(j, r)]));
            let pinv = svd.pseudo_inverse(tol).map_err(|e| Error::Singular(e.to_string()))?;
            kept.push(c);
            bases.push(basis);
            pinvs.push(pinv);
        }
        Ok(Self {
            nodes,
            candidates: kept,
            bases,
            pinvs,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Least-squares fit to ζ values at the nodes; smallest SSE wins, ties
    /// go to the smallest breakpoint.
    pub fn fit(&self, zeta: &[f64]) -> Result<PiecewiseQuadratic> {
        if zeta.len() != ZETA_NODES || zeta.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidParameter("ζ must be finite at every node".into()));
        }
        let mean = zeta.iter().sum::<f64>() / ZETA_NODES as f64;
        let centered: [f64; ZETA_NODES] = std::array::from_fn(|j| zeta[j] - mean);
        let total: f64 = centered.iter().map(|v| v * v).sum();
        let mut best = (f64::INFINITY, 0);
        for (k, basis) in self.bases.iter().enumerate() {
            let explained: f64 = basis
                .iter()
                .map(|col| col.iter().zip(&centered).map(|(a, b)| a * b).sum::<f64>().powi(2))
                .sum();
            let sse = (total - explained).max(0.0);
            if sse < best.0 {
                best = (sse, k);
            }
        }
        let (sse, k) = best;
        let beta = &self.pinvs[k] * DVector::from_column_slice(&centered);
        Ok(PiecewiseQuadratic {
            breakpoint: self.candidates[k],
            beta: [beta[0] + mean, beta[1], beta[2], beta[3], beta[4]],
            sse,
        })
    }
}

/// Evaluate ζ on the K nodes spanning [a, b], fit the piecewise-quadratic
/// surrogate and map it to the two-normal proposal.
pub fn fit_piecewise_quadratic_proposal<F: Fn(f64) -> f64>(zeta: F, range: (f64, f64)) -> Result<TwoNormalProposal> {
    let fitter = PiecewiseQuadraticFitter::new(range.0, range.1)?;
    let values: Vec<f64> = fitter.nodes().iter().map(|&xi| zeta(xi)).collect();
    Ok(fitter.fit(&values)?.to_proposal())
}

#[derive(Debug, Clone)]
struct GibbsState {
    params: MixtureParams,
    labels: Vec<u8>,
}

fn median(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Gaussian-mixture null with n observations.
#[derive(Debug, Clone)]
pub struct MixtureModel {
    n: usize,
}

impl MixtureModel {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::InvalidParameter(format!("expected {} observations, got {}", self.n, x.len())));
        }
        if self.n < 2 {
            return Err(Error::InvalidParameter("mixture model needs n >= 2".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("mixture data must be finite".into()));
        }
        Ok(())
    }

    /// Ψ at ϑ, with ∇Ψ and ∇²Ψ in the unconstrained coordinates.
    pub fn log_posterior_unconstrained(&self, vartheta: &[f64], x: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let (f, g, hn) = full_pass(x, None, &V5::from_column_slice(vartheta));
        (f, DVector::from_column_slice(g.as_slice()), DMatrix::from_column_slice(5, 5, (-hn).as_slice()))
    }

    /// Both Laplace arms, optimized from the label-swapped k-means starts.
    pub fn laplace_arms(&self, x: &[f64]) -> Result<(LaplaceArm, LaplaceArm)> {
        self.check(x)?;
        let (i1, i2) = kmeans_initializations(x)?;
        let a1 = optimize_arm(x, None, V5::from(i1), 1)?;
        let a2 = optimize_arm(x, None, V5::from(i2), 2)?;
        Ok((a1, a2))
    }

    /// Initial Gibbs state: median split, empirical moments, w = ½.
    fn initial_state(&self, x: &[f64]) -> GibbsState {
        let med = median(x);
        let labels: Vec<u8> = x.iter().map(|&v| if v <= med { 0 } else { 1 }).collect();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let overall = variance(x, mean, n);
        let moments = |j: u8| {
            let m: Vec<f64> = x.iter().zip(&labels).filter(|(_, &l)| l == j).map(|(v, _)| *v).collect();
            if m.is_empty() {
                return (mean, if overall > 0.0 { overall } else { 1.0 });
            }
            let mu = m.iter().sum::<f64>() / m.len() as f64;
            let s2 = variance(&m, mu, m.len() as f64);
            let s2 = if s2 > 0.0 {
                s2
            } else if overall > 0.0 {
                overall
            } else {
                1.0
            };
            (mu, s2)
        };
        let (mu1, sigma2_1) = moments(0);
        let (mu2, sigma2_2) = moments(1);
        GibbsState {
            params: MixtureParams {
                w1: 0.5,
                mu1,
                sigma2_1,
                mu2,
                sigma2_2,
            },
            labels,
        }
    }

    fn gibbs_step(x: &[f64], state: &mut GibbsState, rng: &mut Rng) -> Result<()> {
        let p = state.params;
        let t = ComponentTerms::new(&p);
        for (i, &xi) in x.iter().enumerate() {
            let d1 = xi - t.mu1;
            let d2 = xi - t.mu2;
            let p1 = sigmoid((t.c1 - 0.5 * d1 * d1 * t.iv1) - (t.c2 - 0.5 * d2 * d2 * t.iv2));
            state.labels[i] = if uniform(rng, 0.0, 1.0) < p1 { 0 } else { 1 };
        }
        let mut count = [0.0f64; 2];
        let mut sum = [0.0f64; 2];
        for (&l, &xi) in state.labels.iter().zip(x) {
            count[l as usize] += 1.0;
            sum[l as usize] += xi;
        }
        let w1 = beta(rng, 2.0 + count[0], 2.0 + count[1])?;
        let mut mu = [p.mu1, p.mu2];
        let mut s2 = [p.sigma2_1, p.sigma2_2];
        for j in 0..2 {
            mu[j] = normal(rng, sum[j] / (1.0 + count[j]), (s2[j] / (1.0 + count[j])).sqrt());
            let ss: f64 = state
                .labels
                .iter()
                .zip(x)
                .filter(|(&l, _)| l as usize == j)
                .map(|(_, &xi)| (xi - mu[j]).powi(2))
                .sum();
            s2[j] = inv_gamma(rng, 1.5 + 0.5 * count[j], 0.5 + 0.5 * ss + 0.5 * mu[j] * mu[j])?;
        }
        state.params = MixtureParams {
            w1,
            mu1: mu[0],
            sigma2_1: s2[0],
            mu2: mu[1],
            sigma2_2: s2[1],
        };
        Ok(())
    }
}

impl ModelPlugin for MixtureModel {
    type Params = MixtureParams;
    type Data = MixtureData;

    fn log_likelihood(&self, params: &MixtureParams, x: &MixtureData) -> f64 {
        let t = ComponentTerms::new(params);
        x.iter().map(|&xi| t.log_density(xi)).sum()
    }

    fn log_prior(&self, p: &MixtureParams) -> f64 {
        let mut f = LN_6 + p.w1.ln() + (1.0 - p.w1).ln();
        for (mu, s2) in [(p.mu1, p.sigma2_1), (p.mu2, p.sigma2_2)] {
            f += 0.5f64.ln() - 2.0 * s2.ln() - 0.5 / s2 - 0.5 * (ln_2pi() + s2.ln()) - 0.5 * mu * mu / s2;
        }
        f
    }

    fn sample_posterior(
        &self,
        x: &MixtureData,
        count: usize,
        chain: &ChainConfig,
        rng: &mut Rng,
    ) -> Result<PosteriorDraws<MixtureParams>> {
        self.check(x)?;
        let states = mcmc::collect_chain(chain, count, self.initial_state(x), rng, |s, rng| {
            Self::gibbs_step(x, s, rng)
        })?;
        Ok(PosteriorDraws {
            draws: states.into_iter().map(|s| s.params).collect(),
            burn_in: chain.burn_in,
            thin: chain.thin,
            acceptance_rate: None,
        })
    }

    fn log_marginal_hat(&self, x: &MixtureData) -> Result<f64> {
        let (a1, a2) = self.laplace_arms(x)?;
        Ok(log_add_exp(a1.log_contribution, a2.log_contribution))
    }

    fn sample_copies(
        &self,
        x: &MixtureData,
        draws: &PosteriorDraws<MixtureParams>,
        count: usize,
        rng: &mut Rng,
    ) -> Result<CopySet<MixtureData>> {
        let updater = CopyUpdater::new(self, x, draws)?;
        let mut sweep = CoordinateSweep::new(updater);
        mcmc::permuted_serial_sampler(x, &mut sweep, count, rng)
    }

    fn data_shape(&self) -> DataShape {
        DataShape {
            dims: vec![self.n],
            discrete: false,
        }
    }

    fn in_parameter_space(&self, params: &MixtureParams) -> bool {
        params.is_valid()
    }
}

/// Coordinate-wise MH for ĝ. The marginal is tracked through arm 1 only:
/// arm 2 is its exact relabelling, so log f̂ = L₁ + log 2.
struct CopyUpdater {
    terms: Vec<ComponentTerms>,
    b_minus_1: f64,
    fitter: PiecewiseQuadraticFitter,
    /// Σ_b log f_{θ̂_b} at the fitter nodes.
    node_log_lik: Vec<f64>,
    data: Vec<f64>,
    data_arm: Option<LaplaceArm>,
    tracked: Vec<f64>,
    current: Option<LaplaceArm>,
}

impl CopyUpdater {
    fn new(model: &MixtureModel, x: &[f64], draws: &PosteriorDraws<MixtureParams>) -> Result<Self> {
        model.check(x)?;
        if draws.is_empty() {
            return Err(Error::InvalidParameter("copy sampling needs B >= 1 posterior draws".into()));
        }
        let a = x.iter().cloned().fold(f64::INFINITY, f64::min);
        let b = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let b_minus_1 = draws.len() as f64 - 1.0;
        let data_arm = if b_minus_1 > 0.0 {
            Some(model.laplace_arms(x)?.0)
        } else {
            None
        };
        let terms: Vec<ComponentTerms> = draws.draws.iter().map(ComponentTerms::new).collect();
        let fitter = PiecewiseQuadraticFitter::new(a, b)?;
        let node_log_lik = fitter
            .nodes()
            .iter()
            .map(|&xi| terms.iter().map(|t| t.log_density(xi)).sum())
            .collect();
        Ok(Self {
            terms,
            b_minus_1,
            fitter,
            node_log_lik,
            data: x.to_vec(),
            data_arm: data_arm.clone(),
            tracked: x.to_vec(),
            current: data_arm,
        })
    }

    fn sum_log_lik(&self, xi: f64) -> f64 {
        self.terms.iter().map(|t| t.log_density(xi)).sum()
    }

    /// Arm contribution after putting ξ at the left-out slot, from one
    /// Newton step off the leave-one-out mode.
    fn approx_contribution(loo: &LaplaceArm, xi: f64) -> f64 {
        let (l, g, h) = point_terms(xi, &loo.vartheta);
        let chol = (loo.neg_hess - h)
            .cholesky()
            .unwrap_or_else(|| loo.neg_hess.cholesky().expect("leave-one-out Hessian is positive definite"));
        let step = chol.solve(&g);
        let value = loo.log_posterior + l + 0.5 * g.dot(&step);
        let v = loo.vartheta + step;
        value - 0.5 * (chol_logdet(&chol) - 2.0 * log_jacobian(&v)) + 2.5 * ln_2pi()
    }

    fn newton_start(arm: &LaplaceArm, g: V5, neg_hess: M5) -> V5 {
        match neg_hess.cholesky() {
            Some(c) => arm.vartheta + c.solve(&g),
            None => arm.vartheta,
        }
    }
}

impl CoordinateUpdater<Vec<f64>> for CopyUpdater {
    fn num_coordinates(&self, state: &Vec<f64>) -> usize {
        state.len()
    }

    fn prepare(&mut self, state: &Vec<f64>) -> Result<()> {
        if self.b_minus_1 == 0.0 || *state == self.tracked {
            return Ok(());
        }
        let fresh = if *state == self.data {
            self.data_arm.clone().expect("set when B > 1")
        } else {
            let start = self.current.as_ref().map(|a| a.vartheta).unwrap_or_else(V5::zeros);
            track_arm(state, None, start)?
        };
        self.current = Some(fresh);
        self.tracked = state.clone();
        Ok(())
    }

    fn update(&mut self, state: &mut Vec<f64>, i: usize, rng: &mut Rng) -> Result<Move> {
        let cur = state[i];
        let bm1 = self.b_minus_1;
        let (proposal, loo) = if bm1 > 0.0 {
            let arm = self.current.as_ref().expect("prepared");
            let (_, gi, hi) = point_terms(cur, &arm.vartheta);
            let start = Self::newton_start(arm, -gi, arm.neg_hess + hi);
            let loo = track_arm(state, Some(i), start)?;
            let zeta: Vec<f64> = self
                .fitter
                .nodes()
                .iter()
                .zip(&self.node_log_lik)
                .map(|(&xi, ll)| -ll + bm1 * Self::approx_contribution(&loo, xi))
                .collect();
            (self.fitter.fit(&zeta)?.to_proposal(), Some(loo))
        } else {
            let zeta: Vec<f64> = self.node_log_lik.iter().map(|ll| -ll).collect();
            (self.fitter.fit(&zeta)?.to_proposal(), None)
        };
        let prop = proposal.sample(rng);
        let mut log_ratio = self.sum_log_lik(prop) - self.sum_log_lik(cur) + proposal.log_pdf(cur) - proposal.log_pdf(prop);
        let mut new_arm = None;
        if let Some(loo) = loo {
            state[i] = prop;
            let (_, gp, hp) = point_terms(prop, &loo.vartheta);
            let start = Self::newton_start(&loo, gp, loo.neg_hess - hp);
            let arm = track_arm(state, None, start)?;
            state[i] = cur;
            let l_cur = self.current.as_ref().expect("prepared").log_contribution;
            log_ratio -= bm1 * (arm.log_contribution - l_cur);
            new_arm = Some(arm);
        }
        if mcmc::mh_accept(log_ratio, rng) {
            state[i] = prop;
            self.tracked[i] = prop;
            if new_arm.is_some() {
                self.current = new_arm;
            }
            Ok(Move::Accepted)
        } else {
            Ok(Move::Rejected)
        }
    }
}
