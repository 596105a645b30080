//! One-knot linear spline X = γ₀ + γ₁Z + γ₂(Z − t₁)₊ + ε, ε ~ N(0, 0.25),
//! with N(0, 1) priors on γ and t₁.
//!
//! Gibbs alternates the Gaussian γ-conditional with the knot conditional, a
//! mixture of truncated normals over the gaps between order statistics.
//! The marginal integrates γ out exactly (X | t₁ ~ N(0, hhᵀ + 0.25I)) and t₁
//! by the trapezoid rule on a grid with nodes at every order statistic.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::acss::{CopySet, DataShape, ModelPlugin, PosteriorDraws};
use crate::error::{Error, Result};
use crate::mcmc::{self, ChainConfig, CoordinateSweep, CoordinateUpdater, Move};
use crate::numerics::dist::{categorical_log, normal, normal_logpdf, MultivariateNormal, TruncatedNormal};
use crate::numerics::quad::{linspace, trapezoid_log_weights};
use crate::numerics::special::{ln_2pi, log_norm_cdf, log_norm_interval, log_sum_exp};
use crate::rng::Rng;
use crate::statistics::fit_one_knot_spline;

pub const NOISE_VAR: f64 = 0.25;
/// Outer grid bounds ±C.
pub const SENTINEL: f64 = 10.0;
/// Trapezoid subdivisions per gap.
pub const SUBDIVISIONS: usize = 20;
/// Mean copy acceptance below this triggers a warning.
pub const ACCEPTANCE_HEALTH: f64 = 0.8;
const NEWTON_MAX_ITER: usize = 50;
const NEWTON_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SplineParams {
    /// (γ₀, γ₁, γ₂)
    pub gamma: Vector3<f64>,
    pub t1: f64,
}

pub type SplineData = DVector<f64>;

/// Columns (1, z, (z − t₁)₊).
pub fn design_matrix(t1: f64, z: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(z.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => z[i],
        _ => (z[i] - t1).max(0.0),
    })
}

/// γ | t₁, x ~ N(μ_γ, V_γ) with V_γ = (4hᵀh + I)⁻¹, μ_γ = V_γ·4hᵀx.
#[derive(Debug, Clone)]
pub struct GammaConditional {
    pub mean: Vector3<f64>,
    pub cov: Matrix3<f64>,
    precision: Matrix3<f64>,
}

impl GammaConditional {
    pub fn from_design(h: &DMatrix<f64>, x: &DVector<f64>) -> Result<Self> {
        let precision: Matrix3<f64> = (h.transpose() * h * (1.0 / NOISE_VAR)).fixed_view::<3, 3>(0, 0) + Matrix3::identity();
        let rhs: Vector3<f64> = (h.transpose() * x * (1.0 / NOISE_VAR)).fixed_rows::<3>(0).into();
        let chol = precision.cholesky().ok_or(Error::NotPositiveDefinite)?;
        Ok(Self {
            mean: chol.solve(&rhs),
            cov: chol.inverse(),
            precision,
        })
    }

    pub fn sample(&self, rng: &mut Rng) -> Result<Vector3<f64>> {
        let prec = DMatrix::from_column_slice(3, 3, self.precision.as_slice());
        let mvn = MultivariateNormal::from_precision(DVector::from_column_slice(self.mean.as_slice()), &prec)?;
        let g = mvn.sample(rng);
        Ok(Vector3::new(g[0], g[1], g[2]))
    }
}

pub fn gamma_conditional(x: &DVector<f64>, z: &[f64], t1: f64) -> Result<GammaConditional> {
    GammaConditional::from_design(&design_matrix(t1, z), x)
}

/// t₁ | γ, x as Σ_i w_i TN(μ_i, σ_i², Z_(i), Z_(i+1)) over the n+1 gaps.
#[derive(Debug, Clone)]
pub struct KnotConditional {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// Normalized log weights.
    pub log_weights: Vec<f64>,
}

impl KnotConditional {
    pub fn sample(&self, rng: &mut Rng) -> Result<f64> {
        let i = categorical_log(rng, &self.log_weights)?;
        Ok(TruncatedNormal::new(self.mean[i], self.var[i], self.lower[i], self.upper[i])?.sample(rng))
    }

    pub fn log_pdf(&self, t: f64) -> f64 {
        let i = self.upper.partition_point(|&u| u <= t).min(self.upper.len() - 1);
        match TruncatedNormal::new(self.mean[i], self.var[i], self.lower[i], self.upper[i]) {
            Ok(tn) => self.log_weights[i] + tn.log_pdf(t),
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

/// Build the knot conditional. `sorted_z` are the covariates in increasing
/// order and `sorted_x` the matching responses.
pub fn knot_conditional(sorted_x: &[f64], sorted_z: &[f64], gamma: &Vector3<f64>) -> Result<KnotConditional> {
    let n = sorted_z.len();
    let (g0, g1, g2) = (gamma[0], gamma[1], gamma[2]);
    let r0: Vec<f64> = (0..n).map(|k| sorted_x[k] - g0 - g1 * sorted_z[k]).collect();
    let a: Vec<f64> = (0..n).map(|k| r0[k] - g2 * sorted_z[k]).collect();
    // suffix sums over the points right of the knot
    let mut suf_a = vec![0.0; n + 1];
    let mut suf_a2 = vec![0.0; n + 1];
    for k in (0..n).rev() {
        suf_a[k] = suf_a[k + 1] + a[k];
        suf_a2[k] = suf_a2[k + 1] + a[k] * a[k];
    }
    let prec_noise = 1.0 / NOISE_VAR;
    let mut pre_r0 = 0.0;
    let mut out = KnotConditional {
        lower: Vec::with_capacity(n + 1),
        upper: Vec::with_capacity(n + 1),
        mean: Vec::with_capacity(n + 1),
        var: Vec::with_capacity(n + 1),
        log_weights: Vec::with_capacity(n + 1),
    };
    for i in 0..=n {
        let lo = if i == 0 { f64::NEG_INFINITY } else { sorted_z[i - 1] };
        let hi = if i == n { f64::INFINITY } else { sorted_z[i] };
        if i > 0 {
            pre_r0 += r0[i - 1] * r0[i - 1];
        }
        // exponent −2Σ_{k<i} r0² − 2Σ_{k≥i}(a_k + γ₂t)² − t²/2
        let p = prec_noise * (n - i) as f64 * g2 * g2 + 1.0;
        let lin = -prec_noise * g2 * suf_a[i];
        let c = -0.5 * prec_noise * (pre_r0 + suf_a2[i]);
        let mu = lin / p;
        let sd = p.recip().sqrt();
        let log_w = if lo < hi {
            c + 0.5 * lin * lin / p + 0.5 * (ln_2pi() - p.ln()) + log_norm_interval((lo - mu) / sd, (hi - mu) / sd)
        } else {
            f64::NEG_INFINITY
        };
        out.lower.push(lo);
        out.upper.push(hi);
        out.mean.push(mu);
        out.var.push(1.0 / p);
        out.log_weights.push(log_w);
    }
    let total = log_sum_exp(&out.log_weights);
    if !total.is_finite() {
        return Err(Error::InvalidParameter("knot conditional has no finite weight".into()));
    }
    for w in &mut out.log_weights {
        *w -= total;
    }
    Ok(out)
}

/// Per-node constants of the trapezoid marginal: log Ψ(x, t_k) + log ω_k =
/// base_k − 2‖x‖² + 8 uᵀM⁻¹u with M = I + 4hᵀh and u = hᵀx.
#[derive(Debug, Clone)]
struct MarginalGrid {
    nodes: Vec<f64>,
    base: Vec<f64>,
    m_inv: Vec<Matrix3<f64>>,
}

impl MarginalGrid {
    fn new(z: &[f64], sentinel: f64, subdivisions: usize) -> Result<Self> {
        let mut breaks: Vec<f64> = z.to_vec();
        breaks.sort_by(f64::total_cmp);
        let lo = (-sentinel).min(breaks[0]);
        let hi = sentinel.max(*breaks.last().expect("non-empty"));
        breaks.insert(0, lo);
        breaks.push(hi);
        breaks.dedup();
        let mut nodes = vec![breaks[0]];
        for w in breaks.windows(2) {
            nodes.extend_from_slice(&linspace(w[0], w[1], subdivisions + 1)[1..]);
        }
        let log_w = trapezoid_log_weights(&nodes)?;
        let n = z.len() as f64;
        let mut base = Vec::with_capacity(nodes.len());
        let mut m_inv = Vec::with_capacity(nodes.len());
        for (k, &t) in nodes.iter().enumerate() {
            let hth = gram(z, t);
            let m = Matrix3::identity() + hth * (1.0 / NOISE_VAR);
            let chol = m.cholesky().ok_or(Error::NotPositiveDefinite)?;
            let logdet_m = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            base.push(
                log_w[k] - 0.5 * n * ln_2pi() - 0.5 * (n * NOISE_VAR.ln() + logdet_m) - 0.5 * ln_2pi() - 0.5 * t * t,
            );
            m_inv.push(chol.inverse());
        }
        Ok(Self { nodes, base, m_inv })
    }

    fn log_terms(&self, x: &DVector<f64>, z: &[f64]) -> (Vec<f64>, Vec<Vector3<f64>>) {
        let xx = x.norm_squared();
        let mut terms = Vec::with_capacity(self.nodes.len());
        let mut us = Vec::with_capacity(self.nodes.len());
        for k in 0..self.nodes.len() {
            let u = cross(z, x, self.nodes[k]);
            let q = u.dot(&(self.m_inv[k] * u));
            terms.push(self.base[k] - 2.0 * xx + 8.0 * q);
            us.push(u);
        }
        (terms, us)
    }
}

fn hinge_row(zi: f64, t: f64) -> Vector3<f64> {
    Vector3::new(1.0, zi, (zi - t).max(0.0))
}

fn gram(z: &[f64], t: f64) -> Matrix3<f64> {
    let mut g = Matrix3::zeros();
    for &zi in z {
        let r = hinge_row(zi, t);
        g += r * r.transpose();
    }
    g
}

fn cross(z: &[f64], x: &DVector<f64>, t: f64) -> Vector3<f64> {
    let mut u = Vector3::zeros();
    for (zi, xi) in z.iter().zip(x.iter()) {
        u += hinge_row(*zi, t) * *xi;
    }
    u
}

pub struct SplineModel {
    z: Vec<f64>,
    order: Vec<usize>,
    grid: MarginalGrid,
}

impl SplineModel {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        Self::with_grid(z, SENTINEL, SUBDIVISIONS)
    }

    pub fn with_grid(z: Vec<f64>, sentinel: f64, subdivisions: usize) -> Result<Self> {
        if z.is_empty() || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("spline covariates must be finite and non-empty".into()));
        }
        if subdivisions == 0 {
            return Err(Error::InvalidParameter("need at least one subdivision per gap".into()));
        }
        // prior mass of t₁ beyond the sentinels is dropped by the grid
        debug_assert!(2.0 * log_norm_cdf(-sentinel).exp() < 1e-20 || sentinel < SENTINEL);
        let mut order: Vec<usize> = (0..z.len()).collect();
        order.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(a.cmp(&b)));
        let grid = MarginalGrid::new(&z, sentinel, subdivisions)?;
        Ok(Self { z, order, grid })
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn grid_nodes(&self) -> &[f64] {
        &self.grid.nodes
    }

    fn check(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("expected {} finite responses", self.n())));
        }
        Ok(())
    }

    fn sorted(&self, x: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        (self.order.iter().map(|&i| x[i]).collect(), self.order.iter().map(|&i| self.z[i]).collect())
    }

    pub fn knot_conditional(&self, x: &DVector<f64>, gamma: &Vector3<f64>) -> Result<KnotConditional> {
        let (sx, sz) = self.sorted(x);
        knot_conditional(&sx, &sz, gamma)
    }

    /// log Ψ(x, t₁): N(0, hhᵀ + 0.25I) log density at x plus the N(0,1)
    /// log prior at t₁, via the Woodbury identity.
    pub fn log_joint(&self, x: &DVector<f64>, t1: f64) -> Result<f64> {
        let n = self.n() as f64;
        let m = Matrix3::identity() + gram(&self.z, t1) * (1.0 / NOISE_VAR);
        let chol = m.cholesky().ok_or(Error::NotPositiveDefinite)?;
        let logdet_m = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let u = cross(&self.z, x, t1);
        let quad = x.norm_squared() / NOISE_VAR - u.dot(&chol.solve(&u)) / (NOISE_VAR * NOISE_VAR);
        Ok(-0.5 * n * ln_2pi() - 0.5 * (n * NOISE_VAR.ln() + logdet_m) - 0.5 * quad - 0.5 * ln_2pi() - 0.5 * t1 * t1)
    }

    fn fitted(&self, p: &SplineParams) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.z.iter().map(|&zi| hinge_row(zi, p.t1).dot(&p.gamma)))
    }
}

impl ModelPlugin for SplineModel {
    type Params = SplineParams;
    type Data = SplineData;

    fn log_likelihood(&self, params: &SplineParams, x: &DVector<f64>) -> f64 {
        let r = x - self.fitted(params);
        -0.5 * self.n() as f64 * (ln_2pi() + NOISE_VAR.ln()) - 0.5 * r.norm_squared() / NOISE_VAR
    }

    fn log_prior(&self, params: &SplineParams) -> f64 {
        -2.0 * ln_2pi() - 0.5 * (params.gamma.norm_squared() + params.t1 * params.t1)
    }

    fn sample_posterior(
        &self,
        x: &DVector<f64>,
        count: usize,
        chain: &ChainConfig,
        rng: &mut Rng,
    ) -> Result<PosteriorDraws<SplineParams>> {
        self.check(x)?;
        let (sx, sz) = self.sorted(x);
        let init = match fit_one_knot_spline(x.as_slice(), &self.z) {
            Ok(fit) => SplineParams {
                gamma: Vector3::from(fit.coefficients),
                t1: fit.knot,
            },
            Err(e) => {
                log::warn!("spline knot initialization failed ({e}); starting from the prior mean");
                SplineParams {
                    gamma: Vector3::zeros(),
                    t1: 0.0,
                }
            }
        };
        let draws = mcmc::collect_chain(chain, count, init, rng, |s, rng| {
            s.gamma = gamma_conditional(x, &self.z, s.t1)?.sample(rng)?;
            s.t1 = knot_conditional(&sx, &sz, &s.gamma)?.sample(rng)?;
            Ok(())
        })?;
        Ok(PosteriorDraws {
            draws,
            burn_in: chain.burn_in,
            thin: chain.thin,
            acceptance_rate: None,
        })
    }

    fn log_marginal_hat(&self, x: &DVector<f64>) -> Result<f64> {
        self.check(x)?;
        Ok(log_sum_exp(&self.grid.log_terms(x, &self.z).0))
    }

    fn sample_copies(
        &self,
        x: &DVector<f64>,
        draws: &PosteriorDraws<SplineParams>,
        count: usize,
        rng: &mut Rng,
    ) -> Result<CopySet<DVector<f64>>> {
        self.check(x)?;
        if draws.is_empty() {
            return Err(Error::InvalidParameter("copy sampling needs B >= 1 posterior draws".into()));
        }
        let mut fitted_sum = DVector::zeros(self.n());
        for p in &draws.draws {
            fitted_sum += self.fitted(p);
        }
        let updater = ResponseUpdater {
            model: self,
            b: draws.len() as f64,
            fitted_sum,
            log_terms: Vec::new(),
            cross: Vec::new(),
        };
        let mut sweep = CoordinateSweep::new(updater);
        let out = mcmc::permuted_serial_sampler(x, &mut sweep, count, rng)?;
        if let Some(a) = out.mean_acceptance() {
            if a < ACCEPTANCE_HEALTH {
                log::warn!("spline copy acceptance {a:.3} below {ACCEPTANCE_HEALTH}");
            }
        }
        Ok(out)
    }

    fn data_shape(&self) -> DataShape {
        DataShape {
            dims: vec![self.n()],
            discrete: false,
        }
    }

    fn in_parameter_space(&self, p: &SplineParams) -> bool {
        p.t1.is_finite() && p.gamma.iter().all(|v| v.is_finite())
    }
}

/// Per-coordinate MH. Each node's log term is exactly quadratic in x_i,
/// a_k + b_k δ + ½c_k δ², so ζ and its derivatives are log-sum-exps.
struct ResponseUpdater<'a> {
    model: &'a SplineModel,
    b: f64,
    fitted_sum: DVector<f64>,
    log_terms: Vec<f64>,
    /// u_k = h_kᵀx per node.
    cross: Vec<Vector3<f64>>,
}

struct NodeQuadratics {
    a: Vec<f64>,
    slope: Vec<f64>,
    curv: Vec<f64>,
}

impl ResponseUpdater<'_> {
    fn quadratics(&self, state: &DVector<f64>, i: usize) -> (NodeQuadratics, Vec<Vector3<f64>>) {
        let g = &self.model.grid;
        let zi = self.model.z[i];
        let mut q = NodeQuadratics {
            a: self.log_terms.clone(),
            slope: Vec::with_capacity(g.nodes.len()),
            curv: Vec::with_capacity(g.nodes.len()),
        };
        let mut rows = Vec::with_capacity(g.nodes.len());
        for k in 0..g.nodes.len() {
            let h = hinge_row(zi, g.nodes[k]);
            let mh = g.m_inv[k] * h;
            q.slope.push(-4.0 * state[i] + 16.0 * mh.dot(&self.cross[k]));
            q.curv.push(-4.0 + 16.0 * mh.dot(&h));
            rows.push(h);
        }
        (q, rows)
    }

    /// ζ(cur + δ) = −2B v² + 4v·m_i − (B−1)·log f̂ up to a constant.
    fn zeta(&self, q: &NodeQuadratics, cur: f64, delta: f64, i: usize) -> (f64, f64, f64) {
        let v = cur + delta;
        let terms: Vec<f64> = (0..q.a.len())
            .map(|k| q.a[k] + delta * q.slope[k] + 0.5 * delta * delta * q.curv[k])
            .collect();
        let lse = log_sum_exp(&terms);
        let (mut m1, mut m2, mut mc) = (0.0, 0.0, 0.0);
        for k in 0..terms.len() {
            let w = (terms[k] - lse).exp();
            let s = q.slope[k] + delta * q.curv[k];
            m1 += w * s;
            m2 += w * s * s;
            mc += w * q.curv[k];
        }
        let bm1 = self.b - 1.0;
        let prec = 1.0 / NOISE_VAR;
        let f = -0.5 * prec * self.b * v * v + prec * v * self.fitted_sum[i] - bm1 * lse;
        let d1 = -prec * self.b * v + prec * self.fitted_sum[i] - bm1 * m1;
        let d2 = -prec * self.b - bm1 * (mc + m2 - m1 * m1);
        (f, d1, d2)
    }

    fn mode(&self, q: &NodeQuadratics, cur: f64, i: usize) -> (f64, f64) {
        let mut delta = 0.0;
        let (mut f, mut d1, mut d2) = self.zeta(q, cur, delta, i);
        for _ in 0..NEWTON_MAX_ITER {
            if d1.abs() <= NEWTON_TOL {
                return (cur + delta, d2);
            }
            let mut step = -d1 / d2;
            loop {
                let (fs, d1s, d2s) = self.zeta(q, cur, delta + step, i);
                if fs >= f || step.abs() < 1e-14 {
                    delta += step;
                    (f, d1, d2) = (fs, d1s, d2s);
                    break;
                }
                step *= 0.5;
            }
        }
        if d1.abs() <= NEWTON_TOL {
            return (cur + delta, d2);
        }
        log::warn!("spline copy mode search did not converge; proposing around the current value");
        (cur, self.zeta(q, cur, 0.0, i).2)
    }
}

impl CoordinateUpdater<DVector<f64>> for ResponseUpdater<'_> {
    fn num_coordinates(&self, state: &DVector<f64>) -> usize {
        state.len()
    }

    fn prepare(&mut self, state: &DVector<f64>) -> Result<()> {
        if self.b > 1.0 {
            (self.log_terms, self.cross) = self.model.grid.log_terms(state, &self.model.z);
        }
        Ok(())
    }

    fn update(&mut self, state: &mut DVector<f64>, i: usize, rng: &mut Rng) -> Result<Move> {
        let cur = state[i];
        if self.b == 1.0 {
            state[i] = normal(rng, self.fitted_sum[i], NOISE_VAR.sqrt());
            return Ok(Move::Accepted);
        }
        let (q, rows) = self.quadratics(state, i);
        let (mode, d2) = self.mode(&q, cur, i);
        let var = -1.0 / d2;
        let prop = normal(rng, mode, var.sqrt());
        let delta = prop - cur;
        let (f_prop, _, _) = self.zeta(&q, cur, delta, i);
        let (f_cur, _, _) = self.zeta(&q, cur, 0.0, i);
        let log_ratio = f_prop - f_cur + normal_logpdf(cur, mode, var) - normal_logpdf(prop, mode, var);
        if !mcmc::mh_accept(log_ratio, rng) {
            return Ok(Move::Rejected);
        }
        for k in 0..q.a.len() {
            self.log_terms[k] = q.a[k] + delta * q.slope[k] + 0.5 * delta * delta * q.curv[k];
            self.cross[k] += rows[k] * delta;
        }
        state[i] = prop;
        Ok(Move::Accepted)
    }
}

/// Gauss–Hermite nodes and weights for ∫ e^{−u²} f(u) du (Golub–Welsch).
#[cfg(test)]
fn gauss_hermite(m: usize) -> (Vec<f64>, Vec<f64>) {
    let jac = DMatrix::from_fn(m, m, |i, j| if i + 1 == j || j + 1 == i { ((i.max(j)) as f64 / 2.0).sqrt() } else { 0.0 });
    let (vals, vecs) = crate::numerics::linalg::sym_eigen(&jac);
    let w = (0..m).map(|k| std::f64::consts::PI.sqrt() * vecs[(0, k)].powi(2)).collect();
    (vals, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dist::{std_normal, uniform};
    use crate::numerics::special::norm_cdf;
    use crate::rng::seeded;

    fn reference_data(seed: u64, n: usize) -> (Vec<f64>, DVector<f64>) {
        let mut rng = seeded(seed);
        let z: Vec<f64> = (0..n).map(|_| uniform(&mut rng, -5.0, 5.0)).collect();
        let x = DVector::from_iterator(
            n,
            z.iter().map(|zi| 1.0 - zi + 2.0 * (zi + 1.67).max(0.0) + 0.5 * std_normal(&mut rng)),
        );
        (z, x)
    }

    #[test]
    fn design_matrix_hinge() {
        let z = [-1.0, 0.5, 2.0];
        assert!(design_matrix(3.0, &z).column(2).iter().all(|v| *v == 0.0));
        let h = design_matrix(-2.0, &z);
        for i in 0..3 {
            assert_eq!(h[(i, 2)], z[i] + 2.0);
            assert_eq!(h[(i, 0)], 1.0);
            assert_eq!(h[(i, 1)], z[i]);
        }
        let mut rng = seeded(1);
        let zz: Vec<f64> = (0..20).map(|_| uniform(&mut rng, -5.0, 5.0)).collect();
        let t = 0.7;
        let h = design_matrix(t, &zz);
        for i in 0..20 {
            assert_eq!(h[(i, 2)], if zz[i] > t { zz[i] - t } else { 0.0 });
        }
    }

    #[test]
    fn gamma_conditional_limits() {
        let h0 = DMatrix::zeros(4, 3);
        let g = GammaConditional::from_design(&h0, &DVector::from_element(4, 1.0)).unwrap();
        assert!(g.mean.amax() == 0.0);
        assert!((g.cov - Matrix3::identity()).amax() < 1e-15);
        // rank-1 design still gives a positive definite covariance
        let g = gamma_conditional(&DVector::zeros(5), &[0.0; 5], -1.0).unwrap();
        assert!(g.cov.cholesky().is_some());
        assert!(g.mean.amax() == 0.0);
    }

    #[test]
    fn gamma_draw_moments() {
        let (z, x) = reference_data(2, 30);
        let g = gamma_conditional(&x, &z, 0.3).unwrap();
        let mut rng = seeded(3);
        let reps = 40_000;
        let mut sum = Vector3::zeros();
        for _ in 0..reps {
            sum += g.sample(&mut rng).unwrap();
        }
        let emp = sum / reps as f64;
        for k in 0..3 {
            assert!((emp[k] - g.mean[k]).abs() < 4.0 * (g.cov[(k, k)] / reps as f64).sqrt());
        }
    }

    #[test]
    fn knot_conditional_without_slope_change_is_the_prior() {
        let z = vec![-1.0, 0.2, 1.5];
        let x = vec![0.3, -0.1, 2.0];
        let kc = knot_conditional(&x, &z, &Vector3::new(0.5, -0.2, 0.0)).unwrap();
        let bounds = [f64::NEG_INFINITY, -1.0, 0.2, 1.5, f64::INFINITY];
        for i in 0..4 {
            let expected = (norm_cdf(bounds[i + 1]) - norm_cdf(bounds[i])).ln();
            assert!((kc.log_weights[i] - expected).abs() < 1e-12);
            assert_eq!(kc.mean[i], 0.0);
        }
        let total: f64 = kc.log_weights.iter().map(|w| w.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let mut rng = seeded(4);
        let mut draws: Vec<f64> = (0..10_000).map(|_| kc.sample(&mut rng).unwrap()).collect();
        draws.sort_by(f64::total_cmp);
        let d = draws
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let f = norm_cdf(*t);
                (f - k as f64 / 1e4).abs().max(((k + 1) as f64 / 1e4 - f).abs())
            })
            .fold(0.0, f64::max);
        // the 1% critical value of the Kolmogorov distribution is 1.628
        assert!(d < 1.628 / 100.0, "ks {d}");
    }

    #[test]
    fn knot_conditional_matches_grid_normalization() {
        let z = vec![-0.6, 0.8];
        let x = vec![0.4, 1.9];
        let gamma = Vector3::new(0.3, 0.2, 1.1);
        let kc = knot_conditional(&x, &z, &gamma).unwrap();
        let unnorm = |t: f64| -> f64 {
            let s: f64 = (0..2)
                .map(|k| (x[k] - gamma[0] - gamma[1] * z[k] - gamma[2] * (z[k] - t).max(0.0)).powi(2))
                .sum();
            -2.0 * s - 0.5 * t * t
        };
        let mut nodes = linspace(-8.0, 8.0, 2000);
        nodes.extend_from_slice(&z);
        nodes.sort_by(f64::total_cmp);
        let vals: Vec<f64> = nodes.iter().map(|&t| unnorm(t)).collect();
        // normalizing constant from a much finer trapezoid with the kinks as nodes
        let mut fine = linspace(-8.0, 8.0, 400_001);
        fine.extend_from_slice(&z);
        fine.sort_by(f64::total_cmp);
        let fine_w = trapezoid_log_weights(&fine).unwrap();
        let log_norm = log_sum_exp(&fine.iter().zip(&fine_w).map(|(&t, w)| w + unnorm(t)).collect::<Vec<_>>());
        let sup = nodes
            .iter()
            .zip(&vals)
            .map(|(&t, v)| ((v - log_norm).exp() - kc.log_pdf(t).exp()).abs())
            .fold(0.0, f64::max);
        assert!(sup <= 1e-6, "sup {sup}");
    }

    #[test]
    fn posterior_draw_count() {
        let (z, x) = reference_data(5, 20);
        let m = SplineModel::new(z).unwrap();
        let cfg = ChainConfig::new(50, 2).unwrap();
        let d = m.sample_posterior(&x, 7, &cfg, &mut seeded(6)).unwrap();
        assert_eq!(d.draws.len(), 7);
    }

    #[test]
    fn woodbury_matches_gaussian_quadrature_over_gamma() {
        let z = vec![-0.3, 0.4];
        let x = DVector::from_vec(vec![0.5, -0.2]);
        let t1 = 0.1;
        let m = SplineModel::new(z.clone()).unwrap();
        let h = design_matrix(t1, &z);
        let (u, w) = gauss_hermite(100);
        let mut acc = 0.0;
        for a in 0..u.len() {
            for b in 0..u.len() {
                for c in 0..u.len() {
                    let g = DVector::from_vec(vec![u[a], u[b], u[c]]) * 2f64.sqrt();
                    let r = &x - &h * g;
                    let lik = (-0.5 * r.norm_squared() / NOISE_VAR).exp() / (2.0 * std::f64::consts::PI * NOISE_VAR);
                    acc += w[a] * w[b] * w[c] * lik;
                }
            }
        }
        let quad = (acc / std::f64::consts::PI.powf(1.5)).ln() + normal_logpdf(t1, 0.0, 1.0);
        assert!((m.log_joint(&x, t1).unwrap() - quad).abs() < 1e-6, "{} vs {quad}", m.log_joint(&x, t1).unwrap());
        let cov = &h * h.transpose() + DMatrix::identity(2, 2) * NOISE_VAR;
        let dense = MultivariateNormal::new(DVector::zeros(2), &cov).unwrap().log_pdf(&x) + normal_logpdf(t1, 0.0, 1.0);
        assert!((m.log_joint(&x, t1).unwrap() - dense).abs() < 1e-10);
    }

    fn single_observation_reference() -> (f64, f64) {
        let grid = linspace(-12.0, 12.0, 240_001);
        let h = grid[1] - grid[0];
        let vals: Vec<f64> = grid
            .iter()
            .map(|&t| {
                let r = hinge_row(0.7, t);
                normal_logpdf(1.3, 0.0, r.norm_squared() + NOISE_VAR) + normal_logpdf(t, 0.0, 1.0) + h.ln()
            })
            .collect();
        // adaptive quadrature of the same integrand gives −1.7535762979
        (log_sum_exp(&vals), -1.753_576_297_924_221_3)
    }

    #[test]
    fn single_observation_marginal_converges_to_quadrature() {
        let x = DVector::from_vec(vec![1.3]);
        let (fine, adaptive) = single_observation_reference();
        assert!((fine - adaptive).abs() < 1e-8);
        // the pinned K=20 rule sits 1.4e-3 away at n=1 (recorded); it equals
        // an independent trapezoid evaluation on the same nodes
        let k20 = SplineModel::new(vec![0.7]).unwrap().log_marginal_hat(&x).unwrap();
        assert!((k20 - -1.754_976_214_645_252_8).abs() < 1e-10);
        let mut prev = (k20 - fine).abs();
        for k in [40, 80, 160] {
            let v = SplineModel::with_grid(vec![0.7], SENTINEL, k).unwrap().log_marginal_hat(&x).unwrap();
            assert!((v - fine).abs() < prev);
            prev = (v - fine).abs();
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn grid_refinement_is_stable() {
        let (z, x) = reference_data(7, 50);
        let coarse = SplineModel::new(z.clone()).unwrap().log_marginal_hat(&x).unwrap();
        let fine = SplineModel::with_grid(z.clone(), SENTINEL, 40).unwrap().log_marginal_hat(&x).unwrap();
        let finer = SplineModel::with_grid(z, SENTINEL, 80).unwrap().log_marginal_hat(&x).unwrap();
        assert!((coarse - fine).abs() < 1e-3);
        assert!((fine - finer).abs() <= (coarse - fine).abs());
        assert!(2.0 * log_norm_cdf(-SENTINEL).exp() < 1e-20);
    }

    #[test]
    fn joint_beyond_data_differs_only_by_prior() {
        let (z, x) = reference_data(8, 10);
        let m = SplineModel::new(z).unwrap();
        let (a, b) = (6.0, 7.5);
        let la = m.log_joint(&x, a).unwrap() + 0.5 * a * a;
        let lb = m.log_joint(&x, b).unwrap() + 0.5 * b * b;
        assert!((la - lb).abs() < 1e-10);
    }

    #[test]
    fn grid_terms_match_direct_joint() {
        let (z, x) = reference_data(9, 12);
        let m = SplineModel::new(z.clone()).unwrap();
        let (terms, _) = m.grid.log_terms(&x, &z);
        let w = trapezoid_log_weights(&m.grid.nodes).unwrap();
        for k in (0..terms.len()).step_by(37) {
            let direct = m.log_joint(&x, m.grid.nodes[k]).unwrap() + w[k];
            assert!((terms[k] - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn zeta_derivatives_match_finite_differences() {
        let (z, x) = reference_data(10, 15);
        let m = SplineModel::new(z).unwrap();
        let draws = m.sample_posterior(&x, 5, &ChainConfig::new(100, 2).unwrap(), &mut seeded(11)).unwrap();
        let mut fitted_sum = DVector::zeros(15);
        for p in &draws.draws {
            fitted_sum += m.fitted(p);
        }
        let mut up = ResponseUpdater {
            model: &m,
            b: 5.0,
            fitted_sum,
            log_terms: Vec::new(),
            cross: Vec::new(),
        };
        up.prepare(&x).unwrap();
        for i in [0, 4, 9] {
            let (q, _) = up.quadratics(&x, i);
            // exact ζ from the full marginal for comparison
            let direct = |v: f64| {
                let mut y = x.clone();
                y[i] = v;
                -2.0 * 5.0 * v * v + 4.0 * v * up.fitted_sum[i] - 4.0 * m.log_marginal_hat(&y).unwrap()
            };
            let (f0, d1, d2) = up.zeta(&q, x[i], 0.0, i);
            let (f1, _, _) = up.zeta(&q, x[i], 0.3, i);
            assert!(((f1 - f0) - (direct(x[i] + 0.3) - direct(x[i]))).abs() < 1e-8);
            let h = 1e-4;
            let fd1 = (direct(x[i] + h) - direct(x[i] - h)) / (2.0 * h);
            let fd2 = (direct(x[i] + h) - 2.0 * direct(x[i]) + direct(x[i] - h)) / (h * h);
            assert!((d1 - fd1).abs() < 1e-4f64.max(1e-3 * d1.abs()));
            assert!((d2 - fd2).abs() < 1e-4f64.max(1e-3 * d2.abs()));
        }
    }

    #[test]
    fn single_draw_copies_are_exact() {
        let (z, x) = reference_data(12, 10);
        let m = SplineModel::new(z).unwrap();
        let draws = m.sample_posterior(&x, 1, &ChainConfig::new(50, 1).unwrap(), &mut seeded(13)).unwrap();
        let out = m.sample_copies(&x, &draws, 4, &mut seeded(14)).unwrap();
        assert_eq!(out.mean_acceptance(), Some(1.0));
        assert!(out.copies.iter().all(|c| c.len() == 10));
    }

    #[test]
    fn copy_acceptance_on_reference_scale() {
        let (z, x) = reference_data(15, 50);
        let m = SplineModel::new(z).unwrap();
        let mut rng = seeded(16);
        let draws = m.sample_posterior(&x, 25, &ChainConfig::default(), &mut rng).unwrap();
        let out = m.sample_copies(&x, &draws, 10, &mut rng).unwrap();
        assert!(out.mean_acceptance().unwrap() >= 0.8, "{:?}", out.mean_acceptance());
    }
}
