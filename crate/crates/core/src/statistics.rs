//! Test statistics for the five experiments and the solvers behind them.
//! Larger values point to the alternative. Any internal randomness comes
//! from a fixed stream, so each statistic is a deterministic function of
//! its input.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::cluster::kmeans_1d;
use crate::numerics::linalg::{cholesky, sym_eigen, sym_eigenvalues};
use crate::rng::{label, substream};

/// A named statistic over one data type.
pub struct StatisticFn<D> {
    pub name: &'static str,
    pub compute: Box<dyn Fn(&D) -> f64 + Send + Sync>,
}

impl<D> StatisticFn<D> {
    pub fn new(name: &'static str, f: impl Fn(&D) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name,
            compute: Box::new(f),
        }
    }

    pub fn eval(&self, x: &D) -> f64 {
        (self.compute)(x)
    }
}

pub const SIR_SLICES: usize = 10;
const SIR_RIDGE: f64 = 1e-6;
pub const KMEANS_RESTARTS: usize = 25;
pub const LASSO_PATH_LEN: usize = 50;
pub const LASSO_PATH_RATIO: f64 = 1e-3;
pub const CV_FOLDS: usize = 5;
const LASSO_MAX_SWEEPS: usize = 10_000;
const LASSO_TOL: f64 = 1e-10;
/// CV only ranks the path, so its fits stop earlier.
const CV_TOL: f64 = 1e-7;
const NEWTON_SWITCH: f64 = 1e-1;
const NEWTON_MAX_STEPS: usize = 50;
pub const SPLINE_KNOT_CANDIDATES: usize = 200;

/// Sliced inverse regression score for the dependence of y on x given z.
///
/// W = (x, z, x⊙z₁..x⊙z_d) with standardized columns; observations are cut
/// into 10 slices by the order of y. The leading eigenpair (λ, β) of the
/// between-slice covariance relative to the total covariance gives λ times
/// the squared weight of unit-norm β on the coordinates that involve x.
pub fn stat_sir(x: &[u8], y: &[f64], z: &DMatrix<f64>) -> Result<f64> {
    let n = x.len();
    if y.len() != n || z.nrows() != n {
        return Err(Error::InvalidParameter("stat_sir: lengths disagree".into()));
    }
    if n < SIR_SLICES {
        return Err(Error::InvalidParameter("stat_sir needs at least one observation per slice".into()));
    }
    let d = z.ncols();
    let p = 1 + 2 * d;
    let mut w = DMatrix::zeros(n, p);
    for i in 0..n {
        let xi = x[i] as f64;
        w[(i, 0)] = xi;
        for j in 0..d {
            w[(i, 1 + j)] = z[(i, j)];
            w[(i, 1 + d + j)] = xi * z[(i, j)];
        }
    }
    for mut col in w.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / n as f64).sqrt();
        if sd > 0.0 {
            col /= sd;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let mut between = DMatrix::zeros(p, p);
    for h in 0..SIR_SLICES {
        let (lo, hi) = (h * n / SIR_SLICES, (h + 1) * n / SIR_SLICES);
        let mut mean = DVector::zeros(p);
        for &i in &order[lo..hi] {
            mean += w.row(i).transpose();
        }
        mean /= (hi - lo) as f64;
        between += &mean * mean.transpose() * ((hi - lo) as f64 / n as f64);
    }
    let total = w.transpose() * &w / n as f64 + DMatrix::identity(p, p) * SIR_RIDGE;
    // Σ^{-1/2} M Σ^{-1/2} via the eigendecomposition of Σ
    let (vals, vecs) = sym_eigen(&total);
    let inv_sqrt = &vecs * DMatrix::from_diagonal(&DVector::from_iterator(p, vals.iter().map(|v| v.max(SIR_RIDGE).sqrt().recip()))) * vecs.transpose();
    let whitened = &inv_sqrt * between * &inv_sqrt;
    let (lam, dirs) = sym_eigen(&(0.5 * (&whitened + whitened.transpose())));
    let beta = &inv_sqrt * dirs.column(0);
    let beta = &beta / beta.norm();
    let energy = beta[0] * beta[0] + (0..d).map(|j| beta[1 + d + j].powi(2)).sum::<f64>();
    Ok(lam[0].max(0.0) * energy)
}

/// WCSS₂/WCSS₃ from 1-D k-means; 1 when all points coincide.
pub fn stat_kmeans_ratio(x: &[f64]) -> Result<f64> {
    // sorted input makes the restarts independent of the data order
    let mut x = x.to_vec();
    x.sort_by(f64::total_cmp);
    if x.len() >= 3 && x.first() == x.last() {
        return Ok(1.0);
    }
    let x = &x[..];
    let mut rng = substream(label("stat-kmeans"), &[]);
    let w2 = kmeans_1d(x, 2, KMEANS_RESTARTS, &mut rng)?.wcss;
    let w3 = kmeans_1d(x, 3, KMEANS_RESTARTS, &mut rng)?.wcss;
    Ok(if w3 == 0.0 {
        f64::MAX
    } else {
        w2 / w3
    })
}

/// Second-largest eigenvalue of XᵀX.
pub fn stat_second_eigenvalue(x: &DMatrix<f64>) -> f64 {
    let ev = sym_eigenvalues(&(x.transpose() * x));
    ev.get(1).copied().unwrap_or(0.0).max(0.0)
}

/// Gram-form group lasso problem: ½βᵀGβ − cᵀβ + λΣ_g√|I_g|‖β_g‖, which is
/// ½βᵀGβ − cᵀβ + penalty, i.e. ½‖x − Zβ‖² up to a constant when G = ZᵀZ
/// and c = Zᵀx. Only G is stored; c is supplied per solve.
#[derive(Debug, Clone)]
struct GramProblem {
    gram: DMatrix<f64>,
    groups: Vec<Vec<usize>>,
    /// Eigendecomposition of each diagonal block G_gg.
    blocks: Vec<(Vec<f64>, DMatrix<f64>)>,
}

fn lambda_max_of(c: &DVector<f64>, groups: &[Vec<usize>]) -> f64 {
    groups
        .iter()
        .map(|idx| {
            let s: f64 = idx.iter().map(|&j| c[j] * c[j]).sum();
            s.sqrt() / (idx.len() as f64).sqrt()
        })
        .fold(0.0, f64::max)
}

impl GramProblem {
    fn new(gram: DMatrix<f64>, groups: &[Vec<usize>]) -> Self {
        let blocks = groups
            .iter()
            .map(|idx| sym_eigen(&gram.select_rows(idx).select_columns(idx)))
            .collect();
        Self {
            gram,
            groups: groups.to_vec(),
            blocks,
        }
    }

    /// Exact minimizer of ½bᵀG_gg b − sᵀb + κ‖b‖, written to `out`.
    fn block_solve(&self, g: usize, s: &[f64], kappa: f64, st: &mut [f64], out: &mut [f64]) {
        let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= kappa {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let (vals, vecs) = &self.blocks[g];
        let k = s.len();
        for (a, sa) in st.iter_mut().enumerate().take(k) {
            *sa = (0..k).map(|r| vecs[(r, a)] * s[r]).sum();
        }
        let st = &st[..k];
        // b(t) = Q (E + tI)⁻¹ Qᵀs with t = κ/‖b‖; t‖b(t)‖ increases from 0
        // to ‖s‖, so h(t) = t²‖b(t)‖² − κ² has one positive root.
        let h = |t: f64| -> (f64, f64) {
            let (mut v, mut dv) = (0.0, 0.0);
            for (e, s) in vals.iter().zip(st.iter()) {
                let q = t * s / (e + t);
                v += q * q;
                dv += 2.0 * q * s * e / ((e + t) * (e + t));
            }
            (v - kappa * kappa, dv)
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        while h(hi).0 < 0.0 {
            lo = hi;
            hi *= 2.0;
        }
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let (v, dv) = h(t);
            if v.abs() <= 1e-15 * kappa * kappa {
                break;
            }
            if v < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let nt = t - v / dv;
            t = if dv > 0.0 && nt > lo && nt < hi { nt } else { 0.5 * (lo + hi) };
            if hi - lo <= 1e-16 * hi {
                break;
            }
        }
        for (r, o) in out.iter_mut().enumerate().take(k) {
            *o = (0..k).map(|a| vecs[(r, a)] * st[a] / (vals[a] + t)).sum();
        }
    }

    /// One pass of exact block updates over `which`; returns the largest
    /// coefficient change. `q` tracks Gβ.
    fn pass(&self, c: &DVector<f64>, lambda: f64, beta: &mut DVector<f64>, q: &mut DVector<f64>, which: &[usize], buf: &mut [Vec<f64>; 3]) -> f64 {
        let mut delta_max: f64 = 0.0;
        let [s, st, new] = buf;
        for &g in which {
            let idx = &self.groups[g];
            let k = idx.len();
            // s = c_g − Σ_{h≠g} G_gh β_h
            for (a, &j) in idx.iter().enumerate() {
                let own: f64 = idx.iter().map(|&l| self.gram[(j, l)] * beta[l]).sum();
                s[a] = c[j] - (q[j] - own);
            }
            self.block_solve(g, &s[..k], lambda * (k as f64).sqrt(), st, &mut new[..k]);
            for (a, &j) in idx.iter().enumerate() {
                let diff = new[a] - beta[j];
                if diff != 0.0 {
                    beta[j] = new[a];
                    q.axpy(diff, &self.gram.column(j), 1.0);
                    delta_max = delta_max.max(diff.abs());
                }
            }
        }
        delta_max
    }

    /// Damped Newton iterations on the groups in `active`, where the
    /// objective is smooth. Returns false if a step could not be taken.
    fn newton_polish(&self, c: &DVector<f64>, lambda: f64, beta: &mut DVector<f64>, active: &[usize], tol: f64) -> bool {
        let cols: Vec<usize> = active.iter().flat_map(|&g| self.groups[g].iter().copied()).collect();
        let m = cols.len();
        if m == 0 {
            return true;
        }
        let penalty = |beta: &DVector<f64>| -> f64 {
            active
                .iter()
                .map(|&g| {
                    let idx = &self.groups[g];
                    (idx.len() as f64).sqrt() * idx.iter().map(|&j| beta[j] * beta[j]).sum::<f64>().sqrt()
                })
                .sum::<f64>()
                * lambda
        };
        let mut hess = vec![0.0; m * m];
        let mut step = vec![0.0; m];
        for _ in 0..NEWTON_MAX_STEPS {
            let q = &self.gram * &*beta;
            for (a, &ja) in cols.iter().enumerate() {
                step[a] = q[ja] - c[ja];
                for (r, &jr) in cols.iter().enumerate() {
                    hess[a * m + r] = self.gram[(ja, jr)];
                }
            }
            let mut off = 0;
            for &g in active {
                let idx = &self.groups[g];
                let k = idx.len();
                let nb = idx.iter().map(|&j| beta[j] * beta[j]).sum::<f64>().sqrt();
                if nb == 0.0 {
                    return false;
                }
                let kappa = lambda * (k as f64).sqrt();
                for a in 0..k {
                    let ba = beta[idx[a]];
                    step[off + a] += kappa * ba / nb;
                    for r in 0..k {
                        let eye = if a == r { 1.0 } else { 0.0 };
                        hess[(off + a) * m + off + r] += kappa * (eye / nb - ba * beta[idx[r]] / (nb * nb * nb));
                    }
                }
                off += k;
            }
            let grad = step.clone();
            // symmetric, so the row-major buffer reads as column-major
            let Some(chol) = DMatrix::from_column_slice(m, m, &hess).cholesky() else {
                return false;
            };
            let solved = chol.solve(&DVector::from_column_slice(&step));
            step.copy_from_slice(solved.as_slice());
            // descent direction d = −H⁻¹∇ (stored negated in `step`)
            let slope = -grad.iter().zip(&step).map(|(g, s)| g * s).sum::<f64>();
            let mut gd = DVector::zeros(self.gram.nrows());
            for (a, &j) in cols.iter().enumerate() {
                gd.axpy(-step[a], &self.gram.column(j), 1.0);
            }
            let d_full = {
                let mut d = DVector::zeros(beta.len());
                for (a, &j) in cols.iter().enumerate() {
                    d[j] = -step[a];
                }
                d
            };
            // the quadratic part along β + t·d is exact: lin·t + ½·curv·t²
            let lin = (&q - c).dot(&d_full);
            let curv = d_full.dot(&gd);
            let p0 = penalty(beta);
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..30 {
                let trial = &*beta + t * &d_full;
                let change = lin * t + 0.5 * curv * t * t + penalty(&trial) - p0;
                if change <= 1e-4 * t * slope {
                    *beta = trial;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                return false;
            }
            if t * step.iter().fold(0.0_f64, |a, v| a.max(v.abs())) <= tol {
                return true;
            }
        }
        true
    }

    /// Block coordinate descent from a warm start until a full pass moves no
    /// coefficient by more than `tol`. Passes over the nonzero groups run in
    /// between, and once those settle a Newton polish finishes the active set.
    fn solve(&self, c: &DVector<f64>, lambda: f64, beta: &mut DVector<f64>, tol: f64) -> Result<()> {
        let width = self.groups.iter().map(|g| g.len()).max().unwrap_or(0);
        let mut buf = [vec![0.0; width], vec![0.0; width], vec![0.0; width]];
        let all: Vec<usize> = (0..self.groups.len()).collect();
        let mut sweeps = 0;
        let mut q = &self.gram * &*beta;
        while sweeps < LASSO_MAX_SWEEPS {
            sweeps += 1;
            if self.pass(c, lambda, beta, &mut q, &all, &mut buf) <= tol {
                return Ok(());
            }
            let active: Vec<usize> = all
                .iter()
                .copied()
                .filter(|&g| self.groups[g].iter().any(|&j| beta[j] != 0.0))
                .collect();
            let mut polished = false;
            while sweeps < LASSO_MAX_SWEEPS {
                sweeps += 1;
                let d = self.pass(c, lambda, beta, &mut q, &active, &mut buf);
                if d <= tol {
                    break;
                }
                if !polished && d <= NEWTON_SWITCH {
                    polished = true;
                    self.newton_polish(c, lambda, beta, &active, tol);
                    q = &self.gram * &*beta;
                }
            }
        }
        Err(Error::NoConvergence(format!("group lasso block coordinate descent after {LASSO_MAX_SWEEPS} sweeps")))
    }
}

fn lambda_path(lambda_max: f64) -> Vec<f64> {
    (0..LASSO_PATH_LEN)
        .map(|k| lambda_max * LASSO_PATH_RATIO.powf(k as f64 / (LASSO_PATH_LEN - 1) as f64))
        .collect()
}

fn check_groups(d: usize, groups: &[Vec<usize>]) -> Result<()> {
    let mut seen = vec![false; d];
    for &j in groups.iter().flatten() {
        if j >= d || seen[j] {
            return Err(Error::InvalidParameter("groups must partition the columns of Z".into()));
        }
        seen[j] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvalidParameter("groups must partition the columns of Z".into()));
    }
    Ok(())
}

/// Group lasso minimizer of ½‖x − Zβ‖² + λΣ_g√|I_g|‖β_{I_g}‖₂.
pub fn group_lasso_fit(x: &DVector<f64>, z: &DMatrix<f64>, groups: &[Vec<usize>], lambda: f64) -> Result<DVector<f64>> {
    check_groups(z.ncols(), groups)?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter("lambda must be non-negative".into()));
    }
    let p = GramProblem::new(z.transpose() * z, groups);
    let mut beta = DVector::zeros(z.ncols());
    p.solve(&(z.transpose() * x), lambda, &mut beta, LASSO_TOL)?;
    Ok(beta)
}

/// Smallest λ at which every group is zero: max_g ‖Z_gᵀx‖/√|I_g|.
pub fn group_lasso_lambda_max(x: &DVector<f64>, z: &DMatrix<f64>, groups: &[Vec<usize>]) -> f64 {
    lambda_max_of(&(z.transpose() * x), groups)
}

#[derive(Debug, Clone)]
struct Fold {
    test: Vec<usize>,
    z_test: DMatrix<f64>,
    problem: GramProblem,
}

/// Cross-validated group lasso for a fixed design. Everything that depends
/// on Z alone (fold Gram matrices, block eigendecompositions) is computed
/// once, so repeated fits on new responses only pay for the descent.
///
/// λ is chosen by 5-fold CV prediction error over a 50-point log grid from
/// λ_max down to 1e-3·λ_max. Folds are a fixed permutation, so fits are
/// deterministic.
#[derive(Debug, Clone)]
pub struct GroupLassoCv {
    z: DMatrix<f64>,
    full: GramProblem,
    folds: Vec<Fold>,
}

impl GroupLassoCv {
    pub fn new(z: &DMatrix<f64>, groups: &[Vec<usize>]) -> Result<Self> {
        check_groups(z.ncols(), groups)?;
        let n = z.nrows();
        if n < CV_FOLDS {
            return Err(Error::InvalidParameter("cv_group_lasso: need n >= 5 rows".into()));
        }
        let full_gram = z.transpose() * z;
        let mut perm: Vec<usize> = (0..n).collect();
        {
            use rand::seq::SliceRandom;
            perm.shuffle(&mut substream(label("group-lasso-cv"), &[n as u64]));
        }
        let folds = (0..CV_FOLDS)
            .map(|fold| {
                let test: Vec<usize> =
                    perm.iter().enumerate().filter(|(k, _)| k % CV_FOLDS == fold).map(|(_, &i)| i).collect();
                let z_test = z.select_rows(&test);
                let gram = &full_gram - z_test.transpose() * &z_test;
                Fold {
                    test,
                    z_test,
                    problem: GramProblem::new(gram, groups),
                }
            })
            .collect();
        Ok(Self {
            z: z.clone(),
            full: GramProblem::new(full_gram, groups),
            folds,
        })
    }

    /// (β̂, λ̂) for response `x`.
    pub fn fit(&self, x: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        if x.len() != self.z.nrows() {
            return Err(Error::InvalidParameter("cv_group_lasso: response length differs from Z".into()));
        }
        let d = self.z.ncols();
        let c_full = self.z.transpose() * x;
        let lmax = lambda_max_of(&c_full, &self.full.groups);
        if lmax == 0.0 {
            return Ok((DVector::zeros(d), 0.0));
        }
        let path = lambda_path(lmax);
        let mut cv_err = vec![0.0; path.len()];
        for fold in &self.folds {
            let xt = DVector::from_iterator(fold.test.len(), fold.test.iter().map(|&i| x[i]));
            let c = &c_full - fold.z_test.transpose() * &xt;
            let mut beta = DVector::zeros(d);
            for (k, &lam) in path.iter().enumerate() {
                fold.problem.solve(&c, lam, &mut beta, CV_TOL)?;
                cv_err[k] += (&xt - &fold.z_test * &beta).norm_squared();
            }
        }
        let mut best = 0;
        for k in 1..path.len() {
            if cv_err[k] < cv_err[best] {
                best = k;
            }
        }
        let mut beta = DVector::zeros(d);
        for &lam in &path[..=best] {
            self.full.solve(&c_full, lam, &mut beta, LASSO_TOL)?;
        }
        Ok((beta, path[best]))
    }

    /// Group ratio statistic of the cross-validated fit.
    pub fn group_ratio(&self, x: &DVector<f64>) -> Result<f64> {
        let (beta, _) = self.fit(x)?;
        Ok(group_ratio(&beta, &self.full.groups))
    }
}

/// One-off cross-validated group lasso; see [`GroupLassoCv`]. Returns (β̂, λ̂).
pub fn cv_group_lasso(x: &DVector<f64>, z: &DMatrix<f64>, groups: &[Vec<usize>]) -> Result<(DVector<f64>, f64)> {
    GroupLassoCv::new(z, groups)?.fit(x)
}

/// Σ_{g≠ĝ}‖β_g‖_∞ / ‖β_ĝ‖_∞ with ĝ the group of largest ‖β_g‖_∞ (smallest
/// index on ties); 0 for an all-zero β.
pub fn group_ratio(beta: &DVector<f64>, groups: &[Vec<usize>]) -> f64 {
    let norms: Vec<f64> = groups.iter().map(|idx| idx.iter().map(|&j| beta[j].abs()).fold(0.0, f64::max)).collect();
    let mut top = 0;
    for g in 1..norms.len() {
        if norms[g] > norms[top] {
            top = g;
        }
    }
    if norms[top] == 0.0 {
        return 0.0;
    }
    let rest: f64 = norms.iter().enumerate().filter(|(g, _)| *g != top).map(|(_, v)| v).sum();
    rest / norms[top]
}

pub fn stat_group_ratio(x: &DVector<f64>, z: &DMatrix<f64>, groups: &[Vec<usize>]) -> Result<f64> {
    GroupLassoCv::new(z, groups)?.group_ratio(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineFit {
    pub knot: f64,
    /// (intercept, slope, slope change)
    pub coefficients: [f64; 3],
    pub rss: f64,
}

/// Least squares of x on (1, z, (z − t)₊); `None` if the design is singular.
pub fn spline_least_squares(x: &[f64], z: &[f64], t: f64) -> Option<([f64; 3], f64)> {
    let mut gram = DMatrix::<f64>::zeros(3, 3);
    let mut rhs = DVector::<f64>::zeros(3);
    for (xi, zi) in x.iter().zip(z) {
        let row = [1.0, *zi, (zi - t).max(0.0)];
        for a in 0..3 {
            rhs[a] += row[a] * xi;
            for b in 0..3 {
                gram[(a, b)] += row[a] * row[b];
            }
        }
    }
    let chol = cholesky(&gram).ok()?;
    let diag_min = chol.l_dirty().diagonal().min();
    if !(diag_min > 1e-10 * gram.diagonal().max().sqrt()) {
        return None;
    }
    let beta = chol.solve(&rhs);
    let rss = x
        .iter()
        .zip(z)
        .map(|(xi, zi)| {
            let fit = beta[0] + beta[1] * zi + beta[2] * (zi - t).max(0.0);
            (xi - fit).powi(2)
        })
        .sum();
    Some(([beta[0], beta[1], beta[2]], rss))
}

/// Grid search over `candidates` knots equally spaced inside (min z, max z).
pub fn fit_one_knot_spline_grid(x: &[f64], z: &[f64], candidates: usize) -> Result<SplineFit> {
    if x.len() != z.len() {
        return Err(Error::InvalidParameter("spline fit: lengths disagree".into()));
    }
    if x.len() < 4 {
        return Err(Error::InvalidParameter("spline fit needs at least 4 points".into()));
    }
    let lo = z.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut best: Option<SplineFit> = None;
    for k in 1..=candidates {
        let t = lo + (hi - lo) * k as f64 / (candidates + 1) as f64;
        if let Some((coefficients, rss)) = spline_least_squares(x, z, t) {
            if best.as_ref().is_none_or(|b| rss < b.rss) {
                best = Some(SplineFit { knot: t, coefficients, rss });
            }
        }
    }
    best.ok_or_else(|| Error::Singular("no candidate knot gives a full-rank spline design".into()))
}

pub fn fit_one_knot_spline(x: &[f64], z: &[f64]) -> Result<SplineFit> {
    fit_one_knot_spline_grid(x, z, SPLINE_KNOT_CANDIDATES)
}

/// Residual sum of squares of the best 1-knot linear spline.
pub fn stat_spline_rss(x: &[f64], z: &[f64]) -> Result<f64> {
    Ok(fit_one_knot_spline(x, z)?.rss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dist::{normal, std_normal, uniform};
    use crate::numerics::linalg::singular_values;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn gaussian_matrix(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = seeded(seed);
        DMatrix::from_fn(n, d, |_, _| std_normal(&mut rng))
    }

    fn groups_of(d: usize, size: usize) -> Vec<Vec<usize>> {
        (0..d).collect::<Vec<_>>().chunks(size).map(|c| c.to_vec()).collect()
    }

    #[test]
    fn second_eigenvalue_examples() {
        let mut e1 = DMatrix::zeros(3, 3);
        e1[(0, 0)] = 1.0;
        assert!(stat_second_eigenvalue(&e1).abs() < 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        assert!((stat_second_eigenvalue(&d) - 4.0).abs() < 1e-10);
        let x = gaussian_matrix(10, 10, 1);
        let s = singular_values(&x);
        assert!((stat_second_eigenvalue(&x) - s[1] * s[1]).abs() < 1e-8);
    }

    #[test]
    fn kmeans_ratio_conventions() {
        assert_eq!(stat_kmeans_ratio(&[0.3; 10]).unwrap(), 1.0);
        let mut rng = seeded(2);
        let mut x = Vec::new();
        for c in [-0.4, 0.0, 0.4] {
            for _ in 0..30 {
                x.push(normal(&mut rng, c, 0.03));
            }
        }
        assert!(stat_kmeans_ratio(&x).unwrap() >= 5.0);
        let mut y = x.clone();
        y.reverse();
        assert_eq!(stat_kmeans_ratio(&x).unwrap(), stat_kmeans_ratio(&y).unwrap());
    }

    #[test]
    fn sir_detects_x_dependence() {
        let n = 200;
        let mut rng = seeded(3);
        let z = gaussian_matrix(n, 5, 4);
        let x: Vec<u8> = (0..n).map(|_| (rng.random::<f64>() < 0.5) as u8).collect();
        let y_null: Vec<f64> = (0..n).map(|i| z[(i, 0)] + std_normal(&mut rng)).collect();
        let y_alt: Vec<f64> = (0..n).map(|i| 3.0 * x[i] as f64 + z[(i, 0)] + 0.3 * std_normal(&mut rng)).collect();
        let t_alt = stat_sir(&x, &y_alt, &z).unwrap();
        let mut perm_stats = Vec::new();
        let mut xp = x.clone();
        for _ in 0..100 {
            use rand::seq::SliceRandom;
            xp.shuffle(&mut rng);
            perm_stats.push(stat_sir(&xp, &y_alt, &z).unwrap());
        }
        perm_stats.sort_by(f64::total_cmp);
        assert!(t_alt > perm_stats[98]);
        assert!(stat_sir(&x, &y_null, &z).unwrap() < t_alt);
    }

    #[test]
    fn sir_slices_are_equal_sized() {
        let n = 100;
        let sizes: Vec<usize> = (0..SIR_SLICES).map(|h| (h + 1) * n / SIR_SLICES - h * n / SIR_SLICES).collect();
        assert!(sizes.iter().all(|&s| s == 10));
    }

    #[test]
    fn lasso_above_lambda_max_is_zero() {
        let z = gaussian_matrix(40, 12, 5);
        let x = gaussian_vector(40, 6);
        let g = groups_of(12, 3);
        let lmax = group_lasso_lambda_max(&x, &z, &g);
        assert!(group_lasso_fit(&x, &z, &g, lmax * 1.0001).unwrap().iter().all(|v| *v == 0.0));
        assert!(group_lasso_fit(&x, &z, &g, lmax * 0.9).unwrap().iter().any(|v| *v != 0.0));
    }

    fn gaussian_vector(n: usize, seed: u64) -> DVector<f64> {
        let mut rng = seeded(seed);
        DVector::from_fn(n, |_, _| std_normal(&mut rng))
    }

    #[test]
    fn lasso_without_penalty_is_least_squares() {
        let z = gaussian_matrix(40, 8, 7);
        let x = gaussian_vector(40, 8);
        let beta = group_lasso_fit(&x, &z, &groups_of(8, 4), 0.0).unwrap();
        let ols = (z.transpose() * &z).cholesky().unwrap().solve(&(z.transpose() * &x));
        assert!((beta - ols).amax() < 1e-6);
    }

    fn kkt_residual(x: &DVector<f64>, z: &DMatrix<f64>, groups: &[Vec<usize>], lambda: f64, beta: &DVector<f64>) -> f64 {
        let grad = z.transpose() * (x - z * beta);
        let mut worst: f64 = 0.0;
        for idx in groups {
            let k = (idx.len() as f64).sqrt();
            let bg = DVector::from_iterator(idx.len(), idx.iter().map(|&j| beta[j]));
            let gg = DVector::from_iterator(idx.len(), idx.iter().map(|&j| grad[j]));
            if bg.norm() > 0.0 {
                worst = worst.max((&gg - &bg * (lambda * k / bg.norm())).norm());
            } else {
                worst = worst.max((gg.norm() - lambda * k).max(0.0));
            }
        }
        worst
    }

    #[test]
    fn lasso_solutions_satisfy_kkt() {
        let z = gaussian_matrix(60, 20, 9);
        let g = groups_of(20, 5);
        let mut beta0 = DVector::zeros(20);
        for j in 5..10 {
            beta0[j] = 1.0;
        }
        let x = &z * beta0 + gaussian_vector(60, 10);
        let lmax = group_lasso_lambda_max(&x, &z, &g);
        for frac in [0.5, 0.1, 0.01] {
            let beta = group_lasso_fit(&x, &z, &g, frac * lmax).unwrap();
            assert!(kkt_residual(&x, &z, &g, frac * lmax, &beta) <= 1e-6);
        }
        let (beta, lam) = cv_group_lasso(&x, &z, &g).unwrap();
        assert!(kkt_residual(&x, &z, &g, lam, &beta) <= 1e-6);
        assert_eq!(cv_group_lasso(&x, &z, &g).unwrap().0, beta);
    }

    #[test]
    fn group_ratio_conventions() {
        let g = groups_of(6, 2);
        assert_eq!(group_ratio(&DVector::zeros(6), &g), 0.0);
        let one = DVector::from_vec(vec![0.0, 0.0, 2.0, -1.0, 0.0, 0.0]);
        assert_eq!(group_ratio(&one, &g), 0.0);
        let two = DVector::from_vec(vec![1.0, 0.5, 0.0, 0.0, -1.0, 0.0]);
        assert_eq!(group_ratio(&two, &g), 1.0);
        let some = DVector::from_vec(vec![0.1, -0.3, 2.0, 0.0, 0.0, -0.5]);
        assert!((group_ratio(&some, &g) - (0.3 + 0.5) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn spline_fit_recovers_noiseless_knot() {
        let mut rng = seeded(11);
        let z: Vec<f64> = (0..50).map(|_| uniform(&mut rng, -5.0, 5.0)).collect();
        let lo = z.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let knot = lo + (hi - lo) * 80.0 / 201.0;
        let x: Vec<f64> = z.iter().map(|zi| 1.0 - zi + 2.0 * (zi - knot).max(0.0)).collect();
        let fit = fit_one_knot_spline(&x, &z).unwrap();
        assert!(fit.rss < 1e-10);
        assert!((fit.knot - knot).abs() < 1e-9);
        let shifted: Vec<f64> = x.iter().map(|v| v + 3.0).collect();
        let fit2 = fit_one_knot_spline(&shifted, &z).unwrap();
        assert!((fit2.coefficients[0] - fit.coefficients[0] - 3.0).abs() < 1e-8);
        assert!((fit2.coefficients[1] - fit.coefficients[1]).abs() < 1e-8);
    }

    #[test]
    fn spline_fit_grid_refinement() {
        let mut rng = seeded(12);
        let z: Vec<f64> = (0..50).map(|_| uniform(&mut rng, -5.0, 5.0)).collect();
        let x: Vec<f64> = z.iter().map(|zi| 1.0 - zi + 2.0 * (zi + 1.67).max(0.0) + 0.5 * std_normal(&mut rng)).collect();
        let a = fit_one_knot_spline_grid(&x, &z, 200).unwrap().rss;
        let b = fit_one_knot_spline_grid(&x, &z, 400).unwrap().rss;
        assert!((a - b).abs() < 0.01 * a);
        assert!(fit_one_knot_spline(&x[..3], &z[..3]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn spline_rss_is_finite_and_nonnegative(seed in 0u64..10_000) {
            let mut rng = seeded(seed);
            let z: Vec<f64> = (0..20).map(|_| uniform(&mut rng, -5.0, 5.0)).collect();
            let x: Vec<f64> = (0..20).map(|_| std_normal(&mut rng)).collect();
            let r = stat_spline_rss(&x, &z).unwrap();
            prop_assert!(r.is_finite() && r >= 0.0);
        }

        #[test]
        fn kmeans_ratio_is_at_least_one(seed in 0u64..10_000) {
            let mut rng = seeded(seed);
            let x: Vec<f64> = (0..30).map(|_| std_normal(&mut rng)).collect();
            let r = stat_kmeans_ratio(&x).unwrap();
            prop_assert!(r.is_finite() && r >= 1.0 - 1e-12);
        }
    }
}
