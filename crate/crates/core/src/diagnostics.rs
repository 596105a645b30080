//! Desk-scale numerical checks on discrete toy models: the corrupted-vector
//! TV bound, the ε/Δ quantities of the validity bound, the exact
//! distance-to-exchangeability of the full pipeline, the serial sampler's
//! exchangeability, and p-value calibration.

use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::acss::{run_test, ModelPlugin, TestConfig};
use crate::error::{Error, Result};
use crate::mcmc::{serial_plan, Direction};
use crate::numerics::special::log_sum_exp;
use crate::rng::{derive_seed, seeded, substream, Rng, DATA};

/// Largest joint sample space any enumeration here will visit.
pub const ENUMERATION_CAP: u128 = 1_000_000;
const SUM_TOL: f64 = 1e-9;

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() || p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("{what} must be non-negative and finite")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidParameter(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

fn check_enumeration(base: usize, power: usize) -> Result<()> {
    let states = (base as u128).checked_pow(power as u32).unwrap_or(u128::MAX);
    if states > ENUMERATION_CAP {
        return Err(Error::EnumerationTooLarge(states));
    }
    Ok(())
}

/// TV distance between two distributions on the same finite space.
pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// χ²(q‖p) = Σ q²/p − 1; infinite if q charges a point p does not.
pub fn chi2(q: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for (a, b) in q.iter().zip(p) {
        if *a > 0.0 {
            if *b <= 0.0 {
                return f64::INFINITY;
            }
            s += a * a / b;
        }
    }
    (s - 1.0).max(0.0)
}

/// A finite family {f_θ} on a finite sample space with a prior π.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteModel {
    /// `likelihood[θ][x]` = f_θ(x).
    pub likelihood: Vec<Vec<f64>>,
    pub prior: Vec<f64>,
}

impl DiscreteModel {
    pub fn new(likelihood: Vec<Vec<f64>>, prior: Vec<f64>) -> Result<Self> {
        if likelihood.len() != prior.len() {
            return Err(Error::InvalidParameter("one prior weight per θ is required".into()));
        }
        check_distribution(&prior, "prior")?;
        if prior.iter().any(|&w| w <= 0.0) {
            return Err(Error::InvalidParameter("prior must be positive".into()));
        }
        let nx = likelihood.first().map_or(0, |r| r.len());
        for row in &likelihood {
            if row.len() != nx {
                return Err(Error::InvalidParameter("likelihood rows differ in length".into()));
            }
            check_distribution(row, "likelihood row")?;
        }
        Ok(Self { likelihood, prior })
    }

    /// Two parameters on a four-point space with overlapping likelihoods.
    pub fn toy() -> Self {
        Self::new(vec![vec![0.4, 0.3, 0.2, 0.1], vec![0.1, 0.2, 0.3, 0.4]], vec![0.5, 0.5]).expect("valid toy model")
    }

    pub fn num_theta(&self) -> usize {
        self.prior.len()
    }

    pub fn num_x(&self) -> usize {
        self.likelihood[0].len()
    }

    fn check_weights(&self, w: &[f64], what: &str) -> Result<()> {
        if w.len() != self.num_theta() {
            return Err(Error::InvalidParameter(format!("{what} has the wrong length")));
        }
        check_distribution(w, what)
    }

    /// f̄_w(x) = Σ_θ w(θ) f_θ(x).
    pub fn marginal(&self, w: &[f64]) -> Vec<f64> {
        (0..self.num_x())
            .map(|x| w.iter().zip(&self.likelihood).map(|(wt, row)| wt * row[x]).sum())
            .collect()
    }

    /// w(θ | x) ∝ w(θ) f_θ(x); `None` when f̄_w(x) = 0.
    pub fn posterior(&self, w: &[f64], x: usize) -> Option<Vec<f64>> {
        let un: Vec<f64> = w.iter().zip(&self.likelihood).map(|(wt, row)| wt * row[x]).collect();
        let z: f64 = un.iter().sum();
        (z > 0.0).then(|| un.iter().map(|u| u / z).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma1Check {
    pub tv_exact: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Exact TV between Z ~ P^B and the corrupted vector whose density relative
/// to P^B is (1/B)Σ_b (dQ/dP)(z_b), against the bound ½√(χ²(Q‖P)/B).
pub fn lemma1_check(p: &[f64], q: &[f64], b: usize) -> Result<Lemma1Check> {
    if p.len() != q.len() {
        return Err(Error::InvalidParameter("P and Q live on different supports".into()));
    }
    check_distribution(p, "P")?;
    check_distribution(q, "Q")?;
    if p.iter().zip(q).any(|(a, c)| *a == 0.0 && *c > 0.0) {
        return Err(Error::InvalidParameter("Q is not absolutely continuous with respect to P".into()));
    }
    if b < 1 {
        return Err(Error::InvalidParameter("B must be at least 1".into()));
    }
    // only the support of P matters
    let pts: Vec<(f64, f64)> = p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, c)| (*a, c / a)).collect();
    check_enumeration(pts.len(), b)?;
    let k = pts.len();
    let mut idx = vec![0usize; b];
    let mut total = 0.0;
    loop {
        let (mut mass, mut ratio) = (1.0, 0.0);
        for &i in &idx {
            mass *= pts[i].0;
            ratio += pts[i].1;
        }
        total += (1.0 - ratio / b as f64).abs() * mass;
        let mut j = 0;
        while j < b {
            idx[j] += 1;
            if idx[j] < k {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == b {
            break;
        }
    }
    let tv_exact = 0.5 * total;
    let bound = 0.5 * (chi2(q, p) / b as f64).sqrt();
    Ok(Lemma1Check {
        tv_exact,
        bound,
        holds: tv_exact <= bound + 1e-12,
    })
}

fn random_simplex(k: usize, rng: &mut Rng) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -crate::numerics::dist::uniform(rng, 0.0, 1.0).max(1e-300).ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// `count` random instances on a `support`-point space with B ∈ 1..=max_b.
/// Returns the number of instances where the bound failed.
pub fn lemma1_sweep(count: usize, support: usize, max_b: usize, seed: u64) -> Result<usize> {
    let mut rng = seeded(seed);
    let mut failures = 0;
    for i in 0..count {
        let p = random_simplex(support, &mut rng);
        let q = random_simplex(support, &mut rng);
        let b = 1 + i % max_b;
        if !lemma1_check(&p, &q, b)?.holds {
            failures += 1;
        }
    }
    Ok(failures)
}

/// ε(π₀) = TV(f_θ₀, f̄_π₀).
pub fn epsilon_pi0(model: &DiscreteModel, theta0: usize, pi0: &[f64]) -> Result<f64> {
    model.check_weights(pi0, "π₀")?;
    let f0 = model
        .likelihood
        .get(theta0)
        .ok_or_else(|| Error::InvalidParameter("θ₀ out of range".into()))?;
    Ok(tv(f0, &model.marginal(pi0)))
}

/// Δ(π₀) = E_{X~f_θ₀}[χ²(π₀(·|X) ‖ π(·|X))^{1/2}].
pub fn delta_pi0(model: &DiscreteModel, theta0: usize, pi: &[f64], pi0: &[f64]) -> Result<f64> {
    model.check_weights(pi, "π")?;
    model.check_weights(pi0, "π₀")?;
    let f0 = model
        .likelihood
        .get(theta0)
        .ok_or_else(|| Error::InvalidParameter("θ₀ out of range".into()))?;
    let mut total = 0.0;
    for (x, &fx) in f0.iter().enumerate() {
        if fx == 0.0 {
            continue;
        }
        let post = model.posterior(pi, x).ok_or_else(|| Error::InvalidParameter("π-marginal vanishes".into()))?;
        let d = match model.posterior(pi0, x) {
            Some(post0) => chi2(&post0, &post).sqrt(),
            None => 0.0,
        };
        total += fx * d;
    }
    Ok(total)
}

/// E_{X~f_θ₀}|(f̄_π(X)/f̂(X))^{B−1} − 1| for an approximate marginal table f̂.
pub fn delta_b(model: &DiscreteModel, theta0: usize, fhat: &[f64], b: usize) -> Result<f64> {
    if fhat.len() != model.num_x() || fhat.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParameter("f̂ must be positive on every point".into()));
    }
    let fbar = model.marginal(&model.prior);
    let f0 = &model.likelihood[theta0];
    Ok((0..model.num_x())
        .map(|x| f0[x] * ((fbar[x] / fhat[x]).powi(b as i32 - 1) - 1.0).abs())
        .sum())
}

fn ln_choose(n: usize, k: usize) -> f64 {
    use crate::numerics::special::ln_gamma;
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Joint law of (X, X̃) for the full pipeline with one copy: X ~ f_θ₀,
/// θ̂₁..θ̂_B i.i.d. π(·|X), X̃ ~ g_π(·|θ̂₁:B) with the exact marginal. Only
/// two-point Θ is supported; the draws then enter through a binomial count.
pub fn pipeline_joint(model: &DiscreteModel, theta0: usize, b: usize) -> Result<Vec<Vec<f64>>> {
    if model.num_theta() != 2 {
        return Err(Error::InvalidParameter("pipeline enumeration needs a two-point Θ".into()));
    }
    if b < 1 {
        return Err(Error::InvalidParameter("B must be at least 1".into()));
    }
    let nx = model.num_x();
    let fbar = model.marginal(&model.prior);
    let ln = |v: f64| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY };
    // g_k(y) ∝ f₁(y)^k f₂(y)^{B−k} / f̄(y)^{B−1}, k = #{θ̂_b = θ₁}
    let copy_laws: Vec<Vec<f64>> = (0..=b)
        .map(|k| {
            let lw: Vec<f64> = (0..nx)
                .map(|y| {
                    if fbar[y] == 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    let a = if k > 0 { k as f64 * ln(model.likelihood[0][y]) } else { 0.0 };
                    let c = if k < b { (b - k) as f64 * ln(model.likelihood[1][y]) } else { 0.0 };
                    a + c - (b as f64 - 1.0) * fbar[y].ln()
                })
                .collect();
            let z = log_sum_exp(&lw);
            lw.iter().map(|v| (v - z).exp()).collect()
        })
        .collect();
    let f0 = &model.likelihood[theta0];
    let mut joint = vec![vec![0.0; nx]; nx];
    for x in 0..nx {
        if f0[x] == 0.0 {
            continue;
        }
        let post = model.posterior(&model.prior, x).expect("f̄ > 0 where f_θ₀ > 0");
        for (k, law) in copy_laws.iter().enumerate() {
            let lw = ln_choose(b, k) + k as f64 * ln(post[0]) + (b - k) as f64 * ln(post[1]);
            let w = if lw.is_finite() { lw.exp() } else { 0.0 };
            if w == 0.0 {
                continue;
            }
            for y in 0..nx {
                joint[x][y] += f0[x] * w * law[y];
            }
        }
    }
    Ok(joint)
}

/// Distance to exchangeability of a pair law J: TV(J, (J + Jᵀ)/2), which is
/// the smallest TV from J to any exchangeable law.
pub fn d_exch_pair(joint: &[Vec<f64>]) -> f64 {
    let n = joint.len();
    let mut s = 0.0;
    for x in 0..n {
        for y in 0..n {
            s += (joint[x][y] - joint[y][x]).abs();
        }
    }
    0.25 * s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem1Row {
    pub b: usize,
    pub d_exch: f64,
    /// min over the π₀ ladder of ε(π₀) + Δ(π₀)/(2√B).
    pub bound: f64,
    /// Ladder weight w of the minimizing π₀ = (1−w)δ_θ₀ + wπ.
    pub w: f64,
}

/// Exact distance-to-exchangeability of the pipeline against the validity
/// bound, minimized over π₀ on a ladder between δ_θ₀ and π.
pub fn theorem1_check(model: &DiscreteModel, theta0: usize, bs: &[usize], ladder: usize) -> Result<Vec<Theorem1Row>> {
    let k = model.num_theta();
    let mut point = vec![0.0; k];
    point[theta0] = 1.0;
    let pis: Vec<(f64, Vec<f64>)> = (0..=ladder)
        .map(|i| {
            let w = i as f64 / ladder.max(1) as f64;
            (w, (0..k).map(|t| (1.0 - w) * point[t] + w * model.prior[t]).collect())
        })
        .collect();
    let terms: Vec<(f64, f64, f64)> = pis
        .iter()
        .map(|(w, pi0)| Ok((*w, epsilon_pi0(model, theta0, pi0)?, delta_pi0(model, theta0, &model.prior, pi0)?)))
        .collect::<Result<_>>()?;
    bs.iter()
        .map(|&b| {
            let d_exch = d_exch_pair(&pipeline_joint(model, theta0, b)?);
            let (w, bound) = terms
                .iter()
                .map(|(w, e, d)| (*w, e + d / (2.0 * (b as f64).sqrt())))
                .fold((0.0, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
            Ok(Theorem1Row { b, d_exch, bound, w })
        })
        .collect()
}

/// Metropolis single-bit-flip kernel on {0,1}² as a 4×4 matrix, for
/// coordinate `i` (state index = bit0 + 2·bit1).
fn flip_kernel(target: &[f64; 4], i: usize) -> [[f64; 4]; 4] {
    let mut k = [[0.0; 4]; 4];
    for s in 0..4 {
        let t = s ^ (1 << i);
        let a = if target[s] > 0.0 { (target[t] / target[s]).min(1.0) } else { 1.0 };
        k[s][t] = a;
        k[s][s] = 1.0 - a;
    }
    k
}

fn matmul(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn sweep_matrix(target: &[f64; 4], direction: Direction) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for c in direction.order(2) {
        m = matmul(&m, &flip_kernel(target, c));
    }
    m
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Exact law of (X, X̃⁽¹⁾, …, X̃⁽ᴹ⁾) from the permuted serial sampler on
/// the two-bit toy model, with X drawn from `target` and the copies taken in
/// uniformly random order. Transition matrices follow the sampler's own
/// schedule and sweep orders; `reverse_backward = false` makes backward
/// sweeps reuse the forward order, which breaks exchangeability.
pub fn serial_sampler_joint(target: &[f64; 4], m: usize, reverse_backward: bool) -> Result<Vec<f64>> {
    check_distribution(target, "target")?;
    check_enumeration(4, m + 1)?;
    let fwd = sweep_matrix(target, Direction::Forward);
    let bwd = sweep_matrix(target, if reverse_backward { Direction::Backward } else { Direction::Forward });
    let slots = m + 1;
    let size = 4usize.pow(slots as u32);
    let orders = permutations(m);
    let weight = 1.0 / (slots * orders.len()) as f64;
    let mut joint = vec![0.0; size];
    for m0 in 0..=m {
        let plan = serial_plan(m0, m);
        for code in 0..size {
            let state = |t: usize| (code / 4usize.pow(t as u32)) % 4;
            let mut p = target[state(m0)];
            for step in &plan {
                let k = match step.direction {
                    Direction::Forward => &fwd,
                    Direction::Backward => &bwd,
                };
                p *= k[state(step.source)][state(step.target)];
                if p == 0.0 {
                    break;
                }
            }
            if p == 0.0 {
                continue;
            }
            let others: Vec<usize> = (0..slots).filter(|&t| t != m0).map(state).collect();
            for order in &orders {
                let mut dst = state(m0);
                for (pos, &src) in order.iter().enumerate() {
                    dst += others[src] * 4usize.pow(pos as u32 + 1);
                }
                joint[dst] += p * weight;
            }
        }
    }
    Ok(joint)
}

/// Largest TV between the slot law and any slot permutation of it.
pub fn max_permutation_tv(joint: &[f64], slots: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for perm in permutations(slots) {
        let mut permuted = vec![0.0; joint.len()];
        for (code, &p) in joint.iter().enumerate() {
            let mut dst = 0;
            for (t, &pt) in perm.iter().enumerate() {
                let s = (code / 4usize.pow(t as u32)) % 4;
                dst += s * 4usize.pow(pt as u32);
            }
            permuted[dst] = p;
        }
        worst = worst.max(tv(joint, &permuted));
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub trials: usize,
    pub failed: usize,
    pub rejection_rate: f64,
    /// Clopper–Pearson 95% interval for the rejection rate.
    pub ci: (f64, f64),
    /// sup distance between the empirical p-value CDF and the uniform law on {1,…,M+1}/(M+1).
    pub ks_distance: f64,
    /// Asymptotic Kolmogorov p-value; conservative for a discrete reference.
    pub ks_pvalue: f64,
}

/// Kolmogorov survival function Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

pub fn clopper_pearson(k: usize, n: usize, level: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let a = (1.0 - level) / 2.0;
    let lo = if k == 0 {
        0.0
    } else {
        Beta::new(k as f64, (n - k + 1) as f64).map(|d| d.inverse_cdf(a)).unwrap_or(0.0)
    };
    let hi = if k == n {
        1.0
    } else {
        Beta::new((k + 1) as f64, (n - k) as f64).map(|d| d.inverse_cdf(1.0 - a)).unwrap_or(1.0)
    };
    (lo, hi)
}

/// Calibration summary of Monte-Carlo p-values computed with M copies.
pub fn pvalue_calibration(pvals: &[f64], m: usize, alpha: f64, failed: usize) -> Calibration {
    let n = pvals.len();
    let k = pvals.iter().filter(|&&p| p <= alpha).count();
    let grid = (m + 1) as f64;
    let mut counts = vec![0usize; m + 1];
    for &p in pvals {
        let idx = ((p * grid).round() as usize).clamp(1, m + 1) - 1;
        counts[idx] += 1;
    }
    let mut cum = 0usize;
    let mut d: f64 = 0.0;
    for (i, c) in counts.iter().enumerate() {
        cum += c;
        let emp = cum as f64 / n.max(1) as f64;
        d = d.max((emp - (i + 1) as f64 / grid).abs());
    }
    let sn = (n as f64).sqrt();
    let ks_pvalue = if n == 0 { 1.0 } else { kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d) };
    Calibration {
        trials: n,
        failed,
        rejection_rate: if n == 0 { 0.0 } else { k as f64 / n as f64 },
        ci: clopper_pearson(k, n, 0.95),
        ks_distance: if n == 0 { 0.0 } else { d },
        ks_pvalue,
    }
}

/// Repeated aCSS-B tests on fresh null data. Failed trials are counted and
/// left out of the summary.
pub fn calibration_check<M, G, S>(
    model: &M,
    mut sample_null: G,
    statistic: S,
    config: &TestConfig,
    trials: usize,
    alpha: f64,
) -> Calibration
where
    M: ModelPlugin,
    G: FnMut(&mut Rng) -> M::Data,
    S: Fn(&M::Data) -> f64,
{
    let mut pvals = Vec::with_capacity(trials);
    let mut failed = 0;
    for t in 0..trials {
        let mut rng = substream(config.seed, &[DATA, t as u64]);
        let x = sample_null(&mut rng);
        let cfg = TestConfig {
            seed: derive_seed(config.seed, &[t as u64]),
            ..*config
        };
        match run_test(model, &x, &statistic, &cfg) {
            Ok(out) => pvals.push(out.pval),
            Err(e) => {
                log::warn!("calibration trial {t}: {e}");
                failed += 1;
            }
        }
    }
    pvalue_calibration(&pvals, config.m, alpha, failed)
}

/// One line of the `diagnose` report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticRow {
    pub check: String,
    pub setting: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

/// The fixed diagnostic suite: randomized corrupted-vector instances, the
/// toy validity bound for B ∈ {1,4,16,64}, and serial-sampler exchangeability.
pub fn run_diagnostics(seed: u64) -> Result<Vec<DiagnosticRow>> {
    let mut rows = Vec::new();
    let failures = lemma1_sweep(1000, 3, 4, seed)?;
    rows.push(DiagnosticRow {
        check: "corrupted_vector_tv".into(),
        setting: "1000 random instances, |support|=3, B<=4".into(),
        value: failures as f64,
        bound: 0.0,
        pass: failures == 0,
    });
    let model = DiscreteModel::toy();
    let table = theorem1_check(&model, 0, &[1, 4, 16, 64], 100)?;
    for r in &table {
        rows.push(DiagnosticRow {
            check: "toy_exchangeability".into(),
            setting: format!("B={}", r.b),
            value: r.d_exch,
            bound: r.bound,
            pass: r.d_exch <= r.bound + 1e-6,
        });
    }
    let target = [0.1, 0.2, 0.3, 0.4];
    for m in 1..=3 {
        let joint = serial_sampler_joint(&target, m, true)?;
        let d = max_permutation_tv(&joint, m + 1);
        rows.push(DiagnosticRow {
            check: "serial_sampler_exchangeability".into(),
            setting: format!("M={m}"),
            value: d,
            bound: 1e-12,
            pass: d <= 1e-12,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lemma1_equal_laws() {
        let p = [0.2, 0.3, 0.5];
        let r = lemma1_check(&p, &p, 3).unwrap();
        assert!(r.tv_exact.abs() < 1e-15 && r.bound == 0.0 && r.holds);
    }

    #[test]
    fn lemma1_bernoulli_pair() {
        let r = lemma1_check(&[0.5, 0.5], &[0.25, 0.75], 2).unwrap();
        assert!((r.tv_exact - 0.125).abs() < 1e-15);
        assert!((r.bound - 0.5 * 0.125_f64.sqrt()).abs() < 1e-15);
        assert!(r.holds);
    }

    #[test]
    fn lemma1_randomized_sweep() {
        assert_eq!(lemma1_sweep(1000, 3, 4, 7).unwrap(), 0);
    }

    #[test]
    fn lemma1_errors() {
        assert!(lemma1_check(&[0.5, 0.5], &[1.0], 2).is_err());
        assert!(lemma1_check(&[1.0, 0.0], &[0.5, 0.5], 2).is_err());
        assert!(matches!(
            lemma1_check(&[0.1; 10], &[0.1; 10], 7),
            Err(Error::EnumerationTooLarge(_))
        ));
    }

    #[test]
    fn lemma1_ignores_points_outside_p() {
        let a = lemma1_check(&[0.5, 0.5, 0.0], &[0.25, 0.75, 0.0], 3).unwrap();
        let b = lemma1_check(&[0.5, 0.5], &[0.25, 0.75], 3).unwrap();
        assert!((a.tv_exact - b.tv_exact).abs() < 1e-15);
    }

    #[test]
    fn epsilon_degenerate_and_disjoint() {
        let m = DiscreteModel::new(vec![vec![0.5, 0.5, 0.0, 0.0], vec![0.0, 0.0, 0.5, 0.5]], vec![0.5, 0.5]).unwrap();
        assert_eq!(epsilon_pi0(&m, 0, &[1.0, 0.0]).unwrap(), 0.0);
        assert!((epsilon_pi0(&m, 0, &[0.5, 0.5]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn epsilon_monotone_along_ladder() {
        let m = DiscreteModel::new(
            vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.5, 0.3], vec![0.1, 0.1, 0.8]],
            vec![0.2, 0.3, 0.5],
        )
        .unwrap();
        let mut last = f64::INFINITY;
        for i in 0..=10 {
            let w = i as f64 / 10.0;
            let pi0 = [w + (1.0 - w) * 0.2, (1.0 - w) * 0.3, (1.0 - w) * 0.5];
            let e = epsilon_pi0(&m, 0, &pi0).unwrap();
            assert!(e <= last + 1e-15);
            last = e;
        }
        assert_eq!(last, 0.0);
    }

    #[test]
    fn delta_degenerate_and_hand_computed() {
        let m = DiscreteModel::new(vec![vec![0.8, 0.2], vec![0.3, 0.7]], vec![0.5, 0.5]).unwrap();
        assert_eq!(delta_pi0(&m, 0, &m.prior, &m.prior).unwrap(), 0.0);
        // π₀ = δ_θ₀: χ²(δ₀ ‖ π(·|x)) = 1/π(θ₀|x) − 1
        // π(θ₀|0) = 0.4/0.55 = 8/11, π(θ₀|1) = 0.1/0.45 = 2/9
        let expected = 0.8 * (11.0_f64 / 8.0 - 1.0).sqrt() + 0.2 * (9.0_f64 / 2.0 - 1.0).sqrt();
        let got = delta_pi0(&m, 0, &m.prior, &[1.0, 0.0]).unwrap();
        assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
    }

    #[test]
    fn delta_b_vanishes_for_exact_marginal() {
        let m = DiscreteModel::toy();
        let fbar = m.marginal(&m.prior);
        assert!(delta_b(&m, 0, &fbar, 25).unwrap().abs() < 1e-12);
        let skew: Vec<f64> = fbar.iter().enumerate().map(|(i, v)| v * (1.0 + 0.01 * i as f64)).collect();
        assert!(delta_b(&m, 0, &skew, 25).unwrap() > delta_b(&m, 0, &skew, 2).unwrap());
        assert_eq!(delta_b(&m, 0, &skew, 1).unwrap(), 0.0);
    }

    #[test]
    fn model_validation() {
        assert!(DiscreteModel::new(vec![vec![0.5, 0.6]], vec![1.0]).is_err());
        assert!(DiscreteModel::new(vec![vec![0.5, 0.5]], vec![0.0]).is_err());
        assert!(DiscreteModel::new(vec![vec![0.5, 0.5], vec![1.0]], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn pipeline_joint_is_a_distribution_with_correct_first_margin() {
        let m = DiscreteModel::toy();
        for b in [1, 4, 64] {
            let j = pipeline_joint(&m, 0, b).unwrap();
            let total: f64 = j.iter().flatten().sum();
            assert!((total - 1.0).abs() < 1e-12);
            for x in 0..4 {
                let row: f64 = j[x].iter().sum();
                assert!((row - m.likelihood[0][x]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pipeline_is_exchangeable_when_data_follow_the_marginal() {
        // with both likelihoods equal there is nothing to learn and X̃ ~ f_θ₀ independently
        let m = DiscreteModel::new(vec![vec![0.1, 0.2, 0.3, 0.4]; 2], vec![0.5, 0.5]).unwrap();
        let j = pipeline_joint(&m, 0, 5).unwrap();
        assert!(d_exch_pair(&j) < 1e-15);
    }

    #[test]
    fn theorem1_bound_holds_and_distance_decreases() {
        let rows = theorem1_check(&DiscreteModel::toy(), 0, &[1, 4, 16, 64], 100).unwrap();
        for r in &rows {
            assert!(r.d_exch <= r.bound + 1e-6, "{r:?}");
        }
        for w in rows.windows(2) {
            assert!(w[1].d_exch < w[0].d_exch, "{rows:?}");
        }
    }

    #[test]
    fn serial_sampler_exactly_exchangeable() {
        let target = [0.1, 0.2, 0.3, 0.4];
        for m in 1..=4 {
            let joint = serial_sampler_joint(&target, m, true).unwrap();
            assert!((joint.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let d = max_permutation_tv(&joint, m + 1);
            assert!(d <= 1e-12, "M={m}: {d}");
        }
    }

    #[test]
    fn serial_sampler_check_detects_unreversed_backward_sweeps() {
        let joint = serial_sampler_joint(&[0.1, 0.2, 0.3, 0.4], 2, false).unwrap();
        assert!(max_permutation_tv(&joint, 3) > 1e-3);
    }

    #[test]
    fn kolmogorov_reference_values() {
        // scipy.special.kolmogorov
        assert!((kolmogorov_sf(1.0) - 0.26999967167735456).abs() < 1e-12);
        assert!((kolmogorov_sf(1.63) - 0.009846364888486529).abs() < 1e-12);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn clopper_pearson_reference() {
        // scipy.stats.binomtest(10, 200).proportion_ci()
        let (lo, hi) = clopper_pearson(10, 200, 0.95);
        assert!((lo - 0.02423416547210829).abs() < 1e-9, "{lo}");
        assert!((hi - 0.09002753770155869).abs() < 1e-9, "{hi}");
    }

    #[test]
    fn calibration_of_exact_simple_null() {
        // copies i.i.d. from the null: rejection within the binomial band
        let mut rng = seeded(4);
        let m = 19;
        let pvals: Vec<f64> = (0..2000)
            .map(|_| {
                let t_obs = crate::numerics::dist::std_normal(&mut rng);
                let copies: Vec<f64> = (0..m).map(|_| crate::numerics::dist::std_normal(&mut rng)).collect();
                crate::compute_pvalue(t_obs, &copies).unwrap()
            })
            .collect();
        let c = pvalue_calibration(&pvals, m, 0.05, 0);
        assert!(c.ci.0 <= 0.05 && 0.05 <= c.ci.1, "{c:?}");
        assert!(c.ks_pvalue > 0.01);
        assert_eq!(pvalue_calibration(&pvals, m, 1.0, 0).rejection_rate, 1.0);
        // a stochastically small p-value stream is flagged
        let skewed: Vec<f64> = pvals.iter().map(|p| (p * p * 20.0).ceil().max(1.0) / 20.0).collect();
        assert!(pvalue_calibration(&skewed, m, 0.05, 0).ks_pvalue < 1e-6);
    }

    #[test]
    fn diagnostics_suite_passes() {
        let rows = run_diagnostics(1).unwrap();
        assert_eq!(rows.len(), 1 + 4 + 3);
        assert!(rows.iter().all(|r| r.pass), "{rows:?}");
    }

    proptest! {
        #[test]
        fn lemma1_holds_on_random_instances(
            p in proptest::collection::vec(0.01f64..1.0, 2..5),
            q_raw in proptest::collection::vec(0.0f64..1.0, 4),
            b in 1usize..5,
        ) {
            let sp: f64 = p.iter().sum();
            let p: Vec<f64> = p.iter().map(|v| v / sp).collect();
            let q: Vec<f64> = q_raw[..p.len()].iter().map(|v| v + 1e-3).collect();
            let sq: f64 = q.iter().sum();
            let q: Vec<f64> = q.iter().map(|v| v / sq).collect();
            let r = lemma1_check(&p, &q, b).unwrap();
            prop_assert!(r.holds, "{:?}", r);
            prop_assert!(r.tv_exact >= 0.0);
        }

        #[test]
        fn d_exch_is_zero_for_symmetric_laws(a in proptest::collection::vec(0.0f64..1.0, 16)) {
            let mut j = vec![vec![0.0; 4]; 4];
            for x in 0..4 {
                for y in 0..4 {
                    j[x][y] = a[4 * x.min(y) + x.max(y)];
                }
            }
            prop_assert!(d_exch_pair(&j) == 0.0);
        }
    }
}
