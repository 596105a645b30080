//! The five simulation designs and their oracle comparators.

use nalgebra::{DMatrix, DVector};

use crate::acss::{run_test, CopySet, ModelPlugin, TestConfig, TestOutcome};
use crate::error::Result;
use crate::harness::ModelKind;
use crate::models::group_sparse::{contiguous_groups, GroupSparseModel};
use crate::models::logistic::LogisticModel;
use crate::models::mixture::MixtureModel;
use crate::models::rank1::{self, Rank1Model};
use crate::models::spline::{self, SplineModel};
use crate::numerics::dist::{bernoulli, normal, std_normal, uniform};
use crate::numerics::special::sigmoid;
use crate::rng::Rng;
use crate::statistics::{stat_group_ratio, GroupLassoCv, stat_kmeans_ratio, stat_second_eigenvalue, stat_sir, stat_spline_rss};
use crate::{compute_pvalue, Error};

pub const LOGISTIC_DIM: usize = 5;
pub const LOGISTIC_THETA0: f64 = 0.2;
pub const MIXTURE_SEPARATION: f64 = 0.4;
pub const MIXTURE_VAR: f64 = 0.01;
pub const GROUP_DIM: usize = 50;
pub const GROUP_SIZE: usize = 5;
pub const SPLINE_KNOTS: [f64; 2] = [-1.67, 1.67];
pub const SPLINE_RANGE: f64 = 5.0;

/// One simulated dataset together with what the oracle knows about the null.
pub trait Experiment {
    type Model: ModelPlugin;

    fn model(&self) -> Result<Self::Model>;
    fn observed(&self) -> &<Self::Model as ModelPlugin>::Data;
    /// The test statistic T. Failures map to NaN, which the test reports.
    fn statistic(&self, x: &<Self::Model as ModelPlugin>::Data) -> f64;
    /// One draw from the true null law f_θ₀.
    fn oracle_draw(&self, rng: &mut Rng) -> <Self::Model as ModelPlugin>::Data;
}

fn or_nan(r: Result<f64>) -> f64 {
    r.unwrap_or(f64::NAN)
}

/// Binary X with a real outcome Y that depends on X only when c > 0.
#[derive(Debug, Clone)]
pub struct LogisticExperiment {
    pub z: DMatrix<f64>,
    pub x: Vec<u8>,
    pub y: Vec<f64>,
    pub theta0: DVector<f64>,
}

impl LogisticExperiment {
    pub fn generate(n: usize, c: f64, rng: &mut Rng) -> Self {
        let d = LOGISTIC_DIM;
        let z = DMatrix::from_fn(n, d, |_, _| std_normal(rng));
        let theta0 = DVector::from_element(d, LOGISTIC_THETA0);
        let x = logistic_draw(&z, &theta0, rng);
        let a = |t: f64| t + 0.5 * t.powi(3);
        let y = (0..n)
            .map(|i| {
                let zi = z.row(i);
                let b: f64 = 0.5 * zi.iter().map(|v| v.max(0.0)).sum::<f64>();
                let shift = if x[i] == 0 { c * zi[0] } else { c * zi[d - 1] };
                a(b + shift) + std_normal(rng)
            })
            .collect();
        Self { z, x, y, theta0 }
    }
}

fn logistic_draw(z: &DMatrix<f64>, theta: &DVector<f64>, rng: &mut Rng) -> Vec<u8> {
    let eta = z * theta;
    eta.iter().map(|&e| bernoulli(rng, sigmoid(e)) as u8).collect()
}

impl Experiment for LogisticExperiment {
    type Model = LogisticModel;

    fn model(&self) -> Result<LogisticModel> {
        Ok(LogisticModel::new(self.z.clone()))
    }

    fn observed(&self) -> &Vec<u8> {
        &self.x
    }

    fn statistic(&self, x: &Vec<u8>) -> f64 {
        or_nan(stat_sir(x, &self.y, &self.z))
    }

    fn oracle_draw(&self, rng: &mut Rng) -> Vec<u8> {
        logistic_draw(&self.z, &self.theta0, rng)
    }
}

/// Three-component data; the weight p on the middle component is the signal.
#[derive(Debug, Clone)]
pub struct MixtureExperiment {
    pub x: Vec<f64>,
}

fn three_component_draw(p: f64, rng: &mut Rng) -> f64 {
    let sd = MIXTURE_VAR.sqrt();
    let u = uniform(rng, 0.0, 1.0);
    let mean = if u < p {
        0.0
    } else if u < p + (1.0 - p) / 2.0 {
        MIXTURE_SEPARATION
    } else {
        -MIXTURE_SEPARATION
    };
    normal(rng, mean, sd)
}

impl MixtureExperiment {
    pub fn generate(n: usize, p: f64, rng: &mut Rng) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("mixture weight {p} outside [0, 1]")));
        }
        Ok(Self {
            x: (0..n).map(|_| three_component_draw(p, rng)).collect(),
        })
    }
}

impl Experiment for MixtureExperiment {
    type Model = MixtureModel;

    fn model(&self) -> Result<MixtureModel> {
        Ok(MixtureModel::new(self.x.len()))
    }

    fn observed(&self) -> &Vec<f64> {
        &self.x
    }

    fn statistic(&self, x: &Vec<f64>) -> f64 {
        or_nan(stat_kmeans_ratio(x))
    }

    fn oracle_draw(&self, rng: &mut Rng) -> Vec<f64> {
        (0..self.x.len()).map(|_| three_component_draw(0.0, rng)).collect()
    }
}

/// X = U₁V₁ᵀ + c·U₂V₂ᵀ + W. The oracle knows the rank-one part A₀ = U₁V₁ᵀ.
#[derive(Debug, Clone)]
pub struct Rank1Experiment {
    pub x: DMatrix<f64>,
    pub a0: DMatrix<f64>,
}

fn add_noise(mean: &DMatrix<f64>, rng: &mut Rng) -> DMatrix<f64> {
    let sd = rank1::NOISE_VAR.sqrt();
    mean.map(|m| normal(rng, m, sd))
}

impl Rank1Experiment {
    pub fn generate(n: usize, c: f64, rng: &mut Rng) -> Self {
        let f = DMatrix::from_fn(n, 4, |_, _| std_normal(rng));
        let a0 = f.column(0) * f.column(1).transpose();
        let a = &a0 + c * (f.column(2) * f.column(3).transpose());
        let x = add_noise(&a, rng);
        Self { x, a0 }
    }
}

impl Experiment for Rank1Experiment {
    type Model = Rank1Model;

    fn model(&self) -> Result<Rank1Model> {
        Ok(Rank1Model::new(self.x.nrows()))
    }

    fn observed(&self) -> &DMatrix<f64> {
        &self.x
    }

    fn statistic(&self, x: &DMatrix<f64>) -> f64 {
        stat_second_eigenvalue(x)
    }

    fn oracle_draw(&self, rng: &mut Rng) -> DMatrix<f64> {
        add_noise(&self.a0, rng)
    }
}

/// Linear regression with one active coefficient group, plus a second group
/// scaled by c.
#[derive(Debug, Clone)]
pub struct GroupSparseExperiment {
    pub z: DMatrix<f64>,
    pub groups: Vec<Vec<usize>>,
    pub x: DVector<f64>,
    /// β with the second group zeroed: the oracle's null coefficients.
    pub beta0: DVector<f64>,
    pub active: [usize; 2],
    /// Cross-validation folds depend on Z only, so they are built once.
    cv: Option<GroupLassoCv>,
}

fn regression_draw(mean: &DVector<f64>, rng: &mut Rng) -> DVector<f64> {
    mean.map(|m| m + std_normal(rng))
}

impl GroupSparseExperiment {
    pub fn generate(n: usize, c: f64, rng: &mut Rng) -> Self {
        let groups = contiguous_groups(GROUP_DIM, GROUP_SIZE);
        let z = DMatrix::from_fn(n, GROUP_DIM, |_, _| std_normal(rng));
        let pick = rand::seq::index::sample(rng, groups.len(), 2);
        let active = [pick.index(0), pick.index(1)];
        let mut beta0 = DVector::zeros(GROUP_DIM);
        for &j in &groups[active[0]] {
            beta0[j] = std_normal(rng);
        }
        let mut beta = beta0.clone();
        for &j in &groups[active[1]] {
            beta[j] = c * std_normal(rng);
        }
        let x = regression_draw(&(&z * beta), rng);
        let cv = GroupLassoCv::new(&z, &groups).ok();
        Self {
            z,
            groups,
            x,
            beta0,
            active,
            cv,
        }
    }
}

impl Experiment for GroupSparseExperiment {
    type Model = GroupSparseModel;

    fn model(&self) -> Result<GroupSparseModel> {
        GroupSparseModel::new(self.z.clone(), self.groups.clone())
    }

    fn observed(&self) -> &DVector<f64> {
        &self.x
    }

    fn statistic(&self, x: &DVector<f64>) -> f64 {
        match &self.cv {
            Some(cv) => or_nan(cv.group_ratio(x)),
            None => or_nan(stat_group_ratio(x, &self.z, &self.groups)),
        }
    }

    fn oracle_draw(&self, rng: &mut Rng) -> DVector<f64> {
        regression_draw(&(&self.z * &self.beta0), rng)
    }
}

/// Continuous piecewise-linear mean with slopes −1, 1, 1−c at the knots ±1.67.
pub fn spline_mean(z: f64, c: f64) -> f64 {
    let [t1, t2] = SPLINE_KNOTS;
    1.0 - z + 2.0 * (z - t1).max(0.0) - c * (z - t2).max(0.0)
}

#[derive(Debug, Clone)]
pub struct SplineExperiment {
    pub z: Vec<f64>,
    pub x: DVector<f64>,
}

fn spline_draw(z: &[f64], c: f64, rng: &mut Rng) -> DVector<f64> {
    let sd = spline::NOISE_VAR.sqrt();
    DVector::from_iterator(z.len(), z.iter().map(|&zi| normal(rng, spline_mean(zi, c), sd)))
}

impl SplineExperiment {
    pub fn generate(n: usize, c: f64, rng: &mut Rng) -> Self {
        let z: Vec<f64> = (0..n).map(|_| uniform(rng, -SPLINE_RANGE, SPLINE_RANGE)).collect();
        let x = spline_draw(&z, c, rng);
        Self { z, x }
    }
}

impl Experiment for SplineExperiment {
    type Model = SplineModel;

    fn model(&self) -> Result<SplineModel> {
        SplineModel::new(self.z.clone())
    }

    fn observed(&self) -> &DVector<f64> {
        &self.x
    }

    fn statistic(&self, x: &DVector<f64>) -> f64 {
        or_nan(stat_spline_rss(x.as_slice(), &self.z))
    }

    fn oracle_draw(&self, rng: &mut Rng) -> DVector<f64> {
        spline_draw(&self.z, 0.0, rng)
    }
}

#[derive(Debug, Clone)]
pub enum Dataset {
    Logistic(LogisticExperiment),
    Mixture(MixtureExperiment),
    Rank1(Rank1Experiment),
    GroupSparse(GroupSparseExperiment),
    Spline(SplineExperiment),
}

/// Simulate one dataset at signal `c` with sample size `n`.
pub fn generate_dataset(model: ModelKind, n: usize, c: f64, rng: &mut Rng) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidParameter("sample size must be at least 2".into()));
    }
    if !c.is_finite() {
        return Err(Error::InvalidParameter("signal must be finite".into()));
    }
    Ok(match model {
        ModelKind::Logistic => Dataset::Logistic(LogisticExperiment::generate(n, c, rng)),
        ModelKind::Mixture => Dataset::Mixture(MixtureExperiment::generate(n, c, rng)?),
        ModelKind::Rank1 => Dataset::Rank1(Rank1Experiment::generate(n, c, rng)),
        ModelKind::GroupSparse => Dataset::GroupSparse(GroupSparseExperiment::generate(n, c, rng)),
        ModelKind::Spline => Dataset::Spline(SplineExperiment::generate(n, c, rng)),
    })
}

/// M i.i.d. draws from the true null law.
pub fn oracle_copies<E: Experiment>(e: &E, m: usize, rng: &mut Rng) -> CopySet<<E::Model as ModelPlugin>::Data> {
    CopySet {
        copies: (0..m).map(|_| e.oracle_draw(rng)).collect(),
        insertion_index: 0,
        acceptance: Vec::new(),
    }
}

pub fn oracle_test<E: Experiment>(e: &E, m: usize, rng: &mut Rng) -> Result<TestOutcome> {
    let t_obs = e.statistic(e.observed());
    if !t_obs.is_finite() {
        return Err(Error::NonFiniteStatistic);
    }
    let t_copies: Vec<f64> = oracle_copies(e, m, rng).copies.iter().map(|c| e.statistic(c)).collect();
    if t_copies.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFiniteStatistic);
    }
    let pval = compute_pvalue(t_obs, &t_copies)?;
    Ok(TestOutcome {
        t_obs,
        t_copies,
        pval,
        diagnostics: Default::default(),
    })
}

pub fn acssb_test<E: Experiment>(e: &E, config: &TestConfig) -> Result<TestOutcome> {
    let model = e.model()?;
    run_test(&model, e.observed(), |x| e.statistic(x), config)
}
