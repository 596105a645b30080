//! Metropolis–Hastings, Gibbs sweeps, burn-in/thinning schedules, and the
//! permuted serial sampler that produces exchangeable copies.

use rand::Rng as _;

use crate::acss::CopySet;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainConfig {
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { burn_in: 500, thin: 10 }
    }
}

impl ChainConfig {
    pub fn new(burn_in: usize, thin: usize) -> Result<Self> {
        if thin == 0 {
            return Err(Error::InvalidParameter("thin must be at least 1".into()));
        }
        Ok(Self { burn_in, thin })
    }

    /// Total transitions needed to extract `count` states.
    pub fn total_steps(&self, count: usize) -> usize {
        self.burn_in + count * self.thin
    }
}

/// A Metropolis–Hastings kernel. `log_proposal(from, to)` is log q(to | from)
/// and may be left at its default for symmetric proposals.
pub trait MhKernel<S> {
    fn log_target(&self, state: &S) -> f64;
    fn propose(&self, current: &S, rng: &mut Rng) -> S;
    fn log_proposal(&self, _from: &S, _to: &S) -> f64 {
        0.0
    }
}

/// Closure-backed kernel.
pub struct FnKernel<T, P, Q> {
    pub target: T,
    pub proposal: P,
    pub proposal_logpdf: Q,
}

impl<S, T, P, Q> MhKernel<S> for FnKernel<T, P, Q>
where
    T: Fn(&S) -> f64,
    P: Fn(&S, &mut Rng) -> S,
    Q: Fn(&S, &S) -> f64,
{
    fn log_target(&self, state: &S) -> f64 {
        (self.target)(state)
    }
    fn propose(&self, current: &S, rng: &mut Rng) -> S {
        (self.proposal)(current, rng)
    }
    fn log_proposal(&self, from: &S, to: &S) -> f64 {
        (self.proposal_logpdf)(from, to)
    }
}

/// Symmetric-proposal kernel from two closures.
pub fn symmetric_kernel<S, T, P>(target: T, proposal: P) -> FnKernel<T, P, fn(&S, &S) -> f64>
where
    T: Fn(&S) -> f64,
    P: Fn(&S, &mut Rng) -> S,
{
    fn zero<S>(_: &S, _: &S) -> f64 {
        0.0
    }
    FnKernel {
        target,
        proposal,
        proposal_logpdf: zero::<S>,
    }
}

/// Accept with probability min{1, exp(log_ratio)}.
pub fn mh_accept(log_ratio: f64, rng: &mut Rng) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if log_ratio.is_nan() {
        return false;
    }
    rng.random::<f64>().ln() < log_ratio
}

#[derive(Debug, Clone)]
pub struct ChainOutput<S> {
    pub states: Vec<S>,
    pub acceptance_rate: f64,
    pub steps: usize,
}

/// Run a Metropolis–Hastings chain and extract `count` states after burn-in,
/// one every `thin` steps.
pub fn mh_chain<S: Clone, K: MhKernel<S>>(
    kernel: &K,
    config: &ChainConfig,
    init: S,
    count: usize,
    rng: &mut Rng,
) -> Result<ChainOutput<S>> {
    let mut cur_lt = kernel.log_target(&init);
    if !cur_lt.is_finite() {
        return Err(Error::InitOutOfSupport);
    }
    let mut accepted = 0usize;
    let states = collect_chain(config, count, init, rng, |state, rng| {
        let prop = kernel.propose(state, rng);
        let prop_lt = kernel.log_target(&prop);
        let log_ratio =
            prop_lt - cur_lt + kernel.log_proposal(&prop, state) - kernel.log_proposal(state, &prop);
        if prop_lt > f64::NEG_INFINITY && mh_accept(log_ratio, rng) {
            *state = prop;
            cur_lt = prop_lt;
            accepted += 1;
        }
        Ok(())
    })?;
    let steps = config.total_steps(count);
    Ok(ChainOutput {
        states,
        acceptance_rate: if steps == 0 { 1.0 } else { accepted as f64 / steps as f64 },
        steps,
    })
}

/// Drive an arbitrary transition `step` through the burn-in/thinning schedule.
pub fn collect_chain<S, F>(config: &ChainConfig, count: usize, mut state: S, rng: &mut Rng, mut step: F) -> Result<Vec<S>>
where
    S: Clone,
    F: FnMut(&mut S, &mut Rng) -> Result<()>,
{
    if config.thin == 0 {
        return Err(Error::InvalidParameter("thin must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(count);
    for k in 1..=config.total_steps(count) {
        step(&mut state, rng)?;
        if k > config.burn_in && (k - config.burn_in) % config.thin == 0 {
            out.push(state.clone());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    /// Coordinate visiting order for a state with `n` coordinates.
    pub fn order(self, n: usize) -> Box<dyn Iterator<Item = usize>> {
        match self {
            Direction::Forward => Box::new(0..n),
            Direction::Backward => Box::new((0..n).rev()),
        }
    }
}

/// One sweep of coordinate samplers, in index order or reversed.
pub fn gibbs_sweep<S>(
    samplers: &[&dyn Fn(&mut S, &mut Rng)],
    mut state: S,
    direction: Direction,
    rng: &mut Rng,
) -> S {
    for i in direction.order(samplers.len()) {
        samplers[i](&mut state, rng);
    }
    state
}

/// Outcome of a single coordinate update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    /// Exact draw from the full conditional.
    Exact,
    Accepted,
    Rejected,
}

/// Coordinate-wise kernel leaving a target invariant.
pub trait CoordinateUpdater<S> {
    fn num_coordinates(&self, state: &S) -> usize;

    /// Called at the start of every sweep with the sweep's starting state.
    fn prepare(&mut self, _state: &S) -> Result<()> {
        Ok(())
    }

    fn update(&mut self, state: &mut S, coord: usize, rng: &mut Rng) -> Result<Move>;
}

/// A full sweep kernel, as consumed by the permuted serial sampler.
pub trait SweepKernel<S> {
    fn sweep(&mut self, state: &mut S, direction: Direction, rng: &mut Rng) -> Result<()>;

    /// Per-coordinate Metropolis acceptance rates so far (empty if exact).
    fn acceptance_rates(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Closure-backed sweep kernel.
pub struct FnSweep<F>(pub F);

impl<S, F> SweepKernel<S> for FnSweep<F>
where
    F: FnMut(&mut S, Direction, &mut Rng) -> Result<()>,
{
    fn sweep(&mut self, state: &mut S, direction: Direction, rng: &mut Rng) -> Result<()> {
        (self.0)(state, direction, rng)
    }
}

/// Turns a [`CoordinateUpdater`] into a sweep kernel that tracks acceptance.
pub struct CoordinateSweep<U> {
    pub updater: U,
    attempts: Vec<u64>,
    accepts: Vec<u64>,
}

impl<U> CoordinateSweep<U> {
    pub fn new(updater: U) -> Self {
        Self {
            updater,
            attempts: Vec::new(),
            accepts: Vec::new(),
        }
    }
}

impl<S, U: CoordinateUpdater<S>> SweepKernel<S> for CoordinateSweep<U> {
    fn sweep(&mut self, state: &mut S, direction: Direction, rng: &mut Rng) -> Result<()> {
        let n = self.updater.num_coordinates(state);
        if self.attempts.len() != n {
            self.attempts = vec![0; n];
            self.accepts = vec![0; n];
        }
        self.updater.prepare(state)?;
        for i in direction.order(n) {
            match self.updater.update(state, i, rng)? {
                Move::Exact => {}
                Move::Accepted => {
                    self.attempts[i] += 1;
                    self.accepts[i] += 1;
                }
                Move::Rejected => self.attempts[i] += 1,
            }
        }
        Ok(())
    }

    fn acceptance_rates(&self) -> Vec<f64> {
        if self.attempts.iter().all(|&a| a == 0) {
            return Vec::new();
        }
        self.attempts
            .iter()
            .zip(&self.accepts)
            .map(|(&a, &c)| if a == 0 { 1.0 } else { c as f64 / a as f64 })
            .collect()
    }
}

/// One chain transition of the serial sampler: slot `target` is produced by
/// sweeping from slot `source` in `direction`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SerialStep {
    pub target: usize,
    pub source: usize,
    pub direction: Direction,
}

/// Transition schedule for data seeded at slot `m0` of `0..=m`: forward
/// sweeps for slots above m0, then backward sweeps walking down from m0.
pub fn serial_plan(m0: usize, m: usize) -> Vec<SerialStep> {
    let mut plan = Vec::with_capacity(m);
    for t in m0 + 1..=m {
        plan.push(SerialStep {
            target: t,
            source: t - 1,
            direction: Direction::Forward,
        });
    }
    for t in (0..m0).rev() {
        plan.push(SerialStep {
            target: t,
            source: t + 1,
            direction: Direction::Backward,
        });
    }
    plan
}

/// Permuted serial sampler: seat the data at a uniform slot m₀ ∈ {0..M}, run
/// the chain outward in both directions and return the M other slots.
pub fn permuted_serial_sampler<S: Clone, K: SweepKernel<S> + ?Sized>(
    data: &S,
    kernel: &mut K,
    m: usize,
    rng: &mut Rng,
) -> Result<CopySet<S>> {
    if m < 1 {
        return Err(Error::InvalidParameter("the serial sampler needs M >= 1".into()));
    }
    let m0 = rng.random_range(0..=m);
    let mut slots: Vec<Option<S>> = vec![None; m + 1];
    slots[m0] = Some(data.clone());
    for step in serial_plan(m0, m) {
        let mut state = slots[step.source].clone().expect("plan visits sources first");
        kernel.sweep(&mut state, step.direction, rng)?;
        slots[step.target] = Some(state);
    }
    let copies = slots
        .into_iter()
        .enumerate()
        .filter(|(t, _)| *t != m0)
        .map(|(_, s)| s.expect("every slot is filled"))
        .collect();
    let acceptance = kernel.acceptance_rates();
    if !acceptance.is_empty() {
        let mean = acceptance.iter().sum::<f64>() / acceptance.len() as f64;
        if mean < 0.1 {
            log::warn!("copy sampler mean acceptance {mean:.3} is below 0.1");
        }
    }
    Ok(CopySet {
        copies,
        insertion_index: m0,
        acceptance,
    })
}
