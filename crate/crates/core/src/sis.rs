//! Discrete-time SIS dynamics on a tie-decay network.
//!
//! An infected node `i` infects a susceptible neighbour `j` during step `tau`
//! with probability `lambda_max * min(b_ij, 1)`, independently across
//! infected neighbours, and recovers with probability `mu`. Updates are
//! synchronous: all transitions are evaluated against the state at the start
//! of the step.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::exec::Execution;
use crate::rng::substream;
use crate::tie_decay::{SnapshotSequence, TieMatrix};

/// Default fraction of nodes infected at `tau = 0`.
pub const DEFAULT_SEED_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SisParams {
    pub lambda_max: f64,
    pub mu: f64,
    pub seed_fraction: f64,
    pub rng_seed: u64,
}

impl SisParams {
    pub fn new(lambda_max: f64, mu: f64) -> Result<Self> {
        let p = Self {
            lambda_max,
            mu,
            seed_fraction: DEFAULT_SEED_FRACTION,
            rng_seed: 0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_seed(mut self, rng_seed: u64) -> Self {
        self.rng_seed = rng_seed;
        self
    }

    pub fn with_seed_fraction(mut self, seed_fraction: f64) -> Self {
        self.seed_fraction = seed_fraction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("lambda_max", self.lambda_max)?;
        check_probability("mu", self.mu)?;
        if !(self.seed_fraction > 0.0 && self.seed_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "seed fraction must lie in (0, 1], got {}",
                self.seed_fraction
            )));
        }
        Ok(())
    }

    /// Number of initially infected nodes, `ceil(seed_fraction * n)`.
    pub fn initial_infected(&self, n: usize) -> usize {
        let k = (self.seed_fraction * n as f64 - 1e-9).ceil().max(1.0) as usize;
        k.min(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Compartment {
    Susceptible,
    Infected,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SisState {
    infected: Vec<bool>,
    step: usize,
}

impl SisState {
    pub fn susceptible(n: usize) -> Self {
        Self {
            infected: vec![false; n],
            step: 0,
        }
    }

    pub fn from_compartments(compartments: &[Compartment]) -> Self {
        Self {
            infected: compartments
                .iter()
                .map(|&c| c == Compartment::Infected)
                .collect(),
            step: 0,
        }
    }

    /// `k` distinct nodes chosen uniformly at random.
    pub fn seeded<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Self {
        let mut s = Self::susceptible(n);
        for i in sample(rng, n, k.min(n)) {
            s.infected[i] = true;
        }
        s
    }

    pub fn n(&self) -> usize {
        self.infected.len()
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn compartment(&self, i: usize) -> Compartment {
        if self.infected[i] {
            Compartment::Infected
        } else {
            Compartment::Susceptible
        }
    }

    pub fn is_infected(&self, i: usize) -> bool {
        self.infected[i]
    }

    pub fn infected_count(&self) -> usize {
        self.infected.iter().filter(|&&x| x).count()
    }
}

/// Infected counts for `tau = 0..=T`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub infected_count: Vec<usize>,
    pub final_outbreak_size: usize,
}

/// A step-indexed sequence of tie strengths on a fixed edge support.
pub trait TieSchedule: Sync {
    fn n(&self) -> usize;
    /// Support pairs `(i, j)`, `i < j`.
    fn edges(&self) -> &[(usize, usize)];
    /// Uncapped strengths used for the transition out of step `tau`.
    fn weights(&self, tau: usize) -> &[f64];
    /// Number of steps that can be simulated.
    fn steps_available(&self) -> usize;
}

impl TieSchedule for SnapshotSequence {
    fn n(&self) -> usize {
        SnapshotSequence::n(self)
    }

    fn edges(&self) -> &[(usize, usize)] {
        SnapshotSequence::edges(self)
    }

    fn weights(&self, tau: usize) -> &[f64] {
        self.strengths(tau)
    }

    fn steps_available(&self) -> usize {
        self.len()
    }
}

/// Reusable buffers for the step kernel.
#[derive(Debug, Default)]
struct Workspace {
    log_escape: Vec<f64>,
    next: Vec<bool>,
}

/// Accumulates `ln P(no infection)` per susceptible node. Summing logs keeps
/// nodes with many infected neighbours away from underflow.
fn log_escape(
    infected: &[bool],
    edges: &[(usize, usize)],
    weights: &[f64],
    lambda_max: f64,
    out: &mut Vec<f64>,
) {
    out.clear();
    out.resize(infected.len(), 0.0);
    if lambda_max == 0.0 {
        return;
    }
    for (&(i, j), &w) in edges.iter().zip(weights) {
        if w <= 0.0 || infected[i] == infected[j] {
            continue;
        }
        let target = if infected[i] { j } else { i };
        out[target] += (-lambda_max * w.min(1.0)).ln_1p();
    }
}

/// Applies one synchronous transition given one uniform draw per node.
/// Node `k` uses `uniforms[k]` whatever its state, which couples runs that
/// differ only in `lambda_max`.
fn transition(infected: &[bool], log_escape: &[f64], uniforms: &[f64], mu: f64, next: &mut Vec<bool>) {
    next.clear();
    next.extend(infected.iter().zip(log_escape).zip(uniforms).map(|((&inf, &le), &u)| {
        if inf {
            u >= mu
        } else {
            u < -le.exp_m1()
        }
    }));
}

fn step_kernel<R: Rng + ?Sized>(
    infected: &mut Vec<bool>,
    edges: &[(usize, usize)],
    weights: &[f64],
    params: &SisParams,
    rng: &mut R,
    ws: &mut Workspace,
    uniforms: &mut Vec<f64>,
) {
    log_escape(infected, edges, weights, params.lambda_max, &mut ws.log_escape);
    uniforms.clear();
    uniforms.extend((0..infected.len()).map(|_| rng.random::<f64>()));
    transition(infected, &ws.log_escape, uniforms, params.mu, &mut ws.next);
    std::mem::swap(infected, &mut ws.next);
}

/// One synchronous SIS step against the tie matrix `b`.
pub fn sis_step<R: Rng + ?Sized>(
    state: &SisState,
    b: &TieMatrix,
    params: &SisParams,
    rng: &mut R,
) -> Result<SisState> {
    if state.n() != b.n() {
        return Err(Error::DimensionMismatch {
            expected: b.n(),
            found: state.n(),
        });
    }
    let (edges, weights): (Vec<_>, Vec<_>) = b.positive_edges().map(|(i, j, w)| ((i, j), w)).unzip();
    let mut infected = state.infected.clone();
    step_kernel(
        &mut infected,
        &edges,
        &weights,
        params,
        rng,
        &mut Workspace::default(),
        &mut Vec::new(),
    );
    Ok(SisState {
        infected,
        step: state.step + 1,
    })
}

/// Runs `steps` transitions from an explicit initial state.
pub fn simulate_from<S, R>(
    schedule: &S,
    initial: &SisState,
    params: &SisParams,
    steps: usize,
    rng: &mut R,
) -> Result<Trajectory>
where
    S: TieSchedule + ?Sized,
    R: Rng + ?Sized,
{
    params.validate()?;
    if initial.n() != schedule.n() {
        return Err(Error::DimensionMismatch {
            expected: schedule.n(),
            found: initial.n(),
        });
    }
    if steps > schedule.steps_available() {
        return Err(Error::InsufficientSnapshots {
            requested: steps,
            available: schedule.steps_available(),
        });
    }
    let mut infected = initial.infected.clone();
    let mut counts = Vec::with_capacity(steps + 1);
    let mut count = initial.infected_count();
    counts.push(count);
    let mut ws = Workspace::default();
    let mut uniforms = Vec::with_capacity(infected.len());
    for tau in 0..steps {
        if count == 0 {
            // disease-free state is absorbing
            counts.resize(steps + 1, 0);
            break;
        }
        step_kernel(
            &mut infected,
            schedule.edges(),
            schedule.weights(tau),
            params,
            rng,
            &mut ws,
            &mut uniforms,
        );
        count = infected.iter().filter(|&&x| x).count();
        counts.push(count);
    }
    Ok(Trajectory {
        final_outbreak_size: *counts.last().expect("at least the initial count"),
        infected_count: counts,
    })
}

/// Seeds `ceil(seed_fraction * n)` random nodes and runs `steps` transitions,
/// using snapshot `tau` for the transition out of step `tau`.
pub fn simulate<S, R>(schedule: &S, params: &SisParams, steps: usize, rng: &mut R) -> Result<Trajectory>
where
    S: TieSchedule + ?Sized,
    R: Rng + ?Sized,
{
    params.validate()?;
    let n = schedule.n();
    let initial = SisState::seeded(n, params.initial_infected(n), rng);
    simulate_from(schedule, &initial, params, steps, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub mean_final: f64,
    pub finals: Vec<usize>,
}

/// Independent replicates; replicate `k` draws from substream `k` of
/// `params.rng_seed`.
pub fn run_ensemble<S>(
    schedule: &S,
    params: &SisParams,
    steps: usize,
    replicates: usize,
    exec: Execution,
) -> Result<Ensemble>
where
    S: TieSchedule + ?Sized,
{
    let trajectories = run_trajectories(schedule, params, steps, replicates, exec)?;
    let finals: Vec<usize> = trajectories.iter().map(|t| t.final_outbreak_size).collect();
    let mean_final = finals.iter().sum::<usize>() as f64 / finals.len() as f64;
    Ok(Ensemble { mean_final, finals })
}

/// Like [`run_ensemble`] but keeps every trajectory.
pub fn run_trajectories<S>(
    schedule: &S,
    params: &SisParams,
    steps: usize,
    replicates: usize,
    exec: Execution,
) -> Result<Vec<Trajectory>>
where
    S: TieSchedule + ?Sized,
{
    if replicates == 0 {
        return Err(Error::InvalidParameter("replicates must be at least 1".into()));
    }
    exec.try_map(replicates, |k| {
        let mut rng = substream(params.rng_seed, k as u64);
        simulate(schedule, params, steps, &mut rng)
    })
}

/// Writes `replicate,step,infected_count` rows with a header.
pub fn write_trajectories_csv<W: std::io::Write>(
    mut out: W,
    trajectories: &[Trajectory],
) -> std::io::Result<()> {
    writeln!(out, "replicate,step,infected_count")?;
    for (r, t) in trajectories.iter().enumerate() {
        for (step, c) in t.infected_count.iter().enumerate() {
            writeln!(out, "{r},{step},{c}")?;
        }
    }
    Ok(())
}
