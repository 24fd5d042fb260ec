//! Experiment harness: configuration, (λ, μ) sweeps, boundary extraction,
//! correlation tables and the named scenario registry.
//!
//! Seeds are derived from one master seed: label 1 for the graph (or the
//! backbone of a contact network), 2 for interaction times, 3 for the SIS
//! replicates. Replicate `k` uses the same stream in every grid cell.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::events::EventLog;
use crate::exec::Execution;
use crate::ingest::{choose_dt, discretize, parse_contact_file, plan_for_dt, DiscretizationPlan, DEFAULT_RESOLUTION};
use crate::rng::derive_seed;
use crate::sis::{run_ensemble, SisParams};
use crate::synthetic::{
    generate_er, generate_er_with_cap, generate_event_times, initial_tie_matrix, EdgeSet, ErConfig, WaitingTimeConfig,
    DEFAULT_MAX_ATTEMPTS,
};
use crate::threshold::{critical_value_series, spectral_radius_product, PowerConfig, SeriesConfig, SystemOperator};
use crate::tie_decay::{DecayParams, SnapshotSequence, TieMatrix};
use crate::windowed::{bin_windows, rescale_windows, windowed_threshold, ThresholdMode, WindowedSchedule};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "TIETHRESH_OUT";
/// Environment variable naming the directory holding contact data files.
pub const DATA_DIR_ENV: &str = "TIETHRESH_DATA_DIR";
pub const WORKPLACE_FILE: &str = "tij_InVS.dat";
pub const CONFERENCE_FILE: &str = "ht09_contact_list.dat";

pub const SEED_GRAPH: u64 = 1;
pub const SEED_EVENTS: u64 = 2;
pub const SEED_SIMULATION: u64 = 3;

/// Backbone redraw cap for the built-in scenarios. A connected `G(100, 0.02)`
/// takes several million draws.
pub const SCENARIO_MAX_ATTEMPTS: usize = 100_000_000;

pub const SCENARIOS: [&str; 8] = [
    "validation",
    "decay-sweep",
    "frequency-sweep",
    "sparsity-sweep",
    "period-convergence",
    "real-workplace",
    "real-conference",
    "windowed-compare",
];

/// `0.05, 0.10, ..., 1.00`.
pub fn default_grid() -> Vec<f64> {
    (1..=20).map(|k| k as f64 / 20.0).collect()
}

/// Parses `start:stop:step` or a comma-separated list. Values must lie in
/// `(0, 1]`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = |m: String| Error::InvalidParameter(format!("grid {text:?}: {m}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(e.to_string()));
    let values = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:stop:step".into()));
        }
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) {
            return Err(bad("step must be positive".into()));
        }
        let count = ((stop - start) / step + 1e-9).floor();
        if count < 0.0 {
            return Err(bad("stop is below start".into()));
        }
        (0..=count as usize)
            .map(|k| ((start + k as f64 * step) * 1e10).round() / 1e10)
            .collect()
    } else {
        text.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    if values.is_empty() {
        return Err(bad("no values".into()));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
        return Err(bad(format!("value {v} outside (0, 1]")));
    }
    Ok(values)
}

/// Where the interaction stream comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NetworkSource {
    /// Connected `G(n, p)` with exponential inter-event times per edge.
    Er { n: usize, p: f64 },
    /// Contact file; the initial ties sit on a `G(N, backbone_p)` draw over
    /// the file's nodes.
    Contacts { path: PathBuf, backbone_p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub source: NetworkSource,
    pub alpha: f64,
    /// Mean inter-event time in steps (synthetic only).
    pub beta: f64,
    /// Step length; chosen automatically for contact files when absent.
    pub dt: Option<f64>,
    /// Number of steps `T`; all available steps when absent.
    pub steps: Option<usize>,
    /// Largest period for the stopping rule; `T` when absent.
    pub l_max: Option<usize>,
    /// Fixed period; disables the stopping rule.
    pub period: Option<usize>,
    pub initial_strength: f64,
    pub replicates: usize,
    pub simulate: bool,
    pub seed: u64,
    pub lambdas: Vec<f64>,
    pub mus: Vec<f64>,
    /// Event bound per step for automatic step selection.
    pub max_per_bin: usize,
    /// Redraw cap for connected backbones.
    #[serde(default = "default_max_attempts")]
    pub max_attempts: usize,
    pub out_dir: PathBuf,
}

fn default_max_attempts() -> usize {
    DEFAULT_MAX_ATTEMPTS
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: "custom".into(),
            source: NetworkSource::Er { n: 100, p: 0.1 },
            alpha: 0.1,
            beta: 100.0,
            dt: Some(1.0),
            steps: Some(1000),
            l_max: None,
            period: None,
            initial_strength: 0.5,
            replicates: 10,
            simulate: true,
            seed: 1,
            lambdas: default_grid(),
            mus: default_grid(),
            max_per_bin: 10,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            out_dir: default_out_dir(),
        }
    }
}

/// `$TIETHRESH_OUT` or `./tiethresh-out`.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("tiethresh-out"))
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| Error::Parse {
        line,
        message: format!("{key}: {e}"),
    })
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        match &self.source {
            NetworkSource::Er { n, p } => {
                if *n == 0 {
                    return Err(Error::InvalidParameter("n must be at least 1".into()));
                }
                check_probability("p", *p)?;
                if !(self.beta > 0.0 && self.beta.is_finite()) {
                    return Err(Error::InvalidParameter(format!("beta must be positive, got {}", self.beta)));
                }
                if self.steps.is_none() || self.dt.is_none() {
                    return Err(Error::InvalidParameter("synthetic networks need dt and steps".into()));
                }
            }
            NetworkSource::Contacts { backbone_p, .. } => check_probability("backbone_p", *backbone_p)?,
        }
        DecayParams::new(self.alpha, self.dt.unwrap_or(1.0))?;
        if self.replicates == 0 {
            return Err(Error::InvalidParameter("replicates must be at least 1".into()));
        }
        if self.max_attempts == 0 {
            return Err(Error::InvalidParameter("max_attempts must be at least 1".into()));
        }
        if self.period == Some(0) || self.l_max == Some(0) || self.steps == Some(0) {
            return Err(Error::InvalidParameter("steps and periods must be at least 1".into()));
        }
        if !(self.initial_strength >= 0.0) {
            return Err(Error::InvalidParameter("initial_strength must be nonnegative".into()));
        }
        for v in self.lambdas.iter().chain(&self.mus) {
            if !(*v > 0.0 && *v <= 1.0) {
                return Err(Error::InvalidParameter(format!("grid value {v} outside (0, 1]")));
            }
        }
        if self.lambdas.is_empty() || self.mus.is_empty() {
            return Err(Error::InvalidParameter("grid is empty".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let synthetic_only = || Error::Parse {
            line,
            message: format!("{key} applies to synthetic networks only"),
        };
        let grid = |v: &str| {
            parse_grid(v).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })
        };
        let opt = |v: &str| v == "none" || v == "auto" || v.is_empty();
        match key {
            "scenario" => self.scenario = value.to_string(),
            "n" => match self.source {
                NetworkSource::Er { ref mut n, .. } => *n = parse_value(key, value, line)?,
                NetworkSource::Contacts { .. } => return Err(synthetic_only()),
            },
            "p" => match self.source {
                NetworkSource::Er { ref mut p, .. } => *p = parse_value(key, value, line)?,
                NetworkSource::Contacts { .. } => return Err(synthetic_only()),
            },
            "contacts" => {
                let backbone_p = match self.source {
                    NetworkSource::Contacts { backbone_p, .. } => backbone_p,
                    NetworkSource::Er { .. } => 0.1,
                };
                self.source = NetworkSource::Contacts {
                    path: PathBuf::from(value),
                    backbone_p,
                };
            }
            "backbone_p" => match self.source {
                NetworkSource::Contacts { ref mut backbone_p, .. } => *backbone_p = parse_value(key, value, line)?,
                NetworkSource::Er { .. } => {
                    return Err(Error::Parse {
                        line,
                        message: "backbone_p needs contacts to be set first".into(),
                    })
                }
            },
            "alpha" => self.alpha = parse_value(key, value, line)?,
            "beta" => self.beta = parse_value(key, value, line)?,
            "dt" => self.dt = if opt(value) { None } else { Some(parse_value(key, value, line)?) },
            "steps" => self.steps = if opt(value) { None } else { Some(parse_value(key, value, line)?) },
            "l_max" => self.l_max = if opt(value) { None } else { Some(parse_value(key, value, line)?) },
            "period" => self.period = if opt(value) { None } else { Some(parse_value(key, value, line)?) },
            "initial_strength" => self.initial_strength = parse_value(key, value, line)?,
            "replicates" => self.replicates = parse_value(key, value, line)?,
            "simulate" => self.simulate = parse_value(key, value, line)?,
            "seed" => self.seed = parse_value(key, value, line)?,
            "grid" => {
                self.lambdas = grid(value)?;
                self.mus = self.lambdas.clone();
            }
            "lambdas" | "lambda" => self.lambdas = grid(value)?,
            "mus" | "mu" => self.mus = grid(value)?,
            "max_per_bin" => self.max_per_bin = parse_value(key, value, line)?,
            "max_attempts" => self.max_attempts = parse_value(key, value, line)?,
            "out" | "out_dir" => self.out_dir = PathBuf::from(value),
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown key {other:?}"),
                })
            }
        }
        Ok(())
    }

    /// Reads `key = value` lines; `#` starts a comment.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: "expected key = value".into(),
            })?;
            cfg.set(key.trim(), value.trim(), idx + 1)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a key-value file, a JSON config, or the `config` entry of a run
    /// manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        if text.trim_start().starts_with('{') {
            let value: serde_json::Value = serde_json::from_str(&text)?;
            let cfg: Self = match value.get("config") {
                Some(inner) => serde_json::from_value(inner.clone())?,
                None => serde_json::from_value(value)?,
            };
            cfg.validate()?;
            Ok(cfg)
        } else {
            Self::from_key_values(&text)
        }
    }

    pub fn period_config(&self, available: usize) -> PeriodRule {
        match self.period {
            Some(l) => PeriodRule::Fixed(l),
            None => PeriodRule::Stopping(SeriesConfig::new(self.l_max.unwrap_or(available).min(available))),
        }
    }
}

/// A built tie-decay network and everything needed to rerun it.
#[derive(Debug, Clone)]
pub struct PreparedNetwork {
    pub backbone: EdgeSet,
    pub initial: TieMatrix,
    pub log: EventLog,
    pub plan: DiscretizationPlan,
    pub snapshots: SnapshotSequence,
    /// Original node labels for contact files.
    pub node_ids: Option<Vec<u64>>,
}

impl PreparedNetwork {
    pub fn n(&self) -> usize {
        self.initial.n()
    }

    pub fn steps(&self) -> usize {
        self.plan.num_steps
    }
}

/// Generates or ingests the network described by `cfg`.
pub fn prepare_network(cfg: &ExperimentConfig) -> Result<PreparedNetwork> {
    cfg.validate()?;
    let (backbone, log, plan, node_ids) = match &cfg.source {
        NetworkSource::Er { n, p } => {
            let er = ErConfig::new(*n, *p, derive_seed(cfg.seed, SEED_GRAPH));
            let g = generate_er_with_cap(&er, cfg.max_attempts)?;
            let dt = cfg.dt.expect("validated");
            let steps = cfg.steps.expect("validated");
            let waits = WaitingTimeConfig {
                beta: cfg.beta,
                dt,
                seed: derive_seed(cfg.seed, SEED_EVENTS),
            };
            let log = generate_event_times(&g, &waits, steps as f64 * dt)?;
            let plan = DiscretizationPlan {
                num_steps: steps,
                ..plan_for_dt(&log, dt)?
            };
            (g, log, plan, None)
        }
        NetworkSource::Contacts { path, backbone_p } => {
            let file = File::open(path).map_err(|e| {
                Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
            })?;
            let contacts = parse_contact_file(BufReader::new(file))?;
            let plan = match cfg.dt {
                Some(dt) => plan_for_dt(&contacts.log, dt)?,
                None => choose_dt(&contacts.log, cfg.max_per_bin, DEFAULT_RESOLUTION)?,
            };
            let plan = match cfg.steps {
                Some(steps) => DiscretizationPlan { num_steps: steps, ..plan },
                None => plan,
            };
            let mut er = ErConfig::new(contacts.log.n(), *backbone_p, derive_seed(cfg.seed, SEED_GRAPH));
            er.require_connected = false;
            let g = generate_er(&er)?;
            (g, contacts.log, plan, Some(contacts.node_ids))
        }
    };
    let initial = initial_tie_matrix(&backbone, cfg.initial_strength)?;
    let decay = DecayParams::new(cfg.alpha, plan.dt)?;
    let snapshots = SnapshotSequence::build(&initial, &discretize(&log, &plan), decay)?;
    Ok(PreparedNetwork {
        backbone,
        initial,
        log,
        plan,
        snapshots,
        node_ids,
    })
}

/// How the critical value of a cell is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PeriodRule {
    /// Grow `l` until the trailing-window spread criterion holds.
    Stopping(SeriesConfig),
    /// One estimate over the first `l` snapshots.
    Fixed(usize),
}

/// Per-step critical value and the period it was taken at.
pub fn critical_value(
    snapshots: &SnapshotSequence,
    lambda: f64,
    mu: f64,
    rule: &PeriodRule,
) -> Result<(f64, Option<usize>)> {
    match rule {
        PeriodRule::Fixed(l) => {
            let op = SystemOperator::from_snapshots(snapshots, lambda, mu, *l)?;
            Ok((spectral_radius_product(&op, &PowerConfig::default()).per_step, Some(*l)))
        }
        PeriodRule::Stopping(cfg) => {
            let s = critical_value_series(snapshots, lambda, mu, cfg)?;
            if s.converged_l.is_none() {
                log::debug!("stopping rule not met by l = {} at ({lambda}, {mu})", cfg.l_max);
            }
            Ok((s.critical_value(), s.converged_l))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub lambda: f64,
    pub mu: f64,
    pub critical_value: f64,
    /// Period used; `None` when the stopping rule never held.
    pub period: Option<usize>,
    pub mean_final: Option<f64>,
}

/// Sweep results, λ-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub lambdas: Vec<f64>,
    pub mus: Vec<f64>,
    pub cells: Vec<Cell>,
}

impl SweepGrid {
    pub fn cell(&self, li: usize, mi: usize) -> &Cell {
        &self.cells[li * self.mus.len() + mi]
    }

    /// Number of cells whose critical value exceeds one.
    pub fn outbreak_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.critical_value > 1.0).count()
    }

    /// `(critical value, mean final size)` for simulated cells.
    pub fn value_size_pairs(&self) -> (Vec<f64>, Vec<f64>) {
        self.cells
            .iter()
            .filter_map(|c| c.mean_final.map(|f| (c.critical_value, f)))
            .unzip()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "lambda,mu,critical_value,period,mean_final_size")?;
        for c in &self.cells {
            let period = c.period.map_or(String::new(), |l| l.to_string());
            let size = c.mean_final.map_or(String::new(), |f| f.to_string());
            writeln!(out, "{},{},{},{period},{size}", c.lambda, c.mu, c.critical_value)?;
        }
        Ok(())
    }
}

/// Evaluates every (λ, μ) cell: critical value under `rule` and, when
/// `replicates > 0`, the mean final outbreak size over `steps` steps.
pub fn sweep_network(
    net: &PreparedNetwork,
    lambdas: &[f64],
    mus: &[f64],
    rule: &PeriodRule,
    replicates: usize,
    sim_seed: u64,
    exec: Execution,
) -> Result<SweepGrid> {
    let m = mus.len();
    let cells = exec.try_map(lambdas.len() * m, |idx| {
        let (lambda, mu) = (lambdas[idx / m], mus[idx % m]);
        let (value, period) = critical_value(&net.snapshots, lambda, mu, rule)?;
        let mean_final = if replicates > 0 {
            let params = SisParams::new(lambda, mu)?.with_seed(sim_seed);
            Some(run_ensemble(&net.snapshots, &params, net.steps(), replicates, Execution::Sequential)?.mean_final)
        } else {
            None
        };
        if !value.is_finite() {
            return Err(Error::Infeasible(format!("non-finite critical value at ({lambda}, {mu})")));
        }
        Ok(Cell {
            lambda,
            mu,
            critical_value: value,
            period,
            mean_final,
        })
    })?;
    Ok(SweepGrid {
        lambdas: lambdas.to_vec(),
        mus: mus.to_vec(),
        cells,
    })
}

/// Builds the network for `cfg` and sweeps its grid.
pub fn sweep(cfg: &ExperimentConfig, exec: Execution) -> Result<SweepGrid> {
    let net = prepare_network(cfg)?;
    let rule = cfg.period_config(net.steps());
    let replicates = if cfg.simulate { cfg.replicates } else { 0 };
    sweep_network(
        &net,
        &cfg.lambdas,
        &cfg.mus,
        &rule,
        replicates,
        derive_seed(cfg.seed, SEED_SIMULATION),
        exec,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub lambda: f64,
    pub mu: f64,
    pub critical_value: f64,
}

/// For each λ, the smallest μ whose critical value is closest to one.
pub fn boundary(grid: &SweepGrid) -> Vec<BoundaryPoint> {
    (0..grid.lambdas.len())
        .map(|li| {
            let mut best = grid.cell(li, 0);
            for mi in 1..grid.mus.len() {
                let c = grid.cell(li, mi);
                let (d, db) = ((c.critical_value - 1.0).abs(), (best.critical_value - 1.0).abs());
                if d < db || (d == db && c.mu < best.mu) {
                    best = c;
                }
            }
            BoundaryPoint {
                lambda: best.lambda,
                mu: best.mu,
                critical_value: best.critical_value,
            }
        })
        .collect()
}

pub fn write_boundary_csv<W: Write>(mut out: W, points: &[BoundaryPoint]) -> std::io::Result<()> {
    writeln!(out, "lambda,mu_star,critical_value")?;
    for p in points {
        writeln!(out, "{},{},{}", p.lambda, p.mu, p.critical_value)?;
    }
    Ok(())
}

/// Sample Pearson correlation coefficient.
pub fn pcc(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidParameter("need at least two samples".into()));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// One row of the windowed comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedRow {
    pub lambda: f64,
    pub tie_decay_value: f64,
    pub literal_per_step: f64,
    pub expanded_per_step: f64,
    pub tie_decay_final: Option<f64>,
    pub windowed_final: Option<f64>,
}

/// Tie-decay against windowed critical values (and optionally outbreak
/// sizes) for each λ at fixed μ.
pub fn compare_windowed(
    net: &PreparedNetwork,
    lambdas: &[f64],
    mu: f64,
    window: usize,
    rule: &PeriodRule,
    replicates: usize,
    sim_seed: u64,
    exec: Execution,
) -> Result<Vec<WindowedRow>> {
    let raw = bin_windows(&net.log, net.plan.dt, window, net.steps())?;
    let windows = rescale_windows(&raw, &net.snapshots)?;
    let schedule = WindowedSchedule::new(&windows, &net.initial)?;
    exec.try_map(lambdas.len(), |k| {
        let lambda = lambdas[k];
        let (tie_decay_value, _) = critical_value(&net.snapshots, lambda, mu, rule)?;
        let literal = windowed_threshold(&windows, lambda, mu, ThresholdMode::Literal)?;
        let expanded = windowed_threshold(&windows, lambda, mu, ThresholdMode::Expanded)?;
        let (tie_decay_final, windowed_final) = if replicates > 0 {
            let params = SisParams::new(lambda, mu)?.with_seed(sim_seed);
            let steps = net.steps().min(windows.num_windows() * window);
            let a = run_ensemble(&net.snapshots, &params, steps, replicates, Execution::Sequential)?;
            let b = run_ensemble(&schedule, &params, steps, replicates, Execution::Sequential)?;
            (Some(a.mean_final), Some(b.mean_final))
        } else {
            (None, None)
        };
        Ok(WindowedRow {
            lambda,
            tie_decay_value,
            literal_per_step: literal.per_step,
            expanded_per_step: expanded.per_step,
            tie_decay_final,
            windowed_final,
        })
    })
}

pub fn write_windowed_csv<W: Write>(mut out: W, rows: &[WindowedRow]) -> std::io::Result<()> {
    writeln!(
        out,
        "lambda,tie_decay_value,windowed_literal_per_step,windowed_expanded_per_step,tie_decay_final_size,windowed_final_size"
    )?;
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.lambda,
            r.tie_decay_value,
            r.literal_per_step,
            r.expanded_per_step,
            opt(r.tie_decay_final),
            opt(r.windowed_final)
        )?;
    }
    Ok(())
}

/// Knobs shared by all scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOptions {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub replicates: usize,
    pub lambdas: Vec<f64>,
    pub mus: Vec<f64>,
    /// Overrides the number of steps of synthetic scenarios.
    pub steps: Option<usize>,
    /// Directory with the contact data files; falls back to
    /// `$TIETHRESH_DATA_DIR`, then `./data`.
    pub data_dir: Option<PathBuf>,
    /// Explicit contact file for the real-data scenarios.
    pub contacts: Option<PathBuf>,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            out_dir: default_out_dir(),
            replicates: 10,
            lambdas: default_grid(),
            mus: default_grid(),
            steps: None,
            data_dir: None,
            contacts: None,
        }
    }
}

impl ScenarioOptions {
    /// Loads the `options` entry of a run manifest.
    pub fn from_manifest(path: &Path) -> Result<(String, Self)> {
        let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
        let name = value
            .get("scenario")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::InvalidParameter("manifest has no scenario".into()))?
            .to_string();
        let options = serde_json::from_value(
            value
                .get("options")
                .cloned()
                .ok_or_else(|| Error::InvalidParameter("manifest has no options".into()))?,
        )?;
        Ok((name, options))
    }

    fn data_file(&self, name: &str) -> PathBuf {
        if let Some(p) = &self.contacts {
            return p.clone();
        }
        let dir = self
            .data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"));
        dir.join(name)
    }

    fn synthetic(&self, scenario: &str, p: f64, alpha: f64, beta: f64) -> ExperimentConfig {
        ExperimentConfig {
            scenario: scenario.into(),
            source: NetworkSource::Er { n: 100, p },
            alpha,
            beta,
            dt: Some(1.0),
            steps: Some(self.steps.unwrap_or(1000)),
            l_max: None,
            period: None,
            initial_strength: 0.5,
            replicates: self.replicates.max(1),
            simulate: self.replicates > 0,
            seed: self.seed,
            lambdas: self.lambdas.clone(),
            mus: self.mus.clone(),
            max_per_bin: 10,
            max_attempts: SCENARIO_MAX_ATTEMPTS,
            out_dir: self.out_dir.clone(),
        }
    }

    fn real(&self, scenario: &str, file: &str, dt: f64) -> ExperimentConfig {
        ExperimentConfig {
            source: NetworkSource::Contacts {
                path: self.data_file(file),
                backbone_p: 0.1,
            },
            alpha: 0.01,
            dt: Some(dt),
            steps: None,
            period: Some(100),
            ..self.synthetic(scenario, 0.1, 0.01, 100.0)
        }
    }
}

/// Files written by a scenario and a JSON summary of its headline numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let mut out = BufWriter::new(File::create(&path)?);
        f(&mut out)?;
        out.flush()?;
        self.files.push(path);
        Ok(())
    }
}

fn tag(x: f64) -> String {
    format!("{x}").replace('.', "p")
}

/// Runs a named scenario and writes its CSVs plus `manifest.json` into
/// `opts.out_dir`.
pub fn run_scenario(name: &str, opts: &ScenarioOptions, exec: Execution) -> Result<ScenarioReport> {
    if !SCENARIOS.contains(&name) {
        return Err(Error::UnknownScenario(name.to_string()));
    }
    let mut w = Writer::new(&opts.out_dir)?;
    let mut configs = Vec::new();
    let mut summary = BTreeMap::new();

    let mut run_grid = |cfg: ExperimentConfig, label: &str, w: &mut Writer| -> Result<SweepGrid> {
        let grid = sweep(&cfg, exec)?;
        w.write(&format!("grid_{label}.csv"), |o| grid.write_csv(o))?;
        w.write(&format!("boundary_{label}.csv"), |o| write_boundary_csv(o, &boundary(&grid)))?;
        configs.push(cfg);
        Ok(grid)
    };

    match name {
        "validation" => {
            let mut rows = Vec::new();
            for alpha in [0.1, 0.01, 0.001] {
                for beta in [10.0, 50.0, 100.0] {
                    let label = format!("alpha{}_beta{}", tag(alpha), tag(beta));
                    let grid = run_grid(opts.synthetic(name, 0.1, alpha, beta), &label, &mut w)?;
                    if alpha == 0.1 && beta == 100.0 {
                        let violations = grid
                            .cells
                            .iter()
                            .filter(|c| c.critical_value < 1.0 && c.mean_final.is_some_and(|f| f > 0.0))
                            .count();
                        summary.insert("subcritical_cells_with_outbreak".to_string(), serde_json::json!(violations));
                    }
                    let (x, y) = grid.value_size_pairs();
                    rows.push((alpha, beta, pcc(&y, &x).ok()));
                }
            }
            w.write("pcc.csv", |o| {
                writeln!(o, "alpha,beta,pcc")?;
                for (a, b, r) in &rows {
                    writeln!(o, "{a},{b},{}", r.map_or("undefined".to_string(), |v| v.to_string()))?;
                }
                Ok(())
            })?;
            summary.insert("pcc".into(), serde_json::json!(rows));
        }
        "decay-sweep" | "frequency-sweep" | "sparsity-sweep" => {
            let variants: Vec<(String, ExperimentConfig)> = match name {
                "decay-sweep" => [0.1, 0.01, 0.001]
                    .iter()
                    .map(|&a| (format!("alpha{}", tag(a)), opts.synthetic(name, 0.05, a, 100.0)))
                    .collect(),
                "frequency-sweep" => [10.0, 50.0, 100.0]
                    .iter()
                    .map(|&b| (format!("beta{}", tag(b)), opts.synthetic(name, 0.05, 0.01, b)))
                    .collect(),
                _ => [0.1, 0.05, 0.02]
                    .iter()
                    .map(|&p| (format!("p{}", tag(p)), opts.synthetic(name, p, 0.01, 100.0)))
                    .collect(),
            };
            let mut counts = Vec::new();
            for (label, mut cfg) in variants {
                cfg.simulate = false;
                let grid = run_grid(cfg, &label, &mut w)?;
                counts.push((label, grid.outbreak_cells()));
            }
            w.write("outbreak_counts.csv", |o| {
                writeln!(o, "variant,cells_above_one")?;
                counts.iter().try_for_each(|(l, c)| writeln!(o, "{l},{c}"))
            })?;
            summary.insert("cells_above_one".into(), serde_json::json!(counts));
        }
        "period-convergence" => {
            let cfg = opts.synthetic(name, 0.05, 0.1, 100.0);
            let net = prepare_network(&cfg)?;
            let l_max = net.steps();
            let mut results = Vec::new();
            for (lambda, mu) in [(0.3, 0.7), (0.4, 0.6)] {
                let series = critical_value_series(&net.snapshots, lambda, mu, &SeriesConfig::new(l_max).full())?;
                w.write(&format!("series_lambda{}_mu{}.csv", tag(lambda), tag(mu)), |o| series.write_csv(o))?;
                results.push(serde_json::json!({
                    "lambda": lambda,
                    "mu": mu,
                    "converged_l": series.converged_l,
                    "converged_value": series.converged_value,
                    "final_value": series.values.last(),
                }));
            }
            summary.insert("series".into(), serde_json::json!(results));
            configs.push(cfg);
        }
        "real-workplace" | "real-conference" => {
            let (file, dt) = if name == "real-workplace" {
                (WORKPLACE_FILE, 1000.0)
            } else {
                (CONFERENCE_FILE, 200.0)
            };
            let cfg = opts.real(name, file, dt);
            let net = prepare_network(&cfg)?;
            summary.insert("nodes".into(), serde_json::json!(net.n()));
            summary.insert("steps".into(), serde_json::json!(net.steps()));
            summary.insert("max_events_per_step".into(), serde_json::json!(net.plan.max_per_bin));
            let rule = cfg.period_config(net.steps());
            let replicates = if cfg.simulate { cfg.replicates } else { 0 };
            let grid = sweep_network(
                &net,
                &cfg.lambdas,
                &cfg.mus,
                &rule,
                replicates,
                derive_seed(cfg.seed, SEED_SIMULATION),
                exec,
            )?;
            w.write("grid_main.csv", |o| grid.write_csv(o))?;
            w.write("boundary_main.csv", |o| write_boundary_csv(o, &boundary(&grid)))?;
            let (x, y) = grid.value_size_pairs();
            summary.insert("pcc".into(), serde_json::json!(pcc(&y, &x).ok()));
            configs.push(cfg);
        }
        "windowed-compare" => {
            let cfg = opts.synthetic(name, 0.1, 0.1, 100.0);
            let net = prepare_network(&cfg)?;
            let rule = cfg.period_config(net.steps());
            let replicates = if cfg.simulate { cfg.replicates } else { 0 };
            let rows = compare_windowed(
                &net,
                &cfg.lambdas,
                0.5,
                10,
                &rule,
                replicates,
                derive_seed(cfg.seed, SEED_SIMULATION),
                exec,
            )?;
            w.write("windowed.csv", |o| write_windowed_csv(o, &rows))?;
            let spread = |f: fn(&WindowedRow) -> f64| {
                let (lo, hi) = rows
                    .iter()
                    .map(f)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
                hi - lo
            };
            summary.insert("tie_decay_spread".into(), serde_json::json!(spread(|r| r.tie_decay_value)));
            summary.insert("windowed_literal_spread".into(), serde_json::json!(spread(|r| r.literal_per_step)));
            configs.push(cfg);
        }
        _ => unreachable!("scenario names are checked above"),
    }

    let summary = serde_json::to_value(summary)?;
    let manifest = serde_json::json!({
        "scenario": name,
        "version": env!("CARGO_PKG_VERSION"),
        "options": opts,
        "seeds": {
            "master": opts.seed,
            "graph": derive_seed(opts.seed, SEED_GRAPH),
            "events": derive_seed(opts.seed, SEED_EVENTS),
            "simulation": derive_seed(opts.seed, SEED_SIMULATION),
        },
        "configs": configs,
        "summary": summary,
    });
    w.write("manifest.json", |o| {
        serde_json::to_writer_pretty(&mut *o, &manifest)?;
        writeln!(o)
    })?;
    Ok(ScenarioReport {
        scenario: name.to_string(),
        files: w.files,
        summary,
    })
}

/// Writes a sweep's grid and boundary CSVs plus a manifest for `cfg`.
pub fn write_sweep(cfg: &ExperimentConfig, grid: &SweepGrid) -> Result<Vec<PathBuf>> {
    let mut w = Writer::new(&cfg.out_dir)?;
    w.write("grid.csv", |o| grid.write_csv(o))?;
    w.write("boundary.csv", |o| write_boundary_csv(o, &boundary(grid)))?;
    let manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "seeds": {
            "graph": derive_seed(cfg.seed, SEED_GRAPH),
            "events": derive_seed(cfg.seed, SEED_EVENTS),
            "simulation": derive_seed(cfg.seed, SEED_SIMULATION),
        },
    });
    w.write("manifest.json", |o| {
        serde_json::to_writer_pretty(&mut *o, &manifest)?;
        writeln!(o)
    })?;
    Ok(w.files)
}
