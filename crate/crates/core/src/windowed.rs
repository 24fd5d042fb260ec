//! Fixed-window aggregation baseline.
//!
//! Interactions are binned into adjacent windows of `w` steps; window `k`
//! covers steps `(k - 1) w + 1 ..= k w`. After rescaling, each window matrix
//! carries the same total strength as the tie-decay snapshots averaged over
//! that window, so the two models are compared at equal strength mass.

use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventLog;
use crate::ingest::step_index;
use crate::sis::{simulate, SisParams, TieSchedule, Trajectory};
use crate::threshold::{spectral_radius_product, PowerConfig, SystemOperator};
use crate::tie_decay::{SnapshotSequence, TieMatrix};

/// How window factors enter the system matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// One factor per window.
    Literal,
    /// Each window factor applied `w` times, as in the simulation.
    Expanded,
}

impl FromStr for ThresholdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(Self::Literal),
            "expanded" => Ok(Self::Expanded),
            other => Err(Error::InvalidParameter(format!(
                "unknown mode {other:?} (expected literal or expanded)"
            ))),
        }
    }
}

/// Window matrices `A'_1, ..., A'_K` on a shared sparse support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedNetwork {
    n: usize,
    window: usize,
    edges: Vec<(usize, usize)>,
    /// `K * edges.len()` values, window-major.
    weights: Vec<f64>,
    /// Factor applied to each raw window; 1 until rescaled.
    scale: Vec<f64>,
}

impl WindowedNetwork {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Window length in steps.
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn num_windows(&self) -> usize {
        self.scale.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Strengths of window `k` (1-based), aligned with [`Self::edges`].
    pub fn weights(&self, k: usize) -> &[f64] {
        assert!(k >= 1 && k <= self.num_windows(), "window {k} out of range");
        let m = self.edges.len();
        &self.weights[(k - 1) * m..k * m]
    }

    pub fn scale_factors(&self) -> &[f64] {
        &self.scale
    }

    /// `sum_ij A'_k[i][j]` over both triangles.
    pub fn total(&self, k: usize) -> f64 {
        2.0 * self.weights(k).iter().sum::<f64>()
    }

    /// Dense copy of window `k` (1-based).
    pub fn window_matrix(&self, k: usize) -> TieMatrix {
        let mut m = TieMatrix::zeros(self.n);
        for (&(i, j), &w) in self.edges.iter().zip(self.weights(k)) {
            m.set(i, j, w).expect("window entries are valid");
        }
        m
    }

    /// Writes `window,i,j,strength` rows for the positive upper-triangle
    /// entries, with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "window,i,j,strength")?;
        for k in 1..=self.num_windows() {
            for (&(i, j), &w) in self.edges.iter().zip(self.weights(k)) {
                if w > 0.0 {
                    writeln!(out, "{k},{i},{j},{w}")?;
                }
            }
        }
        Ok(())
    }
}

/// Counts events per window over `num_steps` steps of length `dt`; there are
/// `ceil(num_steps / w)` windows. Events past the last step are dropped.
pub fn bin_windows(log: &EventLog, dt: f64, w: usize, num_steps: usize) -> Result<WindowedNetwork> {
    if w == 0 {
        return Err(Error::InvalidParameter("window length must be at least 1".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "step duration must be positive, got {dt}"
        )));
    }
    let windows = num_steps.div_ceil(w);
    let mut edges: Vec<(usize, usize)> = log
        .events()
        .iter()
        .filter(|e| step_index(e.t, dt) <= num_steps)
        .map(|e| (e.i.min(e.j), e.i.max(e.j)))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    let m = edges.len();
    let mut weights = vec![0.0; windows * m];
    for e in log.events() {
        let tau = step_index(e.t, dt);
        if tau > num_steps {
            continue;
        }
        let k = (tau - 1) / w;
        let pos = edges
            .binary_search(&(e.i.min(e.j), e.i.max(e.j)))
            .expect("support contains every binned pair");
        weights[k * m + pos] += 1.0;
    }
    Ok(WindowedNetwork {
        n: log.n(),
        window: w,
        edges,
        weights,
        scale: vec![1.0; windows],
    })
}

/// Scales window `k` so its total strength equals the mean of
/// `sum_ij B^(tau)_ij` over the steps `tau` it covers. Empty windows stay
/// zero with scale 0. The last window may be partial.
pub fn rescale_windows(raw: &WindowedNetwork, snapshots: &SnapshotSequence) -> Result<WindowedNetwork> {
    if snapshots.n() != raw.n {
        return Err(Error::DimensionMismatch {
            expected: raw.n,
            found: snapshots.n(),
        });
    }
    let k_max = raw.num_windows();
    let last_step = snapshots.len().saturating_sub(1);
    if k_max > 0 && (k_max - 1) * raw.window + 1 > last_step {
        return Err(Error::InsufficientSnapshots {
            requested: (k_max - 1) * raw.window + 2,
            available: snapshots.len(),
        });
    }
    let mut out = raw.clone();
    let m = raw.edges.len();
    for k in 1..=k_max {
        let first = (k - 1) * raw.window + 1;
        let last = (k * raw.window).min(last_step);
        let target = (first..=last).map(|tau| snapshots.total_strength(tau)).sum::<f64>()
            / (last - first + 1) as f64;
        let raw_total = raw.total(k);
        let c = if raw_total > 0.0 { target / raw_total } else { 0.0 };
        for x in &mut out.weights[(k - 1) * m..k * m] {
            *x *= c;
        }
        out.scale[k - 1] = raw.scale[k - 1] * c;
    }
    Ok(out)
}

/// Spectral radius of the windowed system matrix under several
/// normalizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedThreshold {
    pub mode: ThresholdMode,
    /// `ln rho(S')`.
    pub log_radius: f64,
    /// `rho(S')^(1/K)`.
    pub per_window: f64,
    /// `rho(S')^(1/(K w))`, comparable with tie-decay per-step values.
    pub per_step: f64,
    pub converged: bool,
}

impl WindowedThreshold {
    pub fn per_period(&self) -> f64 {
        self.log_radius.exp()
    }
}

/// Critical value of `S' = prod_k [(1 - mu) I + lambda_max min(A'_k, 1)]`.
pub fn windowed_threshold(
    net: &WindowedNetwork,
    lambda_max: f64,
    mu: f64,
    mode: ThresholdMode,
) -> Result<WindowedThreshold> {
    let k_max = net.num_windows();
    if k_max == 0 {
        return Err(Error::InvalidParameter("need at least one window".into()));
    }
    let repeat = match mode {
        ThresholdMode::Literal => 1,
        ThresholdMode::Expanded => net.window,
    };
    let factors = (1..=k_max)
        .flat_map(|k| std::iter::repeat_n(net.weights(k), repeat))
        .collect();
    let op = SystemOperator::new(net.n, &net.edges, factors, lambda_max, mu)?;
    let est = spectral_radius_product(&op, &PowerConfig::default());
    let steps = (k_max * net.window) as f64;
    Ok(WindowedThreshold {
        mode,
        log_radius: est.log_radius,
        per_window: (est.log_radius / k_max as f64).exp(),
        per_step: (est.log_radius / steps).exp(),
        converged: est.converged,
    })
}

/// Windowed strengths as a step schedule: the transition out of step `tau`
/// lies in window `k = tau / w + 1` and uses `A'_{k-1}`, with `A'_0` the
/// initial tie matrix.
pub struct WindowedSchedule {
    n: usize,
    window: usize,
    edges: Vec<(usize, usize)>,
    /// `K + 1` rows: initial matrix, then `A'_1 .. A'_K`.
    rows: Vec<f64>,
    windows: usize,
}

impl WindowedSchedule {
    pub fn new(net: &WindowedNetwork, initial: &TieMatrix) -> Result<Self> {
        if initial.n() != net.n {
            return Err(Error::DimensionMismatch {
                expected: net.n,
                found: initial.n(),
            });
        }
        let mut edges = net.edges.clone();
        edges.extend(initial.positive_edges().map(|(i, j, _)| (i, j)));
        edges.sort_unstable();
        edges.dedup();
        let mut rows = Vec::with_capacity((net.num_windows() + 1) * edges.len());
        rows.extend(edges.iter().map(|&(i, j)| initial.get(i, j)));
        for k in 1..=net.num_windows() {
            let mut row = vec![0.0; edges.len()];
            for (pair, &w) in net.edges.iter().zip(net.weights(k)) {
                let pos = edges.binary_search(pair).expect("support is a superset");
                row[pos] = w;
            }
            rows.extend(row);
        }
        Ok(Self {
            n: net.n,
            window: net.window,
            edges,
            rows,
            windows: net.num_windows(),
        })
    }
}

impl TieSchedule for WindowedSchedule {
    fn n(&self) -> usize {
        self.n
    }

    fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    fn weights(&self, tau: usize) -> &[f64] {
        let m = self.edges.len();
        let k = tau / self.window;
        &self.rows[k * m..(k + 1) * m]
    }

    fn steps_available(&self) -> usize {
        self.windows * self.window
    }
}

/// SIS dynamics on the windowed network; see [`WindowedSchedule`].
pub fn simulate_windowed<R: Rng + ?Sized>(
    net: &WindowedNetwork,
    initial: &TieMatrix,
    params: &SisParams,
    steps: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    let schedule = WindowedSchedule::new(net, initial)?;
    simulate(&schedule, params, steps, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::Event;
    use crate::ingest::{discretize, plan_for_dt};
    use crate::rng::substream;
    use crate::synthetic::{generate_er, generate_event_times, initial_tie_matrix, ErConfig, WaitingTimeConfig};
    use crate::tie_decay::DecayParams;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn log(n: usize, events: &[(f64, usize, usize)], horizon: f64) -> EventLog {
        EventLog::new(n, events.iter().map(|&(t, i, j)| Event { t, i, j }).collect(), horizon).unwrap()
    }

    #[test]
    fn events_in_first_window() {
        let l = log(3, &[(3.0, 0, 1), (7.0, 1, 2)], 20.0);
        let net = bin_windows(&l, 1.0, 10, 20).unwrap();
        assert_eq!(net.num_windows(), 2);
        assert_eq!(net.window_matrix(1).get(0, 1), 1.0);
        assert_eq!(net.window_matrix(1).get(2, 1), 1.0);
        assert_eq!(net.total(2), 0.0);
    }

    #[test]
    fn window_boundaries_are_right_closed() {
        let l = log(2, &[(0.0, 0, 1), (10.0, 0, 1), (10.5, 0, 1), (25.0, 0, 1)], 30.0);
        let net = bin_windows(&l, 1.0, 10, 25).unwrap();
        assert_eq!(net.num_windows(), 3);
        assert_eq!(net.weights(1), &[2.0]);
        assert_eq!(net.weights(2), &[1.0]);
        assert_eq!(net.weights(3), &[1.0]);
        assert!(bin_windows(&l, 1.0, 0, 25).is_err());
    }

    #[test]
    fn empty_log_gives_zero_windows() {
        let net = bin_windows(&EventLog::empty(4), 1.0, 10, 35).unwrap();
        assert_eq!(net.num_windows(), 4);
        assert!((1..=4).all(|k| net.total(k) == 0.0));
    }

    proptest! {
        #[test]
        fn binning_conserves_events(
            raw in prop::collection::vec((0.0f64..100.0, 0usize..8, 1usize..8), 0..200),
            w in 1usize..15,
        ) {
            let events: Vec<(f64, usize, usize)> = raw.iter().map(|&(t, i, d)| (t, i, (i + d) % 8)).collect();
            let l = log(8, &events, 100.0);
            let net = bin_windows(&l, 1.0, w, 100).unwrap();
            let total: f64 = (1..=net.num_windows()).map(|k| net.total(k) / 2.0).sum();
            prop_assert_eq!(total, events.len() as f64);
        }
    }

    fn setup(seed: u64, steps: usize) -> (TieMatrix, SnapshotSequence, WindowedNetwork) {
        let g = generate_er(&ErConfig::new(30, 0.15, seed)).unwrap();
        let events = generate_event_times(&g, &WaitingTimeConfig::new(20.0, seed), steps as f64).unwrap();
        let plan = plan_for_dt(&events, 1.0).unwrap();
        let plan = crate::ingest::DiscretizationPlan { num_steps: steps, ..plan };
        let b0 = initial_tie_matrix(&g, 0.5).unwrap();
        let seq = SnapshotSequence::build(&b0, &discretize(&events, &plan), DecayParams::new(0.1, 1.0).unwrap()).unwrap();
        let raw = bin_windows(&events, 1.0, 10, steps).unwrap();
        (b0, seq, raw)
    }

    #[test]
    fn rescaled_mass_matches_time_average() {
        let (_, seq, raw) = setup(3, 95);
        let net = rescale_windows(&raw, &seq).unwrap();
        for k in 1..=net.num_windows() {
            let first = (k - 1) * 10 + 1;
            let last = (k * 10).min(95);
            let mean: f64 = (first..=last).map(|t| seq.total_strength(t)).sum::<f64>() / (last - first + 1) as f64;
            if raw.total(k) > 0.0 {
                assert_relative_eq!(net.total(k), mean, max_relative = 1e-12);
            } else {
                assert_eq!(net.total(k), 0.0);
                assert_eq!(net.scale_factors()[k - 1], 0.0);
            }
        }
        let short = SnapshotSequence::constant(&TieMatrix::zeros(30), 50);
        assert!(rescale_windows(&raw, &short).is_err());
    }

    #[test]
    fn single_edge_rescale_arithmetic() {
        let raw = bin_windows(&log(2, &[(1.0, 0, 1)], 2.0), 1.0, 2, 2).unwrap();
        assert_eq!(raw.total(1), 2.0);
        let b = TieMatrix::from_edges(2, [(0, 1, 2.5)]).unwrap();
        let seq = SnapshotSequence::constant(&b, 3);
        let net = rescale_windows(&raw, &seq).unwrap();
        assert_relative_eq!(net.weights(1)[0], 2.5, max_relative = 1e-15);
        assert_relative_eq!(net.scale_factors()[0], 2.5, max_relative = 1e-15);

        let b = TieMatrix::from_edges(2, [(0, 1, 1.0)]).unwrap();
        let unchanged = rescale_windows(&raw, &SnapshotSequence::constant(&b, 3)).unwrap();
        assert_eq!(unchanged, raw);
    }

    #[test]
    fn zero_windows_threshold() {
        let net = bin_windows(&EventLog::empty(3), 1.0, 5, 10).unwrap();
        let t = windowed_threshold(&net, 0.8, 0.5, ThresholdMode::Literal).unwrap();
        assert_relative_eq!(t.per_period(), 0.25, max_relative = 1e-12);
        assert_relative_eq!(t.per_window, 0.5, max_relative = 1e-12);
        assert_relative_eq!(t.per_step, 0.5f64.powf(0.2), max_relative = 1e-12);
        let empty = bin_windows(&EventLog::empty(3), 1.0, 5, 0).unwrap();
        assert!(windowed_threshold(&empty, 0.8, 0.5, ThresholdMode::Literal).is_err());
    }

    #[test]
    fn single_window_expanded_is_literal_to_the_w() {
        let l = log(4, &[(1.0, 0, 1), (2.0, 1, 2), (3.0, 2, 3), (3.5, 0, 1)], 6.0);
        let net = bin_windows(&l, 1.0, 6, 6).unwrap();
        let lit = windowed_threshold(&net, 0.4, 0.3, ThresholdMode::Literal).unwrap();
        let exp = windowed_threshold(&net, 0.4, 0.3, ThresholdMode::Expanded).unwrap();
        assert_relative_eq!(exp.per_period(), lit.per_period().powi(6), max_relative = 1e-8);
        assert_relative_eq!(exp.per_window, lit.per_window.powi(6), max_relative = 1e-8);
    }

    fn dense_log_radius(net: &WindowedNetwork, lambda: f64, mu: f64, repeat: usize) -> f64 {
        use nalgebra::DMatrix;
        let n = net.n();
        let mut prod = DMatrix::<f64>::identity(n, n);
        for k in 1..=net.num_windows() {
            let a = net.window_matrix(k);
            let s = DMatrix::from_fn(n, n, |i, j| {
                let id = if i == j { 1.0 - mu } else { 0.0 };
                id + lambda * a.get(i, j).min(1.0)
            });
            for _ in 0..repeat {
                prod = &s * prod;
            }
        }
        prod.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max).ln()
    }

    #[test]
    fn both_modes_match_dense_products() {
        let l = log(
            6,
            &[(1.0, 0, 1), (2.0, 1, 2), (4.0, 3, 4), (5.0, 0, 5), (7.0, 2, 3), (7.5, 2, 3), (9.0, 4, 5), (11.0, 0, 2)],
            12.0,
        );
        let net = bin_windows(&l, 1.0, 3, 12).unwrap();
        for (lambda, mu) in [(0.3, 0.5), (0.9, 0.1), (0.05, 0.95)] {
            let lit = windowed_threshold(&net, lambda, mu, ThresholdMode::Literal).unwrap();
            let exp = windowed_threshold(&net, lambda, mu, ThresholdMode::Expanded).unwrap();
            assert_relative_eq!(lit.log_radius, dense_log_radius(&net, lambda, mu, 1), epsilon = 1e-7);
            assert_relative_eq!(exp.log_radius, dense_log_radius(&net, lambda, mu, 3), epsilon = 1e-7);
        }
    }

    #[test]
    fn modes_agree_on_classification_for_commuting_windows() {
        // windows that are multiples of one pattern, all capped identically
        let pattern = [(0.0, 0, 1), (0.0, 1, 2), (0.0, 2, 3), (0.0, 0, 3), (0.0, 1, 3)];
        let mut events = Vec::new();
        for k in 0..6 {
            let t = 5.0 * k as f64 + 1.0;
            events.extend(pattern.iter().map(|&(_, i, j)| (t, i, j)));
        }
        let net = bin_windows(&log(4, &events, 30.0), 1.0, 5, 30).unwrap();
        let mut checked = 0;
        for lambda in [0.05, 0.2, 0.4, 0.6, 0.8, 1.0] {
            for mu in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let lit = windowed_threshold(&net, lambda, mu, ThresholdMode::Literal).unwrap();
                let exp = windowed_threshold(&net, lambda, mu, ThresholdMode::Expanded).unwrap();
                assert_relative_eq!(exp.log_radius, 5.0 * lit.log_radius, epsilon = 1e-7);
                if lit.log_radius.abs() > 1e-6 {
                    checked += 1;
                    assert_eq!(lit.log_radius < 0.0, exp.log_radius < 0.0);
                }
            }
        }
        assert!(checked > 20);
    }

    #[test]
    fn expanded_mode_can_exceed_one_when_literal_does_not() {
        // path 0-1-2: window 1 holds tie (0,1), window 2 holds tie (1,2)
        let net = bin_windows(&log(3, &[(1.0, 0, 1), (11.0, 1, 2)], 20.0), 1.0, 10, 20).unwrap();
        let lit = windowed_threshold(&net, 0.8, 0.5, ThresholdMode::Literal).unwrap();
        let exp = windowed_threshold(&net, 0.8, 0.5, ThresholdMode::Expanded).unwrap();
        // dense eigenvalues from numpy
        assert_relative_eq!(lit.log_radius.exp(), 0.9351662428593202, max_relative = 1e-7);
        assert_relative_eq!((exp.log_radius / 10.0).exp(), 1.4712722572843988, max_relative = 1e-7);
        assert!(lit.log_radius < 0.0 && exp.log_radius > 0.0);
    }

    #[test]
    fn simulation_uses_lagged_windows() {
        let (b0, seq, raw) = setup(5, 100);
        let net = rescale_windows(&raw, &seq).unwrap();
        let schedule = WindowedSchedule::new(&net, &b0).unwrap();
        assert_eq!(schedule.steps_available(), 100);
        let pos = |pair: &(usize, usize)| schedule.edges().binary_search(pair).unwrap();
        for tau in [0, 9] {
            for (i, j, w) in b0.positive_edges() {
                assert_eq!(schedule.weights(tau)[pos(&(i, j))], w);
            }
        }
        for tau in [10, 19, 55, 99] {
            let k = tau / 10;
            for (pair, &w) in net.edges().iter().zip(net.weights(k)) {
                assert_eq!(schedule.weights(tau)[pos(pair)], w);
            }
        }
    }

    #[test]
    fn simulation_basics() {
        let (b0, seq, raw) = setup(6, 100);
        let net = rescale_windows(&raw, &seq).unwrap();
        let p = SisParams::new(0.0, 0.3).unwrap();
        let t = simulate_windowed(&net, &b0, &p, 100, &mut substream(1, 0)).unwrap();
        assert!(t.infected_count.windows(2).all(|w| w[1] <= w[0]));
        let p = SisParams::new(0.7, 0.2).unwrap();
        let a = simulate_windowed(&net, &b0, &p, 100, &mut substream(9, 0)).unwrap();
        let b = simulate_windowed(&net, &b0, &p, 100, &mut substream(9, 0)).unwrap();
        assert_eq!(a, b);
        assert!(simulate_windowed(&net, &b0, &p, 101, &mut substream(9, 0)).is_err());
    }

    #[test]
    fn unit_window_matches_binned_steps() {
        // w = 1 without rescaling: step tau uses A^(tau) (window tau), lagged one step
        let (b0, _, _) = setup(7, 40);
        let g = generate_er(&ErConfig::new(30, 0.15, 7)).unwrap();
        let events = generate_event_times(&g, &WaitingTimeConfig::new(20.0, 7), 40.0).unwrap();
        let net = bin_windows(&events, 1.0, 1, 40).unwrap();
        let schedule = WindowedSchedule::new(&net, &b0).unwrap();
        let plan = crate::ingest::DiscretizationPlan { num_steps: 40, ..plan_for_dt(&events, 1.0).unwrap() };
        let steps = discretize(&events, &plan);
        for tau in 1..40 {
            let a = &steps[tau - 1];
            let mut dense = TieMatrix::zeros(30);
            for &(i, j) in a.pairs() {
                dense.set(i, j, dense.get(i, j) + 1.0).unwrap();
            }
            for (&(i, j), &w) in schedule.edges().iter().zip(schedule.weights(tau)) {
                assert_eq!(w, dense.get(i, j));
            }
        }
    }

    #[test]
    fn csv_export() {
        let net = bin_windows(&log(3, &[(1.0, 0, 1), (12.0, 2, 1)], 20.0), 1.0, 10, 20).unwrap();
        let mut buf = Vec::new();
        net.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "window,i,j,strength\n1,0,1,1\n2,1,2,1\n");
        assert_eq!("expanded".parse::<ThresholdMode>().unwrap(), ThresholdMode::Expanded);
        assert!("other".parse::<ThresholdMode>().is_err());
    }
}
