//! Epidemic-threshold critical values.
//!
//! Linearizing the mean-field SIS map around the disease-free state gives one
//! factor per step, `S_tau = (1 - mu) I + lambda_max min(B^(tau), 1)`. Over a
//! period of `l` steps the system matrix is `S = S_{l-1} ... S_1 S_0`, and
//! the disease-free state is stable when its spectral radius is below one.
//!
//! The product is never formed. Power iteration applies the factors to a
//! vector in order, renormalizing after every factor and accumulating the
//! logarithm of the growth, so periods of thousands of steps neither
//! overflow nor underflow. The reported critical value is the per-step rate
//! `rho(S)^(1/l)`; the per-period radius is available as well and both
//! classify identically against one.

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::tie_decay::SnapshotSequence;

/// Stopping rule for power iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    /// Relative change of the per-step estimate between two period
    /// applications below which the iteration stops (see `settled`).
    pub tol: f64,
    /// Maximum number of full-period applications.
    pub max_periods: usize,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_periods: 10_000,
        }
    }
}

/// Ordered factors `S_0, ..., S_{l-1}` sharing one sparse support.
#[derive(Debug, Clone)]
pub struct SystemOperator<'a> {
    n: usize,
    edges: &'a [(usize, usize)],
    factors: Vec<&'a [f64]>,
    lambda_max: f64,
    mu: f64,
}

impl<'a> SystemOperator<'a> {
    /// `factors[k]` holds the uncapped strengths of factor `k` on `edges`.
    pub fn new(
        n: usize,
        edges: &'a [(usize, usize)],
        factors: Vec<&'a [f64]>,
        lambda_max: f64,
        mu: f64,
    ) -> Result<Self> {
        check_probability("lambda_max", lambda_max)?;
        check_probability("mu", mu)?;
        if factors.is_empty() {
            return Err(Error::InvalidParameter("period must be at least 1".into()));
        }
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::NodeOutOfRange { index: i.max(j), n });
            }
        }
        for f in &factors {
            if f.len() != edges.len() {
                return Err(Error::DimensionMismatch {
                    expected: edges.len(),
                    found: f.len(),
                });
            }
            if f.iter().any(|w| !w.is_finite()) {
                return Err(Error::InvalidParameter("factor entries must be finite".into()));
            }
        }
        Ok(Self {
            n,
            edges,
            factors,
            lambda_max,
            mu,
        })
    }

    /// Factors built from snapshots `0..period`.
    pub fn from_snapshots(
        seq: &'a SnapshotSequence,
        lambda_max: f64,
        mu: f64,
        period: usize,
    ) -> Result<Self> {
        Self::from_snapshot_range(seq, lambda_max, mu, 0, period)
    }

    /// Factors built from snapshots `start..start + period`.
    pub fn from_snapshot_range(
        seq: &'a SnapshotSequence,
        lambda_max: f64,
        mu: f64,
        start: usize,
        period: usize,
    ) -> Result<Self> {
        if start + period > seq.len() {
            return Err(Error::InsufficientSnapshots {
                requested: start + period,
                available: seq.len(),
            });
        }
        let factors = (start..start + period).map(|tau| seq.strengths(tau)).collect();
        Self::new(seq.n(), seq.edges(), factors, lambda_max, mu)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn period(&self) -> usize {
        self.factors.len()
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// The same factors with the first `k` moved to the end.
    pub fn rotated(&self, k: usize) -> Self {
        let mut factors = self.factors.clone();
        let len = factors.len();
        factors.rotate_left(k % len);
        Self {
            factors,
            ..self.clone()
        }
    }

    /// `y = S_k x`.
    pub fn apply_factor(&self, k: usize, x: &[f64], y: &mut [f64]) {
        apply_factor(self.edges, self.factors[k], self.lambda_max, self.mu, x, y);
    }

    /// `S x`, returned as a unit vector plus the log of its norm.
    pub fn apply(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let mut v = x.to_vec();
        let mut scratch = vec![0.0; self.n];
        let log_norm = self.apply_in_place(&mut v, &mut scratch);
        (v, log_norm)
    }

    fn apply_in_place(&self, v: &mut Vec<f64>, scratch: &mut Vec<f64>) -> f64 {
        let mut log_norm = 0.0;
        for k in 0..self.factors.len() {
            self.apply_factor(k, v, scratch);
            std::mem::swap(v, scratch);
            let s = normalize(v);
            if s == 0.0 {
                return f64::NEG_INFINITY;
            }
            log_norm += s.ln();
        }
        log_norm
    }
}

#[inline]
fn apply_factor(edges: &[(usize, usize)], weights: &[f64], lambda: f64, mu: f64, x: &[f64], y: &mut [f64]) {
    let keep = 1.0 - mu;
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = keep * xi;
    }
    if lambda == 0.0 {
        return;
    }
    for (&(i, j), &w) in edges.iter().zip(weights) {
        let c = lambda * w.min(1.0);
        y[i] += c * x[j];
        y[j] += c * x[i];
    }
}

/// Scales `v` to unit Euclidean norm and returns the old norm.
fn normalize(v: &mut [f64]) -> f64 {
    let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if s > 0.0 {
        let inv = 1.0 / s;
        v.iter_mut().for_each(|x| *x *= inv);
    }
    s
}

/// Stopping test on the last three changes of the estimate. All must be
/// below `tol`, and so must the geometric tail extrapolated from their worst
/// contraction; a single change can be tiny when error terms cancel.
fn settled(changes: &[f64; 3], tol: f64, scale: f64) -> bool {
    if !changes.iter().all(|&c| c < tol) {
        return false;
    }
    // at rounding level the contraction estimate is noise
    if changes.iter().all(|&c| c <= 64.0 * f64::EPSILON * scale) {
        return true;
    }
    let q = (changes[2] / changes[1]).max(changes[1] / changes[0]);
    q < 1.0 && changes[2] * q / (1.0 - q) < tol
}

/// Result of power iteration on a period product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    /// `ln rho(S)`; `-inf` when the product annihilates the iterate.
    pub log_radius: f64,
    /// `rho(S)^(1/l)`.
    pub per_step: f64,
    pub period: usize,
    pub iterations: usize,
    /// False when the iteration cap was hit (e.g. several dominant
    /// eigenvalues of equal modulus); the last iterate is still reported.
    pub converged: bool,
    /// Last unit-norm iterate, an approximate dominant eigenvector.
    pub vector: Vec<f64>,
}

impl SpectralEstimate {
    /// Per-period spectral radius `rho(S)`. May overflow to infinity for
    /// long periods; use `log_radius` there.
    pub fn radius(&self) -> f64 {
        self.log_radius.exp()
    }
}

/// Power iteration from the normalized all-ones vector.
pub fn spectral_radius_product(op: &SystemOperator<'_>, cfg: &PowerConfig) -> SpectralEstimate {
    let start = vec![1.0; op.n()];
    spectral_radius_from(op, &start, cfg)
}

/// Power iteration from a caller-supplied start vector.
pub fn spectral_radius_from(op: &SystemOperator<'_>, start: &[f64], cfg: &PowerConfig) -> SpectralEstimate {
    let n = op.n();
    let period = op.period();
    let mut v = start.to_vec();
    if n == 0 || normalize(&mut v) == 0.0 {
        v = vec![1.0; n];
        normalize(&mut v);
    }
    let mut scratch = vec![0.0; n];
    let mut prev = f64::NAN;
    let mut changes = [f64::NAN; 3];
    let mut log_radius = f64::NEG_INFINITY;
    for it in 1..=cfg.max_periods.max(1) {
        log_radius = op.apply_in_place(&mut v, &mut scratch);
        if log_radius == f64::NEG_INFINITY {
            return SpectralEstimate {
                log_radius,
                per_step: 0.0,
                period,
                iterations: it,
                converged: true,
                vector: vec![0.0; n],
            };
        }
        let per_step = (log_radius / period as f64).exp();
        changes = [changes[1], changes[2], (per_step - prev).abs()];
        if settled(&changes, cfg.tol * per_step, per_step) {
            return SpectralEstimate {
                log_radius,
                per_step,
                period,
                iterations: it,
                converged: true,
                vector: v,
            };
        }
        prev = per_step;
    }
    log::debug!("power iteration hit the cap of {} periods", cfg.max_periods);
    SpectralEstimate {
        log_radius,
        per_step: (log_radius / period as f64).exp(),
        period,
        iterations: cfg.max_periods,
        converged: false,
        vector: v,
    }
}

/// Which side of the threshold a critical value falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    DiesOut,
    Outbreak,
}

/// `DiesOut` iff `value < 1`; exactly one counts as an outbreak.
pub fn classify(per_step_value: f64) -> Outcome {
    if per_step_value < 1.0 {
        Outcome::DiesOut
    } else {
        Outcome::Outbreak
    }
}

/// Period-convergence settings for [`critical_value_series`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesConfig {
    pub l_max: usize,
    /// Number of trailing periods whose spread is checked.
    pub window: usize,
    /// Maximum allowed `max - min` over the trailing window.
    pub tol: f64,
    /// Stop at the first converged period instead of running to `l_max`.
    pub stop_at_convergence: bool,
    pub power: PowerConfig,
}

impl SeriesConfig {
    pub fn new(l_max: usize) -> Self {
        Self {
            l_max,
            window: 10,
            tol: 0.02,
            stop_at_convergence: true,
            power: PowerConfig::default(),
        }
    }

    pub fn full(mut self) -> Self {
        self.stop_at_convergence = false;
        self
    }
}

/// Per-step critical values for periods `l = 1, 2, ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalValueSeries {
    /// `values[l - 1]` is the estimate for period `l`.
    pub values: Vec<f64>,
    /// Whether power iteration converged for each period.
    pub power_converged: Vec<bool>,
    /// First period whose trailing window satisfies the spread tolerance.
    pub converged_l: Option<usize>,
    pub converged_value: Option<f64>,
    pub window: usize,
    pub tol: f64,
}

impl CriticalValueSeries {
    /// The converged value, or the last computed one.
    pub fn critical_value(&self) -> f64 {
        self.converged_value
            .or_else(|| self.values.last().copied())
            .unwrap_or(f64::NAN)
    }

    /// Whether the trailing window ending at period `l` meets the tolerance.
    pub fn window_converged_at(&self, l: usize) -> bool {
        spread_ok(&self.values[..l], self.window, self.tol)
    }

    /// Writes `l,per_step_value,converged_flag` rows with a header.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "l,per_step_value,converged_flag")?;
        for (k, v) in self.values.iter().enumerate() {
            let l = k + 1;
            writeln!(out, "{l},{v},{}", u8::from(self.window_converged_at(l)))?;
        }
        Ok(())
    }
}

fn spread_ok(values: &[f64], window: usize, tol: f64) -> bool {
    if values.len() < window {
        return false;
    }
    let tail = &values[values.len() - window..];
    let (lo, hi) = tail
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    hi - lo <= tol
}

/// Per-step critical value for every period up to `cfg.l_max`, together with
/// the first period meeting the trailing-window spread criterion.
///
/// Each period is warm-started from the forward iterate `S^(l) 1`, which is
/// extended by one factor per period; for long products this vector is
/// already close to the dominant eigenvector.
pub fn critical_value_series(
    seq: &SnapshotSequence,
    lambda_max: f64,
    mu: f64,
    cfg: &SeriesConfig,
) -> Result<CriticalValueSeries> {
    if cfg.window < 2 {
        return Err(Error::InvalidParameter("window must be at least 2".into()));
    }
    if cfg.l_max == 0 {
        return Err(Error::InvalidParameter("l_max must be at least 1".into()));
    }
    let full = SystemOperator::from_snapshots(seq, lambda_max, mu, cfg.l_max)?;
    let n = seq.n();
    let mut forward = vec![1.0; n];
    normalize(&mut forward);
    let mut scratch = vec![0.0; n];
    let mut values = Vec::with_capacity(cfg.l_max);
    let mut power_converged = Vec::with_capacity(cfg.l_max);
    let mut converged_l = None;
    for l in 1..=cfg.l_max {
        full.apply_factor(l - 1, &forward, &mut scratch);
        std::mem::swap(&mut forward, &mut scratch);
        if normalize(&mut forward) == 0.0 {
            forward = vec![1.0; n];
            normalize(&mut forward);
        }
        let op = SystemOperator {
            factors: full.factors[..l].to_vec(),
            ..full.clone()
        };
        let est = spectral_radius_from(&op, &forward, &cfg.power);
        values.push(est.per_step);
        power_converged.push(est.converged);
        if converged_l.is_none() && spread_ok(&values, cfg.window, cfg.tol) {
            converged_l = Some(l);
            if cfg.stop_at_convergence {
                break;
            }
        }
    }
    Ok(CriticalValueSeries {
        converged_value: converged_l.map(|l| values[l - 1]),
        values,
        power_converged,
        converged_l,
        window: cfg.window,
        tol: cfg.tol,
    })
}

/// Per-node infection probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState(pub Vec<f64>);

/// One application of the mean-field map
/// `p_i' = 1 - mu p_i - (1 - p_i) prod_j (1 - lambda min(b_ij, 1) p_j)`,
/// clamped to `[0, 1]`.
pub fn mean_field_step(
    edges: &[(usize, usize)],
    weights: &[f64],
    lambda_max: f64,
    mu: f64,
    p: &[f64],
) -> Vec<f64> {
    let mut out = mean_field_map(edges, weights, lambda_max, mu, p);
    for v in &mut out {
        *v = v.clamp(0.0, 1.0);
    }
    out
}

/// The same map without clamping. Also defined for small negative `p`,
/// so it can be differentiated at the disease-free state.
pub fn mean_field_map(
    edges: &[(usize, usize)],
    weights: &[f64],
    lambda_max: f64,
    mu: f64,
    p: &[f64],
) -> Vec<f64> {
    // log of the escape product; 1 - xi via expm1 keeps tiny p accurate
    let mut log_escape = vec![0.0; p.len()];
    for (&(i, j), &w) in edges.iter().zip(weights) {
        let c = lambda_max * w.min(1.0);
        log_escape[i] += (-c * p[j]).ln_1p();
        log_escape[j] += (-c * p[i]).ln_1p();
    }
    p.iter()
        .zip(&log_escape)
        .map(|(&pi, &le)| -le.exp_m1() + pi * (le.exp() - mu))
        .collect()
}

/// Iterates the mean-field map from `p0` for `steps` steps, using snapshot
/// `tau` for step `tau`. Returns `steps + 1` states including `p0`.
pub fn mean_field_trajectory(
    seq: &SnapshotSequence,
    lambda_max: f64,
    mu: f64,
    p0: &MeanFieldState,
    steps: usize,
) -> Result<Vec<MeanFieldState>> {
    check_probability("lambda_max", lambda_max)?;
    check_probability("mu", mu)?;
    if p0.0.len() != seq.n() {
        return Err(Error::DimensionMismatch {
            expected: seq.n(),
            found: p0.0.len(),
        });
    }
    if p0.0.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidParameter("initial probabilities must lie in [0, 1]".into()));
    }
    if steps > seq.len() {
        return Err(Error::InsufficientSnapshots {
            requested: steps,
            available: seq.len(),
        });
    }
    let mut out = Vec::with_capacity(steps + 1);
    out.push(p0.clone());
    for tau in 0..steps {
        let next = mean_field_step(
            seq.edges(),
            seq.strengths(tau),
            lambda_max,
            mu,
            &out[tau].0,
        );
        out.push(MeanFieldState(next));
    }
    Ok(out)
}
