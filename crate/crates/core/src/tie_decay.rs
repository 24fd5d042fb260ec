//! Tie-strength matrices and their evolution.
//!
//! A tie strength jumps by one at every interaction and decays as
//! `exp(-alpha * t)` in between. Time is discretized into steps of length
//! `dt`; an interaction falling in `((tau - 1) dt, tau dt]` is credited in full
//! at step `tau` (no partial-step decay).

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Symmetric, nonnegative tie-strength matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct TieMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl TieMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![0.0; n * n],
        }
    }

    /// Builds a matrix from upper-triangle entries `(i, j, strength)`.
    /// Repeated pairs overwrite earlier ones.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut m = Self::zeros(n);
        for (i, j, w) in edges {
            m.set(i, j, w)?;
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Sets `b_ij = b_ji = value`.
    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        check_pair(self.n, i, j)?;
        if !(value >= 0.0 && value.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tie strength must be finite and nonnegative, got {value}"
            )));
        }
        self.entries[i * self.n + j] = value;
        self.entries[j * self.n + i] = value;
        Ok(())
    }

    /// Row-major view of all `n * n` entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    /// Sum over all ordered pairs, i.e. both triangles.
    pub fn total(&self) -> f64 {
        self.entries.iter().sum()
    }

    /// Positive upper-triangle entries as `(i, j, b_ij)` with `i < j`.
    pub fn positive_edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| {
            ((i + 1)..n).filter_map(move |j| {
                let w = self.get(i, j);
                (w > 0.0).then_some((i, j, w))
            })
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            entries: self.entries.iter().map(|b| b * factor).collect(),
        }
    }

    /// Checks symmetry, zero diagonal and nonnegativity.
    pub fn is_valid(&self) -> bool {
        let n = self.n;
        (0..n).all(|i| {
            self.get(i, i) == 0.0
                && (0..n).all(|j| {
                    let b = self.get(i, j);
                    b >= 0.0 && b == self.get(j, i)
                })
        })
    }
}

/// Interactions that fall inside one step. A pair may occur several times.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InteractionMatrix {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl InteractionMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            pairs: Vec::new(),
        }
    }

    pub fn from_pairs<I>(n: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut m = Self::new(n);
        for (i, j) in pairs {
            m.push(i, j)?;
        }
        Ok(m)
    }

    /// Records one occurrence of the unordered pair `{i, j}`.
    pub fn push(&mut self, i: usize, j: usize) -> Result<()> {
        check_pair(self.n, i, j)?;
        self.pairs.push((i.min(j), i.max(j)));
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Pairs as `(min, max)`, in insertion order.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Number of pair occurrences.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Decay coefficient (per unit time) and step duration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayParams {
    alpha: f64,
    dt: f64,
}

impl DecayParams {
    pub fn new(alpha: f64, dt: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "decay coefficient must be positive, got {alpha}"
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "step duration must be positive, got {dt}"
            )));
        }
        Ok(Self { alpha, dt })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Per-step multiplicative decay `exp(-alpha * dt)`.
    pub fn factor(&self) -> f64 {
        (-self.alpha * self.dt).exp()
    }
}

fn check_pair(n: usize, i: usize, j: usize) -> Result<()> {
    if i >= n {
        return Err(Error::NodeOutOfRange { index: i, n });
    }
    if j >= n {
        return Err(Error::NodeOutOfRange { index: j, n });
    }
    if i == j {
        return Err(Error::SelfLoop(i));
    }
    Ok(())
}

/// One step of the recurrence `B' = exp(-alpha dt) B + A`.
pub fn step(b: &TieMatrix, a: &InteractionMatrix, decay: DecayParams) -> Result<TieMatrix> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            expected: b.n(),
            found: a.n(),
        });
    }
    let mut next = b.scaled(decay.factor());
    let n = next.n;
    for &(i, j) in a.pairs() {
        next.entries[i * n + j] += 1.0;
        next.entries[j * n + i] += 1.0;
    }
    Ok(next)
}

fn check_closed_form_args(alpha: f64, event_times: &[f64], t: f64) -> Result<()> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "decay coefficient must be positive, got {alpha}"
        )));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "query time must be nonnegative, got {t}"
        )));
    }
    if let Some(position) = event_times.windows(2).position(|w| !(w[0] <= w[1])) {
        return Err(Error::Unsorted {
            position: position + 1,
        });
    }
    Ok(())
}

fn closed_form_sum(b0: f64, alpha: f64, event_times: &[f64], t: f64, inclusive: bool) -> f64 {
    let counted = event_times
        .iter()
        .take_while(|&&tk| if inclusive { tk <= t } else { tk < t });
    b0 * (-alpha * t).exp() + counted.map(|&tk| (-alpha * (t - tk)).exp()).sum::<f64>()
}

/// Continuous-time tie strength at `t`, counting events strictly before `t`
/// (the value just before any event at `t` itself).
pub fn closed_form_strength(b0: f64, alpha: f64, event_times: &[f64], t: f64) -> Result<f64> {
    check_closed_form_args(alpha, event_times, t)?;
    Ok(closed_form_sum(b0, alpha, event_times, t, false))
}

/// Right limit of [`closed_form_strength`] at `t`: events at exactly `t` are
/// counted. This is the value a discrete snapshot `B(tau dt)` holds once the
/// interactions of step `tau` have been applied.
pub fn closed_form_strength_inclusive(
    b0: f64,
    alpha: f64,
    event_times: &[f64],
    t: f64,
) -> Result<f64> {
    check_closed_form_args(alpha, event_times, t)?;
    Ok(closed_form_sum(b0, alpha, event_times, t, true))
}

/// Elementwise `min(b_ij, 1)`.
pub fn capped(b: &TieMatrix) -> TieMatrix {
    TieMatrix {
        n: b.n,
        entries: b.entries.iter().map(|&x| x.min(1.0)).collect(),
    }
}

/// Lazily evaluated dense snapshots `B^(0), B^(1), ...`.
pub struct Snapshots<'a> {
    current: Option<TieMatrix>,
    interactions: std::slice::Iter<'a, InteractionMatrix>,
    decay: DecayParams,
}

/// Iterates `B^(0) = initial` followed by one snapshot per interaction matrix.
pub fn snapshots<'a>(
    initial: &TieMatrix,
    interactions: &'a [InteractionMatrix],
    decay: DecayParams,
) -> Snapshots<'a> {
    Snapshots {
        current: Some(initial.clone()),
        interactions: interactions.iter(),
        decay,
    }
}

impl Iterator for Snapshots<'_> {
    type Item = Result<TieMatrix>;

    fn next(&mut self) -> Option<Self::Item> {
        let current = self.current.take()?;
        if let Some(a) = self.interactions.next() {
            match step(&current, a, self.decay) {
                Ok(next) => self.current = Some(next),
                Err(e) => return Some(Err(e)),
            }
        }
        Some(Ok(current))
    }
}

/// All snapshots of a tie-decay network stored on their common support.
///
/// Ties can only be nonzero on pairs that start nonzero or interact at some
/// point, so each snapshot is one strength per support edge. Index `tau`
/// runs over `0..len()`, with `B^(0)` the initial matrix.
#[derive(Debug, Clone)]
pub struct SnapshotSequence {
    n: usize,
    edges: Vec<(usize, usize)>,
    strengths: Vec<f64>,
    len: usize,
}

impl SnapshotSequence {
    pub fn build(
        initial: &TieMatrix,
        interactions: &[InteractionMatrix],
        decay: DecayParams,
    ) -> Result<Self> {
        let n = initial.n();
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut add = |pair: (usize, usize), edges: &mut Vec<(usize, usize)>| {
            *index.entry(pair).or_insert_with(|| {
                edges.push(pair);
                edges.len() - 1
            })
        };
        let mut current: Vec<f64> = Vec::new();
        for (i, j, w) in initial.positive_edges() {
            add((i, j), &mut edges);
            current.push(w);
        }
        // resolve the support first so every row has the same width
        let mut per_step: Vec<Vec<usize>> = Vec::with_capacity(interactions.len());
        for a in interactions {
            if a.n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: a.n(),
                });
            }
            per_step.push(a.pairs().iter().map(|&p| add(p, &mut edges)).collect());
        }
        let width = edges.len();
        current.resize(width, 0.0);

        let len = interactions.len() + 1;
        let mut strengths = Vec::with_capacity(len * width);
        strengths.extend_from_slice(&current);
        let factor = decay.factor();
        for hits in &per_step {
            for b in current.iter_mut() {
                *b *= factor;
            }
            for &e in hits {
                current[e] += 1.0;
            }
            strengths.extend_from_slice(&current);
        }
        Ok(Self {
            n,
            edges,
            strengths,
            len,
        })
    }

    /// A sequence whose every snapshot equals `b`.
    pub fn constant(b: &TieMatrix, len: usize) -> Self {
        let (edges, row): (Vec<_>, Vec<_>) =
            b.positive_edges().map(|(i, j, w)| ((i, j), w)).unzip();
        let strengths = row.iter().copied().cycle().take(row.len() * len).collect();
        Self {
            n: b.n(),
            edges,
            strengths,
            len,
        }
    }

    /// Builds a sequence from dense snapshots (all of the same size).
    pub fn from_dense(snapshots: &[TieMatrix]) -> Result<Self> {
        let n = snapshots.first().map_or(0, TieMatrix::n);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if snapshots.iter().any(|b| b.n() == n && b.get(i, j) > 0.0) {
                    edges.push((i, j));
                }
            }
        }
        let mut strengths = Vec::with_capacity(edges.len() * snapshots.len());
        for b in snapshots {
            if b.n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: b.n(),
                });
            }
            strengths.extend(edges.iter().map(|&(i, j)| b.get(i, j)));
        }
        Ok(Self {
            n,
            edges,
            strengths,
            len: snapshots.len(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of snapshots (steps + 1).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Support pairs `(i, j)` with `i < j`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Uncapped strengths of snapshot `tau`, aligned with [`Self::edges`].
    pub fn strengths(&self, tau: usize) -> &[f64] {
        let w = self.edges.len();
        &self.strengths[tau * w..(tau + 1) * w]
    }

    /// `sum_ij b_ij` over both triangles.
    pub fn total_strength(&self, tau: usize) -> f64 {
        2.0 * self.strengths(tau).iter().sum::<f64>()
    }

    /// Dense copy of snapshot `tau`.
    pub fn snapshot(&self, tau: usize) -> TieMatrix {
        let mut m = TieMatrix::zeros(self.n);
        for (&(i, j), &w) in self.edges.iter().zip(self.strengths(tau)) {
            m.entries[i * self.n + j] = w;
            m.entries[j * self.n + i] = w;
        }
        m
    }
}
