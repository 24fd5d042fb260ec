//! Synthetic inputs: connected Erdős–Rényi backbones, per-edge exponential
//! interaction streams and the initial tie matrix.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{Event, EventLog};
use crate::rng::substream;
use crate::tie_decay::TieMatrix;

/// Resampling cap for connected draws.
pub const DEFAULT_MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErConfig {
    pub n: usize,
    pub p: f64,
    pub require_connected: bool,
    pub seed: u64,
}

impl ErConfig {
    pub fn new(n: usize, p: f64, seed: u64) -> Self {
        Self {
            n,
            p,
            require_connected: true,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("node count must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidParameter(format!(
                "edge probability must lie in [0, 1], got {}",
                self.p
            )));
        }
        if self.require_connected && self.p == 0.0 && self.n > 1 {
            return Err(Error::Infeasible(format!(
                "a connected graph on {} nodes needs p > 0",
                self.n
            )));
        }
        Ok(())
    }
}

/// Undirected simple graph stored as sorted pairs `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSet {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl EdgeSet {
    pub fn new(n: usize, mut edges: Vec<(usize, usize)>) -> Result<Self> {
        for e in edges.iter_mut() {
            if e.0 >= n || e.1 >= n {
                return Err(Error::NodeOutOfRange {
                    index: e.0.max(e.1),
                    n,
                });
            }
            if e.0 == e.1 {
                return Err(Error::SelfLoop(e.0));
            }
            *e = (e.0.min(e.1), e.0.max(e.1));
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self { n, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i.min(j), i.max(j))).is_ok()
    }

    pub fn is_connected(&self) -> bool {
        let mut uf = UnionFind::new(self.n);
        let mut components = self.n;
        for &(i, j) in &self.edges {
            if uf.union(i, j) {
                components -= 1;
            }
        }
        components <= 1
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Pairs are visited in sorted order `(0,1), (0,2), ..., (1,2), ...` and the
/// number of non-edges before the next edge is a geometric draw, so the cost
/// is linear in the number of edges.
fn draw_er(n: usize, p: f64, rng: &mut impl Rng) -> EdgeSet {
    let mut edges = Vec::new();
    if p > 0.0 && n > 1 {
        // inverse-transform geometric draw; p = 1 gives ln(0) = -inf and k = 0
        let log_q = (-p).ln_1p();
        let mut gap = || ((1.0 - rng.random::<f64>()).ln() / log_q).floor() as u64;
        // next candidate pair is (i, j)
        let (mut i, mut j) = (0usize, 1usize);
        while i + 1 < n {
            let mut k = gap();
            while i + 1 < n && k >= (n - j) as u64 {
                k -= (n - j) as u64;
                i += 1;
                j = i + 1;
            }
            if i + 1 >= n {
                break;
            }
            j += k as usize;
            edges.push((i, j));
            j += 1;
            if j == n {
                i += 1;
                j = i + 1;
            }
        }
    }
    EdgeSet { n, edges }
}

/// Samples `G(n, p)`. With `require_connected`, whole graphs are redrawn
/// (attempt `k` uses substream `k`) until one is connected.
pub fn generate_er(cfg: &ErConfig) -> Result<EdgeSet> {
    generate_er_with_cap(cfg, DEFAULT_MAX_ATTEMPTS)
}

pub fn generate_er_with_cap(cfg: &ErConfig, max_attempts: usize) -> Result<EdgeSet> {
    cfg.validate()?;
    let attempts = if cfg.require_connected { max_attempts } else { 1 };
    for attempt in 0..attempts {
        let mut rng = substream(cfg.seed, attempt as u64);
        let g = draw_er(cfg.n, cfg.p, &mut rng);
        if !cfg.require_connected || g.is_connected() {
            if attempt > 0 {
                log::debug!("connected G({}, {}) after {} draws", cfg.n, cfg.p, attempt + 1);
            }
            return Ok(g);
        }
    }
    Err(Error::Exhausted {
        attempts: max_attempts,
    })
}

/// Exponential inter-event times with mean `beta` steps of length `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaitingTimeConfig {
    pub beta: f64,
    pub dt: f64,
    pub seed: u64,
}

impl WaitingTimeConfig {
    pub fn new(beta: f64, seed: u64) -> Self {
        Self { beta, dt: 1.0, seed }
    }
}

/// Independent renewal process per edge (edge `e` uses substream `e`), each
/// starting from a fresh exponential draw at `t = 0` and truncated at
/// `horizon`. The merged log is sorted by time.
pub fn generate_event_times(edges: &EdgeSet, w: &WaitingTimeConfig, horizon: f64) -> Result<EventLog> {
    if !(w.beta > 0.0 && w.beta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "mean waiting time must be positive, got {}",
            w.beta
        )));
    }
    if !(w.dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "step duration must be positive, got {}",
            w.dt
        )));
    }
    if !(horizon >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon must be nonnegative, got {horizon}"
        )));
    }
    let exp = Exp::new(1.0 / (w.beta * w.dt)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut events = Vec::new();
    if horizon > 0.0 {
        for (e, &(i, j)) in edges.edges().iter().enumerate() {
            let mut rng = substream(w.seed, e as u64);
            let mut t = exp.sample(&mut rng);
            while t <= horizon {
                events.push(Event { t, i, j });
                t += exp.sample(&mut rng);
            }
        }
    }
    EventLog::new(edges.n(), events, horizon)
}

/// Initial tie matrix with `strength` on every edge.
pub fn initial_tie_matrix(edges: &EdgeSet, strength: f64) -> Result<TieMatrix> {
    if !(strength >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "initial strength must be nonnegative, got {strength}"
        )));
    }
    TieMatrix::from_edges(edges.n(), edges.edges().iter().map(|&(i, j)| (i, j, strength)))
}
