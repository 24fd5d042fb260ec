//! Contact-log ingestion: parse `t i j` records, pick a step length and bin
//! the log into per-step interaction matrices.

use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{Event, EventLog};
use crate::tie_decay::InteractionMatrix;

/// Timestamp resolution of the public face-to-face contact datasets.
pub const DEFAULT_RESOLUTION: f64 = 20.0;

/// A parsed contact file.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactLog {
    pub log: EventLog,
    /// Raw identifier of each dense node index.
    pub node_ids: Vec<u64>,
    /// Amount subtracted from every raw timestamp.
    pub time_offset: f64,
}

/// Parses whitespace-separated `t i j` records. Blank lines and lines
/// starting with `#` are skipped; extra columns are ignored.
///
/// Records are stably sorted by time, node identifiers are mapped to
/// `0..N` in order of first appearance in the sorted log, and times are
/// shifted so the earliest record sits at `t = 0`.
pub fn parse_contact_file<R: BufRead>(source: R) -> Result<ContactLog> {
    parse_contact_file_with(source, true)
}

pub fn parse_contact_file_with<R: BufRead>(source: R, shift_to_zero: bool) -> Result<ContactLog> {
    let mut raw: Vec<(f64, u64, u64)> = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected `t i j`, found {} field(s)", fields.len()),
            });
        }
        let t: f64 = fields[0].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("invalid timestamp `{}`", fields[0]),
        })?;
        if !t.is_finite() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("invalid timestamp `{}`", fields[0]),
            });
        }
        let node = |s: &str| {
            s.parse::<u64>().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("invalid node identifier `{s}`"),
            })
        };
        let (i, j) = (node(fields[1])?, node(fields[2])?);
        if i == j {
            return Err(Error::Parse {
                line: lineno,
                message: format!("self-contact of node {i}"),
            });
        }
        raw.push((t, i, j));
    }

    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let time_offset = match (shift_to_zero, raw.first()) {
        (true, Some(first)) => first.0,
        _ => 0.0,
    };
    if !shift_to_zero && raw.iter().any(|r| r.0 < 0.0) {
        return Err(Error::InvalidParameter(
            "negative timestamps require shifting to zero".into(),
        ));
    }

    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut node_ids = Vec::new();
    let mut dense = |id: u64| {
        *index.entry(id).or_insert_with(|| {
            node_ids.push(id);
            node_ids.len() - 1
        })
    };
    let events: Vec<Event> = raw
        .iter()
        .map(|&(t, i, j)| Event {
            t: t - time_offset,
            i: dense(i),
            j: dense(j),
        })
        .collect();
    let horizon = events.last().map_or(0.0, |e| e.t);
    let log = EventLog::new(node_ids.len(), events, horizon)?;
    Ok(ContactLog {
        log,
        node_ids,
        time_offset,
    })
}

/// Step length and resulting number of steps for a log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationPlan {
    pub dt: f64,
    pub num_steps: usize,
    /// Largest number of events observed in any single step.
    pub max_per_bin: usize,
    /// Whether `max_per_bin` respects the requested bound. Always true for a
    /// forced step length.
    pub within_bound: bool,
}

/// Step index of time `t`: `((tau - 1) dt, tau dt]` maps to `tau`, and
/// `t = 0` maps to step 1.
#[inline]
pub fn step_index(t: f64, dt: f64) -> usize {
    ((t / dt).ceil() as usize).max(1)
}

fn max_bin_count(log: &EventLog, dt: f64) -> usize {
    let mut best = 0;
    let mut current = (0usize, 0usize);
    for e in log.events() {
        let tau = step_index(e.t, dt);
        if tau == current.0 {
            current.1 += 1;
        } else {
            current = (tau, 1);
        }
        best = best.max(current.1);
    }
    best
}

fn steps_for(log: &EventLog, dt: f64) -> usize {
    log.last_time().map_or(1, |t| step_index(t, dt))
}

/// Plan for a user-forced step length; the per-step maximum is only reported.
pub fn plan_for_dt(log: &EventLog, dt: f64) -> Result<DiscretizationPlan> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "step duration must be positive, got {dt}"
        )));
    }
    Ok(DiscretizationPlan {
        dt,
        num_steps: steps_for(log, dt),
        max_per_bin: max_bin_count(log, dt),
        within_bound: true,
    })
}

/// Largest step length on the grid `r * {1, 2, 5} * 10^k` such that no step
/// holds more than `max_per_bin` events. The grid stops at the first value
/// covering the whole log. Falls back to `resolution` with
/// `within_bound = false` when even that is too coarse.
pub fn choose_dt(log: &EventLog, max_per_bin: usize, resolution: f64) -> Result<DiscretizationPlan> {
    if log.is_empty() {
        return Err(Error::EmptyInput("contact log has no events"));
    }
    if max_per_bin == 0 {
        return Err(Error::InvalidParameter("max_per_bin must be at least 1".into()));
    }
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "resolution must be positive, got {resolution}"
        )));
    }
    let span = log.last_time().unwrap_or(0.0);
    let mut candidates = Vec::new();
    let mut decade = 1.0;
    'grid: loop {
        for m in [1.0, 2.0, 5.0] {
            let dt = resolution * m * decade;
            candidates.push(dt);
            if dt >= span {
                break 'grid;
            }
        }
        decade *= 10.0;
    }
    for &dt in candidates.iter().rev() {
        let max = max_bin_count(log, dt);
        if max <= max_per_bin {
            return Ok(DiscretizationPlan {
                dt,
                num_steps: steps_for(log, dt),
                max_per_bin: max,
                within_bound: true,
            });
        }
    }
    log::warn!("no step length satisfies max {max_per_bin} events per step; using {resolution}");
    Ok(DiscretizationPlan {
        dt: resolution,
        num_steps: steps_for(log, resolution),
        max_per_bin: max_bin_count(log, resolution),
        within_bound: false,
    })
}

/// Bins the log into `A^(1), ..., A^(T)`, returned in step order. Events past
/// `plan.num_steps * plan.dt` are not represented.
pub fn discretize(log: &EventLog, plan: &DiscretizationPlan) -> Vec<InteractionMatrix> {
    let n = log.n();
    let mut steps = vec![InteractionMatrix::new(n); plan.num_steps];
    for e in log.events() {
        let tau = step_index(e.t, plan.dt);
        if let Some(a) = steps.get_mut(tau - 1) {
            a.push(e.i, e.j).expect("event log endpoints are validated");
        }
    }
    steps
}
