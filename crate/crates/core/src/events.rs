//! Timestamped undirected contacts, shared by the synthetic generator and the
//! contact-file reader.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One instantaneous contact between two distinct nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub i: usize,
    pub j: usize,
}

/// Contacts sorted by time over `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventLog {
    n: usize,
    events: Vec<Event>,
    horizon: f64,
}

impl EventLog {
    /// Validates and stores `events`; they are stably sorted by time.
    pub fn new(n: usize, mut events: Vec<Event>, horizon: f64) -> Result<Self> {
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be finite and nonnegative, got {horizon}"
            )));
        }
        for e in &events {
            if e.i >= n || e.j >= n {
                return Err(Error::NodeOutOfRange {
                    index: e.i.max(e.j),
                    n,
                });
            }
            if e.i == e.j {
                return Err(Error::SelfLoop(e.i));
            }
            if !(e.t >= 0.0 && e.t <= horizon) {
                return Err(Error::InvalidParameter(format!(
                    "event time {} outside [0, {horizon}]",
                    e.t
                )));
            }
        }
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(Self { n, events, horizon })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            n,
            events: Vec::new(),
            horizon: 0.0,
        }
    }

    /// Number of nodes the log refers to.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Latest event time, if any.
    pub fn last_time(&self) -> Option<f64> {
        self.events.last().map(|e| e.t)
    }

    /// Writes one `t i j` record per line.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        for e in &self.events {
            writeln!(out, "{} {} {}", e.t, e.i, e.j)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("records are ASCII")
    }
}
