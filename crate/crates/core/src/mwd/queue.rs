use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};

use super::plan::TilingPlan;
use crate::{Error, Result};

/// One executed tile. `start`/`end` are ticks of a logical clock advanced under
/// the queue lock, so they order pops and completions across groups exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tile: usize,
    pub group: usize,
    pub start: u64,
    pub end: u64,
    /// Digest of the tile's update set.
    pub digest: u64,
}

struct Inner {
    ready: VecDeque<usize>,
    remaining: Vec<usize>,
    enqueued: Vec<bool>,
    done: usize,
    idle: usize,
    tick: u64,
    started: Vec<Option<(usize, u64)>>,
    trace: Vec<TraceRecord>,
    stuck: Option<Vec<usize>>,
}

/// FIFO of ready tiles with per-tile outstanding-dependency counters.
pub struct TileQueue<'p> {
    plan: &'p TilingPlan,
    groups: usize,
    inner: Mutex<Inner>,
    wake: Condvar,
}

impl<'p> TileQueue<'p> {
    pub fn new(plan: &'p TilingPlan, groups: usize) -> Self {
        let n = plan.num_tiles();
        let remaining: Vec<usize> = plan.deps.iter().map(Vec::len).collect();
        let ready: VecDeque<usize> = plan.initial_tiles().into();
        let mut enqueued = vec![false; n];
        for &k in &ready {
            enqueued[k] = true;
        }
        Self {
            plan,
            groups,
            inner: Mutex::new(Inner {
                ready,
                remaining,
                enqueued,
                done: 0,
                idle: 0,
                tick: 0,
                started: vec![None; n],
                trace: Vec::with_capacity(n),
                stuck: None,
            }),
            wake: Condvar::new(),
        }
    }

    /// Blocks until a tile is ready. `Ok(None)` once every tile is done; a
    /// deadlock error when every group is idle, nothing is ready and tiles remain.
    pub fn pop(&self, group: usize) -> Result<Option<usize>> {
        let mut g = self.inner.lock().expect("tile queue poisoned");
        loop {
            if let Some(stuck) = &g.stuck {
                return Err(Error::Deadlock { stuck: stuck.clone() });
            }
            if g.done == self.plan.num_tiles() {
                return Ok(None);
            }
            if let Some(k) = g.ready.pop_front() {
                g.tick += 1;
                let t = g.tick;
                g.started[k] = Some((group, t));
                return Ok(Some(k));
            }
            g.idle += 1;
            if g.idle == self.groups {
                let stuck: Vec<usize> = (0..self.plan.num_tiles())
                    .filter(|&k| g.started[k].is_none())
                    .collect();
                g.stuck = Some(stuck.clone());
                self.wake.notify_all();
                return Err(Error::Deadlock { stuck });
            }
            g = self.wake.wait(g).expect("tile queue poisoned");
            g.idle -= 1;
        }
    }

    /// Marks `tile` finished and releases successors whose counters reach zero,
    /// in ascending id order.
    pub fn complete(&self, tile: usize) {
        let mut g = self.inner.lock().expect("tile queue poisoned");
        g.tick += 1;
        let end = g.tick;
        let (group, start) = g.started[tile].expect("completed tile was never popped");
        g.trace.push(TraceRecord { tile, group, start, end, digest: self.plan.tiles[tile].update_digest() });
        g.done += 1;
        let mut released = false;
        for &s in &self.plan.successors[tile] {
            g.remaining[s] -= 1;
            if g.remaining[s] == 0 {
                assert!(!g.enqueued[s], "tile {s} enqueued twice");
                g.enqueued[s] = true;
                g.ready.push_back(s);
                released = true;
            }
        }
        if released || g.done == self.plan.num_tiles() {
            self.wake.notify_all();
        }
    }

    pub fn into_trace(self) -> Vec<TraceRecord> {
        self.inner.into_inner().expect("tile queue poisoned").trace
    }
}

/// Writes a trace as JSON lines.
pub fn write_trace(trace: &[TraceRecord], mut out: impl std::io::Write) -> Result<()> {
    for r in trace {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace(input: impl std::io::BufRead) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
