//! Deterministic fail-stop fault injection.
//!
//! Rows of the augmented system are owned by processes. A fault plan lists the
//! iterations at whose end some processes stop; from then on the components
//! they own are frozen at their last values, which the surviving processes
//! keep as snapshots.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Stream, StreamId};
use crate::sparse::IndexMask;

/// How raw components are grouped into processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    /// One process per raw component.
    Component,
    /// `p` contiguous blocks of raw components.
    Blocks(usize),
}

/// Ownership of the `n + k` augmented components by processes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessTopology {
    n: usize,
    k: usize,
    assignments: Vec<Vec<usize>>,
    reliable: Vec<usize>,
    owner: Vec<usize>,
}

/// Splits the raw components by `granularity` and gives every redundant
/// component to one extra process that never fails. When `k = 0` there is no
/// reliable process.
pub fn build_topology(n: usize, k: usize, granularity: Granularity) -> Result<ProcessTopology> {
    let mut assignments: Vec<Vec<usize>> = match granularity {
        Granularity::Component => (0..n).map(|i| vec![i]).collect(),
        Granularity::Blocks(p) => {
            if p == 0 || p > n {
                return Err(Error::Config(format!(
                    "cannot split {n} components into {p} blocks"
                )));
            }
            let (base, extra) = (n / p, n % p);
            let mut start = 0;
            (0..p)
                .map(|b| {
                    let len = base + usize::from(b < extra);
                    let block = (start..start + len).collect();
                    start += len;
                    block
                })
                .collect()
        }
    };
    let mut reliable = Vec::new();
    if k > 0 {
        reliable.push(assignments.len());
        assignments.push((n..n + k).collect());
    }
    let mut owner = vec![0; n + k];
    for (pid, set) in assignments.iter().enumerate() {
        for &i in set {
            owner[i] = pid;
        }
    }
    Ok(ProcessTopology {
        n,
        k,
        assignments,
        reliable,
        owner,
    })
}

impl ProcessTopology {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_processes(&self) -> usize {
        self.assignments.len()
    }

    pub fn indices(&self, process: usize) -> &[usize] {
        &self.assignments[process]
    }

    pub fn owner(&self, index: usize) -> usize {
        self.owner[index]
    }

    pub fn reliable_processes(&self) -> &[usize] {
        &self.reliable
    }

    pub fn is_reliable(&self, process: usize) -> bool {
        self.reliable.contains(&process)
    }
}

/// One fault event: at the end of CG iteration `iteration` (counting from 1),
/// the processes owning `victim_indices` stop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub iteration: usize,
    pub victim_indices: Vec<usize>,
}

/// Fault schedule, JSON form `{"events":[{"iteration":N,"victim_indices":[...]}]}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultPlan {
    pub events: Vec<FaultEvent>,
}

impl FaultPlan {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Iteration of the first event, if any.
    pub fn fault_point(&self) -> Option<usize> {
        self.events.first().map(|e| e.iteration)
    }

    pub fn event_at(&self, iteration: usize) -> Option<&FaultEvent> {
        self.events.iter().find(|e| e.iteration == iteration)
    }

    /// Checks ordering, victim ranges, the reliable-process restriction and
    /// that the cumulative faulty set never exceeds `k`.
    pub fn validate(&self, topology: &ProcessTopology) -> Result<()> {
        let mut faulty = std::collections::BTreeSet::new();
        let mut last = 0;
        for ev in &self.events {
            if ev.iteration == 0 || ev.iteration <= last {
                return Err(Error::InvalidPlan(format!(
                    "event iterations must be positive and strictly increasing, got {} after {}",
                    ev.iteration, last
                )));
            }
            last = ev.iteration;
            for &v in &ev.victim_indices {
                if v >= topology.n() + topology.k() {
                    return Err(Error::InvalidPlan(format!("victim index {v} out of range")));
                }
                let pid = topology.owner(v);
                if topology.is_reliable(pid) {
                    return Err(Error::InvalidPlan(format!(
                        "index {v} belongs to reliable process {pid}"
                    )));
                }
                faulty.extend(topology.indices(pid).iter().copied());
            }
            if faulty.len() > topology.k() {
                return Err(Error::FaultCapacity {
                    faulty: faulty.len(),
                    k: topology.k(),
                });
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        serde_json::to_writer(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }
}

/// Single simultaneous fault of `k` distinct raw components, injected at the
/// end of an iteration drawn uniformly from `[1, floor(max_iter_fraction * n)]`.
/// Draws come from the [`StreamId::Faults`] sub-stream of `seed`.
pub fn sample_fault_plan(
    n: usize,
    k: usize,
    max_iter_fraction: f64,
    seed: u64,
) -> Result<FaultPlan> {
    if k > n {
        return Err(Error::InvalidPlan(format!("k = {k} exceeds n = {n}")));
    }
    if !(max_iter_fraction > 0.0 && max_iter_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "fault fraction must lie in (0, 1], got {max_iter_fraction}"
        )));
    }
    if k == 0 {
        return Ok(FaultPlan::none());
    }
    let mut stream = Stream::sub_stream(seed, StreamId::Faults);
    let last = ((max_iter_fraction * n as f64).floor() as u64).max(1);
    let iteration = 1 + stream.below(last) as usize;
    let mut victim_indices = stream.sample_distinct(n, k);
    victim_indices.sort_unstable();
    Ok(FaultPlan {
        events: vec![FaultEvent {
            iteration,
            victim_indices,
        }],
    })
}

/// Live fault state owned by one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultState {
    mask: IndexMask,
    snapshots: BTreeMap<usize, f64>,
    last_event_iteration: Option<usize>,
    last_seen_iteration: Option<usize>,
    capacity: usize,
}

impl FaultState {
    pub fn new(topology: &ProcessTopology) -> Self {
        Self {
            mask: IndexMask::empty(topology.n() + topology.k()),
            snapshots: BTreeMap::new(),
            last_event_iteration: None,
            last_seen_iteration: None,
            capacity: topology.k(),
        }
    }

    /// Faulty indices as an exclusion mask over the augmented components.
    pub fn mask(&self) -> &IndexMask {
        &self.mask
    }

    pub fn faulty_indices(&self) -> &[usize] {
        self.mask.excluded()
    }

    pub fn snapshots(&self) -> &BTreeMap<usize, f64> {
        &self.snapshots
    }

    pub fn last_event_iteration(&self) -> Option<usize> {
        self.last_event_iteration
    }

    /// Applies the plan's event for the end of `iteration`, if any, capturing
    /// the current values of newly faulty components. Returns whether new
    /// faults appeared.
    pub fn advance(
        &mut self,
        plan: &FaultPlan,
        topology: &ProcessTopology,
        iteration: usize,
        x_current: &[f64],
    ) -> Result<bool> {
        if let Some(prev) = self.last_seen_iteration {
            if iteration <= prev {
                return Err(Error::Precondition(format!(
                    "iteration {iteration} presented after {prev}"
                )));
            }
        }
        self.last_seen_iteration = Some(iteration);
        let Some(event) = plan.event_at(iteration) else {
            return Ok(false);
        };
        if x_current.len() != self.mask.universe_size() {
            return Err(Error::Dimension(format!(
                "iterate of length {} for {} components",
                x_current.len(),
                self.mask.universe_size()
            )));
        }
        let mut fresh = Vec::new();
        for &v in &event.victim_indices {
            if v >= topology.n() + topology.k() {
                return Err(Error::InvalidPlan(format!("victim index {v} out of range")));
            }
            let pid = topology.owner(v);
            if topology.is_reliable(pid) {
                return Err(Error::InvalidPlan(format!(
                    "index {v} belongs to reliable process {pid}"
                )));
            }
            for &i in topology.indices(pid) {
                if !self.mask.is_excluded(i) && !fresh.contains(&i) {
                    fresh.push(i);
                }
            }
        }
        let total = self.mask.n_excluded() + fresh.len();
        if total > self.capacity {
            return Err(Error::FaultCapacity {
                faulty: total,
                k: self.capacity,
            });
        }
        for &i in &fresh {
            self.mask.exclude(i)?;
            self.snapshots.insert(i, x_current[i]);
        }
        self.last_event_iteration = Some(iteration);
        Ok(!fresh.is_empty())
    }
}
