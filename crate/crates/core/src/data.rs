//! Sources of empirical choice vectors fed to the solvers, one per iteration.

use crate::error::Result;
use crate::model::{ChoiceVector, EmpiricalStats, Instance, Observation, Snapshot};

/// Yields one empirical snapshot `p^t` per solver iteration.
///
/// Solvers fail when the very first call returns `None`; a source that runs
/// dry later keeps its last snapshot in force.
pub trait DataSource {
    fn next_snapshot(&mut self) -> Option<Snapshot>;

    /// Observations folded in so far, for sampled sources.
    fn observations_used(&self) -> Option<u64> {
        None
    }
}

/// The same snapshot at every iteration.
#[derive(Debug, Clone)]
pub struct StaticSource {
    snapshot: Snapshot,
}

impl StaticSource {
    pub fn new(snapshot: Snapshot) -> Self {
        Self { snapshot }
    }

    /// A static source over a fully observed choice vector.
    pub fn exact(inst: &Instance, p: ChoiceVector) -> Self {
        Self::new(Snapshot::exact(p, inst.m()))
    }
}

impl DataSource for StaticSource {
    fn next_snapshot(&mut self) -> Option<Snapshot> {
        Some(self.snapshot.clone())
    }
}

/// A fixed, finite sequence of snapshots.
#[derive(Debug, Clone)]
pub struct SequenceSource {
    snapshots: std::vec::IntoIter<Snapshot>,
}

impl SequenceSource {
    pub fn new(snapshots: Vec<Snapshot>) -> Self {
        Self {
            snapshots: snapshots.into_iter(),
        }
    }
}

impl DataSource for SequenceSource {
    fn next_snapshot(&mut self) -> Option<Snapshot> {
        self.snapshots.next()
    }
}

/// Replays a recorded observation log: the first snapshot aggregates
/// `initial` observations, each later one adds the next `batch`.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    inst: Instance,
    log: Vec<Observation>,
    initial: usize,
    batch: usize,
    cursor: usize,
    stats: EmpiricalStats,
    started: bool,
}

impl ReplaySource {
    pub fn new(inst: Instance, log: Vec<Observation>, initial: usize, batch: usize) -> Result<Self> {
        // validate the whole log up front
        EmpiricalStats::new(&inst).record(&inst, &log)?;
        let stats = EmpiricalStats::new(&inst);
        Ok(Self {
            inst,
            log,
            initial,
            batch: batch.max(1),
            cursor: 0,
            stats,
            started: false,
        })
    }
}

impl DataSource for ReplaySource {
    fn next_snapshot(&mut self) -> Option<Snapshot> {
        let take = if self.started { self.batch } else { self.initial };
        if self.started && self.cursor >= self.log.len() {
            return None;
        }
        let end = (self.cursor + take).min(self.log.len());
        self.stats
            .record(&self.inst, &self.log[self.cursor..end])
            .expect("log validated on construction");
        self.cursor = end;
        self.started = true;
        Some(self.stats.empirical_probs(&self.inst))
    }

    fn observations_used(&self) -> Option<u64> {
        Some(self.stats.total())
    }
}

/// Running mean of the snapshots seen so far.
#[derive(Debug, Clone)]
pub(crate) struct RunningMean {
    mean: Vec<f64>,
    count: usize,
}

impl RunningMean {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            count: 0,
        }
    }

    // The incremental form leaves a constant stream exactly unchanged.
    pub fn push(&mut self, p: &[f64]) {
        self.count += 1;
        let k = self.count as f64;
        for (m, v) in self.mean.iter_mut().zip(p) {
            *m += (v - *m) / k;
        }
    }

    pub fn mean(&self) -> ChoiceVector {
        ChoiceVector::from_vec(self.mean.clone())
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

/// Pulls snapshots for a solver run, reusing the last one once the source
/// is exhausted, and tracks their running mean.
pub(crate) struct Feed<'a, S: DataSource + ?Sized> {
    source: &'a mut S,
    last: Snapshot,
    pub mean: RunningMean,
}

impl<'a, S: DataSource + ?Sized> Feed<'a, S> {
    pub fn start(source: &'a mut S, inst: &Instance) -> Result<Self> {
        let first = source.next_snapshot().ok_or(crate::Error::EmptyData)?;
        inst.check_len(first.probs.len())?;
        if first.mask.len() != inst.m() {
            return Err(crate::Error::LengthMismatch {
                expected: inst.m(),
                got: first.mask.len(),
            });
        }
        let mut mean = RunningMean::new(inst.dim());
        mean.push(first.probs.as_slice());
        Ok(Self {
            source,
            last: first,
            mean,
        })
    }

    /// The snapshot for the current iteration.
    pub fn current(&self) -> &Snapshot {
        &self.last
    }

    pub fn advance(&mut self) {
        if let Some(s) = self.source.next_snapshot() {
            self.last = s;
        }
        self.mean.push(self.last.probs.as_slice());
    }

    pub fn observations_used(&self) -> Option<u64> {
        self.source.observations_used()
    }
}
