//! Primal estimation with the Frank-Wolfe (conditional gradient) method.
//!
//! Each iteration linearizes `D(., p^t)` at the current iterate, asks the
//! oracle for the best vertex and moves towards it with step `2 / (t + 1)`.
//! The iterate is always a convex combination of vertices, so the model is
//! read off directly from the chosen rankings.

use crate::data::{DataSource, Feed};
use crate::distance::Distance;
use crate::error::{Error, Result};
use crate::fit::{FitResult, TraceRow, DEFAULT_STOP_MAE};
use crate::model::{mae_masked, ChoiceVector, Instance, ModelBuilder, Ranking, Snapshot};
use crate::oracle;

#[derive(Debug, Clone)]
pub struct FwConfig {
    /// Horizon `T`; at most `T - 1` steps are taken.
    pub max_iter: usize,
    pub stop_train_mae: Option<f64>,
    pub distance: Distance,
    /// Starting vertex; the identity ranking when unset.
    pub init: Option<Ranking>,
}

impl FwConfig {
    pub fn new(distance: Distance, max_iter: usize) -> Self {
        Self {
            max_iter,
            stop_train_mae: Some(DEFAULT_STOP_MAE),
            distance,
            init: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter < 1 {
            return Err(Error::Config("iteration budget must be at least 1".into()));
        }
        if let Some(s) = self.stop_train_mae {
            if !(s > 0.0) {
                return Err(Error::Config(format!("stopping threshold {s} must be positive")));
            }
        }
        if !self.distance.supports_fw() {
            return Err(Error::UnsupportedDistance {
                distance: self.distance.name().into(),
                reason: "its curvature constant over the rankings polytope is infinite, \
                         so Frank-Wolfe has no convergence guarantee; use sql2 or the dual algorithm"
                    .into(),
            });
        }
        Ok(())
    }
}

/// Result of a single Frank-Wolfe step.
#[derive(Debug, Clone)]
pub struct FwStep {
    pub next: ChoiceVector,
    pub ranking: Ranking,
    pub gamma: f64,
    /// `<gradient, z>` at the chosen vertex.
    pub oracle_value: f64,
}

/// Step size `2 / (t + 1)`.
pub fn step_size(t: usize) -> f64 {
    2.0 / (t as f64 + 1.0)
}

/// One step from `x` (the iterate at iteration `t >= 1`) against `snap`.
pub fn fw_step(inst: &Instance, x: &ChoiceVector, snap: &Snapshot, t: usize, distance: &Distance) -> Result<FwStep> {
    if t < 1 {
        return Err(Error::Config("iterations are numbered from 1".into()));
    }
    let grad = distance.subgradient(inst, x, &snap.probs, &snap.mask)?;
    let sol = oracle::solve_bnb(inst, &grad)?;
    let z = inst.vertex(&sol.ranking)?;
    let gamma = step_size(t);
    let next = x
        .as_slice()
        .iter()
        .zip(z.as_slice())
        .map(|(a, b)| (1.0 - gamma) * a + gamma * b)
        .collect();
    Ok(FwStep {
        next: ChoiceVector::from_vec(next),
        ranking: sol.ranking,
        gamma,
        oracle_value: sol.value,
    })
}

/// Runs Frank-Wolfe on the snapshots of `source` until the horizon or the
/// MAE threshold against the averaged snapshots is reached.
pub fn fw_run<S: DataSource + ?Sized>(inst: &Instance, cfg: &FwConfig, source: &mut S) -> Result<FitResult> {
    cfg.validate()?;
    let init = cfg.init.clone().unwrap_or_else(|| Ranking::identity(inst.n()));
    let mut x = inst.vertex(&init)?;
    let mut weights = ModelBuilder::default();
    weights.add(&init, 1.0);

    let mut feed = Feed::start(source, inst)?;
    let mut trace = Vec::new();
    let mut stopped_by_rule = false;
    let mut steps = 0;

    for t in 1..cfg.max_iter {
        if t > 1 {
            feed.advance();
        }
        let train_mae = mae_masked(inst, &feed.mean.mean(), &x, &feed.current().mask)?;
        if cfg.stop_train_mae.is_some_and(|s| train_mae <= s) {
            stopped_by_rule = true;
            break;
        }
        let step = fw_step(inst, &x, feed.current(), t, &cfg.distance)?;
        if step.gamma >= 1.0 {
            weights = ModelBuilder::default();
        } else {
            weights.scale(1.0 - step.gamma);
        }
        weights.add(&step.ranking, step.gamma);
        x = step.next;
        steps = t;

        let snap = feed.current();
        trace.push(TraceRow {
            t,
            objective: cfg.distance.value(inst, &x, &snap.probs, &snap.mask)?,
            train_mae: mae_masked(inst, &feed.mean.mean(), &x, &snap.mask)?,
            certificate: None,
            sparsity: weights.len(),
        });
    }

    let model = weights.build();
    let prediction = inst.predict(&model)?;
    let train_mae = mae_masked(inst, &feed.mean.mean(), &prediction, &feed.current().mask)?;
    if !stopped_by_rule {
        stopped_by_rule = cfg.stop_train_mae.is_some_and(|s| train_mae <= s);
    }
    Ok(FitResult {
        model,
        prediction,
        iterations_used: steps,
        trace,
        data_snapshots_used: feed.mean.count(),
        observations_used: feed.observations_used(),
        train_mae,
        stopped_by_rule,
    })
}
