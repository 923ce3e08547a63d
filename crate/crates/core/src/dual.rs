//! Dual estimation by regret minimization over the dual ball.
//!
//! For a norm distance `D(x, p) = ||x - p||` the conjugate on the dual ball
//! `Y` is `<y, p>`, so the dual objective at iteration `t` is the linear
//! function `f^t(y) = <z^t - p^t, y>` where `z^t` minimizes `<z, y^t>` over
//! the polytope. The dual points follow projected (Euclidean mirror) ascent
//! with a constant step, and the primal answer is the plain average of the
//! vertices `z^t`. The realized average regret of the dual sequence bounds
//! the primal optimality gap and is reported as a certificate.

use crate::data::{DataSource, Feed};
use crate::distance::{diameter_bound, Distance};
use crate::error::{Error, Result};
use crate::fit::{FitResult, TraceRow, DEFAULT_STOP_MAE};
use crate::model::{mae_masked, ChoiceVector, Instance, ModelBuilder, Ranking, Snapshot};
use crate::oracle;

#[derive(Debug, Clone)]
pub struct DualConfig {
    /// Horizon `T`.
    pub max_iter: usize,
    pub stop_train_mae: Option<f64>,
    pub distance: Distance,
    /// Set width of `Y`; derived from the ball geometry when unset.
    pub omega: Option<f64>,
    /// Euclidean bound on the supergradients; `sqrt(2m)` when unset.
    pub grad_bound: Option<f64>,
}

impl DualConfig {
    pub fn new(distance: Distance, max_iter: usize) -> Self {
        Self {
            max_iter,
            stop_train_mae: Some(DEFAULT_STOP_MAE),
            distance,
            omega: None,
            grad_bound: None,
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
        if !self.distance.supports_dual() {
            return Err(Error::UnsupportedDistance {
                distance: self.distance.name().into(),
                reason: "the dual algorithm needs a norm distance (l1, l2 or linf)".into(),
            });
        }
        for (name, v) in [("omega", self.omega), ("gradient bound", self.grad_bound)] {
            if v.is_some_and(|v| !(v > 0.0)) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Resolved step-size constants for `inst`.
    pub fn constants(&self, inst: &Instance) -> Result<DualConstants> {
        self.validate()?;
        let ball = self.distance.dual_ball().expect("validated norm distance");
        let omega = self.omega.unwrap_or_else(|| ball.set_width(inst.dim()));
        let grad_bound = self.grad_bound.unwrap_or_else(|| diameter_bound(inst.m()));
        Ok(DualConstants::new(omega, grad_bound, self.max_iter))
    }
}

/// Step size and regret bound of a dual run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualConstants {
    pub omega: f64,
    pub grad_bound: f64,
    pub horizon: usize,
    /// `sqrt(2 omega / T) / G`
    pub step: f64,
}

impl DualConstants {
    pub fn new(omega: f64, grad_bound: f64, horizon: usize) -> Self {
        let step = (2.0 * omega / horizon as f64).sqrt() / grad_bound;
        Self {
            omega,
            grad_bound,
            horizon,
            step,
        }
    }

    /// `G sqrt(2 omega / T)`: average regret bound after the full horizon.
    pub fn regret_bound(&self) -> f64 {
        self.grad_bound * (2.0 * self.omega / self.horizon as f64).sqrt()
    }

    /// Average regret bound after `t <= T` steps with this step size:
    /// `omega / (step t) + step G^2 / 2`. Equals [`Self::regret_bound`] at `t = T`.
    pub fn regret_bound_at(&self, t: usize) -> f64 {
        self.omega / (self.step * t as f64) + 0.5 * self.step * self.grad_bound * self.grad_bound
    }
}

/// Dual iterate plus the sufficient statistics of the functions seen so far.
#[derive(Debug, Clone)]
pub struct DualState {
    pub y: Vec<f64>,
    pub z_sum: Vec<f64>,
    pub t: usize,
    /// `sum_t (z^t - p^t)` over masked-in coordinates.
    pub grad_sum: Vec<f64>,
    /// `f^t(y^t)` for every step taken.
    pub played: Vec<f64>,
    /// The vertex ranking chosen at every step.
    pub rankings: Vec<Ranking>,
    played_sum: f64,
    weights: ModelBuilder,
}

impl DualState {
    /// The state at the minimizer of `0.5 ||y||^2` over `Y`, i.e. `y = 0`.
    pub fn new(inst: &Instance) -> Self {
        let dim = inst.dim();
        Self {
            y: vec![0.0; dim],
            z_sum: vec![0.0; dim],
            t: 0,
            grad_sum: vec![0.0; dim],
            played: Vec::new(),
            rankings: Vec::new(),
            played_sum: 0.0,
            weights: ModelBuilder::default(),
        }
    }

    /// The averaged primal point `sum z^t / t`.
    pub fn primal(&self) -> ChoiceVector {
        let t = self.t.max(1) as f64;
        ChoiceVector::from_vec(self.z_sum.iter().map(|z| z / t).collect())
    }

    pub fn sparsity(&self) -> usize {
        self.weights.len()
    }
}

/// One dual iteration against `snap` with ascent step `gamma`.
pub fn dual_step(inst: &Instance, state: &mut DualState, snap: &Snapshot, distance: &Distance, gamma: f64) -> Result<()> {
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("step size {gamma} must be positive")));
    }
    let ball = distance
        .dual_ball()
        .ok_or_else(|| Error::UnsupportedDistance {
            distance: distance.name().into(),
            reason: "no dual ball".into(),
        })?;
    inst.check_len(snap.probs.len())?;

    let mut cost = vec![0.0; inst.dim()];
    for j in (0..inst.m()).filter(|&j| snap.mask[j]) {
        for k in inst.block(j) {
            cost[k] = state.y[k];
        }
    }
    let sol = oracle::solve_bnb(inst, &cost)?;
    let z = inst.vertex(&sol.ranking)?;

    let p = snap.probs.as_slice();
    let mut grad = vec![0.0; inst.dim()];
    for j in (0..inst.m()).filter(|&j| snap.mask[j]) {
        for k in inst.block(j) {
            grad[k] = z.as_slice()[k] - p[k];
        }
    }
    let played: f64 = grad.iter().zip(&state.y).map(|(g, y)| g * y).sum();

    let stepped: Vec<f64> = state.y.iter().zip(&grad).map(|(y, g)| y + gamma * g).collect();
    state.y = ball.project(&stepped);
    for (s, v) in state.z_sum.iter_mut().zip(z.as_slice()) {
        *s += v;
    }
    for (s, g) in state.grad_sum.iter_mut().zip(&grad) {
        *s += g;
    }
    state.played.push(played);
    state.played_sum += played;
    state.weights.add(&sol.ranking, 1.0);
    state.rankings.push(sol.ranking);
    state.t += 1;
    Ok(())
}

/// Realized average regret `max_{y in Y} (1/T) sum f^t(y) - (1/T) sum f^t(y^t)`.
///
/// The functions are linear, so the maximum is the primal norm of the
/// averaged supergradient.
pub fn regret_certificate(state: &DualState, distance: &Distance) -> Result<f64> {
    if state.t == 0 {
        return Err(Error::Config("no dual steps taken".into()));
    }
    let t = state.t as f64;
    let mean: Vec<f64> = state.grad_sum.iter().map(|g| g / t).collect();
    let best = distance.norm(&mean)?;
    let achieved = state.played_sum / t;
    Ok(best - achieved)
}

/// Outcome of a dual run beyond the fitted model.
#[derive(Debug, Clone)]
pub struct DualReport {
    pub certificate: f64,
    pub constants: DualConstants,
    /// `max_t f^t(y^t)`; a lower bound on the optimal distance in static runs.
    pub best_dual_value: f64,
    pub state: DualState,
}

impl DualReport {
    /// `G sqrt(2 omega / T)`.
    pub fn regret_bound(&self) -> f64 {
        self.constants.regret_bound()
    }
}

pub fn dual_run<S: DataSource + ?Sized>(inst: &Instance, cfg: &DualConfig, source: &mut S) -> Result<(FitResult, DualReport)> {
    let constants = cfg.constants(inst)?;
    let mut feed = Feed::start(source, inst)?;
    let mut state = DualState::new(inst);
    let mut trace = Vec::new();
    let mut stopped_by_rule = false;

    for t in 1..=cfg.max_iter {
        if t > 1 {
            feed.advance();
        }
        dual_step(inst, &mut state, feed.current(), &cfg.distance, constants.step)?;
        let x = state.primal();
        let snap = feed.current();
        let train_mae = mae_masked(inst, &feed.mean.mean(), &x, &snap.mask)?;
        trace.push(TraceRow {
            t,
            objective: cfg.distance.value(inst, &x, &snap.probs, &snap.mask)?,
            train_mae,
            certificate: Some(regret_certificate(&state, &cfg.distance)?),
            sparsity: state.sparsity(),
        });
        if cfg.stop_train_mae.is_some_and(|s| train_mae <= s) {
            stopped_by_rule = true;
            break;
        }
    }

    let model = state.weights.build();
    let prediction = inst.predict(&model)?;
    let train_mae = mae_masked(inst, &feed.mean.mean(), &prediction, &feed.current().mask)?;
    let certificate = regret_certificate(&state, &cfg.distance)?;
    let best_dual_value = state.played.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let fit = FitResult {
        model,
        prediction,
        iterations_used: state.t,
        trace,
        data_snapshots_used: feed.mean.count(),
        observations_used: feed.observations_used(),
        train_mae,
        stopped_by_rule,
    };
    Ok((
        fit,
        DualReport {
            certificate,
            constants,
            best_dual_value,
            state,
        },
    ))
}
