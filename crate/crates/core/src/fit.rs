//! Output types shared by the estimation algorithms.

use crate::model::{ChoiceVector, SparseModel};

/// Default stopping threshold on the training MAE.
pub const DEFAULT_STOP_MAE: f64 = 0.001;

/// One row of a solver trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    /// Distance of the current iterate to the current snapshot.
    pub objective: f64,
    /// MAE of the current iterate against the averaged snapshots.
    pub train_mae: f64,
    /// Running regret certificate (dual algorithm only).
    pub certificate: Option<f64>,
    pub sparsity: usize,
}

/// The learned model and run diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: SparseModel,
    pub prediction: ChoiceVector,
    pub iterations_used: usize,
    pub trace: Vec<TraceRow>,
    pub data_snapshots_used: usize,
    /// Observations folded into the data, for sampled sources.
    pub observations_used: Option<u64>,
    /// MAE of the prediction against the averaged snapshots.
    pub train_mae: f64,
    /// True when the run ended through the MAE threshold rather than the
    /// iteration budget.
    pub stopped_by_rule: bool,
}

impl FitResult {
    pub fn sparsity(&self) -> usize {
        self.model.sparsity()
    }
}
