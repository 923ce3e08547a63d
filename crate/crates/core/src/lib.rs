//! Sparse non-parametric choice models: rankings, distances, the ranking
//! oracle and the primal and dual estimators.

pub mod data;
pub mod distance;
pub mod dual;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod fw;
pub mod io;
pub mod model;
pub mod oracle;
pub mod sim;

pub use data::{DataSource, ReplaySource, SequenceSource, StaticSource};
pub use distance::{Distance, DualBall};
pub use dual::{dual_run, DualConfig, DualReport};
pub use error::{Error, Result};
pub use fit::{FitResult, TraceRow};
pub use fw::{fw_run, FwConfig};
pub use model::{mae, mae_masked, ChoiceVector, EmpiricalStats, Instance, Observation, Ranking, Snapshot, SparseModel};
pub use sim::{Batch, MixedMnl, StreamConfig};
