//! Offline analysis of control runs and plant models: suppression metrics,
//! optimal (Wiener) filters, step-size stability bounds under message
//! delay, and per-sample arithmetic cost models.

mod bounds;
mod complexity;
mod nse;
mod wiener;

pub use bounds::{
    characteristic_stability, step_bound, CharPolyReport, NodeEigenSummary, StepBoundReport,
};
pub use complexity::{complexity_row, complexity_table, Algorithm, ComplexityRow, SystemDims};
pub use nse::{nse_db, nse_trace, NseTrace};
pub use wiener::{wiener_filters, WienerProblem, WienerSolution};

pub(crate) use bounds::delay_shrink_factor;
pub(crate) use wiener::correlation_block;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("signal contains non-finite values")]
    NonFinite,
    #[error("disturbance carries no power, suppression ratio is undefined")]
    SilentBaseline,
    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}
