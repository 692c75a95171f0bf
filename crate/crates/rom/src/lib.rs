//! Non-intrusive reduced-order surrogate of the deployed stent: a POD basis
//! of displacement snapshots with one Gaussian-process regressor per
//! retained coefficient, plus the error measures used to assess it.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod evaluation;
pub mod gpr;
pub mod model;
pub mod pod;
mod simplex;

pub use evaluation::{aggregate, nodal_errors, ErrorSummary, NodalErrors, SolutionErrors, IMAGING_THRESHOLDS};
pub use gpr::{kernel_matern52, train_igpr, GprConfig, GprModel, Hyperparameters};
pub use model::{Prediction, ReducedModel, RomConfig};
pub use pod::{decompose, pod, truncation_rank, PodDecomposition, ReducedBasis, Truncation};
