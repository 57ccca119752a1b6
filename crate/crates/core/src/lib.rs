//! Sparse linear support vector machines solved by a feature-split,
//! symmetric Gauss-Seidel semi-proximal ADMM.

// Guards of the form `!(x > 0.0)` deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod benchmark;
pub mod data;
pub mod engine;
pub mod error;
pub mod lp;
pub mod par;
pub mod selection;
pub mod subsolvers;
pub mod synthetic;

pub use data::{
    build_signed_design, load_dataset, make_partition, objective, BlockPartition, DataFormat,
    Dataset, PenaltyWeights, SignedDesign, SolverConfig, Variant,
};
pub use engine::{fit_weighted_l1_svm, AdmmState, Engine, FitOutput, FitResult, ModelDoc};
pub use error::{Result, SvmError};
pub use par::Execution;
