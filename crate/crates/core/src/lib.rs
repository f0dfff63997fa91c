//! Bounded variation in the sense of Hardy–Krause for functions of several
//! variables: joint increments, joint derivatives, variation by partition
//! refinement, Jordan decomposition, classification and numerical checks of
//! the differentiation theorems.

pub mod classify;
pub mod cli;
pub mod differentiation;
pub mod error;
pub mod geometry;
pub mod gridfile;
pub mod increment;
pub mod quadrature;
pub mod report;
pub mod source;
pub mod variation;
pub mod verify;
pub mod zoo;
pub mod sum;

pub use differentiation::{derivative_field, derivative_field_with, CellRule, dini_bracket, joint_derivative, DerivativeEstimate, DerivativeField, HSchedule};
pub use error::{Error, Result};
pub use geometry::{GridPartition, GridSample, QuadrantSign, Rect};
pub use increment::{joint_increment, joint_increment_recursive, tilde_transform};
pub use source::{clamp_extension, FuncSource, Interp};
pub use variation::{check_additivity, jordan_decompose, total_variation, variation_on_partition, JordanPair, RefineMode, RefinePolicy, StopReason, VariationResult};
pub use classify::{classify_ac, is_componentwise_monotone, is_jointly_monotone, ACVerdict, AcClass, MonotonicityReport, Verdict};
pub use zoo::{zoo_build, zoo_list, Params, Tag, ZooEntry, ZooFunction};
pub use verify::{run_batch, run_check, Relation, Theorem, TheoremReport, VerifyConfig};
pub use gridfile::{read_grid, write_grid};
pub use report::{emit_report, ReportFormat};
