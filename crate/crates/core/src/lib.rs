//! Subgroup discovery for multivariate real-valued targets, scored by
//! subjective interestingness against an evolving maximum-entropy Gaussian
//! model of what the analyst already knows.
//!
//! The pieces, bottom-up:
//!
//! * [`data`]: datasets, descriptor conditions, intentions and extensions,
//!   the synthetic benchmark generator.
//! * [`model`]: the background distribution as a block-partitioned product
//!   of Gaussians and its constraint updates.
//! * [`scoring`]: information content, description length and their ratio.
//! * [`search`]: beam search over conjunctive descriptions.
//! * [`spreadopt`]: the most surprising projection direction of a subgroup.
//! * [`session`]: the iterative mine/assimilate loop and its persistence.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod linalg;
pub mod model;
pub mod scoring;
pub mod search;
pub mod session;
pub mod spreadopt;

mod serde_la;

pub use data::{
    AttributeKind, AttributeRole, AttributeSchema, Condition, Dataset, Extension, Intention,
    Predicate, RowMask, SchemaConfig,
};
pub use model::{BackgroundModel, GaussianBlock, LocationPattern, Pattern, SpreadPattern};
pub use scoring::{DlParams, PatternKind, ScoreBreakdown};
pub use search::{RankedPattern, SearchParams};
pub use session::Session;
pub use spreadopt::{DirectionOptions, DirectionResult};
