//! IC-Trees: deterministic probability trees whose splits and leaf
//! distributions live in per-node independent-component coordinates.
//!
//! A trained [`IcTreeModel`] is a weighted sum of fully factorized leaves.
//! Each leaf stores an [`IcaTransform`] and one piecewise-uniform [`Qpd`] per
//! transformed component, so the leaf density in the original space is
//! `|det W| * prod_j q_j((W (x - mean))_j)`.
//!
//! Exact marginals over such leaves are not tractable, so the query side
//! ([`inference`]) works by sampling: likelihoods are exact, while marginals,
//! conditional moments and conditional sampling are Monte Carlo estimates.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod distributions;
mod error;
pub mod ica;
pub mod inference;
pub mod persist;
pub mod tree;

pub use data::{ColumnKind, ColumnSpec, Dataset, Value};
pub use distributions::{Multinomial, Qpd};
pub use error::{Error, Result};
pub use ica::{IcaFit, IcaTransform};
pub use inference::{Evidence, ModelView, MpeResult};
pub use tree::{fit, Hyperparams, IcTreeModel, Leaf, LinearSplit, Node, Split, SymbolicSplit};
