//! Decision tree induction with leaf grafting.
//!
//! Trees are grown and pruned in the C4.5 style ([`induce`]), then
//! post-processed by [`graft`], which adds leaves that relabel empty regions of
//! instance space next to existing leaves without changing how any training
//! example is classified. [`experiment`] runs repeated train/evaluate trials and
//! compares the variants with paired t-tests and a sign test ([`stats`]).

pub mod dataset;
pub mod experiment;
pub mod graft;
pub mod induce;
pub mod stats;
pub mod tree;

pub use dataset::{Dataset, Example, Schema, Value};
pub use graft::{post_process, GraftReport};
pub use induce::{train, InduceConfig};
pub use tree::{Node, NodePath, Tree};
