//! Normal-form rule learning.
//!
//! A discrete two-layer logical network whose neurons pick AND/OR, whose
//! connections and input negations are sign-binarized latent weights, and
//! whose second layer is constrained so that every neuron reads as a CNF or
//! DNF formula over binarized input literals. A linear head turns rule truth
//! values into class logits, and [`rules::extract_rules`] reproduces the
//! network's logits exactly from the extracted rule set.
//!
//! The crate is `no_std` and only needs `alloc`. File IO, the command line
//! front end and wall-clock timing live in the companion `nfrl` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod binarize;
pub mod data;
mod error;
pub mod math;
pub mod metrics;
pub mod network;
pub mod rules;
pub mod train;

pub use binarize::{BinarizerModel, Binning, LiteralKind, LiteralSpec};
pub use data::{Column, ColumnKind, Dataset, GroundTruthRule, Schema, Value};
pub use error::{Error, Result};
pub use network::{BinaryView, ForwardTrace, Network, NfrlModel, Op};
pub use rules::{Clause, Literal, Rule, RuleForm, RuleSet};
pub use train::{train, TrainConfig, TrainHistory};
