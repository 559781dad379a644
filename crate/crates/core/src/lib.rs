//! Teacher-student training for dense classifiers.
//!
//! The crate provides soft, interpolated and conditional teacher-student losses, a small
//! feed-forward network with manual backpropagation, domain- and speaker-adaptation
//! pipelines, deterministic synthetic benchmarks and the experiment harness behind the
//! `distilkit` command-line tool.
//!
//! Conditional training picks a per-sample target: the teacher's posteriors when the
//! teacher's prediction matches the ground truth, the one-hot label otherwise.

pub mod adaptation;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod losses;
pub mod numerics;
pub mod synthdata;

pub use error::{Error, Result};
