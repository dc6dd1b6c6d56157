//! Synthetic corpora, evaluation and reporting around the core analysis and
//! the learned detector.

pub mod config;
pub mod corpus;
pub mod families;
pub mod fixtures;
pub mod ir;
pub mod metrics;
pub mod pipeline;
pub mod programs;
pub mod report;
pub mod static_eval;
pub mod truth;
