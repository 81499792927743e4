//! Document-level natural language inference over contracts.
//!
//! Given a contract and a fixed set of hypotheses, classify each hypothesis as
//! entailed, contradicted or not mentioned, and rank the contract's spans
//! (sentences and inline list items) as evidence.

pub mod aggregate;
pub mod baselines;
pub mod cli;
pub mod context;
pub mod corpus;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod segmentation;
pub mod synthetic;
