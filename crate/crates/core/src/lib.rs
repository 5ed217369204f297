//! Discovery of the region of a state space where a cheap surrogate model
//! leads a decision maker to the same decision as a high-validity reference
//! model.
//!
//! The crate is organised bottom-up:
//!
//! - [`domain`]: state points, parameter spaces, decisions and the decision metric.
//! - [`constraints`]: domain constraints, feasibility and monotone inference over a cache of experiments.
//! - [`search`]: boundary bisection, the nested region search and a brute-force grid oracle.
//! - [`vehicle`]: the constant-acceleration surrogate and the controller-based fixed-point reference model.
//! - [`decision`]: quantity extraction from traces and the lane-change decision rule.
//! - [`scenario`]: the lane-change case study wired into the search.

pub mod constraints;
pub mod decision;
pub mod domain;
pub mod scenario;
pub mod search;
pub mod vehicle;
