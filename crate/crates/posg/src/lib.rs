//! Solver for one-sided partially observable stochastic games in which the
//! partially-informed agent perceives a continuous environment through ReLU
//! network classifiers.
//!
//! The solver computes certified lower and upper bounds on the discounted
//! zero-sum value by heuristic search value iteration over polyhedral
//! state-space partitions, and synthesises strategies for both agents from
//! the converged bounds.

pub mod belief;
pub mod cli;
pub mod fixtures;
pub mod geometry;
pub mod hsvi;
pub mod lower;
pub mod lp;
pub mod model;
pub mod relu;
pub mod strategy;
pub mod upper;
