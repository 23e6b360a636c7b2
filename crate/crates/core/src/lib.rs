//! Policy iteration for sequential zero-sum games and minimax control.
//!
//! Problems are posed in a separated form: the minimizer moves at states of
//! `X1`, the maximizer at states of `X2`, and the two half-stage operators
//! `H1`, `H2` read each other's value tables. The [`async_pi`] module runs
//! the asynchronous, optimistic four-operation policy iteration on any
//! [`framework::MinimaxProblem`]; [`classic_pi`] holds the standard
//! baselines, and [`models`] the Markov-game and minimax-control instances.

pub mod aggregation;
pub mod async_pi;
pub mod classic_pi;
pub mod error;
pub mod framework;
pub mod matrix_game;
pub mod models;

pub use error::{Result, SolverError};
