//! Zero-sum stochastic games with control and optimal stopping on
//! continuous-time Markov chains.
//!
//! Player I minimizes and may quit for `psi1`; player II maximizes and may
//! quit for `psi2`. The value is the unique fixed point of the clamped
//! Shapley operator on the uniformized chain.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dpi_solver;
pub mod error;
pub mod evaluator;
pub mod game_model;
pub mod matrix_game;
pub mod models;
pub mod report;
pub mod simulator;

pub use dpi_solver::{
    uniformize, value_iterate, verify_dpi, DpiReport, EquilibriumSolution, IterationConfig, StartPoint, StateClass,
    UniformizedModel,
};
pub use error::{Error, Result};
pub use evaluator::{exact_value, saddle_certificate, Player, SaddleConfig, StrategyProfile};
pub use game_model::{validate_model, GameModel, LyapunovCertificate, ModelBuilder, ValueFunction, Violation};
pub use matrix_game::{solve_matrix_game, GameSolution, MatrixGame};
pub use models::{build_queueing_model, QueueSpec};
