//! Combinatorial portfolio selection with the Chicago Quantum Net Score.
//!
//! The crate validates a stock universe, scores equal-weight subsets,
//! compiles the separable score into a QUBO / Ising model and minimizes it
//! with a team of solvers whose results feed a seeded genetic algorithm.
//!
//! Inner loops (covariance, matrix-vector products, batch scoring, solver
//! teams) run on rayon when the default `parallel` feature is enabled; see
//! [`parallel::ExecMode`].

pub mod heuristics;
pub mod market_data;
pub mod matrix;
pub mod parallel;
pub mod pipeline;
pub mod portfolio;
pub mod qubo;
pub mod sbm;
pub mod scoring;
pub mod synthetic;

pub use market_data::{PriceSeries, Universe};
pub use matrix::DenseMatrix;
pub use parallel::ExecMode;
pub use portfolio::Portfolio;
pub use qubo::{IsingModel, Qubo, QuboBuildSpec};
pub use scoring::{CqnsPower, ScoreReport};
