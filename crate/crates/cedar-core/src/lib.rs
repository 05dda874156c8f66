//! Optimal excess-of-loss reinsurance and investment for an insurer facing
//! a defaultable corporate bond, a stochastic-volatility stock and a
//! risk-free account, under exponential utility of terminal wealth.
//!
//! The problem splits at the default time. The post-default field solves a
//! linear parabolic terminal-value problem; the pre-default log-field solves
//! a semilinear one with a quadratic gradient. Both are marched with an
//! explicit finite-difference scheme ([`pde`]); the optimal controls and
//! value functions assemble from the solved fields ([`strategy`]); a
//! reproducible Monte Carlo engine ([`sim`]) provides independent oracles
//! for the solver outputs and the optimality of the controls.

pub mod error;
pub mod grid;
pub mod market;
pub mod pde;
pub mod sim;
pub mod strategy;

pub use error::{Error, Result};
pub use grid::{FieldGrid, GridSpec};
pub use market::{DefaultTerms, GKind, ModelParams, SigmaKind};
pub use pde::{CflReport, PreDefaultSolution};
pub use sim::{Controls, Estimate, SimConfig, SimPath};
pub use strategy::{MonotonicityReport, Strategy, StrategyPair, StrategySurface, ValueFunction};
