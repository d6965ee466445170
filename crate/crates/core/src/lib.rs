//! Event-driven stochastic simulation of the quantum Boltzmann master
//! equation for a finite, trapped Bose gas.
//!
//! The crate is organised around a small number of layers:
//!
//! * [`catalog`]: one-particle modes and degenerate energy blocks
//! * [`state`]: occupation configurations and collision vectors
//! * [`kernel`]: transition rates and channel enumeration
//! * [`engine`]: the Gillespie event loop with incremental rate maintenance
//! * [`equilibrium`] and [`master`]: non-stochastic reference results
//! * [`observables`] and [`stats`]: estimators built from trajectories
//! * [`classical`]: semiclassical density of states and collision integral
//! * [`config`], [`presets`], [`plan`]: run descriptions and output bundles

pub mod catalog;
pub mod classical;
pub mod config;
pub mod engine;
pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod fluctuation;
pub mod kernel;
pub mod lattice;
pub mod master;
pub mod observables;
pub mod plan;
pub mod presets;
pub mod state;
pub mod stats;
pub mod validation;

pub use error::{Error, Result};
