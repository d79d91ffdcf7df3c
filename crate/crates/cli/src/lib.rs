//! Config-driven experiment runner for the `bcpnp` solver.

pub mod build;
pub mod config;
pub mod run;
pub mod validate;
