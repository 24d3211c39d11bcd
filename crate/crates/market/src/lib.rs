//! Command-line data market built on the `tpdm` protocol crate.
//!
//! [`session`] runs a whole market session in one process, [`store`] keeps
//! the registration center's state on disk for the stateful CLI, and
//! [`bench`] holds the performance experiments.

pub mod bench;
pub mod config;
pub mod dataset;
pub mod session;
pub mod steps;
pub mod store;
pub mod wire;
