//! Command-line and HTTP front ends of the crowd simulator.

pub mod commands;
pub mod server;
