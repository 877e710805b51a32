//! HTTP service and command-line front end for the levipick simulator.
//!
//! Each session owns one emulated controller and the particle it drives.
//! Commands are applied serially per session; a commit settles the particle
//! in the new field and pushes an event to every subscriber.

pub mod api;
pub mod cli;
pub mod session;
