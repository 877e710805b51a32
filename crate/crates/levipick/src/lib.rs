//! Ultrasonic levitation picking: acoustic field model, trap analysis,
//! phase controller emulation and lift planning for a cylindrical array.
//!
//! The layers build on each other:
//!
//! - [`acoustics`]: piston sources, pressure and particle velocity.
//! - [`images`]: rigid reflectors as mirror sources.
//! - [`geometry`]: cylindrical and planar array layouts.
//! - [`gorkov`]: potential, radiation force, trap nodes and field grids.
//! - [`device`]: the 56-channel phase controller and its line protocol.
//! - [`planner`]: commit schedules that lift a particle stage by stage.
//! - [`dynamics`]: overdamped settling, schedule replay and basin maps.
//! - [`experiments`] and [`config`]: reproducible runs driven by `arrayspec v1` files.
//!
//! Run any example with `cargo run --release --example <name>`.

pub mod acoustics;
pub mod config;
pub mod device;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod gorkov;
pub mod images;
pub mod planner;
