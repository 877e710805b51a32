//! Error type shared by every module.

use thiserror::Error;

/// Failures reported by the field model, analysis, planner and device emulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A numeric argument lies outside its admissible domain.
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },

    /// Field evaluation requested at (or too close to) a source position.
    #[error("field evaluated {distance:e} m from a source")]
    SingularPoint { distance: f64 },

    /// A mirror image would coincide with its own source.
    #[error("source lies on reflector plane z = {height}")]
    DegenerateImage { height: f64 },

    /// A geometry, particle or motion specification is inconsistent.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// A device command line failed to parse.
    #[error("parse error at column {column}: {reason}")]
    Parse { column: usize, reason: String },

    /// A device command addressed a channel or ring that does not exist.
    #[error("{what} {value} out of range (limit {limit})")]
    Range {
        what: &'static str,
        value: i64,
        limit: i64,
    },

    /// Two inputs that must agree in size do not.
    #[error("size mismatch: expected {expected}, found {found}")]
    Mismatch { expected: usize, found: usize },

    /// The picking planner could not reach a stage target.
    #[error("planning failed: {0}")]
    Planning(String),

    /// A simulated particle left the manipulator volume.
    #[error("particle escaped at ({x:.4}, {y:.4}, {z:.4}) m")]
    Escape { x: f64, y: f64, z: f64 },

    /// Configuration text could not be read.
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// True for malformed input, as opposed to a run that failed.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Self::Planning(_) | Self::Escape { .. } | Self::SingularPoint { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
