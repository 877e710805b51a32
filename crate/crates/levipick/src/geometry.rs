//! Cylindrical ring array and the planar comparison array.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::acoustics::{wrap_phase, PhysicalConstants, SourceState, Transducer, Vec3};
use crate::error::{Error, Result};

/// Stacked rings of inward-facing transducers around the z axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderSpec {
    pub rings: usize,
    pub transducers_per_ring: usize,
    /// Ring diameter (m), measured between opposing emitter faces.
    pub ring_diameter: f64,
    /// Height of each ring level (m), lowest first.
    pub ring_heights: Vec<f64>,
    /// Azimuthal phase order m: emitter j of every ring is driven at m 2 pi j / n.
    pub helicity: i32,
    pub transducer: Transducer,
}

impl CylinderSpec {
    /// Default four-ring, 56-channel cylinder for the given medium.
    pub fn default_for(constants: &PhysicalConstants) -> Self {
        Self {
            rings: 4,
            transducers_per_ring: 14,
            ring_diameter: 5.0 * constants.wavelength(),
            ring_heights: vec![4e-3, 14e-3, 40e-3, 60e-3],
            helicity: 1,
            transducer: Transducer::default(),
        }
    }

    pub fn channel_count(&self) -> usize {
        self.rings * self.transducers_per_ring
    }

    pub fn radius(&self) -> f64 {
        0.5 * self.ring_diameter
    }

    pub fn validate(&self) -> Result<()> {
        if self.rings == 0 || self.transducers_per_ring == 0 {
            return Err(Error::InvalidSpec("cylinder needs at least one ring and one transducer".into()));
        }
        if self.ring_heights.len() != self.rings {
            return Err(Error::Mismatch {
                expected: self.rings,
                found: self.ring_heights.len(),
            });
        }
        if self.ring_heights.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(Error::InvalidSpec("ring heights must be positive".into()));
        }
        if self.ring_heights.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSpec("ring heights must be strictly increasing".into()));
        }
        let aperture_diameter = 2.0 * self.transducer.aperture_radius;
        if !(self.ring_diameter > 2.0 * aperture_diameter) {
            return Err(Error::InvalidSpec(format!(
                "ring diameter {} must exceed twice the aperture diameter {}",
                self.ring_diameter, aperture_diameter
            )));
        }
        validate_transducer(&self.transducer)
    }

    /// Drive phase (rad) of emitter `j` within a ring for the helical pattern.
    pub fn helical_phase(&self, j: usize) -> f64 {
        wrap_phase(f64::from(self.helicity) * 2.0 * PI * j as f64 / self.transducers_per_ring as f64)
    }
}

pub(crate) fn validate_transducer(t: &Transducer) -> Result<()> {
    if !(t.reference_pressure.is_finite() && t.reference_pressure >= 0.0) {
        return Err(Error::Domain {
            what: "reference pressure",
            value: t.reference_pressure,
        });
    }
    if !(t.aperture_radius.is_finite() && t.aperture_radius >= 0.0) {
        return Err(Error::Domain {
            what: "aperture radius",
            value: t.aperture_radius,
        });
    }
    Ok(())
}

/// Build the ring sources with channel = ring_level * per_ring + angular index.
///
/// Phases follow the helical pattern; ring level 0 is the lowest.
pub fn build_cylinder(spec: &CylinderSpec) -> Result<Vec<SourceState>> {
    spec.validate()?;
    let n = spec.transducers_per_ring;
    let r = spec.radius();
    let mut out = Vec::with_capacity(spec.channel_count());
    for (level, &z) in spec.ring_heights.iter().enumerate() {
        for j in 0..n {
            let angle = 2.0 * PI * j as f64 / n as f64;
            let (s, c) = angle.sin_cos();
            let src = SourceState::new(Vec3::new(r * c, r * s, z), Vec3::new(-c, -s, 0.0), spec.transducer)?
                .with_phase(spec.helical_phase(j))
                .with_channel(level * n + j);
            out.push(src);
        }
    }
    Ok(out)
}

/// Rectangular grid of emitters in a horizontal plane, focused on one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanarSpec {
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Centre-to-centre spacing (m).
    pub pitch: f64,
    /// Height of the emitter plane (m).
    pub height: f64,
    pub focus: Vec3,
    pub transducer: Transducer,
}

impl PlanarSpec {
    pub fn count(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    pub fn validate(&self) -> Result<()> {
        if self.count() == 0 {
            return Err(Error::InvalidSpec("planar grid is empty".into()));
        }
        if !(self.pitch.is_finite() && self.pitch > 0.0) {
            return Err(Error::Domain {
                what: "pitch",
                value: self.pitch,
            });
        }
        if !(self.focus.z > self.height) {
            return Err(Error::InvalidSpec("focus must lie above the emitter plane".into()));
        }
        validate_transducer(&self.transducer)
    }
}

/// Build a planar array facing its focus, with phase_i = -k |focus - position_i|.
///
/// The grid is centred on the focus in x and y and radiates towards +z.
pub fn build_planar(spec: &PlanarSpec, constants: &PhysicalConstants) -> Result<Vec<SourceState>> {
    spec.validate()?;
    let k = constants.wavenumber();
    let x0 = spec.focus.x - 0.5 * (spec.grid_cols as f64 - 1.0) * spec.pitch;
    let y0 = spec.focus.y - 0.5 * (spec.grid_rows as f64 - 1.0) * spec.pitch;
    let mut out = Vec::with_capacity(spec.count());
    for row in 0..spec.grid_rows {
        for col in 0..spec.grid_cols {
            let pos = Vec3::new(x0 + col as f64 * spec.pitch, y0 + row as f64 * spec.pitch, spec.height);
            let phase = -k * (spec.focus - pos).norm();
            let src = SourceState::new(pos, Vec3::z(), spec.transducer)?
                .with_phase(phase)
                .with_channel(row * spec.grid_cols + col);
            out.push(src);
        }
    }
    Ok(out)
}
