//! `arrayspec v1` configuration files.
//!
//! A TOML document with a `schema` key and optional sections; every missing
//! section or key takes its library default.
//!
//! ```toml
//! schema = "arrayspec v1"
//!
//! [physics]
//! speed_of_sound = 343.0
//! density = 1.2
//! frequency = 40000.0
//!
//! [transducer]
//! reference_pressure = 10.0
//! aperture_radius = 0.0045
//!
//! [cylinder]
//! rings = 4
//! transducers_per_ring = 14
//! ring_heights = [0.004, 0.014, 0.040, 0.060]
//! helicity = 1
//!
//! [[reflectors]]
//! height = 0.0
//! coefficient = 1.0
//!
//! [particle]
//! radius = 0.001
//! density = 239.0
//!
//! [motion]
//! step_limit = 20000
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acoustics::{PhysicalConstants, Transducer};
use crate::dynamics::{BasinOptions, MotionParams, Rig};
use crate::error::{Error, Result};
use crate::experiments::{DishSettings, PlanarSettings, Setup};
use crate::geometry::CylinderSpec;
use crate::gorkov::Particle;
use crate::images::Reflector;
use crate::planner::PlannerOptions;

pub const SCHEMA: &str = "arrayspec v1";

/// Cylinder layout; the ring diameter defaults to five wavelengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderSection {
    pub rings: usize,
    pub transducers_per_ring: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ring_diameter: Option<f64>,
    pub ring_heights: Vec<f64>,
    pub helicity: i32,
}

impl Default for CylinderSection {
    fn default() -> Self {
        let g = CylinderSpec::default_for(&PhysicalConstants::default());
        Self {
            rings: g.rings,
            transducers_per_ring: g.transducers_per_ring,
            ring_diameter: None,
            ring_heights: g.ring_heights,
            helicity: g.helicity,
        }
    }
}

/// Image expansion depth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImagesSection {
    pub max_order: u32,
}

impl Default for ImagesSection {
    fn default() -> Self {
        Self { max_order: 1 }
    }
}

fn default_reflectors() -> Vec<Reflector> {
    vec![Reflector {
        height: 0.0,
        coefficient: 1.0,
    }]
}

/// Parsed configuration document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema: String,
    #[serde(default)]
    pub physics: PhysicalConstants,
    #[serde(default)]
    pub transducer: Transducer,
    #[serde(default)]
    pub cylinder: CylinderSection,
    #[serde(default = "default_reflectors")]
    pub reflectors: Vec<Reflector>,
    #[serde(default)]
    pub images: ImagesSection,
    #[serde(default)]
    pub particle: Particle,
    #[serde(default)]
    pub motion: MotionParams,
    #[serde(default)]
    pub planner: PlannerOptions,
    #[serde(default)]
    pub basin: BasinOptions,
    #[serde(default)]
    pub planar: PlanarSettings,
    #[serde(default)]
    pub dish: DishSettings,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            schema: SCHEMA.into(),
            physics: PhysicalConstants::default(),
            transducer: Transducer::default(),
            cylinder: CylinderSection::default(),
            reflectors: default_reflectors(),
            images: ImagesSection::default(),
            particle: Particle::default(),
            motion: MotionParams::default(),
            planner: PlannerOptions::default(),
            basin: BasinOptions::default(),
            planar: PlanarSettings::default(),
            dish: DishSettings::default(),
        }
    }
}

impl Config {
    /// Parse and validate a TOML document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.setup()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config values are always representable")
    }

    /// Hex SHA-256 of the canonical serialization; equal for equal configs.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Validated experiment setup.
    pub fn setup(&self) -> Result<Setup> {
        if self.schema != SCHEMA {
            return Err(Error::Config(format!("unsupported schema {:?}, expected {SCHEMA:?}", self.schema)));
        }
        let constants = PhysicalConstants::new(self.physics.speed_of_sound, self.physics.density, self.physics.frequency)?;
        let c = &self.cylinder;
        let geometry = CylinderSpec {
            rings: c.rings,
            transducers_per_ring: c.transducers_per_ring,
            ring_diameter: c.ring_diameter.unwrap_or(5.0 * constants.wavelength()),
            ring_heights: c.ring_heights.clone(),
            helicity: c.helicity,
            transducer: self.transducer,
        };
        geometry.validate()?;
        for r in &self.reflectors {
            r.validate()?;
        }
        self.particle.validate()?;
        self.motion.validate(&constants)?;
        Ok(Setup {
            rig: Rig {
                geometry,
                reflectors: self.reflectors.clone(),
                image_order: self.images.max_order,
                constants,
                particle: self.particle,
            },
            motion: self.motion,
            planner: self.planner.clone(),
            basin: self.basin,
            planar: self.planar,
            dish: self.dish,
        })
    }
}
