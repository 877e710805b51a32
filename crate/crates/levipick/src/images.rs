//! Rigid horizontal reflectors modelled by mirror-image sources.

use serde::{Deserialize, Serialize};

use crate::acoustics::{total_pressure, wrap_phase, ArrayState, PhysicalConstants, Provenance, SourceState, Vec3};
use crate::error::{Error, Result};

/// Sources closer than this (m) to a reflector plane are rejected.
const PLANE_TOLERANCE: f64 = 1e-9;

/// Infinite horizontal reflecting plane `z = height`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reflector {
    pub height: f64,
    /// Pressure reflection coefficient in [0, 1].
    pub coefficient: f64,
}

impl Reflector {
    pub fn new(height: f64, coefficient: f64) -> Result<Self> {
        let r = Self { height, coefficient };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.height.is_finite() {
            return Err(Error::Domain {
                what: "reflector height",
                value: self.height,
            });
        }
        if !(0.0..=1.0).contains(&self.coefficient) {
            return Err(Error::Domain {
                what: "reflection coefficient",
                value: self.coefficient,
            });
        }
        Ok(())
    }

    /// Mirror a source across this plane (rigid wall: phase kept, amplitude scaled).
    pub fn mirror(&self, src: &SourceState, order: u32, id: u32) -> Result<SourceState> {
        if (src.position.z - self.height).abs() < PLANE_TOLERANCE {
            return Err(Error::DegenerateImage { height: self.height });
        }
        let mut img = *src;
        img.position.z = 2.0 * self.height - src.position.z;
        img.normal.z = -src.normal.z;
        img.amplitude = src.amplitude * self.coefficient;
        img.provenance = Provenance::Image { order, reflector: id };
        Ok(img)
    }
}

/// Append image sources up to `max_order` reflections.
///
/// Chains alternate between reflectors so no plane is crossed twice in a row.
/// Output order: real sources first, then images sorted by (order, last reflector, original index).
pub fn add_images(sources: &[SourceState], reflectors: &[Reflector], max_order: u32) -> Result<Vec<SourceState>> {
    for r in reflectors {
        r.validate()?;
    }
    let mut out: Vec<SourceState> = sources.to_vec();
    // Frontier entries: (image, last reflector used).
    let mut frontier: Vec<(SourceState, Option<usize>)> = sources.iter().map(|s| (*s, None)).collect();
    for order in 1..=max_order {
        let mut next = Vec::new();
        for (id, refl) in reflectors.iter().enumerate() {
            for (src, last) in &frontier {
                if *last == Some(id) {
                    continue;
                }
                next.push((refl.mirror(src, order, id as u32)?, Some(id)));
            }
        }
        if next.is_empty() {
            break;
        }
        out.extend(next.iter().map(|(s, _)| *s));
        frontier = next;
    }
    Ok(out)
}

/// Number of sources `add_images` returns for `n` real sources.
pub fn image_count(n: usize, reflectors: usize, max_order: u32) -> usize {
    match reflectors {
        0 => n,
        1 => n * (1 + max_order.min(1) as usize),
        r => n * (1 + r * max_order as usize),
    }
}

/// Relative change in pressure between two image orders over the probe points.
///
/// Returns max |p_b - p_a| / max |p_a|.
pub fn series_truncation_error(
    sources: &[SourceState],
    reflectors: &[Reflector],
    order_a: u32,
    order_b: u32,
    probes: &[Vec3],
    constants: &PhysicalConstants,
) -> Result<f64> {
    let a = ArrayState::new(add_images(sources, reflectors, order_a)?, *constants);
    let b = ArrayState::new(add_images(sources, reflectors, order_b)?, *constants);
    let mut max_diff: f64 = 0.0;
    let mut max_a: f64 = 0.0;
    for p in probes {
        let pa = total_pressure(&a, p)?;
        let pb = total_pressure(&b, p)?;
        max_diff = max_diff.max((pb - pa).norm());
        max_a = max_a.max(pa.norm());
    }
    if max_a == 0.0 {
        return Err(Error::Domain {
            what: "reference pressure magnitude",
            value: 0.0,
        });
    }
    Ok(max_diff / max_a)
}

/// Real ring that reproduces the field of `ring` reflected by `reflector`,
/// with the dish lifted by `displacement` emulated through a phase offset.
///
/// Each mirrored source is driven with phase + 2 k displacement, which moves
/// the image path length as if the dish rose by `displacement`.
pub fn reflector_phase_equivalent(
    ring: &[SourceState],
    reflector: &Reflector,
    displacement: f64,
    constants: &PhysicalConstants,
) -> Result<Vec<SourceState>> {
    reflector.validate()?;
    let lambda = constants.wavelength();
    if displacement.abs() >= lambda || !displacement.is_finite() {
        return Err(Error::Domain {
            what: "reflector displacement",
            value: displacement,
        });
    }
    let shift = 2.0 * constants.wavenumber() * displacement;
    ring.iter()
        .map(|s| {
            if s.position.z >= reflector.height {
                return Err(Error::InvalidSpec(format!(
                    "source at z = {} is not below reflector at {}",
                    s.position.z, reflector.height
                )));
            }
            let mut img = reflector.mirror(s, 1, 0)?;
            img.provenance = Provenance::Real;
            img.phase = wrap_phase(s.phase + shift);
            Ok(img)
        })
        .collect()
}
