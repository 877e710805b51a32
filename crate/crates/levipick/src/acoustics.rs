//! Complex pressure and particle velocity radiated by a set of piston sources.

use std::f64::consts::PI;

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Complex = Complex64;

/// Closest distance (m) at which a source may be evaluated.
pub const SINGULAR_DISTANCE: f64 = 1e-9;

/// Properties of the propagation medium and the drive frequency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalConstants {
    /// Speed of sound c0 (m/s).
    pub speed_of_sound: f64,
    /// Density of the medium rho0 (kg/m^3).
    pub density: f64,
    /// Drive frequency f (Hz).
    pub frequency: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            speed_of_sound: 343.0,
            density: 1.2,
            frequency: 40_000.0,
        }
    }
}

impl PhysicalConstants {
    pub fn new(speed_of_sound: f64, density: f64, frequency: f64) -> Result<Self> {
        let c = Self {
            speed_of_sound,
            density,
            frequency,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (what, value) in [
            ("speed of sound", self.speed_of_sound),
            ("density", self.density),
            ("frequency", self.frequency),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Domain { what, value });
            }
        }
        Ok(())
    }

    /// Angular frequency omega (rad/s).
    pub fn omega(&self) -> f64 {
        2.0 * PI * self.frequency
    }

    /// Wavenumber k (rad/m).
    pub fn wavenumber(&self) -> f64 {
        self.omega() / self.speed_of_sound
    }

    /// Wavelength lambda (m).
    pub fn wavelength(&self) -> f64 {
        self.speed_of_sound / self.frequency
    }
}

/// Emitter parameters shared by every element of an array.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Transducer {
    /// Pressure amplitude at unit distance on axis, P0 (Pa m).
    pub reference_pressure: f64,
    /// Piston radius a (m).
    pub aperture_radius: f64,
}

impl Default for Transducer {
    fn default() -> Self {
        Self {
            reference_pressure: 10.0,
            aperture_radius: 4.5e-3,
        }
    }
}

/// Whether a source is a physical emitter or a mirror image of one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Real,
    /// Image produced by `order` reflections, the last across reflector `reflector`.
    Image { order: u32, reflector: u32 },
}

/// One piston emitter (real or image).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceState {
    pub position: Vec3,
    /// Unit vector along the radiating axis.
    pub normal: Vec3,
    /// Drive phase in [0, 2 pi).
    pub phase: f64,
    /// Relative amplitude in [0, 1]; images carry accumulated reflection losses.
    pub amplitude: f64,
    pub transducer: Transducer,
    pub provenance: Provenance,
    /// Device channel of the real emitter this source derives from.
    pub channel: Option<usize>,
}

impl SourceState {
    /// Real source with unit amplitude and zero phase.
    pub fn new(position: Vec3, normal: Vec3, transducer: Transducer) -> Result<Self> {
        let n = normal.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::Domain {
                what: "normal length",
                value: n,
            });
        }
        Ok(Self {
            position,
            normal: normal / n,
            phase: 0.0,
            amplitude: 1.0,
            transducer,
            provenance: Provenance::Real,
            channel: None,
        })
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = wrap_phase(phase);
        self
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn with_channel(mut self, channel: usize) -> Self {
        self.channel = Some(channel);
        self
    }
}

/// Wrap an angle into [0, 2 pi).
pub fn wrap_phase(phase: f64) -> f64 {
    let w = phase.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

/// Bessel function of the first kind, order one.
///
/// Power series up to |x| = 15, Hankel asymptotic expansion beyond.
pub fn bessel_j1(x: f64) -> f64 {
    if x < 0.0 {
        return -bessel_j1(-x);
    }
    if x <= 15.0 {
        let q = -0.25 * x * x;
        let mut term = 0.5 * x;
        let mut sum = term;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= q / (k * (k + 1.0));
            sum += term;
            if term.abs() <= 1e-17 * sum.abs().max(1e-300) && k > 0.5 * x {
                break;
            }
            if k > 200.0 {
                break;
            }
        }
        sum
    } else {
        // P and Q series in 1/(8x) with mu = 4 n^2 = 4.
        let mu = 4.0;
        let z8 = 8.0 * x;
        let (mut p, mut q) = (1.0, 0.0);
        let mut a = 1.0;
        let mut prev = f64::INFINITY;
        for k in 1..40u32 {
            let odd = f64::from(2 * k - 1);
            a *= (mu - odd * odd) / (f64::from(k) * z8);
            if a.abs() >= prev || a.abs() < 1e-18 {
                break;
            }
            prev = a.abs();
            match k % 4 {
                1 => q += a,
                2 => p -= a,
                3 => q -= a,
                _ => p += a,
            }
        }
        let chi = x - 0.75 * PI;
        (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
    }
}

/// Piston far-field directivity 2 J1(ka sin theta) / (ka sin theta).
pub fn directivity(ka: f64, theta: f64) -> Result<f64> {
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::Domain {
            what: "directivity angle",
            value: theta,
        });
    }
    if !(ka.is_finite() && ka >= 0.0) {
        return Err(Error::Domain {
            what: "ka",
            value: ka,
        });
    }
    Ok(directivity_sin(ka * theta.sin()))
}

#[inline]
fn directivity_sin(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0
    } else {
        2.0 * bessel_j1(x) / x
    }
}

/// Complex pressure (Pa) radiated by one source at `point`.
pub fn source_pressure(src: &SourceState, point: &Vec3, constants: &PhysicalConstants) -> Result<Complex> {
    source_pressure_k(src, point, constants.wavenumber())
}

#[inline]
fn source_pressure_k(src: &SourceState, point: &Vec3, k: f64) -> Result<Complex> {
    if src.amplitude == 0.0 {
        return Ok(Complex::new(0.0, 0.0));
    }
    let d = point - src.position;
    let dist = d.norm();
    if dist < SINGULAR_DISTANCE {
        return Err(Error::SingularPoint { distance: dist });
    }
    let sin_theta = (src.normal.cross(&d).norm() / dist).min(1.0);
    let dir = directivity_sin(k * src.transducer.aperture_radius * sin_theta);
    let mag = src.transducer.reference_pressure * src.amplitude * dir / dist;
    Ok(Complex::from_polar(mag, k * dist + src.phase))
}

/// Complex particle velocity and pressure at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample {
    pub pressure: Complex,
    pub velocity: [Complex; 3],
}

impl FieldSample {
    /// |v|^2 summed over the three components.
    pub fn velocity_norm_sqr(&self) -> f64 {
        self.velocity.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// A set of sources radiating coherently into one medium.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayState {
    pub sources: Vec<SourceState>,
    pub constants: PhysicalConstants,
    /// Finite-difference step (m) used for velocity and force.
    pub gradient_step: f64,
}

impl ArrayState {
    /// Array with the default gradient step lambda / 200.
    pub fn new(sources: Vec<SourceState>, constants: PhysicalConstants) -> Self {
        let gradient_step = constants.wavelength() / 200.0;
        Self {
            sources,
            constants,
            gradient_step,
        }
    }

    pub fn with_gradient_step(mut self, h: f64) -> Self {
        self.gradient_step = h;
        self
    }

    /// Total complex pressure at `point`.
    pub fn pressure(&self, point: &Vec3) -> Result<Complex> {
        total_pressure(self, point)
    }

    /// Pressure and velocity at `point`.
    pub fn sample(&self, point: &Vec3) -> Result<FieldSample> {
        let h = self.gradient_step;
        let p0 = self.pressure(point)?;
        let mut velocity = [Complex::new(0.0, 0.0); 3];
        for (axis, v) in velocity.iter_mut().enumerate() {
            let mut e = Vec3::zeros();
            e[axis] = h;
            let grad = (self.pressure(&(point + e))? - self.pressure(&(point - e))?) / (2.0 * h);
            *v = grad_to_velocity(grad, &self.constants);
        }
        Ok(FieldSample {
            pressure: p0,
            velocity,
        })
    }
}

/// Convert a pressure gradient component into particle velocity.
#[inline]
pub fn grad_to_velocity(grad: Complex, constants: &PhysicalConstants) -> Complex {
    grad / Complex::new(0.0, constants.density * constants.omega())
}

/// Sum of `source_pressure` over every source with nonzero amplitude.
pub fn total_pressure(array: &ArrayState, point: &Vec3) -> Result<Complex> {
    let k = array.constants.wavenumber();
    let mut sum = Complex::new(0.0, 0.0);
    for src in &array.sources {
        sum += source_pressure_k(src, point, k)?;
    }
    Ok(sum)
}

/// Particle velocity (m/s) from the central-difference pressure gradient.
pub fn velocity_at(array: &ArrayState, point: &Vec3) -> Result<[Complex; 3]> {
    Ok(array.sample(point)?.velocity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Bessel integral J1(x) = (1/pi) int_0^pi cos(t - x sin t) dt, trapezoid rule.
    fn j1_integral(x: f64) -> f64 {
        let n = 4000;
        let h = PI / n as f64;
        let f = |t: f64| (t - x * t.sin()).cos();
        let mut s = 0.5 * (f(0.0) + f(PI));
        for i in 1..n {
            s += f(i as f64 * h);
        }
        s * h / PI
    }

    #[test]
    fn j1_matches_integral_form() {
        for i in 0..=200 {
            let x = i as f64 * 0.25;
            assert!((bessel_j1(x) - j1_integral(x)).abs() < 1e-11, "x = {x}");
        }
    }

    #[test]
    fn j1_continuous_across_branch() {
        let below = bessel_j1(15.0 - 1e-9);
        let above = bessel_j1(15.0 + 1e-9);
        assert!((below - above).abs() < 1e-9);
    }

    #[test]
    fn j1_first_zero() {
        assert!(bessel_j1(3.831_705_970_2).abs() < 1e-10);
    }

    #[test]
    fn directivity_limits() {
        assert_eq!(directivity(3.3, 0.0).unwrap(), 1.0);
        assert_eq!(directivity(0.0, 1.0).unwrap(), 1.0);
        assert!(directivity(3.3, -0.1).is_err());
        assert!(directivity(3.3, 3.2).is_err());
    }

    #[test]
    fn wavelength_default() {
        let c = PhysicalConstants::default();
        assert_relative_eq!(c.wavelength(), 8.575e-3, max_relative = 1e-12);
        assert!(PhysicalConstants::new(0.0, 1.2, 4e4).is_err());
    }

    #[test]
    fn on_axis_pressure_magnitude() {
        let c = PhysicalConstants::default();
        let t = Transducer::default();
        let s = SourceState::new(Vec3::zeros(), Vec3::z(), t).unwrap();
        let p = source_pressure(&s, &Vec3::new(0.0, 0.0, 0.1), &c).unwrap();
        assert_relative_eq!(p.norm(), t.reference_pressure / 0.1, max_relative = 1e-12);
        assert!(source_pressure(&s, &Vec3::zeros(), &c).is_err());
    }

    #[test]
    fn silent_source_contributes_nothing() {
        let c = PhysicalConstants::default();
        let s = SourceState::new(Vec3::zeros(), Vec3::z(), Transducer::default())
            .unwrap()
            .with_amplitude(0.0);
        assert_eq!(source_pressure(&s, &Vec3::zeros(), &c).unwrap(), Complex::new(0.0, 0.0));
    }

    #[test]
    fn plane_wave_like_velocity_far_on_axis() {
        // Far on axis a spherical wave satisfies |v| ~ |p| / (rho c).
        let c = PhysicalConstants::default();
        let s = SourceState::new(Vec3::zeros(), Vec3::z(), Transducer::default()).unwrap();
        let arr = ArrayState::new(vec![s], c);
        let f = arr.sample(&Vec3::new(0.0, 0.0, 2.0)).unwrap();
        let ratio = f.velocity_norm_sqr().sqrt() * c.density * c.speed_of_sound / f.pressure.norm();
        assert!((ratio - 1.0).abs() < 1e-3, "ratio {ratio}");
    }

    #[test]
    fn phase_wraps() {
        assert_eq!(wrap_phase(2.0 * PI), 0.0);
        assert_relative_eq!(wrap_phase(-0.5), 2.0 * PI - 0.5);
    }
}
