//! Gor'kov potential, radiation force, trap nodes and field grids.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acoustics::{grad_to_velocity, ArrayState, Complex, FieldSample, PhysicalConstants, Vec3};
use crate::error::{Error, Result};

/// Default stiffness threshold (J/m^2) separating stable from flat directions.
pub const STIFFNESS_FLOOR: f64 = 1e-15;
/// Gradient magnitude (J/m) accepted as stationary by the node finder.
pub const NODE_TOLERANCE: f64 = 1e-12;

/// Small rigid sphere subject to the radiation force.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Particle {
    /// Radius R (m).
    pub radius: f64,
    /// Density (kg/m^3).
    pub density: f64,
    /// Gravitational acceleration (m/s^2).
    pub gravity: f64,
}

impl Default for Particle {
    fn default() -> Self {
        Self {
            radius: 1e-3,
            density: 239.0,
            gravity: 9.81,
        }
    }
}

impl Particle {
    pub fn mass(&self) -> f64 {
        self.density * 4.0 / 3.0 * PI * self.radius.powi(3)
    }

    pub fn weight(&self) -> f64 {
        self.mass() * self.gravity
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::Domain {
                what: "particle radius",
                value: self.radius,
            });
        }
        if !(self.density.is_finite() && self.density >= 0.0) {
            return Err(Error::Domain {
                what: "particle density",
                value: self.density,
            });
        }
        if !(self.gravity.is_finite() && self.gravity >= 0.0) {
            return Err(Error::Domain {
                what: "gravity",
                value: self.gravity,
            });
        }
        Ok(())
    }

    /// True when the radius exceeds lambda/8, where the small-sphere potential loses accuracy.
    pub fn beyond_small_sphere_limit(&self, constants: &PhysicalConstants) -> bool {
        self.radius > constants.wavelength() / 8.0
    }
}

/// Potential (J) from a sampled field, with time averages |X|^2 / 2.
pub fn potential_from_sample(s: &FieldSample, particle: &Particle, c: &PhysicalConstants) -> f64 {
    let p2 = s.pressure.norm_sqr() / 2.0;
    let v2 = s.velocity_norm_sqr() / 2.0;
    2.0 * PI
        * particle.radius.powi(3)
        * (p2 / (3.0 * c.density * c.speed_of_sound * c.speed_of_sound) - c.density * v2 / 2.0)
}

/// Gor'kov potential U (J) at `point`.
pub fn gorkov_potential(arr: &ArrayState, point: &Vec3, particle: &Particle) -> Result<f64> {
    Ok(potential_from_sample(&arr.sample(point)?, particle, &arr.constants))
}

/// Pressure cache on the integer lattice point + h (i, j, k).
struct Lattice<'a> {
    arr: &'a ArrayState,
    origin: Vec3,
    h: f64,
    cache: Vec<([i8; 3], Complex)>,
}

impl<'a> Lattice<'a> {
    fn new(arr: &'a ArrayState, origin: Vec3, h: f64) -> Self {
        Self {
            arr,
            origin,
            h,
            cache: Vec::with_capacity(32),
        }
    }

    fn p(&mut self, o: [i8; 3]) -> Result<Complex> {
        if let Some((_, v)) = self.cache.iter().find(|(k, _)| *k == o) {
            return Ok(*v);
        }
        let pt = self.origin + Vec3::new(f64::from(o[0]), f64::from(o[1]), f64::from(o[2])) * self.h;
        let v = self.arr.pressure(&pt)?;
        self.cache.push((o, v));
        Ok(v)
    }

    fn potential(&mut self, c: [i8; 3], particle: &Particle) -> Result<f64> {
        let pressure = self.p(c)?;
        let mut velocity = [Complex::new(0.0, 0.0); 3];
        for (axis, v) in velocity.iter_mut().enumerate() {
            let mut up = c;
            let mut dn = c;
            up[axis] += 1;
            dn[axis] -= 1;
            let grad = (self.p(up)? - self.p(dn)?) / (2.0 * self.h);
            *v = grad_to_velocity(grad, &self.arr.constants);
        }
        Ok(potential_from_sample(&FieldSample { pressure, velocity }, particle, &self.arr.constants))
    }
}

/// Radiation force F = -grad U (N) by central differences with the array's gradient step.
pub fn acoustic_force(arr: &ArrayState, point: &Vec3, particle: &Particle) -> Result<Vec3> {
    Ok(potential_and_force(arr, point, particle)?.1)
}

/// Potential and force together; shares pressure evaluations between stencils.
pub fn potential_and_force(arr: &ArrayState, point: &Vec3, particle: &Particle) -> Result<(f64, Vec3)> {
    let h = arr.gradient_step;
    let mut lat = Lattice::new(arr, *point, h);
    let u = lat.potential([0, 0, 0], particle)?;
    let mut f = Vec3::zeros();
    for axis in 0..3 {
        let mut up = [0i8; 3];
        let mut dn = [0i8; 3];
        up[axis] = 1;
        dn[axis] = -1;
        f[axis] = -(lat.potential(up, particle)? - lat.potential(dn, particle)?) / (2.0 * h);
    }
    Ok((u, f))
}

/// Force with one Richardson step: (4 F(h/2) - F(h)) / 3.
pub fn acoustic_force_richardson(arr: &ArrayState, point: &Vec3, particle: &Particle) -> Result<Vec3> {
    let h = arr.gradient_step;
    let coarse = central_gradient(arr, point, particle, h)?;
    let fine = central_gradient(arr, point, particle, h / 2.0)?;
    Ok(-(4.0 * fine - coarse) / 3.0)
}

fn central_gradient(arr: &ArrayState, point: &Vec3, particle: &Particle, step: f64) -> Result<Vec3> {
    let mut g = Vec3::zeros();
    for axis in 0..3 {
        let mut e = Vec3::zeros();
        e[axis] = step;
        g[axis] = (gorkov_potential(arr, &(point + e), particle)? - gorkov_potential(arr, &(point - e), particle)?)
            / (2.0 * step);
    }
    Ok(g)
}

/// Local character of a stationary point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Saddle,
    Unstable,
}

/// Stationary point of U.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapNode {
    pub position: Vec3,
    pub potential: f64,
    pub stability: Stability,
    /// Hessian eigenvalues (J/m^2), ascending.
    pub eigenvalues: [f64; 3],
    /// Smallest eigenvalue.
    pub stiffness: f64,
    /// |grad U| at the reported position (J/m).
    pub residual: f64,
}

/// Eigenvalues of a symmetric 3x3 matrix, ascending (trigonometric closed form).
pub fn symmetric_eigenvalues(a: &[[f64; 3]; 3]) -> [f64; 3] {
    let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if p <= 1e-15 * scale || p == 0.0 {
        let mut d = [a[0][0], a[1][1], a[2][2]];
        d.sort_by(f64::total_cmp);
        return d;
    }
    let mut b = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = (a[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (det / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    let mut e = [e1, e2, e3];
    e.sort_by(f64::total_cmp);
    e
}

/// Hessian of U by central second differences with step `h`.
pub fn hessian(arr: &ArrayState, point: &Vec3, particle: &Particle, h: f64) -> Result<[[f64; 3]; 3]> {
    let u = |d: Vec3| gorkov_potential(arr, &(point + d), particle);
    let e = |i: usize| {
        let mut v = Vec3::zeros();
        v[i] = h;
        v
    };
    let u0 = u(Vec3::zeros())?;
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        m[i][i] = (u(e(i))? - 2.0 * u0 + u(-e(i))?) / (h * h);
        for j in (i + 1)..3 {
            let v = (u(e(i) + e(j))? - u(e(i) - e(j))? - u(e(j) - e(i))? + u(-e(i) - e(j))?) / (4.0 * h * h);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    Ok(m)
}

/// Classify a stationary point by its Hessian eigenvalues (step lambda/100).
pub fn classify_stability(arr: &ArrayState, point: &Vec3, particle: &Particle) -> Result<(Stability, [f64; 3])> {
    let h = arr.constants.wavelength() / 100.0;
    let e = symmetric_eigenvalues(&hessian(arr, point, particle, h)?);
    Ok((stability_of(&e, STIFFNESS_FLOOR), e))
}

pub fn stability_of(e: &[f64; 3], floor: f64) -> Stability {
    if e.iter().all(|v| *v > floor) {
        Stability::Stable
    } else if e.iter().all(|v| *v < -floor) {
        Stability::Unstable
    } else {
        Stability::Saddle
    }
}

fn axial_force(arr: &ArrayState, z: f64, particle: &Particle) -> Result<f64> {
    Ok(acoustic_force(arr, &Vec3::new(0.0, 0.0, z), particle)?.z)
}

/// Stationary points of U on the z axis within `[z_min, z_max]`, sorted by z.
pub fn find_axial_nodes(arr: &ArrayState, particle: &Particle, z_min: f64, z_max: f64) -> Result<Vec<TrapNode>> {
    if !(z_min > 0.0 && z_max > z_min) {
        return Err(Error::Domain {
            what: "axial range",
            value: z_min,
        });
    }
    if arr.sources.iter().all(|s| s.amplitude == 0.0) {
        return Ok(Vec::new());
    }
    let step = arr.constants.wavelength() / 50.0;
    let n = ((z_max - z_min) / step).ceil() as usize;
    let zs: Vec<f64> = (0..=n).map(|i| (z_min + i as f64 * step).min(z_max)).collect();
    let fs = zs.iter().map(|&z| axial_force(arr, z, particle)).collect::<Result<Vec<_>>>()?;
    let mut nodes = Vec::new();
    for i in 0..n {
        let (mut a, mut b) = (zs[i], zs[i + 1]);
        let (mut fa, fb) = (fs[i], fs[i + 1]);
        if fa == 0.0 && i > 0 {
            continue; // counted as the upper end of the previous bracket
        }
        if !(fa == 0.0 || fb == 0.0 || (fa < 0.0) != (fb < 0.0)) {
            continue;
        }
        let mut z = if fa == 0.0 { a } else { b };
        let mut fz = if fa == 0.0 { fa } else { fb };
        for _ in 0..200 {
            if fz.abs() < NODE_TOLERANCE || b - a < 1e-15 {
                break;
            }
            z = 0.5 * (a + b);
            fz = axial_force(arr, z, particle)?;
            if (fz < 0.0) == (fa < 0.0) {
                a = z;
                fa = fz;
            } else {
                b = z;
            }
        }
        let position = Vec3::new(0.0, 0.0, z);
        let (u, f) = potential_and_force(arr, &position, particle)?;
        let (stability, eigenvalues) = classify_stability(arr, &position, particle)?;
        nodes.push(TrapNode {
            position,
            potential: u,
            stability,
            eigenvalues,
            stiffness: eigenvalues[0],
            residual: f.norm(),
        });
    }
    Ok(nodes)
}

/// Height below `node` where the upward force balances the particle weight.
///
/// Returns `None` when the restoring force peaks below the weight.
pub fn levitation_equilibrium(arr: &ArrayState, particle: &Particle, node: &TrapNode) -> Result<Option<Vec3>> {
    let w = particle.weight();
    let net = |z: f64| -> Result<f64> { Ok(axial_force(arr, z, particle)? - w) };
    let step = arr.constants.wavelength() / 200.0;
    let floor = particle.radius;
    let mut hi = node.position.z;
    let mut prev = net(hi)?;
    if prev >= 0.0 {
        return Ok(Some(node.position));
    }
    loop {
        let lo = hi - step;
        if lo < floor {
            return Ok(None);
        }
        let f_lo = net(lo)?;
        if f_lo >= 0.0 {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                if net(m)? >= 0.0 {
                    a = m;
                } else {
                    b = m;
                }
                if b - a < 1e-13 {
                    break;
                }
            }
            return Ok(Some(Vec3::new(0.0, 0.0, 0.5 * (a + b))));
        }
        if f_lo < prev {
            return Ok(None); // force peaked below the weight
        }
        prev = f_lo;
        hi = lo;
    }
}

/// Axis-aligned sampling box with inclusive end points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min: Vec3,
    pub max: Vec3,
    pub resolution: [usize; 3],
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.resolution.contains(&0) {
            return Err(Error::InvalidSpec("grid resolution must be at least 1 per axis".into()));
        }
        if self.min.z < 0.0 {
            return Err(Error::InvalidSpec("grid extends below the table".into()));
        }
        for i in 0..3 {
            if !(self.min[i].is_finite() && self.max[i].is_finite() && self.max[i] >= self.min[i]) {
                return Err(Error::InvalidSpec("grid bounds must be finite with max >= min".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell `index` in x-fastest order.
    pub fn point(&self, index: usize) -> Vec3 {
        let [nx, ny, _] = self.resolution;
        let idx = [index % nx, (index / nx) % ny, index / (nx * ny)];
        let mut p = Vec3::zeros();
        for a in 0..3 {
            let n = self.resolution[a];
            p[a] = if n == 1 {
                self.min[a]
            } else {
                self.min[a] + (self.max[a] - self.min[a]) * idx[a] as f64 / (n - 1) as f64
            };
        }
        p
    }
}

/// One evaluated grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldCell {
    pub position: Vec3,
    pub potential: f64,
    pub force: Vec3,
    pub pressure_magnitude: f64,
}

/// Potential, force and pressure magnitude over a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub spec: GridSpec,
    pub cells: Vec<FieldCell>,
    pub array_hash: String,
    pub particle: Particle,
    pub constants: PhysicalConstants,
}

impl FieldGrid {
    /// Comma-separated rows `x,y,z,U,Fx,Fy,Fz,p_abs` with a header line.
    pub fn to_columns(&self) -> String {
        let mut s = String::from("x,y,z,U,Fx,Fy,Fz,p_abs\n");
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
                c.position.x,
                c.position.y,
                c.position.z,
                c.potential,
                c.force.x,
                c.force.y,
                c.force.z,
                c.pressure_magnitude
            );
        }
        s
    }
}

/// Evaluate every grid cell; cells are independent and evaluated in parallel.
pub fn sample_grid(arr: &ArrayState, spec: &GridSpec, particle: &Particle) -> Result<FieldGrid> {
    spec.validate()?;
    let cells = (0..spec.len())
        .into_par_iter()
        .map(|i| {
            let position = spec.point(i);
            let (potential, force) = potential_and_force(arr, &position, particle)?;
            Ok(FieldCell {
                position,
                potential,
                force,
                pressure_magnitude: arr.pressure(&position)?.norm(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FieldGrid {
        spec: *spec,
        cells,
        array_hash: array_hash(arr),
        particle: *particle,
        constants: arr.constants,
    })
}

/// Hex digest identifying every numeric input of an array state.
pub fn array_hash(arr: &ArrayState) -> String {
    let mut h = Sha256::new();
    let mut put = |v: f64| h.update(v.to_bits().to_le_bytes());
    put(arr.constants.speed_of_sound);
    put(arr.constants.density);
    put(arr.constants.frequency);
    put(arr.gradient_step);
    for s in &arr.sources {
        for v in s.position.iter().chain(s.normal.iter()) {
            put(*v);
        }
        put(s.phase);
        put(s.amplitude);
        put(s.transducer.reference_pressure);
        put(s.transducer.aperture_radius);
    }
    h.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustics::{SourceState, Transducer};
    use approx::assert_relative_eq;

    fn pair(separation: f64) -> ArrayState {
        let t = Transducer::default();
        let a = SourceState::new(Vec3::zeros(), Vec3::z(), t).unwrap();
        let b = SourceState::new(Vec3::new(0.0, 0.0, separation), -Vec3::z(), t).unwrap();
        ArrayState::new(vec![a, b], PhysicalConstants::default())
    }

    #[test]
    fn eigenvalues_match_nalgebra() {
        let a = [[2.0, 0.3, -0.1], [0.3, -1.0, 0.7], [-0.1, 0.7, 0.5]];
        let m = nalgebra::Matrix3::from_fn(|i, j| a[i][j]);
        let mut reference: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        reference.sort_by(f64::total_cmp);
        let e = symmetric_eigenvalues(&a);
        for i in 0..3 {
            assert_relative_eq!(e[i], reference[i], epsilon = 1e-12);
        }
        let d = symmetric_eigenvalues(&[[1.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 2.0]]);
        assert_relative_eq!(d.as_slice(), [1.0, 2.0, 3.0].as_slice(), epsilon = 1e-14);
    }

    #[test]
    fn stability_classes() {
        assert_eq!(stability_of(&[1.0, 1.0, 1.0], STIFFNESS_FLOOR), Stability::Stable);
        assert_eq!(stability_of(&[-1.0, 1.0, 1.0], STIFFNESS_FLOOR), Stability::Saddle);
        assert_eq!(stability_of(&[-1.0, -1.0, -1.0], STIFFNESS_FLOOR), Stability::Unstable);
    }

    #[test]
    fn quadratic_bowl_hessian() {
        let m = [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, -2.0]];
        assert_eq!(stability_of(&symmetric_eigenvalues(&m), STIFFNESS_FLOOR), Stability::Saddle);
    }

    #[test]
    fn zero_field_zero_potential() {
        let arr = ArrayState::new(vec![], PhysicalConstants::default());
        assert_eq!(gorkov_potential(&arr, &Vec3::new(0.0, 0.0, 0.01), &Particle::default()).unwrap(), 0.0);
        assert!(find_axial_nodes(&arr, &Particle::default(), 0.001, 0.05).unwrap().is_empty());
    }

    #[test]
    fn lattice_force_matches_direct_differences() {
        let arr = pair(0.05);
        let p = Vec3::new(0.002, -0.001, 0.02);
        let part = Particle::default();
        let f = acoustic_force(&arr, &p, &part).unwrap();
        let g = central_gradient(&arr, &p, &part, arr.gradient_step).unwrap();
        assert_relative_eq!(f, -g, max_relative = 1e-12, epsilon = 1e-20);
    }

    #[test]
    fn standing_wave_nodes_spaced_half_wavelength() {
        let arr = pair(0.06);
        let nodes = find_axial_nodes(&arr, &Particle::default(), 0.02, 0.04).unwrap();
        let lambda = arr.constants.wavelength();
        let minima: Vec<f64> = nodes
            .iter()
            .filter(|n| {
                let h = hessian(&arr, &n.position, &Particle::default(), lambda / 100.0).unwrap();
                h[2][2] > 0.0
            })
            .map(|n| n.position.z)
            .collect();
        assert!(minima.len() >= 3, "{minima:?}");
        for w in minima.windows(2) {
            assert!((w[1] - w[0] - lambda / 2.0).abs() < lambda / 200.0, "{minima:?}");
        }
    }

    #[test]
    fn massless_equilibrium_is_node() {
        let arr = pair(0.06);
        let part = Particle {
            density: 0.0,
            ..Particle::default()
        };
        let nodes = find_axial_nodes(&arr, &part, 0.025, 0.035).unwrap();
        let n = nodes.iter().find(|n| n.stability == Stability::Stable || n.eigenvalues[2] > 0.0).unwrap();
        assert_eq!(levitation_equilibrium(&arr, &part, n).unwrap(), Some(n.position));
    }

    #[test]
    fn grid_single_cell_matches_direct() {
        let arr = pair(0.06);
        let part = Particle::default();
        let p = Vec3::new(0.001, 0.0, 0.03);
        let spec = GridSpec {
            min: p,
            max: p,
            resolution: [1, 1, 1],
        };
        let g = sample_grid(&arr, &spec, &part).unwrap();
        assert_eq!(g.cells.len(), 1);
        assert_eq!(g.cells[0].potential, gorkov_potential(&arr, &p, &part).unwrap());
        assert!(g.to_columns().starts_with("x,y,z,U,Fx,Fy,Fz,p_abs\n"));
        let bad = GridSpec {
            min: Vec3::new(0.0, 0.0, -0.01),
            ..spec
        };
        assert!(sample_grid(&arr, &bad, &part).is_err());
    }

    #[test]
    fn particle_mass() {
        let p = Particle::default();
        assert_relative_eq!(p.mass(), 239.0 * 4.0 / 3.0 * PI * 1e-9, max_relative = 1e-12);
        assert_relative_eq!(p.weight(), 9.82e-6, max_relative = 1e-3);
    }
}
