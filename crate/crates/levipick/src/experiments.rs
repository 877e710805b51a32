//! Reproducible experiments over the default rig.
//!
//! Each function returns a report with the measured quantities and a
//! `passed` flag evaluated against fixed thresholds. The CLI, the examples and
//! the acceptance tests all go through these functions.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acoustics::{ArrayState, PhysicalConstants, SourceState, Transducer, Vec3};
use crate::device::{DeviceLimits, DeviceState, LiveState, PhaseCommand, Response};
use crate::dynamics::{basin_map, replay_states, simulate_schedule, BasinMap, BasinOptions, MotionParams, Rig, ScheduleRun};
use crate::error::{Error, Result};
use crate::geometry::{build_cylinder, build_planar, CylinderSpec, PlanarSpec};
use crate::gorkov::{acoustic_force, acoustic_force_richardson, find_axial_nodes, gorkov_potential, Particle, Stability};
use crate::images::{add_images, reflector_phase_equivalent, series_truncation_error, Reflector};
use crate::planner::{base_registers, plan_picking, PickingSchedule, PlannerOptions};

/// Full experiment configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Setup {
    pub rig: Rig,
    pub motion: MotionParams,
    pub planner: PlannerOptions,
    pub basin: BasinOptions,
    pub planar: PlanarSettings,
    pub dish: DishSettings,
}

impl Default for Setup {
    fn default() -> Self {
        let constants = PhysicalConstants::default();
        Self {
            rig: Rig {
                geometry: CylinderSpec::default_for(&constants),
                reflectors: vec![Reflector {
                    height: 0.0,
                    coefficient: 1.0,
                }],
                image_order: 1,
                constants,
                particle: Particle::default(),
            },
            motion: MotionParams::default(),
            planner: PlannerOptions::default(),
            basin: BasinOptions::default(),
            planar: PlanarSettings::default(),
            dish: DishSettings::default(),
        }
    }
}

/// Planar comparison array layout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanarSettings {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub pitch: f64,
}

impl Default for PlanarSettings {
    fn default() -> Self {
        Self {
            grid_rows: 7,
            grid_cols: 8,
            pitch: 0.0105,
        }
    }
}

/// Upper reflector used by the truncation and equivalence experiments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DishSettings {
    /// Number of rings driven, counted from the bottom.
    pub rings: usize,
    /// Gap (m) between the highest driven ring and the dish.
    pub gap: f64,
    /// Reflection coefficient of both table and dish.
    pub coefficient: f64,
}

impl Default for DishSettings {
    fn default() -> Self {
        Self {
            rings: 4,
            gap: 0.010,
            coefficient: 0.9,
        }
    }
}

/// Array with the base ring pattern and the given rings switched on.
pub fn ring_array(rig: &Rig, rings_on: &[bool]) -> Result<ArrayState> {
    let limits = rig.limits();
    if rings_on.len() != rig.geometry.rings {
        return Err(Error::Mismatch {
            expected: rig.geometry.rings,
            found: rings_on.len(),
        });
    }
    let live = LiveState {
        commit_counter: 0,
        phases: base_registers(&rig.geometry, limits.steps_per_cycle),
        ring_enable: rings_on.to_vec(),
    };
    rig.array(&live)
}

fn only(rings: usize, on: &[usize]) -> Vec<bool> {
    (0..rings).map(|r| on.contains(&r)).collect()
}

/// Normal velocity on the table relative to the largest velocity there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub max_normal_velocity: f64,
    pub max_velocity: f64,
    pub ratio: f64,
    pub passed: bool,
}

pub const BOUNDARY_LIMIT: f64 = 1e-9;

/// Sample a 5 x 5 patch of the table with every ring on.
pub fn boundary_invariant(rig: &Rig) -> Result<BoundaryReport> {
    let arr = ring_array(rig, &vec![true; rig.geometry.rings])?;
    let table = rig.reflectors.first().map_or(0.0, |r| r.height);
    let half = 0.4 * rig.geometry.radius();
    let mut max_vz: f64 = 0.0;
    let mut max_v: f64 = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            let p = Vec3::new(-half + half * 0.5 * i as f64, -half + half * 0.5 * j as f64, table);
            let v = arr.sample(&p)?.velocity;
            max_vz = max_vz.max(v[2].norm());
            max_v = max_v.max(v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt());
        }
    }
    let ratio = max_vz / max_v;
    Ok(BoundaryReport {
        max_normal_velocity: max_vz,
        max_velocity: max_v,
        ratio,
        passed: ratio <= BOUNDARY_LIMIT,
    })
}

/// Node positions found by the finder against a dense closed-form scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub found: Vec<f64>,
    pub oracle: Vec<f64>,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Two coaxial sources facing each other 200 mm apart. Stable nodes over the
/// middle half are matched against pressure minima of the closed-form axial field.
pub fn standing_wave_oracle(constants: &PhysicalConstants, particle: &Particle) -> Result<OracleReport> {
    let separation = 0.2;
    let t = Transducer::default();
    let a = SourceState::new(Vec3::zeros(), Vec3::z(), t)?;
    let b = SourceState::new(Vec3::new(0.0, 0.0, separation), -Vec3::z(), t)?;
    let arr = ArrayState::new(vec![a, b], *constants);
    let (lo, hi) = (0.4 * separation, 0.6 * separation);
    let lambda = constants.wavelength();
    // nodes this close to the window ends are left out of both lists
    let margin = lambda / 8.0;

    // Closed-form on-axis pressure: both sources radiate along the axis with unit directivity.
    let k = constants.wavenumber();
    let p0 = t.reference_pressure;
    let pressure = |z: f64| {
        let (d1, d2) = (z, separation - z);
        (num_complex::Complex64::from_polar(p0 / d1, k * d1) + num_complex::Complex64::from_polar(p0 / d2, k * d2)).norm()
    };
    let step = lambda / 2000.0;
    let n = ((hi - lo) / step) as usize;
    let vals: Vec<f64> = (0..=n).map(|i| pressure(lo + i as f64 * step)).collect();
    let oracle: Vec<f64> = (1..n)
        .filter(|&i| vals[i] < vals[i - 1] && vals[i] <= vals[i + 1])
        .map(|i| lo + i as f64 * step)
        .filter(|z| (lo + margin..=hi - margin).contains(z))
        .collect();
    let found: Vec<f64> = find_axial_nodes(&arr, particle, lo, hi)?
        .iter()
        .filter(|n| n.stability == Stability::Stable)
        .map(|n| n.position.z)
        .filter(|z| (lo + margin..=hi - margin).contains(z))
        .collect();
    let tolerance = lambda / 200.0;
    let max_error = if found.len() == oracle.len() {
        found.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    Ok(OracleReport {
        passed: found.len() == oracle.len() && max_error <= tolerance,
        found,
        oracle,
        max_error,
        tolerance,
    })
}

/// Single lowest ring over the table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinningReport {
    /// Acoustic F_z (N) at z = 0.5 mm on the axis.
    pub force_z: f64,
    /// Stable axial nodes (m) below 5 mm.
    pub low_stable_nodes: Vec<f64>,
    /// Lowest stable axial node (m) anywhere up to the second ring.
    pub first_stable_node: Option<f64>,
    pub passed: bool,
}

pub fn single_ring_pinning(rig: &Rig) -> Result<PinningReport> {
    let arr = ring_array(rig, &only(rig.geometry.rings, &[0]))?;
    let force_z = acoustic_force(&arr, &Vec3::new(0.0, 0.0, 0.5e-3), &rig.particle)?.z;
    let nodes = find_axial_nodes(&arr, &rig.particle, 1e-5, rig.geometry.ring_heights[0] + 0.02)?;
    let stable: Vec<f64> = nodes
        .iter()
        .filter(|n| n.stability == Stability::Stable)
        .map(|n| n.position.z)
        .collect();
    let low: Vec<f64> = stable.iter().copied().filter(|z| *z < 5e-3).collect();
    Ok(PinningReport {
        force_z,
        passed: force_z < 0.0 && low.is_empty(),
        low_stable_nodes: low,
        first_stable_node: stable.first().copied(),
    })
}

/// Lowest two rings over the table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftReport {
    pub stable_nodes: Vec<f64>,
    /// Stable node closest to 8 mm.
    pub node: Option<f64>,
    /// Acoustic F_z (N) at z = 1 mm.
    pub force_z: f64,
    pub weight: f64,
    pub passed: bool,
}

pub fn two_ring_lift(rig: &Rig) -> Result<LiftReport> {
    let arr = ring_array(rig, &only(rig.geometry.rings, &[0, 1]))?;
    let force_z = acoustic_force(&arr, &Vec3::new(0.0, 0.0, 1e-3), &rig.particle)?.z;
    let stable_nodes: Vec<f64> = find_axial_nodes(&arr, &rig.particle, 1e-4, 0.03)?
        .iter()
        .filter(|n| n.stability == Stability::Stable)
        .map(|n| n.position.z)
        .collect();
    let node = stable_nodes
        .iter()
        .copied()
        .min_by(|a, b| (a - 8e-3).abs().total_cmp(&(b - 8e-3).abs()));
    let weight = rig.particle.weight();
    Ok(LiftReport {
        passed: node.is_some_and(|z| (z - 8e-3).abs() <= 3e-3) && force_z > weight,
        stable_nodes,
        node,
        force_z,
        weight,
    })
}

/// Focal pressure of the cylinder against a focused planar array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub cylinder_focus: f64,
    pub cylinder_pressure: f64,
    /// Focal distance (m) that maximises the planar array's focal pressure.
    pub planar_distance: f64,
    pub planar_pressure: f64,
    pub ratio: f64,
    pub passed: bool,
    /// Ratio inside the expected band [1.12, 1.42].
    pub in_band: bool,
}

/// Both arrays in free field, each focused by path-length phases; the
/// cylinder on the axis at the mean ring height, the planar array at the
/// focal distance that suits it best.
pub fn compare_geometry(rig: &Rig, planar: &PlanarSettings) -> Result<GeometryReport> {
    let c = rig.constants;
    let k = c.wavenumber();
    let mut g = rig.geometry.clone();
    g.helicity = 0;
    let zc = g.ring_heights.iter().sum::<f64>() / g.rings as f64;
    let focus = Vec3::new(0.0, 0.0, zc);
    let cyl: Vec<_> = build_cylinder(&g)?
        .into_iter()
        .map(|s| s.with_phase(-k * (focus - s.position).norm()))
        .collect();
    let cylinder_pressure = ArrayState::new(cyl, c).pressure(&focus)?.norm();
    let mut best = (0.0, 0.0);
    let lambda = c.wavelength();
    let mut d = lambda;
    while d <= 0.1 {
        let spec = PlanarSpec {
            grid_rows: planar.grid_rows,
            grid_cols: planar.grid_cols,
            pitch: planar.pitch,
            height: 0.0,
            focus: Vec3::new(0.0, 0.0, d),
            transducer: g.transducer,
        };
        let p = ArrayState::new(build_planar(&spec, &c)?, c).pressure(&spec.focus)?.norm();
        if p > best.1 {
            best = (d, p);
        }
        d += 0.25e-3;
    }
    let ratio = cylinder_pressure / best.1;
    Ok(GeometryReport {
        cylinder_focus: zc,
        cylinder_pressure,
        planar_distance: best.0,
        planar_pressure: best.1,
        ratio,
        passed: ratio > 1.10,
        in_band: (1.12..=1.42).contains(&ratio),
    })
}

/// In-phase lower rings between the table and a dish `gap` above them.
fn dish_setup(rig: &Rig, dish: &DishSettings) -> Result<(Vec<SourceState>, Reflector, Reflector)> {
    let mut g = rig.geometry.clone();
    g.helicity = 0;
    if dish.rings == 0 || dish.rings > g.rings {
        return Err(Error::Domain {
            what: "dish.rings",
            value: dish.rings as f64,
        });
    }
    let ring: Vec<_> = build_cylinder(&g)?
        .into_iter()
        .take(dish.rings * g.transducers_per_ring)
        .collect();
    let table_height = rig.reflectors.first().map_or(0.0, |r| r.height);
    let table = Reflector::new(table_height, dish.coefficient)?;
    let top = Reflector::new(g.ring_heights[dish.rings - 1] + dish.gap, dish.coefficient)?;
    Ok((ring, table, top))
}

/// Change from adding second-order images between table and dish.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub error: f64,
    /// Same measure with lossless reflectors, for reference.
    pub lossless_error: f64,
    pub passed: bool,
}

pub const TRUNCATION_LIMIT: f64 = 0.02;

pub fn image_truncation(rig: &Rig, dish: &DishSettings) -> Result<TruncationReport> {
    let (ring, table, top) = dish_setup(rig, dish)?;
    let probes: Vec<Vec3> = (0..50)
        .map(|i| Vec3::new(0.0, 0.0, table.height + (top.height - table.height) * (i as f64 + 0.5) / 50.0))
        .collect();
    let error = series_truncation_error(&ring, &[table, top], 1, 2, &probes, &rig.constants)?;
    let lossless = [
        Reflector {
            coefficient: 1.0,
            ..table
        },
        Reflector {
            coefficient: 1.0,
            ..top
        },
    ];
    let lossless_error = series_truncation_error(&ring, &lossless, 1, 2, &probes, &rig.constants)?;
    Ok(TruncationReport {
        error,
        lossless_error,
        passed: error < TRUNCATION_LIMIT,
    })
}

/// Moved dish against a phase-shifted copy of its image ring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub displacement: f64,
    pub relative_rms: f64,
    /// (z, F_z with moved dish, F_z with phased ring).
    pub profile: Vec<(f64, f64, f64)>,
    pub passed: bool,
}

pub const EQUIVALENCE_LIMIT: f64 = 0.10;

/// Compares axial force profiles over z in [2, 40] mm for a dish lifted by lambda/16.
pub fn reflector_equivalence(rig: &Rig, dish: &DishSettings) -> Result<EquivalenceReport> {
    let (ring, table, top) = dish_setup(rig, dish)?;
    let c = rig.constants;
    let displacement = c.wavelength() / 16.0;
    let moved = Reflector {
        height: top.height + displacement,
        ..top
    };
    let a = ArrayState::new(add_images(&ring, &[table, moved], 1)?, c);
    let mut b_sources = add_images(&ring, &[table], 1)?;
    b_sources.extend(reflector_phase_equivalent(&ring, &top, displacement, &c)?);
    let b = ArrayState::new(b_sources, c);
    let mut profile = Vec::new();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..=76 {
        let z = 2e-3 + 0.5e-3 * i as f64;
        let p = Vec3::new(0.0, 0.0, z);
        let fa = acoustic_force(&a, &p, &rig.particle)?.z;
        let fb = acoustic_force(&b, &p, &rig.particle)?.z;
        num += (fa - fb).powi(2);
        den += fa * fa;
        profile.push((z, fa, fb));
    }
    let relative_rms = (num / den).sqrt();
    Ok(EquivalenceReport {
        displacement,
        relative_rms,
        profile,
        passed: relative_rms < EQUIVALENCE_LIMIT,
    })
}

/// Force against an independent five-point difference of the potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub points: usize,
    pub max_relative_error: f64,
    pub passed: bool,
}

pub const GRADIENT_LIMIT: f64 = 1e-4;

/// Random points inside the cylinder with every ring on; reference step h/3.
pub fn gradient_check(rig: &Rig, seed: u64) -> Result<GradientReport> {
    let arr = ring_array(rig, &vec![true; rig.geometry.rings])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = arr.gradient_step / 3.0;
    let top = rig.geometry.ring_heights.last().copied().unwrap_or(0.05);
    let r_max = 0.7 * rig.geometry.radius();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let r = r_max * rng.gen::<f64>().sqrt();
        let a = 2.0 * PI * rng.gen::<f64>();
        let p = Vec3::new(r * a.cos(), r * a.sin(), rng.gen_range(2e-3..top));
        let f = acoustic_force_richardson(&arr, &p, &rig.particle)?;
        let mut g = Vec3::zeros();
        for axis in 0..3 {
            let mut e = Vec3::zeros();
            e[axis] = s;
            let u = |d: Vec3| gorkov_potential(&arr, &(p + d), &rig.particle);
            g[axis] = (-u(2.0 * e)? + 8.0 * u(e)? - 8.0 * u(-e)? + u(-2.0 * e)?) / (12.0 * s);
        }
        worst = worst.max((f + g).norm() / g.norm());
    }
    Ok(GradientReport {
        points: 20,
        max_relative_error: worst,
        passed: worst < GRADIENT_LIMIT,
    })
}

/// Planned schedule and its replay from the axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PickingReport {
    pub schedule: PickingSchedule,
    pub run: ScheduleRun,
    /// Stage heights b to f after replay (m).
    pub stage_heights: Vec<f64>,
    pub nondecreasing: bool,
    pub within_band: bool,
    pub final_height: f64,
    pub seconds: f64,
    pub passed: bool,
}

pub const PICK_MIN_FINAL: f64 = 0.045;
pub const STAGE_TOLERANCE: f64 = 0.25;

pub fn picking(setup: &Setup) -> Result<PickingReport> {
    let t = Instant::now();
    let rig = &setup.rig;
    let schedule = plan_picking(
        &rig.geometry,
        &rig.reflectors,
        rig.image_order,
        &rig.particle,
        &rig.constants,
        &setup.planner,
    )?;
    let run = simulate_schedule(&schedule, rig, &setup.motion, Vec3::new(0.0, 0.0, rig.particle.radius))?;
    let stage_heights: Vec<f64> = run.stages.iter().skip(1).map(|s| s.height).collect();
    let nondecreasing = run.stages.windows(2).all(|w| w[1].height >= w[0].height);
    let within_band = stage_heights
        .iter()
        .zip(setup.planner.stage_heights)
        .all(|(h, t)| (h - t).abs() <= STAGE_TOLERANCE * t);
    let final_height = run.final_position.z;
    Ok(PickingReport {
        passed: nondecreasing && within_band && final_height >= PICK_MIN_FINAL,
        schedule,
        run,
        stage_heights,
        nondecreasing,
        within_band,
        final_height,
        seconds: t.elapsed().as_secs_f64(),
    })
}

/// Basin of the default schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinReport {
    pub map: BasinMap,
    pub equivalent_diameter: f64,
    pub symmetry_defects: usize,
    pub center_pickable: bool,
    /// Equivalent diameter inside the expected band [20, 42] mm.
    pub in_band: bool,
    pub seconds: f64,
    pub passed: bool,
}

pub fn basin(setup: &Setup, schedule: &PickingSchedule) -> Result<BasinReport> {
    let t = Instant::now();
    let map = basin_map(schedule, &setup.rig, &setup.motion, &setup.basin)?;
    let equivalent_diameter = map.equivalent_diameter();
    let symmetry_defects = map.symmetry_defects(setup.rig.geometry.transducers_per_ring);
    let center_pickable = map.class_at(0, 0) == Some(crate::dynamics::BasinClass::Pickable);
    Ok(BasinReport {
        passed: center_pickable && symmetry_defects == 0,
        in_band: (0.020..=0.042).contains(&equivalent_diameter),
        map,
        equivalent_diameter,
        symmetry_defects,
        center_pickable,
        seconds: t.elapsed().as_secs_f64(),
    })
}

/// Randomised checks of the device emulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceReport {
    pub sequences: usize,
    pub commands: usize,
    pub snapshots_checked: usize,
    pub violations: Vec<String>,
    pub replay_identical: bool,
    pub passed: bool,
}

fn random_command(rng: &mut ChaCha8Rng, limits: &DeviceLimits) -> PhaseCommand {
    // a few out-of-range arguments exercise the error path
    let channel = rng.gen_range(0..limits.channels + 2);
    match rng.gen_range(0..10) {
        0..=2 => PhaseCommand::Inc {
            channel,
            steps: rng.gen_range(0..6000),
        },
        3..=5 => PhaseCommand::Dec {
            channel,
            steps: rng.gen_range(0..6000),
        },
        6 => PhaseCommand::Set {
            channel,
            value: rng.gen_range(0..limits.steps_per_cycle + 10),
        },
        7 => PhaseCommand::Ring {
            level: rng.gen_range(0..=limits.rings + 1),
            on: rng.gen(),
        },
        8 => PhaseCommand::Commit,
        _ => PhaseCommand::Query,
    }
}

/// Run `sequences` random command sequences with a concurrent snapshot reader,
/// then check that a planner script replays to identical live states.
pub fn device_properties(schedule: &PickingSchedule, limits: DeviceLimits, sequences: usize, seed: u64) -> Result<DeviceReport> {
    let device = Arc::new(Mutex::new(DeviceState::new(limits)?));
    let history: Arc<Mutex<HashMap<u64, LiveState>>> = Arc::new(Mutex::new(HashMap::new()));
    history.lock().unwrap().insert(0, (*device.lock().unwrap().live()).clone());
    let done = Arc::new(std::sync::atomic::AtomicBool::new(false));
    let reader = {
        let (device, history, done) = (Arc::clone(&device), Arc::clone(&history), Arc::clone(&done));
        std::thread::spawn(move || {
            let mut checked = 0usize;
            let mut bad = Vec::new();
            while !done.load(std::sync::atomic::Ordering::Relaxed) {
                let live = device.lock().unwrap().live();
                let expected = history.lock().unwrap().get(&live.commit_counter).cloned();
                if expected.as_ref() != Some(&*live) {
                    bad.push(format!("snapshot at commit {} mixes states", live.commit_counter));
                }
                checked += 1;
                std::thread::yield_now();
            }
            (checked, bad)
        })
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    let mut commands = 0;
    let m = limits.steps_per_cycle;
    for seq in 0..sequences {
        let len = rng.gen_range(1..40);
        for _ in 0..len {
            let cmd = random_command(&mut rng, &limits);
            commands += 1;
            let mut dev = device.lock().unwrap();
            let live_before = dev.live();
            let staged_before = dev.staged_phases().to_vec();
            if cmd == PhaseCommand::Commit {
                let expected = LiveState {
                    commit_counter: dev.commit_counter() + 1,
                    phases: dev.staged_phases().to_vec(),
                    ring_enable: dev.staged_rings().to_vec(),
                };
                history.lock().unwrap().insert(expected.commit_counter, expected.clone());
                dev.apply(&cmd)?;
                if *dev.live() != expected {
                    violations.push(format!("sequence {seq}: commit published a different state"));
                }
                continue;
            }
            let result = dev.apply(&cmd);
            if *dev.live() != *live_before {
                violations.push(format!("sequence {seq}: {cmd} changed live state"));
            }
            if result.is_err() && dev.staged_phases() != staged_before.as_slice() {
                violations.push(format!("sequence {seq}: rejected {cmd} changed staged state"));
            }
            if dev.staged_phases().iter().any(|p| *p >= m) {
                violations.push(format!("sequence {seq}: register out of range after {cmd}"));
            }
            if let (Ok(Response::Staged), PhaseCommand::Inc { channel, steps }) = (&result, cmd) {
                let mut probe = dev.clone();
                probe.apply(&PhaseCommand::Dec { channel, steps })?;
                if probe.staged_phases() != staged_before.as_slice() {
                    violations.push(format!("sequence {seq}: DEC did not undo {cmd}"));
                }
            }
        }
    }
    done.store(true, std::sync::atomic::Ordering::Relaxed);
    let (snapshots_checked, bad) = reader.join().map_err(|_| Error::Config("reader thread panicked".into()))?;
    violations.extend(bad);

    let script = schedule.to_script();
    let reparsed = PickingSchedule::from_script(&script, &limits)?;
    let first = replay_states(schedule, limits)?;
    let second = replay_states(&reparsed, limits)?;
    let replay_identical = first.len() == second.len() && first.iter().zip(&second).all(|(a, b)| **a == **b);

    Ok(DeviceReport {
        sequences,
        commands,
        snapshots_checked,
        passed: violations.is_empty() && replay_identical,
        violations,
        replay_identical,
    })
}
