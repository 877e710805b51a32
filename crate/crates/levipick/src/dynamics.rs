//! Overdamped particle motion, schedule replay and basin mapping.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acoustics::{ArrayState, PhysicalConstants, Vec3};
use crate::device::{to_array_state, DeviceLimits, DeviceState, LiveState, PhaseCommand};
use crate::error::{Error, Result};
use crate::geometry::CylinderSpec;
use crate::gorkov::{potential_and_force, Particle};
use crate::images::Reflector;
use crate::planner::PickingSchedule;

/// Integration controls for [`settle`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionParams {
    pub step_limit: usize,
    /// Largest displacement (m) of a single step.
    pub displacement_cap: f64,
    /// A step shorter than this (m) ends the settle.
    pub convergence_epsilon: f64,
    /// Gain from net force to displacement (m/N); chosen automatically when absent.
    pub mobility: Option<f64>,
    /// Keep every n-th step in the recorded trajectory.
    pub decimation: usize,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            step_limit: 20_000,
            displacement_cap: PhysicalConstants::default().wavelength() / 50.0,
            convergence_epsilon: 1e-5,
            mobility: None,
            decimation: 10,
        }
    }
}

impl MotionParams {
    pub fn validate(&self, constants: &PhysicalConstants) -> Result<()> {
        if self.step_limit == 0 || self.decimation == 0 {
            return Err(Error::InvalidSpec("step limit and decimation must be positive".into()));
        }
        if !(self.displacement_cap > 0.0 && self.displacement_cap < constants.wavelength() / 4.0) {
            return Err(Error::InvalidSpec("displacement cap must lie in (0, lambda/4)".into()));
        }
        if !(self.convergence_epsilon > 0.0) {
            return Err(Error::InvalidSpec("convergence epsilon must be positive".into()));
        }
        if let Some(m) = self.mobility {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::InvalidSpec("mobility must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Recorded trajectory sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub position: Vec3,
}

/// Outcome of one settle run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettleResult {
    pub position: Vec3,
    pub converged: bool,
    /// Accepted steps.
    pub steps: usize,
    /// Mobility in force when the run ended (m/N).
    pub mobility: f64,
    pub trajectory: Vec<TrajectoryPoint>,
}

/// Net force with the floor acting as a one-sided support at z = radius.
fn contact_force(f: Vec3, z: f64, particle: &Particle) -> Vec3 {
    let mut net = f - Vec3::new(0.0, 0.0, particle.weight());
    if z <= particle.radius && net.z < 0.0 {
        net.z = 0.0;
    }
    net
}

/// Move the particle downhill in U + m g z until steps fall below the convergence epsilon.
///
/// Each step moves along the net force. With automatic mobility the trial
/// step starts at the displacement cap (or twice the last accepted step) and
/// is halved until the total potential does not rise; with a fixed mobility
/// the step is mobility times force, capped, and the mobility is halved on
/// rejection. The run has converged once the step would be shorter than
/// the convergence epsilon.
pub fn settle(arr: &ArrayState, particle: &Particle, start: Vec3, params: &MotionParams) -> Result<SettleResult> {
    let weight = particle.weight();
    let cap = params.displacement_cap;
    let mut x = start;
    x.z = x.z.max(particle.radius);
    let (u0, f) = potential_and_force(arr, &x, particle)?;
    let mut energy = u0 + weight * x.z;
    let mut net = contact_force(f, x.z, particle);
    let mut fixed = params.mobility;
    let mut trial = cap;
    let mut trajectory = vec![TrajectoryPoint { step: 0, position: x }];
    let mut steps = 0;
    let mut converged = false;
    let mut mobility = fixed.unwrap_or(cap / net.norm().max(f64::MIN_POSITIVE));
    let mut evaluations = 0;
    while evaluations < params.step_limit {
        let force = net.norm();
        if force == 0.0 {
            converged = true;
            break;
        }
        let len = match fixed {
            Some(m) => (m * force).min(cap),
            None => trial,
        };
        if len < params.convergence_epsilon {
            converged = true;
            break;
        }
        let mut next = x + net * (len / force);
        next.z = next.z.max(particle.radius);
        evaluations += 1;
        let (u2, f2) = potential_and_force(arr, &next, particle)?;
        let e2 = u2 + weight * next.z;
        if e2 > energy {
            match fixed.as_mut() {
                Some(m) => *m *= 0.5,
                None => trial *= 0.5,
            }
            continue;
        }
        mobility = len / force;
        x = next;
        energy = e2;
        net = contact_force(f2, x.z, particle);
        steps += 1;
        trial = (2.0 * len).min(cap);
        if steps % params.decimation == 0 {
            trajectory.push(TrajectoryPoint { step: steps, position: x });
        }
    }
    if trajectory.last().map(|t| t.step) != Some(steps) {
        trajectory.push(TrajectoryPoint { step: steps, position: x });
    }
    Ok(SettleResult {
        position: x,
        converged,
        steps,
        mobility,
        trajectory,
    })
}

/// Everything needed to turn device states into fields.
#[derive(Clone, Debug, PartialEq)]
pub struct Rig {
    pub geometry: CylinderSpec,
    pub reflectors: Vec<Reflector>,
    pub image_order: u32,
    pub constants: PhysicalConstants,
    pub particle: Particle,
}

impl Rig {
    pub fn limits(&self) -> DeviceLimits {
        DeviceLimits::for_cylinder(&self.geometry)
    }

    pub fn array(&self, live: &LiveState) -> Result<ArrayState> {
        to_array_state(
            live,
            &self.geometry,
            &self.reflectors,
            self.image_order,
            &self.constants,
            self.limits().steps_per_cycle,
        )
    }

    /// Error if `p` lies outside the cylinder or far above the top ring.
    pub fn check_inside(&self, p: &Vec3) -> Result<()> {
        let top = self.geometry.ring_heights.last().copied().unwrap_or(0.0) + self.geometry.ring_diameter;
        if p.xy().norm() >= self.geometry.radius() || p.z > top || !p.iter().all(|v| v.is_finite()) {
            return Err(Error::Escape {
                x: p.x,
                y: p.y,
                z: p.z,
            });
        }
        Ok(())
    }
}

/// Per-stage summary of a replay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub label: char,
    pub expected_height: f64,
    pub height: f64,
}

/// Replay of a schedule with settling after every commit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRun {
    /// Particle height after each commit.
    pub commit_heights: Vec<f64>,
    pub stages: Vec<StageOutcome>,
    pub final_position: Vec3,
    pub trajectory: Vec<TrajectoryPoint>,
    /// Every settle converged within the step limit.
    pub all_converged: bool,
    pub success: bool,
}

impl ScheduleRun {
    /// Rows `step,x,y,z` with a header line.
    pub fn trajectory_columns(&self) -> String {
        let mut s = String::from("step,x,y,z\n");
        for t in &self.trajectory {
            let _ = writeln!(s, "{},{:.9e},{:.9e},{:.9e}", t.step, t.position.x, t.position.y, t.position.z);
        }
        s
    }
}

/// Live device states produced by replaying a schedule, one per commit.
pub fn replay_states(schedule: &PickingSchedule, limits: DeviceLimits) -> Result<Vec<Arc<LiveState>>> {
    let mut dev = DeviceState::new(limits)?;
    let mut out = Vec::with_capacity(schedule.commit_count());
    for stage in &schedule.stages {
        for batch in &stage.commits {
            for cmd in batch {
                dev.apply(cmd)?;
            }
            dev.apply(&PhaseCommand::Commit)?;
            out.push(dev.live());
        }
    }
    Ok(out)
}

/// Replay `schedule` on a fresh device, settling the particle after each commit.
pub fn simulate_schedule(
    schedule: &PickingSchedule,
    rig: &Rig,
    params: &MotionParams,
    start: Vec3,
) -> Result<ScheduleRun> {
    params.validate(&rig.constants)?;
    let mut dev = DeviceState::new(rig.limits())?;
    let mut x = start;
    x.z = x.z.max(rig.particle.radius);
    rig.check_inside(&x)?;
    let mut commit_heights = Vec::new();
    let mut stages = Vec::new();
    let mut trajectory = vec![TrajectoryPoint { step: 0, position: x }];
    let mut total_steps = 0;
    let mut all_converged = true;
    for stage in &schedule.stages {
        for batch in &stage.commits {
            for cmd in batch {
                dev.apply(cmd)?;
            }
            dev.apply(&PhaseCommand::Commit)?;
            let arr = rig.array(&dev.live())?;
            let r = settle(&arr, &rig.particle, x, params)?;
            rig.check_inside(&r.position)?;
            all_converged &= r.converged;
            for t in r.trajectory.iter().skip(1) {
                trajectory.push(TrajectoryPoint {
                    step: total_steps + t.step,
                    position: t.position,
                });
            }
            total_steps += r.steps;
            x = r.position;
            commit_heights.push(x.z);
        }
        stages.push(StageOutcome {
            label: stage.label,
            expected_height: stage.expected_height,
            height: x.z,
        });
    }
    Ok(ScheduleRun {
        commit_heights,
        stages,
        final_position: x,
        trajectory,
        all_converged,
        success: x.z >= schedule.target_height,
    })
}

/// Class of a basin start cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasinClass {
    Pickable,
    Attractable,
    Unreachable,
}

impl BasinClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Pickable => "pickable",
            Self::Attractable => "attractable",
            Self::Unreachable => "unreachable",
        }
    }
}

/// Square grid of start cells on the table, centred on the axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasinOptions {
    /// Cell spacing (m).
    pub spacing: f64,
    /// Cells on each side of the centre.
    pub half_width: usize,
    /// Final height (m) that counts as picked.
    pub pick_height: f64,
}

impl Default for BasinOptions {
    fn default() -> Self {
        Self {
            spacing: 5e-3,
            half_width: 4,
            pick_height: 0.045,
        }
    }
}

/// Classified start grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinMap {
    pub spacing: f64,
    pub half_width: usize,
    /// Row-major over y then x, from -half_width to +half_width.
    pub cells: Vec<(f64, f64, BasinClass)>,
    /// Final height (m) reached from each cell by the full schedule (0 when not simulated).
    pub final_heights: Vec<f64>,
}

impl BasinMap {
    fn side(&self) -> usize {
        2 * self.half_width + 1
    }

    /// Class at integer cell coordinates, if inside the grid.
    pub fn class_at(&self, i: i64, j: i64) -> Option<BasinClass> {
        let h = self.half_width as i64;
        if i.abs() > h || j.abs() > h {
            return None;
        }
        let idx = (j + h) as usize * self.side() + (i + h) as usize;
        Some(self.cells[idx].2)
    }

    pub fn count(&self, class: BasinClass) -> usize {
        self.cells.iter().filter(|c| c.2 == class).count()
    }

    /// Diameter (m) of a disc with the pickable area.
    pub fn equivalent_diameter(&self) -> f64 {
        let area = self.count(BasinClass::Pickable) as f64 * self.spacing * self.spacing;
        2.0 * (area / std::f64::consts::PI).sqrt()
    }

    /// Pickable cells whose rotation by any multiple of 2 pi / fold lands
    /// more than one spacing away from every pickable cell.
    pub fn symmetry_defects(&self, fold: usize) -> usize {
        let pick: Vec<(f64, f64)> = self
            .cells
            .iter()
            .filter(|c| c.2 == BasinClass::Pickable)
            .map(|c| (c.0, c.1))
            .collect();
        let reach = self.spacing * (1.0 + 1e-9);
        let mut defects = 0;
        for &(x, y) in &pick {
            let ok = (1..fold).all(|n| {
                let a = 2.0 * std::f64::consts::PI * n as f64 / fold as f64;
                let (s, c) = a.sin_cos();
                let (rx, ry) = (c * x - s * y, s * x + c * y);
                pick.iter().any(|&(px, py)| ((px - rx).powi(2) + (py - ry).powi(2)).sqrt() <= reach)
            });
            if !ok {
                defects += 1;
            }
        }
        defects
    }

    /// Rows `x,y,class` with a header line.
    pub fn to_columns(&self) -> String {
        let mut s = String::from("x,y,class\n");
        for (x, y, c) in &self.cells {
            let _ = writeln!(s, "{x:.6e},{y:.6e},{}", c.as_str());
        }
        s
    }
}

/// Classify start cells by replaying the schedule from each one.
///
/// Cells that do not reach `pick_height` are attractable when the field of
/// the first stage-b commit pulls them onto a pickable cell.
pub fn basin_map(
    schedule: &PickingSchedule,
    rig: &Rig,
    params: &MotionParams,
    options: &BasinOptions,
) -> Result<BasinMap> {
    if !(options.spacing > 0.0) {
        return Err(Error::InvalidSpec("basin spacing must be positive".into()));
    }
    params.validate(&rig.constants)?;
    let h = options.half_width as i64;
    let coords: Vec<(i64, i64)> = (-h..=h).flat_map(|j| (-h..=h).map(move |i| (i, j))).collect();
    let z0 = rig.particle.radius;
    let runs: Vec<Option<f64>> = coords
        .par_iter()
        .map(|&(i, j)| {
            let start = Vec3::new(i as f64 * options.spacing, j as f64 * options.spacing, z0);
            if rig.check_inside(&start).is_err() {
                return None;
            }
            match simulate_schedule(schedule, rig, params, start) {
                Ok(run) => Some(run.final_position.z),
                Err(_) => Some(0.0),
            }
        })
        .collect();
    let pickable: Vec<bool> = runs.iter().map(|r| matches!(r, Some(z) if *z >= options.pick_height)).collect();

    let static_field = {
        let states = replay_states(schedule, rig.limits())?;
        let idx = schedule
            .stages
            .iter()
            .position(|s| s.label == 'b')
            .map(|k| schedule.stages[..k].iter().map(|s| s.commits.len()).sum::<usize>())
            .ok_or_else(|| Error::InvalidSpec("schedule has no stage b".into()))?;
        rig.array(&states[idx])?
    };
    let side = 2 * options.half_width + 1;
    let classes: Vec<BasinClass> = coords
        .par_iter()
        .enumerate()
        .map(|(n, &(i, j))| {
            if pickable[n] {
                return BasinClass::Pickable;
            }
            if runs[n].is_none() {
                return BasinClass::Unreachable;
            }
            let start = Vec3::new(i as f64 * options.spacing, j as f64 * options.spacing, z0);
            let Ok(r) = settle(&static_field, &rig.particle, start, params) else {
                return BasinClass::Unreachable;
            };
            let ci = (r.position.x / options.spacing).round() as i64;
            let cj = (r.position.y / options.spacing).round() as i64;
            let lands = ci.abs() <= h && cj.abs() <= h && pickable[(cj + h) as usize * side + (ci + h) as usize];
            if lands && (ci, cj) != (i, j) {
                BasinClass::Attractable
            } else {
                BasinClass::Unreachable
            }
        })
        .collect();
    Ok(BasinMap {
        spacing: options.spacing,
        half_width: options.half_width,
        cells: coords
            .iter()
            .zip(&classes)
            .map(|(&(i, j), &c)| (i as f64 * options.spacing, j as f64 * options.spacing, c))
            .collect(),
        final_heights: runs.iter().map(|r| r.unwrap_or(0.0)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustics::{SourceState, Transducer};

    #[test]
    fn gravity_only_rests_on_floor() {
        let arr = ArrayState::new(vec![], PhysicalConstants::default());
        let p = Particle::default();
        let r = settle(&arr, &p, Vec3::new(0.0, 0.0, 0.01), &MotionParams::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.position.z, p.radius);
    }

    #[test]
    fn steps_respect_cap_and_descend() {
        let t = Transducer::default();
        let a = SourceState::new(Vec3::zeros(), Vec3::z(), t).unwrap();
        let b = SourceState::new(Vec3::new(0.0, 0.0, 0.06), -Vec3::z(), t).unwrap();
        let arr = ArrayState::new(vec![a, b], PhysicalConstants::default());
        let part = Particle::default();
        let params = MotionParams {
            decimation: 1,
            ..MotionParams::default()
        };
        let r = settle(&arr, &part, Vec3::new(0.001, 0.0, 0.031), &params).unwrap();
        assert!(r.converged);
        let e = |x: &Vec3| crate::gorkov::gorkov_potential(&arr, x, &part).unwrap() + part.weight() * x.z;
        for w in r.trajectory.windows(2) {
            assert!((w[1].position - w[0].position).norm() <= params.displacement_cap * (1.0 + 1e-12));
            assert!(e(&w[1].position) <= e(&w[0].position) + 1e-12);
        }
    }

    #[test]
    fn basin_symmetry_counts() {
        let map = BasinMap {
            spacing: 1.0,
            half_width: 1,
            cells: vec![
                (-1.0, -1.0, BasinClass::Unreachable),
                (0.0, -1.0, BasinClass::Pickable),
                (1.0, -1.0, BasinClass::Unreachable),
                (-1.0, 0.0, BasinClass::Pickable),
                (0.0, 0.0, BasinClass::Pickable),
                (1.0, 0.0, BasinClass::Pickable),
                (-1.0, 1.0, BasinClass::Unreachable),
                (0.0, 1.0, BasinClass::Pickable),
                (1.0, 1.0, BasinClass::Unreachable),
            ],
            final_heights: vec![0.0; 9],
        };
        assert_eq!(map.symmetry_defects(14), 0);
        assert_eq!(map.class_at(0, 0), Some(BasinClass::Pickable));
        assert_eq!(map.count(BasinClass::Pickable), 5);
        assert!(map.to_columns().starts_with("x,y,class\n"));
    }
}
