//! Automated six-stage picking schedule.
//!
//! Stage a writes the base ring pattern with every ring off. Stages b to f
//! switch rings on and off in the fixed order below and then shift whole rings
//! in small phase increments, one commit per move, while tracking where a
//! particle resting on the axis would sit. Each stage searches the lattice of
//! per-ring offsets best-first (highest tracked height first) and stops once
//! the stage height is reached.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::acoustics::{grad_to_velocity, ArrayState, Complex, FieldSample, PhysicalConstants, Vec3};
use crate::device::{radians_to_steps, steps_to_radians, DeviceLimits, PhaseCommand};
use crate::error::{Error, Result};
use crate::geometry::{build_cylinder, CylinderSpec};
use crate::gorkov::{potential_from_sample, Particle};
use crate::images::{add_images, Reflector};

/// Ring activity and shifted rings (0-based levels) of stages b to f.
const STAGES: [(char, [bool; 4], &[usize]); 5] = [
    ('b', [true, true, false, false], &[1]),
    ('c', [true, true, false, false], &[0]),
    ('d', [true, true, true, false], &[1, 2]),
    ('e', [false, true, true, true], &[2, 3]),
    ('f', [false, false, true, true], &[3]),
];

/// Tuning knobs of the planner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerOptions {
    /// Phase steps added to every channel of a shifted ring per commit.
    pub increment: u32,
    /// Heights (m) that end stages b to f.
    pub stage_heights: [f64; 5],
    /// Largest fall (m) of the tracked particle accepted between commits.
    pub max_drop: f64,
    /// Search budget per stage (expanded lattice states).
    pub max_expansions: usize,
    /// Lateral offset (m) used to confirm the tracked trap holds sideways.
    pub lateral_probe: f64,
    /// A stage that stalls is accepted if it reached this fraction of its height.
    pub accept_fraction: f64,
    /// Final height (m) the schedule aims for.
    pub target_height: f64,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        Self {
            increment: 25,
            stage_heights: [0.010, 0.015, 0.030, 0.045, 0.050],
            max_drop: 1e-3,
            max_expansions: 600,
            lateral_probe: 3e-4,
            accept_fraction: 0.75,
            target_height: 0.050,
        }
    }
}

/// One labelled stage: the command batches of its commits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleStage {
    pub label: char,
    /// Ring enables in force during the stage (lowest ring first).
    pub rings_on: Vec<bool>,
    /// Commands preceding each `COMMIT`.
    pub commits: Vec<Vec<PhaseCommand>>,
    /// Axial height (m) the planner expects at the end of the stage.
    pub expected_height: f64,
}

/// Ordered picking procedure, replayable as a protocol script.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PickingSchedule {
    pub stages: Vec<ScheduleStage>,
    pub target_height: f64,
}

const SCRIPT_HEADER: &str = "# levipick picking script v1";

impl PickingSchedule {
    pub fn commit_count(&self) -> usize {
        self.stages.iter().map(|s| s.commits.len()).sum()
    }

    /// Check ring sequencing and the ordering of expected heights.
    pub fn validate(&self) -> Result<()> {
        for w in self.stages.windows(2) {
            if w[1].expected_height <= w[0].expected_height {
                return Err(Error::InvalidSpec(format!(
                    "stage {} expected height does not exceed stage {}",
                    w[1].label, w[0].label
                )));
            }
        }
        for s in &self.stages {
            if s.commits.is_empty() {
                return Err(Error::InvalidSpec(format!("stage {} has no commit", s.label)));
            }
        }
        Ok(())
    }

    /// Serialize as protocol lines; stage boundaries are carried in comments.
    pub fn to_script(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{SCRIPT_HEADER}");
        let _ = writeln!(out, "# target {}", self.target_height);
        for s in &self.stages {
            let rings: String = s.rings_on.iter().map(|b| if *b { '1' } else { '0' }).collect();
            let _ = writeln!(out, "# stage {} rings {} expected {}", s.label, rings, s.expected_height);
            for batch in &s.commits {
                for cmd in batch {
                    let _ = writeln!(out, "{cmd}");
                }
                out.push_str("COMMIT\n");
            }
        }
        out
    }

    /// Parse a script written by [`PickingSchedule::to_script`].
    pub fn from_script(text: &str, limits: &DeviceLimits) -> Result<Self> {
        let mut target = None;
        let mut stages: Vec<ScheduleStage> = Vec::new();
        let mut batch = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let bad = |reason: &str| Error::Config(format!("script line {}: {reason}", n + 1));
            if let Some(rest) = line.strip_prefix("# target ") {
                target = Some(rest.trim().parse::<f64>().map_err(|_| bad("bad target"))?);
                continue;
            }
            if let Some(rest) = line.strip_prefix("# stage ") {
                let f: Vec<&str> = rest.split_whitespace().collect();
                if f.len() != 5 || f[1] != "rings" || f[3] != "expected" {
                    return Err(bad("malformed stage header"));
                }
                let label = f[0].chars().next().ok_or_else(|| bad("missing stage label"))?;
                let rings_on = f[2].chars().map(|c| c == '1').collect();
                let expected_height = f[4].parse::<f64>().map_err(|_| bad("bad expected height"))?;
                if !batch.is_empty() {
                    return Err(bad("commands before stage header are not committed"));
                }
                stages.push(ScheduleStage {
                    label,
                    rings_on,
                    commits: Vec::new(),
                    expected_height,
                });
                continue;
            }
            let Some(cmd) = crate::device::parse_line(line, limits)? else {
                continue;
            };
            let stage = stages.last_mut().ok_or_else(|| bad("command before first stage"))?;
            match cmd {
                PhaseCommand::Commit => stage.commits.push(std::mem::take(&mut batch)),
                PhaseCommand::Query => {}
                other => batch.push(other),
            }
        }
        if !batch.is_empty() {
            return Err(Error::Config("script ends with uncommitted commands".into()));
        }
        let schedule = Self {
            stages,
            target_height: target.ok_or_else(|| Error::Config("script has no target line".into()))?,
        };
        schedule.validate()?;
        Ok(schedule)
    }
}

/// Base register value for each channel (the quantized helical pattern).
pub fn base_registers(geometry: &CylinderSpec, steps_per_cycle: u32) -> Vec<u32> {
    (0..geometry.channel_count())
        .map(|ch| radians_to_steps(geometry.helical_phase(ch % geometry.transducers_per_ring), steps_per_cycle))
        .collect()
}

/// Per-ring pressure along the axis and along a parallel line offset sideways,
/// sampled on a 7-point stencil so potentials and forces follow directly.
struct AxialModel {
    zs: Vec<f64>,
    dz: f64,
    /// fields[ring][line][offset][iz]; line 0 is the axis, line 1 is offset by the lateral probe.
    fields: Vec<[[Vec<Complex>; 7]; 2]>,
    particle: Particle,
    constants: PhysicalConstants,
    steps_per_cycle: u32,
}

const OFFSETS: [[f64; 3]; 7] = [
    [0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, -1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0],
];

impl AxialModel {
    fn new(
        geometry: &CylinderSpec,
        reflectors: &[Reflector],
        image_order: u32,
        particle: &Particle,
        constants: &PhysicalConstants,
        lateral_probe: f64,
        steps_per_cycle: u32,
    ) -> Result<Self> {
        let h = constants.wavelength() / 200.0;
        let top = geometry.ring_heights.last().copied().unwrap_or(0.0) + constants.wavelength();
        let n = ((top - particle.radius) / h).ceil() as usize + 2;
        let zs: Vec<f64> = (0..n).map(|i| particle.radius + (i as f64 - 1.0) * h).collect();
        let all = build_cylinder(geometry)?;
        let base = base_registers(geometry, steps_per_cycle);
        let per_ring = geometry.transducers_per_ring;
        let mut fields = Vec::with_capacity(geometry.rings);
        for ring in 0..geometry.rings {
            let ring_sources: Vec<_> = (ring * per_ring..(ring + 1) * per_ring)
                .map(|ch| all[ch].with_phase(steps_to_radians(base[ch], steps_per_cycle)))
                .collect();
            let arr = ArrayState::new(add_images(&ring_sources, reflectors, image_order)?, *constants);
            let mut lines: [[Vec<Complex>; 7]; 2] = Default::default();
            for (line, x0) in [0.0, lateral_probe].into_iter().enumerate() {
                for (o, off) in OFFSETS.iter().enumerate() {
                    lines[line][o] = zs
                        .iter()
                        .map(|&z| arr.pressure(&Vec3::new(x0 + off[0] * h, off[1] * h, z + off[2] * h)))
                        .collect::<Result<_>>()?;
                }
            }
            fields.push(lines);
        }
        Ok(Self {
            zs,
            dz: h,
            fields,
            particle: *particle,
            constants: *constants,
            steps_per_cycle,
        })
    }

    fn potential(&self, on: &[bool], offsets: &[u32], line: usize, iz: usize) -> f64 {
        let mut p = [Complex::new(0.0, 0.0); 7];
        for (ring, f) in self.fields.iter().enumerate() {
            if !on[ring] {
                continue;
            }
            let rot = Complex::from_polar(1.0, steps_to_radians(offsets[ring], self.steps_per_cycle));
            for (o, acc) in p.iter_mut().enumerate() {
                *acc += f[line][o][iz] * rot;
            }
        }
        let mut velocity = [Complex::new(0.0, 0.0); 3];
        for (axis, v) in velocity.iter_mut().enumerate() {
            *v = grad_to_velocity((p[1 + 2 * axis] - p[2 + 2 * axis]) / (2.0 * self.dz), &self.constants);
        }
        potential_from_sample(&FieldSample { pressure: p[0], velocity }, &self.particle, &self.constants)
    }

    /// Net vertical force (acoustic plus weight) at every interior grid point.
    fn net_force(&self, on: &[bool], offsets: &[u32]) -> Vec<f64> {
        let w = self.particle.weight();
        let n = self.zs.len();
        if !on.iter().any(|b| *b) {
            return vec![-w; n];
        }
        let u: Vec<f64> = (0..n).map(|i| self.potential(on, offsets, 0, i)).collect();
        let mut f = vec![-w; n];
        for i in 1..n - 1 {
            f[i] = -(u[i + 1] - u[i - 1]) / (2.0 * self.dz) - w;
        }
        f
    }

    /// Equilibrium reached by following the net force from height `z`.
    fn settle(&self, f: &[f64], z: f64) -> f64 {
        let n = self.zs.len();
        let floor = self.particle.radius;
        let mut i = (((z - self.zs[0]) / self.dz).round() as usize).clamp(1, n - 2);
        if f[i] > 0.0 {
            while i < n - 2 && f[i + 1] > 0.0 {
                i += 1;
            }
            if i == n - 2 {
                return self.zs[i];
            }
        } else {
            while i > 1 && f[i] <= 0.0 {
                i -= 1;
            }
            if f[i] <= 0.0 {
                return floor;
            }
        }
        // f[i] > 0 >= f[i + 1]
        let z_eq = self.zs[i] + self.dz * f[i] / (f[i] - f[i + 1]);
        z_eq.max(floor)
    }

    /// True if the trap at height `z` pushes a sideways-displaced particle back.
    fn laterally_stable(&self, on: &[bool], offsets: &[u32], z: f64) -> bool {
        if z <= self.particle.radius + 1e-9 {
            return true;
        }
        let i = (((z - self.zs[0]) / self.dz).round() as usize).clamp(1, self.zs.len() - 2);
        self.potential(on, offsets, 1, i) > self.potential(on, offsets, 0, i)
    }
}

#[derive(Clone, Debug)]
struct Node {
    z: f64,
    depth: usize,
    serial: usize,
    state: Vec<i64>,
    path: Vec<Vec<i64>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap: higher z first, then shorter path, then earlier insertion
        self.z
            .total_cmp(&other.z)
            .then(other.depth.cmp(&self.depth))
            .then(other.serial.cmp(&self.serial))
    }
}

/// Result of one stage search.
struct StageResult {
    z: f64,
    moves: Vec<Vec<i64>>,
}

/// Plan the six-stage picking procedure for a four-ring cylinder over the given reflectors.
pub fn plan_picking(
    geometry: &CylinderSpec,
    reflectors: &[Reflector],
    image_order: u32,
    particle: &Particle,
    constants: &PhysicalConstants,
    options: &PlannerOptions,
) -> Result<PickingSchedule> {
    geometry.validate()?;
    particle.validate()?;
    if geometry.rings != 4 {
        return Err(Error::InvalidSpec(format!(
            "picking procedure needs 4 rings, geometry has {}",
            geometry.rings
        )));
    }
    if options.increment == 0 {
        return Err(Error::InvalidSpec("phase increment must be positive".into()));
    }
    let limits = DeviceLimits::for_cylinder(geometry);
    let m = limits.steps_per_cycle;
    let model = AxialModel::new(
        geometry,
        reflectors,
        image_order,
        particle,
        constants,
        options.lateral_probe,
        m,
    )?;
    let per_ring = geometry.transducers_per_ring;

    let base = base_registers(geometry, m);
    let mut stages = vec![ScheduleStage {
        label: 'a',
        rings_on: vec![false; 4],
        commits: vec![base
            .iter()
            .enumerate()
            .map(|(channel, &value)| PhaseCommand::Set { channel, value })
            .collect()],
        expected_height: particle.radius,
    }];

    let mut offsets = vec![0u32; 4];
    let mut on = vec![false; 4];
    let mut z = particle.radius;
    for (k, (label, rings, shifted)) in STAGES.iter().enumerate() {
        let target = options.stage_heights[k];
        let mut toggles = Vec::new();
        for level in 0..4 {
            if on[level] != rings[level] {
                toggles.push(PhaseCommand::Ring {
                    level: level + 1,
                    on: rings[level],
                });
            }
        }
        on = rings.to_vec();
        let res = search_stage(&model, &on, shifted, &offsets, z, target, options, m);
        if res.z < options.accept_fraction * target {
            return Err(Error::Planning(format!(
                "stage {label} reached {:.2} mm, short of {:.2} mm",
                res.z * 1e3,
                target * 1e3
            )));
        }
        let mut commits = vec![toggles];
        for mv in &res.moves {
            let mut batch = Vec::new();
            for (j, &ring) in shifted.iter().enumerate() {
                let s = mv[j];
                if s == 0 {
                    continue;
                }
                for channel in ring * per_ring..(ring + 1) * per_ring {
                    batch.push(if s > 0 {
                        PhaseCommand::Inc {
                            channel,
                            steps: options.increment,
                        }
                    } else {
                        PhaseCommand::Dec {
                            channel,
                            steps: options.increment,
                        }
                    });
                }
                offsets[ring] = shift(offsets[ring], s, options.increment, m);
            }
            commits.push(batch);
        }
        z = res.z;
        stages.push(ScheduleStage {
            label: *label,
            rings_on: on.clone(),
            commits,
            expected_height: z,
        });
    }
    let schedule = PickingSchedule {
        stages,
        target_height: options.target_height,
    };
    schedule.validate()?;
    Ok(schedule)
}

fn shift(reg: u32, sign: i64, increment: u32, m: u32) -> u32 {
    let d = (i64::from(increment) * sign).rem_euclid(i64::from(m));
    ((i64::from(reg) + d).rem_euclid(i64::from(m))) as u32
}

#[allow(clippy::too_many_arguments)]
fn search_stage(
    model: &AxialModel,
    on: &[bool],
    shifted: &[usize],
    offsets: &[u32],
    z0: f64,
    target: f64,
    options: &PlannerOptions,
    m: u32,
) -> StageResult {
    let cycle = i64::from(m / options.increment.min(m).max(1));
    let mut moves: Vec<Vec<i64>> = Vec::new();
    for j in 0..shifted.len() {
        for s in [1, -1] {
            let mut mv = vec![0; shifted.len()];
            mv[j] = s;
            moves.push(mv);
        }
    }
    if shifted.len() == 2 {
        for s1 in [1, -1] {
            for s2 in [1, -1] {
                moves.push(vec![s1, s2]);
            }
        }
    }
    let offsets_for = |state: &[i64]| -> Vec<u32> {
        let mut o = offsets.to_vec();
        for (j, &ring) in shifted.iter().enumerate() {
            o[ring] = shift(o[ring], state[j], options.increment, m);
        }
        o
    };
    let start_state = vec![0i64; shifted.len()];
    let z_start = model.settle(&model.net_force(on, offsets), z0);
    let mut heap = BinaryHeap::new();
    let mut serial = 0;
    heap.push(Node {
        z: z_start,
        depth: 0,
        serial,
        state: start_state,
        path: Vec::new(),
    });
    let mut seen = HashSet::new();
    let mut best = StageResult {
        z: z_start,
        moves: Vec::new(),
    };
    let mut expanded = 0;
    while let Some(node) = heap.pop() {
        if expanded >= options.max_expansions {
            break;
        }
        if !seen.insert((node.state.clone(), (node.z * 1e4).round() as i64)) {
            continue;
        }
        expanded += 1;
        if node.z > best.z {
            best = StageResult {
                z: node.z,
                moves: node.path.clone(),
            };
        }
        if node.z >= target {
            return StageResult {
                z: node.z,
                moves: node.path,
            };
        }
        for mv in &moves {
            let state: Vec<i64> = node.state.iter().zip(mv).map(|(a, b)| (a + b).rem_euclid(cycle)).collect();
            let o = offsets_for(&state);
            let z2 = model.settle(&model.net_force(on, &o), node.z);
            if z2 < node.z - options.max_drop {
                continue;
            }
            if !model.laterally_stable(on, &o, z2) {
                continue;
            }
            serial += 1;
            let mut path = node.path.clone();
            path.push(mv.clone());
            heap.push(Node {
                z: z2,
                depth: node.depth + 1,
                serial,
                state,
                path,
            });
        }
    }
    best
}
