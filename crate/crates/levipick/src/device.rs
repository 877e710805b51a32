//! Emulator of the multi-channel phase controller and its line protocol.
//!
//! Commands edit a staged register bank; `COMMIT` copies the whole bank to
//! the live outputs in one step, so readers see either the old or the new
//! output state and never a mixture.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::acoustics::{ArrayState, PhysicalConstants};
use crate::error::{Error, Result};
use crate::geometry::{build_cylinder, CylinderSpec};
use crate::images::{add_images, Reflector};

/// Register layout of a controller.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceLimits {
    pub channels: usize,
    pub rings: usize,
    pub steps_per_cycle: u32,
}

impl Default for DeviceLimits {
    fn default() -> Self {
        Self {
            channels: 56,
            rings: 4,
            steps_per_cycle: 2500,
        }
    }
}

impl DeviceLimits {
    pub fn for_cylinder(spec: &CylinderSpec) -> Self {
        Self {
            channels: spec.channel_count(),
            rings: spec.rings,
            steps_per_cycle: 2500,
        }
    }

    pub fn per_ring(&self) -> usize {
        self.channels / self.rings
    }

    fn check(&self, cmd: &PhaseCommand) -> Result<()> {
        let channel = |c: usize| {
            if c >= self.channels {
                Err(Error::Range {
                    what: "channel",
                    value: c as i64,
                    limit: self.channels as i64 - 1,
                })
            } else {
                Ok(())
            }
        };
        match *cmd {
            PhaseCommand::Inc { channel: c, .. } | PhaseCommand::Dec { channel: c, .. } => channel(c),
            PhaseCommand::Set { channel: c, value } => {
                channel(c)?;
                if value >= self.steps_per_cycle {
                    return Err(Error::Range {
                        what: "phase value",
                        value: i64::from(value),
                        limit: i64::from(self.steps_per_cycle) - 1,
                    });
                }
                Ok(())
            }
            PhaseCommand::Ring { level, .. } => {
                if level == 0 || level > self.rings {
                    return Err(Error::Range {
                        what: "ring level",
                        value: level as i64,
                        limit: self.rings as i64,
                    });
                }
                Ok(())
            }
            PhaseCommand::Commit | PhaseCommand::Query => Ok(()),
        }
    }
}

/// One wire-protocol command. Ring levels are numbered from 1 (lowest).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum PhaseCommand {
    Inc { channel: usize, steps: u32 },
    Dec { channel: usize, steps: u32 },
    Set { channel: usize, value: u32 },
    Ring { level: usize, on: bool },
    Commit,
    Query,
}

impl fmt::Display for PhaseCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Inc { channel, steps } => write!(f, "INC {channel} {steps}"),
            Self::Dec { channel, steps } => write!(f, "DEC {channel} {steps}"),
            Self::Set { channel, value } => write!(f, "SET {channel} {value}"),
            Self::Ring { level, on } => write!(f, "RING {level} {}", if *on { "ON" } else { "OFF" }),
            Self::Commit => f.write_str("COMMIT"),
            Self::Query => f.write_str("QUERY"),
        }
    }
}

/// Parse one protocol line. Returns `None` for blank or comment-only lines.
///
/// Grammar: `INC <ch> <n>`, `DEC <ch> <n>`, `SET <ch> <val>`, `RING <level> ON|OFF`,
/// `COMMIT`, `QUERY`; keywords are case-insensitive and `#` starts a comment.
pub fn parse_line(line: &str, limits: &DeviceLimits) -> Result<Option<PhaseCommand>> {
    if let Some(pos) = line.bytes().position(|b| !b.is_ascii()) {
        return Err(Error::Parse {
            column: pos,
            reason: "non-ASCII byte".into(),
        });
    }
    if let Some(pos) = line.find(['\n', '\r']) {
        if !line[pos..].trim().is_empty() {
            return Err(Error::Parse {
                column: pos,
                reason: "more than one line".into(),
            });
        }
    }
    let body = line.split('#').next().unwrap_or("");
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in body.char_indices() {
        if ch.is_ascii_whitespace() {
            if let Some(s) = start.take() {
                tokens.push((s, &body[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push((s, &body[s..]));
    }
    let Some(&(kw_at, kw)) = tokens.first() else {
        return Ok(None);
    };
    let end = body.trim_end().len();
    let arity = |n: usize| -> Result<()> {
        if tokens.len() - 1 < n {
            return Err(Error::Parse {
                column: end,
                reason: format!("{} expects {n} argument(s)", kw.to_ascii_uppercase()),
            });
        }
        if tokens.len() - 1 > n {
            return Err(Error::Parse {
                column: tokens[n + 1].0,
                reason: "unexpected trailing token".into(),
            });
        }
        Ok(())
    };
    let int = |idx: usize, what: &str| -> Result<u64> {
        let (at, tok) = tokens[idx];
        tok.parse::<u64>().map_err(|_| Error::Parse {
            column: at,
            reason: format!("expected non-negative integer {what}, found {tok:?}"),
        })
    };
    let narrow = |idx: usize, v: u64| -> Result<u32> {
        u32::try_from(v).map_err(|_| Error::Parse {
            column: tokens[idx].0,
            reason: "integer too large".into(),
        })
    };
    let cmd = match kw.to_ascii_uppercase().as_str() {
        "INC" | "DEC" | "SET" => {
            arity(2)?;
            let channel = int(1, "channel")?;
            let n = narrow(2, int(2, "step count")?)?;
            let channel = usize::try_from(channel).unwrap_or(usize::MAX);
            match kw.to_ascii_uppercase().as_str() {
                "INC" => PhaseCommand::Inc { channel, steps: n },
                "DEC" => PhaseCommand::Dec { channel, steps: n },
                _ => PhaseCommand::Set { channel, value: n },
            }
        }
        "RING" => {
            arity(2)?;
            let level = usize::try_from(int(1, "ring level")?).unwrap_or(usize::MAX);
            let (at, state) = tokens[2];
            let on = match state.to_ascii_uppercase().as_str() {
                "ON" => true,
                "OFF" => false,
                _ => {
                    return Err(Error::Parse {
                        column: at,
                        reason: format!("expected ON or OFF, found {state:?}"),
                    })
                }
            };
            PhaseCommand::Ring { level, on }
        }
        "COMMIT" => {
            arity(0)?;
            PhaseCommand::Commit
        }
        "QUERY" => {
            arity(0)?;
            PhaseCommand::Query
        }
        _ => {
            return Err(Error::Parse {
                column: kw_at,
                reason: format!("unknown command {kw:?}"),
            })
        }
    };
    limits.check(&cmd)?;
    Ok(Some(cmd))
}

/// Parse a single non-empty command line.
pub fn parse_command(line: &str, limits: &DeviceLimits) -> Result<PhaseCommand> {
    parse_line(line, limits)?.ok_or(Error::Parse {
        column: 0,
        reason: "empty command".into(),
    })
}

/// Output registers as seen by the transducer drivers.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LiveState {
    pub commit_counter: u64,
    pub phases: Vec<u32>,
    pub ring_enable: Vec<bool>,
}

/// Full controller state: staged bank plus the shared live snapshot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeviceState {
    limits: DeviceLimits,
    staged_phases: Vec<u32>,
    staged_rings: Vec<bool>,
    live: Arc<LiveState>,
}

/// Outcome of applying one command.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Response {
    Staged,
    Committed(u64),
    Snapshot(String),
}

/// Serializable view of the whole device.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceSnapshot {
    pub limits: DeviceLimits,
    pub live: LiveState,
    pub staged_phases: Vec<u32>,
    pub staged_rings: Vec<bool>,
}

impl DeviceState {
    /// Power-on state: all phases zero, all rings off, no commits.
    pub fn new(limits: DeviceLimits) -> Result<Self> {
        if limits.rings == 0 || limits.channels == 0 || !limits.channels.is_multiple_of(limits.rings) {
            return Err(Error::InvalidSpec(format!(
                "{} channels cannot be split into {} rings",
                limits.channels, limits.rings
            )));
        }
        if limits.steps_per_cycle == 0 {
            return Err(Error::InvalidSpec("phase resolution must be positive".into()));
        }
        Ok(Self {
            limits,
            staged_phases: vec![0; limits.channels],
            staged_rings: vec![false; limits.rings],
            live: Arc::new(LiveState {
                commit_counter: 0,
                phases: vec![0; limits.channels],
                ring_enable: vec![false; limits.rings],
            }),
        })
    }

    pub fn limits(&self) -> &DeviceLimits {
        &self.limits
    }

    /// Shared handle on the current live outputs.
    pub fn live(&self) -> Arc<LiveState> {
        Arc::clone(&self.live)
    }

    pub fn staged_phases(&self) -> &[u32] {
        &self.staged_phases
    }

    pub fn staged_rings(&self) -> &[bool] {
        &self.staged_rings
    }

    pub fn commit_counter(&self) -> u64 {
        self.live.commit_counter
    }

    pub fn snapshot(&self) -> DeviceSnapshot {
        DeviceSnapshot {
            limits: self.limits,
            live: (*self.live).clone(),
            staged_phases: self.staged_phases.clone(),
            staged_rings: self.staged_rings.clone(),
        }
    }

    /// Apply a command. On error the state is left unchanged.
    pub fn apply(&mut self, cmd: &PhaseCommand) -> Result<Response> {
        self.limits.check(cmd)?;
        let m = self.limits.steps_per_cycle;
        match *cmd {
            PhaseCommand::Inc { channel, steps } => {
                let v = &mut self.staged_phases[channel];
                *v = ((u64::from(*v) + u64::from(steps)) % u64::from(m)) as u32;
            }
            PhaseCommand::Dec { channel, steps } => {
                let v = &mut self.staged_phases[channel];
                let back = u64::from(steps) % u64::from(m);
                *v = ((u64::from(*v) + u64::from(m) - back) % u64::from(m)) as u32;
            }
            PhaseCommand::Set { channel, value } => self.staged_phases[channel] = value,
            PhaseCommand::Ring { level, on } => self.staged_rings[level - 1] = on,
            PhaseCommand::Commit => return Ok(Response::Committed(self.commit())),
            PhaseCommand::Query => return Ok(Response::Snapshot(self.query())),
        }
        Ok(Response::Staged)
    }

    /// Parse and apply one protocol line; blank lines are ignored.
    pub fn apply_line(&mut self, line: &str) -> Result<Option<Response>> {
        match parse_line(line, &self.limits)? {
            Some(cmd) => self.apply(&cmd).map(Some),
            None => Ok(None),
        }
    }

    /// Publish the staged bank as the new live state; returns the new counter.
    pub fn commit(&mut self) -> u64 {
        let next = LiveState {
            commit_counter: self.live.commit_counter + 1,
            phases: self.staged_phases.clone(),
            ring_enable: self.staged_rings.clone(),
        };
        self.live = Arc::new(next);
        self.live.commit_counter
    }

    /// One-line text snapshot returned by `QUERY`.
    pub fn query(&self) -> String {
        let bits = |v: &[bool]| v.iter().map(|b| if *b { '1' } else { '0' }).collect::<String>();
        let list = |v: &[u32]| v.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        format!(
            "STATE commit={} rings={} staged_rings={} live={} staged={}",
            self.live.commit_counter,
            bits(&self.live.ring_enable),
            bits(&self.staged_rings),
            list(&self.live.phases),
            list(&self.staged_phases)
        )
    }
}

/// Phase register value (steps) to radians.
pub fn steps_to_radians(steps: u32, steps_per_cycle: u32) -> f64 {
    f64::from(steps) * 2.0 * PI / f64::from(steps_per_cycle)
}

/// Nearest register value for a phase in radians.
pub fn radians_to_steps(phase: f64, steps_per_cycle: u32) -> u32 {
    let m = f64::from(steps_per_cycle);
    ((phase / (2.0 * PI) * m).round().rem_euclid(m) as u32) % steps_per_cycle
}

/// Field sources for a live state: register phases, ring gating, then images.
pub fn to_array_state(
    live: &LiveState,
    geometry: &CylinderSpec,
    reflectors: &[Reflector],
    image_order: u32,
    constants: &PhysicalConstants,
    steps_per_cycle: u32,
) -> Result<ArrayState> {
    if geometry.channel_count() != live.phases.len() {
        return Err(Error::Mismatch {
            expected: geometry.channel_count(),
            found: live.phases.len(),
        });
    }
    if geometry.rings != live.ring_enable.len() {
        return Err(Error::Mismatch {
            expected: geometry.rings,
            found: live.ring_enable.len(),
        });
    }
    let per_ring = geometry.transducers_per_ring;
    let mut sources = build_cylinder(geometry)?;
    for (ch, s) in sources.iter_mut().enumerate() {
        *s = s
            .with_phase(steps_to_radians(live.phases[ch], steps_per_cycle))
            .with_amplitude(if live.ring_enable[ch / per_ring] { 1.0 } else { 0.0 });
    }
    Ok(ArrayState::new(add_images(&sources, reflectors, image_order)?, *constants))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustics::Vec3;

    fn dev() -> DeviceState {
        DeviceState::new(DeviceLimits::default()).unwrap()
    }

    fn p(line: &str) -> Result<PhaseCommand> {
        parse_command(line, &DeviceLimits::default())
    }

    #[test]
    fn grammar() {
        assert_eq!(p("INC 5 25").unwrap(), PhaseCommand::Inc { channel: 5, steps: 25 });
        assert_eq!(p("ring 2 OFF # prep stage e").unwrap(), PhaseCommand::Ring { level: 2, on: false });
        assert_eq!(p("  commit ").unwrap(), PhaseCommand::Commit);
        assert!(matches!(p("SET 60 0"), Err(Error::Range { what: "channel", .. })));
        assert!(matches!(p("SET 1 2500"), Err(Error::Range { .. })));
        assert!(matches!(p("RING 0 ON"), Err(Error::Range { .. })));
        assert!(matches!(p("JUMP 1"), Err(Error::Parse { column: 0, .. })));
        assert!(matches!(p("INC 1 x"), Err(Error::Parse { column: 6, .. })));
        assert!(matches!(p("INC 1"), Err(Error::Parse { .. })));
        assert!(matches!(p("COMMIT now"), Err(Error::Parse { column: 7, .. })));
        assert!(matches!(p("SET 1 -3"), Err(Error::Parse { .. })));
        assert_eq!(parse_line("# only a comment", &DeviceLimits::default()).unwrap(), None);
        for cmd in [
            PhaseCommand::Dec { channel: 3, steps: 7 },
            PhaseCommand::Ring { level: 4, on: true },
            PhaseCommand::Query,
        ] {
            assert_eq!(p(&cmd.to_string()).unwrap(), cmd);
        }
    }

    #[test]
    fn register_arithmetic() {
        let mut d = dev();
        d.apply(&PhaseCommand::Inc { channel: 0, steps: 2500 }).unwrap();
        assert_eq!(d.staged_phases()[0], 0);
        d.apply(&PhaseCommand::Dec { channel: 0, steps: 1 }).unwrap();
        assert_eq!(d.staged_phases()[0], 2499);
        d.apply(&PhaseCommand::Set { channel: 3, value: 625 }).unwrap();
        assert_eq!(d.staged_phases()[3], 625);
        assert_eq!(d.live().phases[3], 0);
    }

    #[test]
    fn commit_publishes_everything_at_once() {
        let mut d = dev();
        let before = d.live();
        d.apply_line("SET 0 10").unwrap();
        d.apply_line("SET 55 20").unwrap();
        assert_eq!(d.live(), before);
        assert_eq!(d.apply_line("COMMIT").unwrap(), Some(Response::Committed(1)));
        let live = d.live();
        assert_eq!((live.phases[0], live.phases[55]), (10, 20));
        d.commit();
        assert_eq!(d.commit_counter(), 2);
        // the earlier handle is untouched
        assert_eq!(before.commit_counter, 0);
    }

    #[test]
    fn failed_command_leaves_state() {
        let mut d = dev();
        let snap = d.snapshot();
        assert!(d.apply(&PhaseCommand::Set { channel: 99, value: 0 }).is_err());
        assert_eq!(d.snapshot(), snap);
    }

    #[test]
    fn query_is_read_only() {
        let mut d = dev();
        let snap = d.snapshot();
        let Response::Snapshot(text) = d.apply(&PhaseCommand::Query).unwrap() else {
            panic!("expected snapshot")
        };
        assert!(text.starts_with("STATE commit=0 rings=0000"));
        assert_eq!(d.snapshot(), snap);
    }

    #[test]
    fn array_state_mapping() {
        let c = PhysicalConstants::default();
        let mut g = CylinderSpec::default_for(&c);
        g.helicity = 0;
        let mut d = dev();
        for level in 1..=4 {
            d.apply(&PhaseCommand::Ring { level, on: true }).unwrap();
        }
        d.apply(&PhaseCommand::Set { channel: 0, value: 1250 }).unwrap();
        d.commit();
        let arr = to_array_state(&d.live(), &g, &[], 0, &c, 2500).unwrap();
        assert!((arr.sources[0].phase - PI).abs() < 1e-15);
        // reset channel 0 and compare with direct construction
        d.apply(&PhaseCommand::Set { channel: 0, value: 0 }).unwrap();
        d.commit();
        let arr = to_array_state(&d.live(), &g, &[], 0, &c, 2500).unwrap();
        let direct = ArrayState::new(build_cylinder(&g).unwrap(), c);
        let pt = Vec3::new(0.003, 0.001, 0.02);
        assert!((arr.pressure(&pt).unwrap() - direct.pressure(&pt).unwrap()).norm() < 1e-9);
        // ring 1 off silences its channels
        d.apply(&PhaseCommand::Ring { level: 1, on: false }).unwrap();
        d.commit();
        let arr = to_array_state(&d.live(), &g, &[], 0, &c, 2500).unwrap();
        assert!(arr.sources[..14].iter().all(|s| s.amplitude == 0.0));
        let bad = LiveState {
            commit_counter: 0,
            phases: vec![0; 10],
            ring_enable: vec![true; 4],
        };
        assert!(to_array_state(&bad, &g, &[], 0, &c, 2500).is_err());
    }

    #[test]
    fn step_conversion() {
        assert_eq!(radians_to_steps(PI, 2500), 1250);
        assert_eq!(radians_to_steps(2.0 * PI - 1e-9, 2500), 0);
        assert_eq!(radians_to_steps(-PI / 2.0, 2500), 1875);
    }
}
