//! One emulated device plus the particle it drives.

use std::sync::{Arc, Mutex};

use levipick::acoustics::Vec3;
use levipick::device::{DeviceSnapshot, DeviceState, Response};
use levipick::dynamics::{settle, MotionParams};
use levipick::error::{Error, Result};
use levipick::experiments::Setup;
use levipick::gorkov::{find_axial_nodes, potential_and_force, Stability};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

/// Pushed after every commit and settle batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub commit_counter: u64,
    pub position: [f64; 3],
    pub settled: bool,
    pub escaped: bool,
    /// Stable axial node heights (m) of the live field.
    pub nodes: Vec<f64>,
}

/// Result of one protocol line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandReply {
    /// `OK`, `COMMITTED <n>`, a `STATE` line, or empty for a comment.
    pub reply: String,
    pub commit_counter: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub position: [f64; 3],
    pub settled: bool,
    pub escaped: bool,
}

/// Sample of the axial profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub z: f64,
    #[serde(rename = "U")]
    pub u: f64,
    #[serde(rename = "Fz")]
    pub fz: f64,
}

struct State {
    device: DeviceState,
    position: Vec3,
    settled: bool,
    escaped: bool,
}

/// Commands are applied one at a time under the session lock.
pub struct Session {
    pub setup: Arc<Setup>,
    pub config_hash: String,
    state: Mutex<State>,
    events: broadcast::Sender<Event>,
}

impl Session {
    pub fn new(setup: Arc<Setup>, config_hash: String) -> Result<Self> {
        let device = DeviceState::new(setup.rig.limits())?;
        let position = Vec3::new(0.0, 0.0, setup.rig.particle.radius);
        let (events, _) = broadcast::channel(256);
        Ok(Self {
            setup,
            config_hash,
            state: Mutex::new(State {
                device,
                position,
                settled: true,
                escaped: false,
            }),
            events,
        })
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Event> {
        self.events.subscribe()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Apply one protocol line. A commit settles the particle in the new field.
    pub fn command(&self, line: &str) -> Result<CommandReply> {
        let mut st = self.lock();
        let reply = match st.device.apply_line(line)? {
            None => String::new(),
            Some(Response::Staged) => "OK".into(),
            Some(Response::Snapshot(s)) => s,
            Some(Response::Committed(n)) => {
                let limit = self.setup.motion.step_limit;
                self.advance(&mut st, limit)?;
                format!("COMMITTED {n}")
            }
        };
        Ok(CommandReply {
            reply,
            commit_counter: st.device.commit_counter(),
        })
    }

    /// Advance the particle by at most `steps` integration steps.
    pub fn step_settle(&self, steps: usize) -> Result<ParticleState> {
        let mut st = self.lock();
        self.advance(&mut st, steps)?;
        Ok(particle_of(&st))
    }

    fn advance(&self, st: &mut State, steps: usize) -> Result<()> {
        if !st.escaped && steps > 0 {
            let arr = self.setup.rig.array(&st.device.live())?;
            let params = MotionParams {
                step_limit: steps,
                ..self.setup.motion
            };
            let r = settle(&arr, &self.setup.rig.particle, st.position, &params)?;
            st.position = r.position;
            st.settled = r.converged;
            if self.setup.rig.check_inside(&r.position).is_err() {
                st.escaped = true;
            }
        }
        let event = Event {
            commit_counter: st.device.commit_counter(),
            position: st.position.into(),
            settled: st.settled,
            escaped: st.escaped,
            nodes: self.nodes(&st.device)?,
        };
        // no subscribers is fine
        let _ = self.events.send(event);
        Ok(())
    }

    fn nodes(&self, device: &DeviceState) -> Result<Vec<f64>> {
        let rig = &self.setup.rig;
        if !device.live().ring_enable.iter().any(|r| *r) {
            return Ok(Vec::new());
        }
        let arr = rig.array(&device.live())?;
        let top = rig.geometry.ring_heights.last().copied().unwrap_or(0.0) + rig.geometry.radius();
        Ok(find_axial_nodes(&arr, &rig.particle, 1e-4, top)?
            .into_iter()
            .filter(|n| n.stability == Stability::Stable)
            .map(|n| n.position.z)
            .collect())
    }

    pub fn snapshot(&self) -> DeviceSnapshot {
        self.lock().device.snapshot()
    }

    pub fn particle(&self) -> ParticleState {
        particle_of(&self.lock())
    }

    /// U and F_z along the axis of the live field at `n` evenly spaced heights.
    pub fn profile(&self, z_min: f64, z_max: f64, n: usize) -> Result<Vec<ProfilePoint>> {
        if !(z_min >= 0.0 && z_max > z_min) || !(2..=10_000).contains(&n) {
            return Err(Error::InvalidSpec("profile needs 0 <= z_min < z_max and 2..=10000 points".into()));
        }
        let live = self.lock().device.live();
        let arr = self.setup.rig.array(&live)?;
        (0..n)
            .map(|i| {
                let z = z_min + (z_max - z_min) * i as f64 / (n - 1) as f64;
                let (u, f) = potential_and_force(&arr, &Vec3::new(0.0, 0.0, z), &self.setup.rig.particle)?;
                Ok(ProfilePoint { z, u, fz: f.z })
            })
            .collect()
    }
}

fn particle_of(st: &State) -> ParticleState {
    ParticleState {
        position: st.position.into(),
        settled: st.settled,
        escaped: st.escaped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session() -> Session {
        Session::new(Arc::new(Setup::default()), "test".into()).unwrap()
    }

    #[test]
    fn commit_on_fresh_session_keeps_particle_on_table() {
        let s = session();
        let mut rx = s.subscribe();
        let r = s.command("COMMIT").unwrap();
        assert_eq!(r.reply, "COMMITTED 1");
        assert_eq!(r.commit_counter, 1);
        assert_eq!(s.particle().position, [0.0, 0.0, 1e-3]);
        let e = rx.try_recv().unwrap();
        assert_eq!(e.commit_counter, 1);
        assert!(e.nodes.is_empty());
    }

    #[test]
    fn rings_off_profile_is_zero() {
        let p = session().profile(0.001, 0.05, 20).unwrap();
        assert!(p.iter().all(|q| q.u == 0.0 && q.fz == 0.0));
    }

    #[test]
    fn bad_lines_leave_state_alone() {
        let s = session();
        let before = s.snapshot();
        assert!(matches!(s.command("SET 60 0"), Err(Error::Range { .. })));
        assert!(matches!(s.command("JUMP 1"), Err(Error::Parse { .. })));
        assert_eq!(s.snapshot(), before);
        assert_eq!(s.command("# note").unwrap().reply, "");
    }
}
