//! A single driving world stepped at a fixed 100 ms tick.
//!
//! Within a tick the applied control is linearly interpolated from the
//! previous tick's command to the new one over `substeps` integration steps.
//! Contacts are resolved per sub-step: a side contact pushes the vehicle back
//! to its last free pose and bleeds speed; a frontal contact stops it and
//! starts an automatic reversing manoeuvre.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::contact::{footprint_contact, Contact, ContactDebouncer, ContactEvent, CrashKind};
use super::geometry::{wrap_angle, Vec2};
use super::lidar::{cast_lidar, LidarConfig, LidarScan};
use super::track::Track;
use super::vehicle::{advance_arc, step_vehicle, PhysicalControl, VehicleSpec, VehicleState};
use crate::error::Result;

pub const TICK_SECONDS: f64 = 0.1;
/// Penetration a grazing slide may reach, meters.
const SLIDE_TOLERANCE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub substeps: usize,
    pub debounce_ticks: u64,
    /// Length of the reversing manoeuvre after a frontal crash.
    pub recovery_ticks: u32,
    pub reverse_speed: f64,
    /// The run finishes this far before the end of the centerline.
    pub finish_margin: f64,
    pub lidar: LidarConfig,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            substeps: 10,
            debounce_ticks: 5,
            recovery_ticks: 15,
            reverse_speed: 1.5,
            finish_margin: 5.0,
            lidar: LidarConfig::default(),
        }
    }
}

/// What happened during one tick.
#[derive(Clone, Debug, PartialEq)]
pub struct TickOutcome {
    /// Index of the completed tick.
    pub tick: u64,
    /// New debounced crash event, if one started this tick.
    pub event: Option<ContactEvent>,
    pub in_contact: bool,
    pub reversing: bool,
    pub finished: bool,
    /// Commands actually integrated at each sub-step.
    pub substep_commands: Vec<PhysicalControl>,
}

#[derive(Clone, Debug)]
pub struct World {
    track: Arc<Track>,
    vehicle: VehicleSpec,
    cfg: WorldConfig,
    state: VehicleState,
    tick: u64,
    prev_command: PhysicalControl,
    debouncer: ContactDebouncer,
    recovery_left: u32,
    odometer: f64,
}

impl World {
    pub fn new(track: Arc<Track>, vehicle: VehicleSpec, cfg: WorldConfig) -> Self {
        let state = track.start_state();
        Self {
            debouncer: ContactDebouncer::new(cfg.debounce_ticks),
            track,
            vehicle,
            cfg,
            state,
            tick: 0,
            prev_command: PhysicalControl::NEUTRAL,
            recovery_left: 0,
            odometer: 0.0,
        }
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn track(&self) -> &Arc<Track> {
        &self.track
    }

    pub fn vehicle(&self) -> &VehicleSpec {
        &self.vehicle
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    /// Number of completed ticks.
    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn odometer(&self) -> f64 {
        self.odometer
    }

    pub fn last_command(&self) -> PhysicalControl {
        self.prev_command
    }

    pub fn is_reversing(&self) -> bool {
        self.recovery_left > 0
    }

    pub fn finished(&self) -> bool {
        self.state.station >= self.track.total_length() - self.cfg.finish_margin
    }

    pub fn scan(&self, channels: usize) -> Result<LidarScan> {
        cast_lidar(&self.state, &self.track, channels, &self.cfg.lidar)
    }

    fn station_of(&self, p: Vec2, hint: f64) -> f64 {
        self.track.project(p, Some(hint)).station
    }

    /// Advances one tick toward `command`, interpolating from the previous one.
    pub fn advance(&mut self, command: PhysicalControl) -> TickOutcome {
        let command = command.clamped();
        let n = self.cfg.substeps.max(1);
        let dt = TICK_SECONDS / n as f64;
        let mut first_contact: Option<ContactEvent> = None;
        let mut bled = false;
        let mut commands = Vec::with_capacity(n);

        for k in 1..=n {
            let cmd = self.prev_command.lerp(command, k as f64 / n as f64);
            commands.push(cmd);
            let before = self.state.clone();

            if self.recovery_left > 0 {
                self.reverse_substep(dt);
                continue;
            }

            let mut next = step_vehicle(&self.state, cmd, dt, &self.vehicle);
            next.station = self.station_of(next.position, self.state.station);
            match footprint_contact(&next, &self.track, &self.vehicle) {
                None => {
                    self.odometer += (next.position - before.position).norm();
                    self.state = next;
                }
                Some(contact) => {
                    let ev = ContactEvent::from_contact(self.tick, &contact, next.yaw);
                    let kind = ev.classification;
                    first_contact.get_or_insert(ev);
                    match kind {
                        CrashKind::Frontal => {
                            self.state = VehicleState {
                                speed: 0.0,
                                steer_angle: next.steer_angle,
                                ..before
                            };
                            self.recovery_left = self.cfg.recovery_ticks;
                        }
                        CrashKind::Side => {
                            let keep = if bled { 1.0 } else { 0.9 };
                            bled = true;
                            self.state = self.side_response(&before, &next, &contact, keep);
                            self.odometer += (self.state.position - before.position).norm();
                        }
                    }
                }
            }
        }

        if self.recovery_left > 0 {
            self.recovery_left -= 1;
            if self.recovery_left == 0 {
                self.state.speed = 0.0;
            }
        }
        let event = self.debouncer.observe(self.tick, first_contact.clone());
        let outcome = TickOutcome {
            tick: self.tick,
            event,
            in_contact: first_contact.is_some(),
            reversing: self.recovery_left > 0,
            finished: self.finished(),
            substep_commands: commands,
        };
        self.prev_command = command;
        self.tick += 1;
        outcome
    }

    /// Grazing contact: keep only the part of the motion along the contact
    /// surface and bleed 10% of the speed once per tick. The heading is nudged toward the corridor, or
    /// follows the steering, whichever does not dig in deeper; failing both
    /// the vehicle stays put.
    fn side_response(&self, before: &VehicleState, next: &VehicleState, contact: &Contact, keep: f64) -> VehicleState {
        let depth = |s: &VehicleState| {
            footprint_contact(s, &self.track, &self.vehicle).map_or(0.0, |c| c.depth)
        };
        let allowed = depth(before).max(SLIDE_TOLERANCE);
        let tangent = self.track.tangent_at(before.station).angle();
        let yaw = wrap_angle(before.yaw + wrap_angle(tangent - before.yaw).clamp(-0.02, 0.02));
        let d = next.position - before.position;
        let slide = d - contact.normal * d.dot(contact.normal).max(0.0);
        let base = VehicleState {
            speed: next.speed * keep,
            steer_angle: next.steer_angle,
            ..before.clone()
        };
        let position = before.position + slide;
        let station = self.station_of(position, before.station);
        let candidates = [
            (position, station, yaw),
            (position, station, next.yaw),
            (position, station, before.yaw),
            (before.position, before.station, yaw),
        ];
        for (position, station, yaw) in candidates {
            let cand = VehicleState {
                position,
                station,
                yaw,
                ..base.clone()
            };
            if depth(&cand) <= allowed {
                return cand;
            }
        }
        base
    }

    /// Backs out while turning the body toward the corridor tangent. A move
    /// is kept only if it does not push the footprint deeper into anything;
    /// otherwise a straight reverse is tried, then standing still.
    fn reverse_substep(&mut self, dt: f64) {
        let depth = |s: &VehicleState| {
            footprint_contact(s, &self.track, &self.vehicle).map_or(0.0, |c| c.depth)
        };
        let before = self.state.clone();
        let base = depth(&before);
        let tangent = self.track.tangent_at(before.station).angle();
        let err = wrap_angle(tangent - before.yaw);
        let turn = (err / dt).clamp(-0.4, 0.4);
        for yaw_rate in [turn, 0.0] {
            let (pos, _) = advance_arc(before.position, before.yaw, -self.cfg.reverse_speed, 0.0, dt);
            let cand = VehicleState {
                position: pos,
                yaw: wrap_angle(before.yaw + yaw_rate * dt),
                speed: -self.cfg.reverse_speed,
                station: self.station_of(pos, before.station),
                ..before.clone()
            };
            if depth(&cand) <= base + 1e-12 {
                self.odometer += self.cfg.reverse_speed * dt;
                self.state = cand;
                return;
            }
        }
        self.state.speed = -self.cfg.reverse_speed;
    }
}
