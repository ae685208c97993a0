use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use super::geometry::{wrap_angle, Vec2};
use super::track::Track;
use super::vehicle::{VehicleSpec, VehicleState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrashKind {
    Frontal,
    Side,
}

impl CrashKind {
    /// Frontal iff the contact normal is within ±45° of the heading.
    pub fn classify(normal_vs_heading: f64) -> Self {
        if normal_vs_heading.abs() <= FRAC_PI_4 {
            CrashKind::Frontal
        } else {
            CrashKind::Side
        }
    }
}

/// Raw geometric contact between the footprint and the world.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contact {
    pub point: Vec2,
    /// Unit normal pointing from the vehicle into the obstacle.
    pub normal: Vec2,
    pub depth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub tick: u64,
    pub contact_point: Vec2,
    /// Angle of the contact normal relative to the heading, `(-π, π]`.
    pub normal_angle: f64,
    pub classification: CrashKind,
}

impl ContactEvent {
    pub fn from_contact(tick: u64, contact: &Contact, yaw: f64) -> Self {
        let normal_angle = wrap_angle(contact.normal.angle() - yaw);
        Self {
            tick,
            contact_point: contact.point,
            normal_angle,
            classification: CrashKind::classify(normal_angle),
        }
    }
}

/// Perimeter sample points of the footprint in the vehicle frame.
fn footprint_samples(spec: &VehicleSpec) -> Vec<Vec2> {
    let (hl, hw) = (spec.length / 2.0, spec.width / 2.0);
    let mut pts = Vec::new();
    let nl = (spec.length / 0.5).ceil() as usize;
    let nw = (spec.width / 0.5).ceil() as usize;
    for i in 0..=nl {
        let x = -hl + spec.length * i as f64 / nl as f64;
        pts.push(Vec2::new(x, hw));
        pts.push(Vec2::new(x, -hw));
    }
    for i in 1..nw {
        let y = -hw + spec.width * i as f64 / nw as f64;
        pts.push(Vec2::new(hl, y));
        pts.push(Vec2::new(-hl, y));
    }
    pts
}

/// Deepest contact of the oriented footprint against walls and rocks.
pub fn footprint_contact(state: &VehicleState, track: &Track, spec: &VehicleSpec) -> Option<Contact> {
    let mut deepest: Option<Contact> = None;
    let mut consider = |c: Contact| {
        if deepest.map_or(true, |d| c.depth > d.depth) {
            deepest = Some(c);
        }
    };
    let total = track.total_length();
    for local in footprint_samples(spec) {
        let p = state.position + local.rotate(state.yaw);
        let pr = track.project(p, Some(state.station));
        if pr.station <= 0.0 || pr.station >= total {
            continue;
        }
        let depth = pr.lateral.abs() - pr.half_width;
        if depth > 0.0 {
            let outward = pr.tangent.perp() * pr.lateral.signum();
            consider(Contact {
                point: p,
                normal: outward,
                depth,
            });
        }
    }

    let (hl, hw) = (spec.length / 2.0, spec.width / 2.0);
    for rock in track.obstacles_near(state.station, spec.length + 5.0) {
        let local = (rock.center - state.position).rotate(-state.yaw);
        let closest = Vec2::new(local.x.clamp(-hl, hl), local.y.clamp(-hw, hw));
        let gap = local - closest;
        let d = gap.norm();
        if d < rock.radius {
            let dir_local = if d > 1e-9 { gap } else { local };
            consider(Contact {
                point: state.position + closest.rotate(state.yaw),
                normal: dir_local.normalized().rotate(state.yaw),
                depth: rock.radius - d,
            });
        }
    }
    deepest
}

/// Contacts of a single state: at most one event (the deepest contact),
/// without episode debouncing.
pub fn detect_contacts(
    state: &VehicleState,
    track: &Track,
    spec: &VehicleSpec,
    tick: u64,
) -> Vec<ContactEvent> {
    footprint_contact(state, track, spec)
        .map(|c| ContactEvent::from_contact(tick, &c, state.yaw))
        .into_iter()
        .collect()
}

/// Turns per-tick contacts into episodes: a new event needs at least
/// `gap_ticks` contact-free ticks since the last contact.
#[derive(Clone, Debug)]
pub struct ContactDebouncer {
    gap_ticks: u64,
    last_contact: Option<u64>,
}

impl ContactDebouncer {
    pub fn new(gap_ticks: u64) -> Self {
        Self {
            gap_ticks,
            last_contact: None,
        }
    }

    pub fn observe(&mut self, tick: u64, contact: Option<ContactEvent>) -> Option<ContactEvent> {
        let event = contact?;
        let fresh = match self.last_contact {
            None => true,
            Some(last) => tick.saturating_sub(last) > self.gap_ticks,
        };
        self.last_contact = Some(tick);
        fresh.then_some(event)
    }
}
