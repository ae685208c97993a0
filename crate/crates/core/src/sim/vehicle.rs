use serde::{Deserialize, Serialize};

use super::geometry::{wrap_angle, Vec2};

/// Pickup-truck platform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub width: f64,
    pub length: f64,
    pub wheelbase: f64,
    /// m/s; equal to the speed normalisation ceiling.
    pub max_speed: f64,
    pub max_steer_angle: f64,
    /// Road-wheel slew limit, rad/s.
    pub max_steer_rate: f64,
    pub max_accel: f64,
    pub max_brake: f64,
    /// Linear drag coefficient, 1/s.
    pub drag: f64,
}

impl Default for VehicleSpec {
    fn default() -> Self {
        Self {
            width: 1.86,
            length: 4.5,
            wheelbase: 2.8,
            max_speed: 30.0,
            max_steer_angle: 0.55,
            max_steer_rate: 1.0,
            max_accel: 3.0,
            max_brake: 6.0,
            drag: 0.01,
        }
    }
}

/// Driver command in physical units: steer and combined pedal, both in `[-1, 1]`.
/// Positive steer turns left; positive pedal accelerates, negative brakes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhysicalControl {
    pub steer: f64,
    pub pedal: f64,
}

impl PhysicalControl {
    pub const NEUTRAL: PhysicalControl = PhysicalControl {
        steer: 0.0,
        pedal: 0.0,
    };

    pub fn new(steer: f64, pedal: f64) -> Self {
        Self { steer, pedal }
    }

    /// Clamps both channels into `[-1, 1]`; NaN becomes 0.
    pub fn clamped(self) -> Self {
        let c = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
        Self::new(c(self.steer), c(self.pedal))
    }

    pub fn lerp(self, next: Self, alpha: f64) -> Self {
        Self::new(
            (1.0 - alpha) * self.steer + alpha * next.steer,
            (1.0 - alpha) * self.pedal + alpha * next.pedal,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// Footprint center.
    pub position: Vec2,
    /// `(-π, π]`.
    pub yaw: f64,
    /// m/s. Negative only while reversing out of a frontal crash.
    pub speed: f64,
    /// Road-wheel angle, radians, positive left.
    pub steer_angle: f64,
    /// Arc-length progress along the centerline.
    pub station: f64,
}

impl VehicleState {
    pub fn at_rest(position: Vec2, yaw: f64, station: f64) -> Self {
        Self {
            position,
            yaw: wrap_angle(yaw),
            speed: 0.0,
            steer_angle: 0.0,
            station,
        }
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::from_angle(self.yaw)
    }
}

/// Kinematic bicycle step.
///
/// Steering slews toward `ci.steer · max_steer_angle` at `max_steer_rate`;
/// speed integrates the pedal through the acceleration / brake limits and
/// linear drag, clamped to `[0, max_speed]`; then the pose advances along the
/// exact arc with `yaw_rate = speed · tan(steer) / wheelbase`. The station is
/// left for the caller to update (it needs the terrain).
pub fn step_vehicle(
    state: &VehicleState,
    ci: PhysicalControl,
    dt: f64,
    spec: &VehicleSpec,
) -> VehicleState {
    let ci = ci.clamped();
    let target = ci.steer * spec.max_steer_angle;
    let max_delta = spec.max_steer_rate * dt;
    let steer = state.steer_angle + (target - state.steer_angle).clamp(-max_delta, max_delta);

    let accel = if ci.pedal >= 0.0 {
        ci.pedal * spec.max_accel
    } else {
        ci.pedal * spec.max_brake
    };
    let base = state.speed.max(0.0);
    let speed = (base + (accel - spec.drag * base) * dt).clamp(0.0, spec.max_speed);

    let yaw_rate = speed * steer.tan() / spec.wheelbase;
    let (position, yaw) = advance_arc(state.position, state.yaw, speed, yaw_rate, dt);

    VehicleState {
        position,
        yaw,
        speed,
        steer_angle: steer,
        station: state.station,
    }
}

/// Moves along a circular arc (or straight line) for `dt` seconds.
pub(crate) fn advance_arc(pos: Vec2, yaw: f64, speed: f64, yaw_rate: f64, dt: f64) -> (Vec2, f64) {
    let dyaw = yaw_rate * dt;
    let delta = if dyaw.abs() < 1e-9 {
        Vec2::from_angle(yaw + dyaw / 2.0) * (speed * dt)
    } else {
        let r = speed / yaw_rate;
        Vec2::new(
            r * ((yaw + dyaw).sin() - yaw.sin()),
            r * (yaw.cos() - (yaw + dyaw).cos()),
        )
    };
    (pos + delta, wrap_angle(yaw + dyaw))
}
