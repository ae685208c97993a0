//! Synthetic drivers and skilled-data generation.
//!
//! The skilled driver tracks a clear-channel path (the centerline, shifted
//! smoothly around rocks) with pure pursuit and holds a curvature-limited
//! target speed with a proportional pedal. The unskilled driver is the skilled
//! one plus white or mean-reverting (Ornstein–Uhlenbeck) noise.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Session};
use crate::error::{Error, Result};
use crate::preprocess::RawFrame;
use crate::sim::{
    generate_terrain_with, PhysicalControl, TerrainParams, Track, VehicleSpec, VehicleState, World,
    WorldConfig, REDUCED_CHANNELS, TICK_SECONDS,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkilledConfig {
    /// Lookahead distance is `max(lookahead_min, lookahead_time · speed)`.
    pub lookahead_min: f64,
    pub lookahead_time: f64,
    /// Target speed on straights, m/s.
    pub cruise_speed: f64,
    /// Lateral acceleration allowed in curves, m/s².
    pub max_lateral_accel: f64,
    /// Deceleration assumed when slowing ahead of a curve, m/s².
    pub comfort_decel: f64,
    /// How far ahead curvature is checked, m.
    pub preview: f64,
    /// Pedal per m/s of speed error.
    pub speed_gain: f64,
    /// Extra gap kept between the vehicle side and a rock, m.
    pub rock_clearance: f64,
    /// Half-length of the fully shifted section around a rock, m.
    pub rock_hold: f64,
    /// Length of the cosine ramp into and out of a shift, m.
    pub rock_ramp: f64,
    /// Gap kept from the walls when shifting, m.
    pub wall_margin: f64,
}

impl Default for SkilledConfig {
    fn default() -> Self {
        Self {
            lookahead_min: 5.0,
            lookahead_time: 0.5,
            cruise_speed: 15.0,
            max_lateral_accel: 2.0,
            comfort_decel: 1.5,
            preview: 80.0,
            speed_gain: 0.4,
            rock_clearance: 1.2,
            rock_hold: 5.0,
            rock_ramp: 30.0,
            wall_margin: 0.8,
        }
    }
}

/// Pure-pursuit road-wheel angle for a target at bearing `alpha` and distance
/// `lookahead`.
pub fn pure_pursuit_angle(alpha: f64, lookahead: f64, wheelbase: f64) -> f64 {
    (2.0 * wheelbase * alpha.sin() / lookahead).atan()
}

/// Lateral offset of the clear-channel path at `station`.
pub fn path_offset(track: &Track, station: f64, cfg: &SkilledConfig, vehicle: &VehicleSpec) -> f64 {
    let reach = cfg.rock_hold + cfg.rock_ramp + 10.0;
    let half = vehicle.width / 2.0;
    let mut offset: f64 = 0.0;
    for rock in track.obstacles_near(station, reach) {
        let p = track.project(rock.center, Some(station));
        let gap = (p.station - station).abs();
        let w = if gap <= cfg.rock_hold {
            1.0
        } else if gap <= cfg.rock_hold + cfg.rock_ramp {
            let t = (gap - cfg.rock_hold) / cfg.rock_ramp;
            0.5 * (1.0 + (t * std::f64::consts::PI).cos())
        } else {
            0.0
        };
        let needed = rock.radius + half + cfg.rock_clearance;
        let shift = if p.lateral > 0.0 {
            (p.lateral - needed).min(0.0)
        } else {
            (p.lateral + needed).max(0.0)
        };
        if (w * shift).abs() > offset.abs() {
            offset = w * shift;
        }
    }
    let limit = (track.half_width_at(station) - half - cfg.wall_margin).max(0.0);
    offset.clamp(-limit, limit)
}

/// Curvature-limited target speed with braking preview.
pub fn target_speed(track: &Track, station: f64, cfg: &SkilledConfig, vehicle: &VehicleSpec) -> f64 {
    let cap = cfg.cruise_speed.min(vehicle.max_speed);
    let mut v = cap;
    let steps = (cfg.preview / 2.0).ceil() as usize;
    for k in 0..=steps {
        let ds = k as f64 * 2.0;
        let kappa = track.curvature_at(station + ds).abs();
        if kappa < 1e-6 {
            continue;
        }
        let vc = (cfg.max_lateral_accel / kappa).sqrt();
        v = v.min((vc * vc + 2.0 * cfg.comfort_decel * ds).sqrt());
    }
    v
}

/// Skilled command in physical units.
pub fn skilled_control(
    state: &VehicleState,
    track: &Track,
    cfg: &SkilledConfig,
    vehicle: &VehicleSpec,
) -> PhysicalControl {
    let lookahead = cfg.lookahead_min.max(cfg.lookahead_time * state.speed.max(0.0));
    let s_look = (state.station + lookahead).min(track.total_length());
    let target = track.point_at(s_look, path_offset(track, s_look, cfg, vehicle));
    let to = target - state.position;
    let alpha = crate::sim::wrap_angle(to.angle() - state.yaw);
    let delta = pure_pursuit_angle(alpha, to.norm().max(1e-6), vehicle.wheelbase);
    let steer = (delta / vehicle.max_steer_angle).clamp(-1.0, 1.0);

    let v_target = target_speed(track, state.station, cfg, vehicle);
    let pedal = (cfg.speed_gain * (v_target - state.speed)).clamp(-1.0, 1.0);
    PhysicalControl::new(steer, pedal)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    White,
    Correlated,
}

/// Noise in physical control units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub mode: NoiseMode,
    pub sigma_steer: f64,
    pub sigma_pedal: f64,
    /// Correlation time of the correlated mode, seconds.
    pub tau: f64,
}

impl NoiseConfig {
    pub fn white(sigma_steer: f64, sigma_pedal: f64) -> Self {
        Self {
            mode: NoiseMode::White,
            sigma_steer,
            sigma_pedal,
            tau: 1.0,
        }
    }

    pub fn correlated(sigma_steer: f64, sigma_pedal: f64, tau: f64) -> Self {
        Self {
            mode: NoiseMode::Correlated,
            sigma_steer,
            sigma_pedal,
            tau,
        }
    }
}

/// Stateful noise source sampled once per tick. In correlated mode each
/// channel is an Ornstein–Uhlenbeck process with stationary deviation σ.
#[derive(Clone, Debug)]
pub struct NoiseProcess {
    cfg: NoiseConfig,
    state: [f64; 2],
}

impl NoiseProcess {
    pub fn new(cfg: NoiseConfig) -> Self {
        Self {
            cfg,
            state: [0.0; 2],
        }
    }

    pub fn config(&self) -> &NoiseConfig {
        &self.cfg
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> [f64; 2] {
        let sigma = [self.cfg.sigma_steer, self.cfg.sigma_pedal];
        let z: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
        match self.cfg.mode {
            NoiseMode::White => [sigma[0] * z[0], sigma[1] * z[1]],
            NoiseMode::Correlated => {
                let a = (-TICK_SECONDS / self.cfg.tau).exp();
                let b = (1.0 - a * a).sqrt();
                for c in 0..2 {
                    self.state[c] = a * self.state[c] + b * sigma[c] * z[c];
                }
                self.state
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnskilledConfig {
    pub skilled: SkilledConfig,
    pub noise: NoiseConfig,
}

impl Default for UnskilledConfig {
    fn default() -> Self {
        Self {
            skilled: SkilledConfig::default(),
            noise: NoiseConfig::correlated(0.3, 0.6, 1.0),
        }
    }
}

/// Skilled command plus noise, clamped to the physical range.
pub fn unskilled_control<R: Rng + ?Sized>(
    state: &VehicleState,
    track: &Track,
    cfg: &UnskilledConfig,
    vehicle: &VehicleSpec,
    noise: &mut NoiseProcess,
    rng: &mut R,
) -> PhysicalControl {
    let clean = skilled_control(state, track, &cfg.skilled, vehicle);
    let n = noise.sample(rng);
    PhysicalControl::new(clean.steer + n[0], clean.pedal + n[1]).clamped()
}

/// Unskilled driver with its own noise state and rng.
#[derive(Clone, Debug)]
pub struct UnskilledDriver {
    cfg: UnskilledConfig,
    noise: NoiseProcess,
    rng: ChaCha8Rng,
}

impl UnskilledDriver {
    pub fn new(cfg: UnskilledConfig, seed: u64) -> Self {
        Self {
            noise: NoiseProcess::new(cfg.noise.clone()),
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn control(&mut self, state: &VehicleState, track: &Track, vehicle: &VehicleSpec) -> PhysicalControl {
        unskilled_control(state, track, &self.cfg, vehicle, &mut self.noise, &mut self.rng)
    }
}

/// Skilled data generation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub skilled: SkilledConfig,
    /// Perturbation applied to the vehicle while the clean skilled command is
    /// recorded, so the data covers recoveries from small deviations.
    pub exploration: Option<NoiseConfig>,
    pub width_range: (f64, f64),
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            skilled: SkilledConfig::default(),
            exploration: Some(NoiseConfig::correlated(0.05, 0.2, 1.0)),
            width_range: (9.0, 15.0),
        }
    }
}

/// Ticks at 10 Hz for a duration in minutes.
pub fn ticks_for_minutes(minutes: f64) -> usize {
    (minutes * 60.0 / TICK_SECONDS).round() as usize
}

/// Drives the skilled controller on one terrain per seed, splitting the
/// requested duration evenly. Every seed becomes one session.
pub fn generate_dataset(seeds: &[u64], minutes: f64, cfg: &GenConfig) -> Result<Dataset> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one terrain seed is required".into()));
    }
    if !(minutes > 0.0) {
        return Err(Error::InvalidArgument(format!("minutes must be positive, got {minutes}")));
    }
    let total = ticks_for_minutes(minutes);
    let base = total / seeds.len();
    let extra = total % seeds.len();
    let mut sessions = Vec::with_capacity(seeds.len());
    for (i, &seed) in seeds.iter().enumerate() {
        let ticks = base + usize::from(i < extra);
        sessions.push(skilled_session(seed, ticks, cfg)?);
    }
    Ok(Dataset { sessions })
}

/// One skilled session of exactly `ticks` steps.
pub fn skilled_session(seed: u64, ticks: usize, cfg: &GenConfig) -> Result<Session> {
    let vehicle = VehicleSpec::default();
    let seconds = ticks as f64 * TICK_SECONDS;
    let params = TerrainParams {
        length_m: (vehicle.max_speed * seconds + 200.0).max(1600.0),
        width_range: cfg.width_range,
        ..TerrainParams::default()
    };
    let track = Arc::new(Track::new(generate_terrain_with(seed, &params, &vehicle)?));
    let mut world = World::new(track.clone(), vehicle.clone(), WorldConfig::default());
    let mut explore = cfg.exploration.clone().map(NoiseProcess::new);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_da7a);
    let mut frames = Vec::with_capacity(ticks);
    for tick in 0..ticks {
        let clean = skilled_control(world.state(), &track, &cfg.skilled, &vehicle);
        let scan = world.scan(REDUCED_CHANNELS)?;
        frames.push(RawFrame::capture(clean, world.state(), &scan));
        let applied = match explore.as_mut() {
            Some(p) => {
                let n = p.sample(&mut rng);
                PhysicalControl::new(clean.steer + n[0], clean.pedal + n[1]).clamped()
            }
            None => clean,
        };
        let out = world.advance(applied);
        if out.in_contact {
            return Err(Error::SkilledCrash { seed, tick: tick as u64 });
        }
        if out.finished {
            return Err(Error::DidNotFinish { ticks: tick as u64 });
        }
    }
    Ok(Session {
        id: seed,
        start_tick: 0,
        frames,
    })
}
