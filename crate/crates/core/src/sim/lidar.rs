//! Virtual multi-channel LiDAR on a planar canyon.
//!
//! Walls are vertical surfaces [`WALL_HEIGHT`] tall, rocks are vertical
//! cylinders [`OBSTACLE_HEIGHT`] tall and the ground is the plane `z = 0`.
//! Because every surface is vertical, the horizontal hit distance along an
//! azimuth is the same for all channels; each channel then only decides which
//! surface its elevation reaches first.

use serde::{Deserialize, Serialize};

use super::geometry::{ray_circle, ray_segment, Vec2};
use super::terrain::{OBSTACLE_HEIGHT, WALL_HEIGHT};
use super::track::Track;
use super::vehicle::VehicleState;
use crate::error::{Error, Result};

pub const FULL_CHANNELS: usize = 64;
pub const REDUCED_CHANNELS: usize = 16;
pub const AZIMUTH_BINS: usize = 360;

/// Sensor geometry. Channel `c` of the full sensor points at
/// `top_elevation_deg - c · elevation_step_deg`, so channel 8 is horizontal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LidarConfig {
    pub max_range: f64,
    pub mount_height: f64,
    pub top_elevation_deg: f64,
    pub elevation_step_deg: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            max_range: 60.0,
            mount_height: 2.0,
            top_elevation_deg: 4.0,
            elevation_step_deg: 0.5,
        }
    }
}

impl LidarConfig {
    /// Elevation (radians) of channel `c` of the 64-channel sensor.
    pub fn elevation(&self, c: usize) -> f64 {
        (self.top_elevation_deg - c as f64 * self.elevation_step_deg).to_radians()
    }
}

/// One return. `height` is `None` for a miss, in which case `range` equals
/// the sensor's max range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LidarReturn {
    pub range: f64,
    pub height: Option<f64>,
}

impl LidarReturn {
    pub fn is_hit(&self) -> bool {
        self.height.is_some()
    }
}

/// Scan in the vehicle frame. Azimuth bin `j` points `j` degrees
/// counter-clockwise from the vehicle heading; returns are channel-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LidarScan {
    pub channels: usize,
    pub azimuth_bins: usize,
    pub max_range: f64,
    /// Per-channel elevation, radians.
    pub elevations: Vec<f64>,
    pub returns: Vec<LidarReturn>,
}

impl LidarScan {
    pub fn get(&self, channel: usize, bin: usize) -> &LidarReturn {
        &self.returns[channel * self.azimuth_bins + bin]
    }

    pub fn channel(&self, channel: usize) -> &[LidarReturn] {
        &self.returns[channel * self.azimuth_bins..(channel + 1) * self.azimuth_bins]
    }

    /// Index of the horizontal channel, if the sensor has one.
    pub fn horizontal_channel(&self) -> Option<usize> {
        self.elevations.iter().position(|e| e.abs() < 1e-12)
    }

    /// A scan where every ray misses.
    pub fn empty(channels: usize, config: &LidarConfig) -> Self {
        let stride = FULL_CHANNELS / channels;
        Self {
            channels,
            azimuth_bins: AZIMUTH_BINS,
            max_range: config.max_range,
            elevations: (0..channels).map(|c| config.elevation(c * stride)).collect(),
            returns: vec![
                LidarReturn {
                    range: config.max_range,
                    height: None
                };
                channels * AZIMUTH_BINS
            ],
        }
    }
}

struct AzimuthHits {
    wall: f64,
    /// `(entry, exit)` horizontal distances through rocks, sorted by entry.
    rocks: Vec<(f64, f64)>,
}

fn resolve_channel(hits: &AzimuthHits, elevation: f64, cfg: &LidarConfig) -> LidarReturn {
    let tan = elevation.tan();
    let z = |d: f64| cfg.mount_height + d * tan;
    let ground = if tan < 0.0 {
        cfg.mount_height / -tan
    } else {
        f64::INFINITY
    };

    let mut best: Option<(f64, f64)> = None;
    for &(entry, exit) in &hits.rocks {
        if entry >= hits.wall.min(ground) {
            break;
        }
        let h = z(entry);
        if h <= OBSTACLE_HEIGHT {
            best = Some((entry, h.max(0.0)));
            break;
        }
        if tan < 0.0 {
            let top = (OBSTACLE_HEIGHT - cfg.mount_height) / tan;
            if top >= entry && top <= exit {
                best = Some((top, OBSTACLE_HEIGHT));
                break;
            }
        }
    }
    let hit = best.or(if ground < hits.wall {
        Some((ground, 0.0))
    } else if hits.wall.is_finite() && z(hits.wall) <= WALL_HEIGHT {
        Some((hits.wall, z(hits.wall)))
    } else {
        None
    });
    match hit {
        Some((d, h)) if d / elevation.cos() <= cfg.max_range => LidarReturn {
            range: d / elevation.cos(),
            height: Some(h),
        },
        _ => LidarReturn {
            range: cfg.max_range,
            height: None,
        },
    }
}

/// Casts every azimuth bin of the requested channel set (64, or the 16
/// channels kept by downsampling: 0, 4, …, 60).
pub fn cast_lidar(
    state: &VehicleState,
    track: &Track,
    channels: usize,
    cfg: &LidarConfig,
) -> Result<LidarScan> {
    if channels != FULL_CHANNELS && channels != REDUCED_CHANNELS {
        return Err(Error::InvalidArgument(format!(
            "LiDAR supports 64 or 16 channels, got {channels}"
        )));
    }
    let stride = FULL_CHANNELS / channels;
    let elevations: Vec<f64> = (0..channels).map(|c| cfg.elevation(c * stride)).collect();
    let reach = cfg.max_range + track_margin(track);
    let walls: Vec<(Vec2, Vec2, f64)> = track.walls_near(state.station, reach).collect();
    let rocks: Vec<_> = track.obstacles_near(state.station, reach).collect();

    let mut returns = vec![
        LidarReturn {
            range: cfg.max_range,
            height: None
        };
        channels * AZIMUTH_BINS
    ];
    for bin in 0..AZIMUTH_BINS {
        let dir = Vec2::from_angle(state.yaw + (bin as f64).to_radians());
        let wall = walls
            .iter()
            .filter_map(|(a, b, _)| ray_segment(state.position, dir, *a, *b))
            .fold(f64::INFINITY, f64::min);
        let mut rock_hits: Vec<(f64, f64)> = rocks
            .iter()
            .filter_map(|o| ray_circle(state.position, dir, o.center, o.radius))
            .collect();
        rock_hits.sort_by(|a, b| a.0.total_cmp(&b.0));
        let hits = AzimuthHits {
            wall,
            rocks: rock_hits,
        };
        for (c, &e) in elevations.iter().enumerate() {
            returns[c * AZIMUTH_BINS + bin] = resolve_channel(&hits, e, cfg);
        }
    }
    Ok(LidarScan {
        channels,
        azimuth_bins: AZIMUTH_BINS,
        max_range: cfg.max_range,
        elevations,
        returns,
    })
}

fn track_margin(track: &Track) -> f64 {
    2.0 * track
        .spec()
        .half_width
        .iter()
        .copied()
        .fold(0.0, f64::max)
}
