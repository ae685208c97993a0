//! Procedural canyon terrain.
//!
//! A canyon is a centerline sampled every [`STATION_SPACING`] meters, a
//! corridor half-width per centerline point, and circular rocks. The
//! centerline alternates straights and circular arcs; its heading stays
//! within ±70° of the x axis, so the corridor never folds back on itself.
//!
//! Export format (JSON, field order as listed): `seed`, `total_length`,
//! `centerline` (`[[x, y], ...]`), `half_width` (`[w, ...]`, one per
//! centerline point), `obstacles` (`[{"center": [x, y], "radius": r}, ...]`).

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geometry::Vec2;
use super::vehicle::VehicleSpec;
use crate::error::{Error, Result};

pub const STATION_SPACING: f64 = 2.0;
/// Canyon wall height.
pub const WALL_HEIGHT: f64 = 8.0;
/// Rock height.
pub const OBSTACLE_HEIGHT: f64 = 1.2;

const MAX_HEADING: f64 = 70.0 * PI / 180.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: Vec2,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerrainSpec {
    pub seed: u64,
    pub total_length: f64,
    pub centerline: Vec<Vec2>,
    pub half_width: Vec<f64>,
    pub obstacles: Vec<Obstacle>,
}

/// Generator knobs. `Default` yields a 1.6 km canyon, 9–15 m wide.
#[derive(Clone, Debug, PartialEq)]
pub struct TerrainParams {
    pub length_m: f64,
    pub width_range: (f64, f64),
    pub min_straight: f64,
    pub max_straight: f64,
    /// Sharp curves use radii in `[sharp_radius.0, sharp_radius.1)`.
    pub sharp_radius: (f64, f64),
    pub wide_radius: (f64, f64),
    /// Rocks per kilometer.
    pub obstacle_density: f64,
    /// Distance kept free of rocks at either end.
    pub obstacle_margin: f64,
}

impl Default for TerrainParams {
    fn default() -> Self {
        Self {
            length_m: 1600.0,
            width_range: (9.0, 15.0),
            min_straight: 100.0,
            max_straight: 180.0,
            sharp_radius: (25.0, 38.0),
            wide_radius: (45.0, 110.0),
            obstacle_density: 5.0,
            obstacle_margin: 120.0,
        }
    }
}

impl TerrainSpec {
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    /// A straight canyon along +x with constant width and no rocks.
    pub fn straight(length_m: f64, width: f64) -> Self {
        let n = (length_m / STATION_SPACING).round() as usize;
        Self {
            seed: 0,
            total_length: n as f64 * STATION_SPACING,
            centerline: (0..=n)
                .map(|i| Vec2::new(i as f64 * STATION_SPACING, 0.0))
                .collect(),
            half_width: vec![width / 2.0; n + 1],
            obstacles: Vec::new(),
        }
    }
}

/// Generates a canyon with default shape parameters.
pub fn generate_terrain(seed: u64, length_m: f64, width_range: (f64, f64)) -> Result<TerrainSpec> {
    generate_terrain_with(
        seed,
        &TerrainParams {
            length_m,
            width_range,
            ..TerrainParams::default()
        },
        &VehicleSpec::default(),
    )
}

#[derive(Clone, Copy, Debug)]
struct Piece {
    length: f64,
    curvature: f64,
}

pub fn generate_terrain_with(
    seed: u64,
    params: &TerrainParams,
    vehicle: &VehicleSpec,
) -> Result<TerrainSpec> {
    let (wmin, wmax) = params.width_range;
    if params.length_m <= 100.0 {
        return Err(Error::InvalidArgument(format!(
            "terrain length {} m must exceed 100 m",
            params.length_m
        )));
    }
    if !(wmin < wmax) {
        return Err(Error::InvalidArgument(format!(
            "width range [{wmin}, {wmax}] is empty"
        )));
    }
    if wmin < vehicle.width + 1.0 {
        return Err(Error::InvalidArgument(format!(
            "minimum width {wmin} m leaves under 1 m beside a {} m vehicle",
            vehicle.width
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (params.length_m / STATION_SPACING).round() as usize;
    let total_length = n as f64 * STATION_SPACING;

    // Curvature plan: a short straight start, then straight / curve pairs.
    // Every other curve is sharp.
    let mut pieces = vec![Piece {
        length: 60.0,
        curvature: 0.0,
    }];
    let mut planned = 60.0;
    let mut heading = 0.0f64;
    let mut sharp = rng.gen_bool(0.5);
    while planned < total_length + STATION_SPACING {
        let straight = rng.gen_range(params.min_straight..params.max_straight);
        pieces.push(Piece {
            length: straight,
            curvature: 0.0,
        });
        let radius = if sharp {
            rng.gen_range(params.sharp_radius.0..params.sharp_radius.1)
        } else {
            rng.gen_range(params.wide_radius.0..params.wide_radius.1)
        };
        sharp = !sharp;
        let target = loop {
            let t = rng.gen_range(-MAX_HEADING..MAX_HEADING);
            if (t - heading).abs() >= 30f64.to_radians() {
                break t;
            }
        };
        let turn = target - heading;
        pieces.push(Piece {
            length: radius * turn.abs(),
            curvature: turn.signum() / radius,
        });
        heading = target;
        planned += straight + radius * turn.abs();
    }

    let curvature_at = |s: f64| -> f64 {
        let mut acc = 0.0;
        for p in &pieces {
            if s < acc + p.length {
                return p.curvature;
            }
            acc += p.length;
        }
        0.0
    };

    let mut centerline = Vec::with_capacity(n + 1);
    let mut pos = Vec2::ZERO;
    let mut theta = 0.0f64;
    centerline.push(pos);
    for i in 0..n {
        let s_mid = (i as f64 + 0.5) * STATION_SPACING;
        let k = curvature_at(s_mid);
        let dtheta = k * STATION_SPACING;
        // Exact chord of a circular arc of length `ds`.
        let chord = if k.abs() < 1e-12 {
            STATION_SPACING
        } else {
            2.0 * (dtheta / 2.0).sin() / k
        };
        pos += Vec2::from_angle(theta + dtheta / 2.0) * chord;
        theta += dtheta;
        centerline.push(pos);
    }

    // Half-width: cosine interpolation between random knots every 100 m.
    let knot_spacing = 100.0;
    let knots: Vec<f64> = (0..=((total_length / knot_spacing).ceil() as usize + 1))
        .map(|_| rng.gen_range(wmin..wmax) / 2.0)
        .collect();
    let half_width: Vec<f64> = (0..=n)
        .map(|i| {
            let s = i as f64 * STATION_SPACING / knot_spacing;
            let k = s.floor() as usize;
            let t = s - k as f64;
            let w = (1.0 - (t * PI).cos()) / 2.0;
            knots[k] * (1.0 - w) + knots[k + 1] * w
        })
        .collect();

    let mut obstacles = Vec::new();
    if params.obstacle_density > 0.0 {
        let mean_gap = 1000.0 / params.obstacle_density;
        let min_gap = 60.0f64.min(mean_gap);
        let mut s = params.obstacle_margin + rng.gen_range(0.0..mean_gap);
        while s < total_length - params.obstacle_margin {
            let i = (s / STATION_SPACING).round() as usize;
            let c = centerline[i];
            let tangent = (centerline[(i + 1).min(n)] - centerline[i.saturating_sub(1)]).normalized();
            let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let radius = rng.gen_range(0.5..1.2);
            let inset = rng.gen_range(0.0..1.5);
            let lateral = side * (half_width[i] - radius - inset);
            obstacles.push(Obstacle {
                center: c + tangent.perp() * lateral,
                radius,
            });
            s += rng.gen_range(min_gap..(2.0 * mean_gap - min_gap));
        }
    }

    Ok(TerrainSpec {
        seed,
        total_length,
        centerline,
        half_width,
        obstacles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let a = generate_terrain(7, 1600.0, (9.0, 15.0)).unwrap();
        let b = generate_terrain(7, 1600.0, (9.0, 15.0)).unwrap();
        assert_eq!(a, b);
        let c = generate_terrain(8, 1600.0, (9.0, 15.0)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn length_and_width_bounds() {
        let t = generate_terrain(7, 1600.0, (9.0, 15.0)).unwrap();
        assert!((1584.0..=1616.0).contains(&t.total_length));
        let arc: f64 = t.centerline.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        assert!((arc - t.total_length).abs() / t.total_length < 0.01);
        assert!(t.half_width.iter().all(|h| (4.5..=7.5).contains(h)));
        assert_eq!(t.half_width.len(), t.centerline.len());
    }

    #[test]
    fn rejects_bad_widths() {
        assert!(generate_terrain(1, 1600.0, (12.0, 10.0)).is_err());
        assert!(generate_terrain(1, 1600.0, (2.5, 10.0)).is_err());
        assert!(generate_terrain(1, 50.0, (9.0, 15.0)).is_err());
    }

    #[test]
    fn json_round_trip() {
        let t = generate_terrain(3, 400.0, (9.0, 15.0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        t.save_json(&path).unwrap();
        assert_eq!(TerrainSpec::load_json(&path).unwrap(), t);
        let text = std::fs::read_to_string(&path).unwrap();
        let seed_at = text.find("\"seed\"").unwrap();
        let obstacles_at = text.find("\"obstacles\"").unwrap();
        assert!(seed_at < obstacles_at);
    }
}
