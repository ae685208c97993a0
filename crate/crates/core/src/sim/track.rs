//! Precomputed corridor geometry for fast queries against a [`TerrainSpec`].

use super::geometry::Vec2;
use super::terrain::{Obstacle, TerrainSpec};
use super::vehicle::VehicleState;
use crate::error::{Error, Result};

/// Projection of a point onto the centerline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub station: f64,
    /// Signed distance from the centerline, positive to the left of travel.
    pub lateral: f64,
    pub segment: usize,
    pub half_width: f64,
    /// Unit tangent of the projected segment.
    pub tangent: Vec2,
}

/// A [`TerrainSpec`] plus derived wall polylines and lookup tables.
#[derive(Clone, Debug)]
pub struct Track {
    spec: TerrainSpec,
    stations: Vec<f64>,
    left: Vec<Vec2>,
    right: Vec<Vec2>,
    /// Obstacle indices sorted by the station of their center.
    obstacle_order: Vec<(f64, usize)>,
    max_half_width: f64,
}

impl Track {
    pub fn new(spec: TerrainSpec) -> Self {
        let n = spec.centerline.len();
        let mut stations = Vec::with_capacity(n);
        let mut acc = 0.0;
        for i in 0..n {
            if i > 0 {
                acc += (spec.centerline[i] - spec.centerline[i - 1]).norm();
            }
            stations.push(acc);
        }
        let mut left = Vec::with_capacity(n);
        let mut right = Vec::with_capacity(n);
        for i in 0..n {
            let a = spec.centerline[i.saturating_sub(1)];
            let b = spec.centerline[(i + 1).min(n - 1)];
            let normal = (b - a).normalized().perp();
            left.push(spec.centerline[i] + normal * spec.half_width[i]);
            right.push(spec.centerline[i] - normal * spec.half_width[i]);
        }
        let max_half_width = spec.half_width.iter().copied().fold(0.0, f64::max);
        let mut track = Self {
            spec,
            stations,
            left,
            right,
            obstacle_order: Vec::new(),
            max_half_width,
        };
        let mut order: Vec<(f64, usize)> = track
            .spec
            .obstacles
            .iter()
            .enumerate()
            .map(|(i, o)| (track.project(o.center, None).station, i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        track.obstacle_order = order;
        track
    }

    pub fn spec(&self) -> &TerrainSpec {
        &self.spec
    }

    pub fn total_length(&self) -> f64 {
        *self.stations.last().unwrap_or(&0.0)
    }

    pub fn half_width_at(&self, station: f64) -> f64 {
        let (i, t) = self.locate(station);
        let hw = &self.spec.half_width;
        if i + 1 < hw.len() {
            hw[i] * (1.0 - t) + hw[i + 1] * t
        } else {
            hw[i]
        }
    }

    /// Point at `station` with lateral offset (positive left).
    pub fn point_at(&self, station: f64, lateral: f64) -> Vec2 {
        let (i, t) = self.locate(station);
        let c = &self.spec.centerline;
        let j = (i + 1).min(c.len() - 1);
        let base = c[i] + (c[j] - c[i]) * t;
        base + self.tangent_at(station).perp() * lateral
    }

    pub fn tangent_at(&self, station: f64) -> Vec2 {
        let (i, _) = self.locate(station);
        let c = &self.spec.centerline;
        let j = (i + 1).min(c.len() - 1);
        let i0 = if j == i { i.saturating_sub(1) } else { i };
        (c[j] - c[i0]).normalized()
    }

    /// Signed curvature of the centerline near `station` (positive = left turn).
    pub fn curvature_at(&self, station: f64) -> f64 {
        let h = 4.0;
        let a = self.tangent_at((station - h).max(0.0));
        let b = self.tangent_at((station + h).min(self.total_length()));
        let ds = (station + h).min(self.total_length()) - (station - h).max(0.0);
        if ds <= 0.0 {
            0.0
        } else {
            a.cross(b).atan2(a.dot(b)) / ds
        }
    }

    /// Segment index and fraction for a station, clamped to the track.
    fn locate(&self, station: f64) -> (usize, f64) {
        let n = self.stations.len();
        if n < 2 || station <= 0.0 {
            return (0, 0.0);
        }
        if station >= self.total_length() {
            return (n - 1, 0.0);
        }
        let i = match self
            .stations
            .binary_search_by(|s| s.total_cmp(&station))
        {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let len = self.stations[i + 1] - self.stations[i];
        (i, (station - self.stations[i]) / len)
    }

    fn segment_range(&self, station: f64, reach: f64) -> std::ops::Range<usize> {
        let n = self.stations.len();
        let lo = self.locate(station - reach).0;
        let hi = (self.locate(station + reach).0 + 2).min(n);
        lo..hi.max(lo)
    }

    fn project_on(&self, p: Vec2, i: usize) -> (f64, Projection) {
        let c = &self.spec.centerline;
        let (a, b) = (c[i], c[i + 1]);
        let d = b - a;
        let len2 = d.norm_sq();
        let t = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
        let foot = a + d * t;
        let dist = (p - foot).norm();
        let tangent = d * (1.0 / len2.sqrt());
        let side = if tangent.cross(p - a) >= 0.0 { 1.0 } else { -1.0 };
        let hw = &self.spec.half_width;
        let station = self.stations[i] + t * len2.sqrt();
        (
            dist,
            Projection {
                station,
                lateral: side * dist,
                segment: i,
                half_width: hw[i] * (1.0 - t) + hw[i + 1] * t,
                tangent,
            },
        )
    }

    /// Nearest centerline projection. With a hint the search is limited to
    /// ±40 m around it.
    pub fn project(&self, p: Vec2, hint: Option<f64>) -> Projection {
        let range = match hint {
            Some(s) => self.segment_range(s, 40.0),
            None => 0..self.stations.len().saturating_sub(1),
        };
        let mut best: Option<(f64, Projection)> = None;
        for i in range {
            if i + 1 >= self.stations.len() {
                break;
            }
            let cand = self.project_on(p, i);
            if best.as_ref().map_or(true, |b| cand.0 < b.0) {
                best = Some(cand);
            }
        }
        best.expect("track has at least one segment").1
    }

    /// Global projection that refuses queries equidistant from two distant
    /// parts of the centerline.
    pub fn project_checked(&self, p: Vec2) -> Result<Projection> {
        let best = self.project(p, None);
        let best_dist = best.lateral.abs();
        let separation = 4.0 * self.max_half_width.max(1.0);
        for i in 0..self.stations.len().saturating_sub(1) {
            let (d, cand) = self.project_on(p, i);
            if (cand.station - best.station).abs() > separation && d <= best_dist + 1e-9 {
                return Err(Error::AmbiguousStation(best.station, cand.station));
            }
        }
        Ok(best)
    }

    /// Wall segments `(a, b, side)` whose stations lie within `reach` of `station`.
    /// `side` is +1 for the left wall, -1 for the right.
    pub fn walls_near(&self, station: f64, reach: f64) -> impl Iterator<Item = (Vec2, Vec2, f64)> + '_ {
        let range = self.segment_range(station, reach);
        range
            .filter(move |&i| i + 1 < self.stations.len())
            .flat_map(move |i| {
                [
                    (self.left[i], self.left[i + 1], 1.0),
                    (self.right[i], self.right[i + 1], -1.0),
                ]
            })
    }

    pub fn obstacles_near(&self, station: f64, reach: f64) -> impl Iterator<Item = &Obstacle> + '_ {
        let lo = self
            .obstacle_order
            .partition_point(|(s, _)| *s < station - reach);
        self.obstacle_order[lo..]
            .iter()
            .take_while(move |(s, _)| *s <= station + reach)
            .map(move |(_, i)| &self.spec.obstacles[*i])
    }

    /// Vehicle at rest on the centerline, 10 m in, facing along the track.
    pub fn start_state(&self) -> VehicleState {
        let s = 10.0f64.min(self.total_length() / 2.0);
        VehicleState::at_rest(self.point_at(s, 0.0), self.tangent_at(s).angle(), s)
    }
}
