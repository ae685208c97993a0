//! Raw control, state and LiDAR data to the normalized 186-entry model input.
//!
//! Layout of a model input row: control (2) ++ state (4) ++ distances (180).

use ndarray::Array1;

use crate::error::{shape_err, Error, Result};
use crate::sim::{LidarScan, PhysicalControl, VehicleState, FULL_CHANNELS, OBSTACLE_MIN_HEIGHT};

pub const CONTROL_LEN: usize = 2;
pub const STATE_LEN: usize = 4;
pub const DISTANCE_LEN: usize = 180;
pub const INPUT_LEN: usize = CONTROL_LEN + STATE_LEN + DISTANCE_LEN;
/// Speed normalisation ceiling, m/s.
pub const MAX_SPEED: f64 = 30.0;
/// Distance normalisation ceiling, m.
pub const MAX_DISTANCE: f64 = 50.0;

/// Control input normalized to `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ControlVector {
    pub steer: f64,
    pub pedal: f64,
}

impl ControlVector {
    pub fn new(steer: f64, pedal: f64) -> Self {
        Self { steer, pedal }
    }

    pub fn as_array(self) -> [f64; 2] {
        [self.steer, self.pedal]
    }
}

/// `x ↦ (x + 1) / 2` after clamping to `[-1, 1]`.
pub fn normalize_ci(steer: f64, pedal: f64) -> ControlVector {
    let c = PhysicalControl::new(steer, pedal).clamped();
    ControlVector::new((c.steer + 1.0) / 2.0, (c.pedal + 1.0) / 2.0)
}

pub fn denormalize_ci(c: ControlVector) -> PhysicalControl {
    PhysicalControl::new(2.0 * c.steer - 1.0, 2.0 * c.pedal - 1.0)
}

fn normalize_angle(theta: f64) -> f64 {
    ((theta + std::f64::consts::PI) / std::f64::consts::TAU).clamp(0.0, 1.0)
}

/// `(speed / 30, (yaw + π) / 2π, (pitch + π) / 2π, (roll + π) / 2π)`.
pub fn normalize_state(speed: f64, yaw: f64, pitch: f64, roll: f64) -> [f64; STATE_LEN] {
    [
        speed.clamp(0.0, MAX_SPEED) / MAX_SPEED,
        normalize_angle(yaw),
        normalize_angle(pitch),
        normalize_angle(roll),
    ]
}

/// Keeps channels 0, 4, …, 60 of a 64-channel scan.
pub fn downsample_channels(scan: &LidarScan) -> Result<LidarScan> {
    if scan.channels != FULL_CHANNELS {
        return Err(Error::InvalidArgument(format!(
            "downsampling needs a {FULL_CHANNELS}-channel scan, got {}",
            scan.channels
        )));
    }
    let keep: Vec<usize> = (0..FULL_CHANNELS).step_by(4).collect();
    Ok(LidarScan {
        channels: keep.len(),
        azimuth_bins: scan.azimuth_bins,
        max_range: scan.max_range,
        elevations: keep.iter().map(|&c| scan.elevations[c]).collect(),
        returns: keep.iter().flat_map(|&c| scan.channel(c).iter().copied()).collect(),
    })
}

/// Scan bin for distance entry `i` (entry 0 = right, 90 = ahead, 179 = left).
pub fn entry_bin(i: usize, azimuth_bins: usize) -> usize {
    let deg = (i as f64 - 90.0).rem_euclid(360.0);
    ((deg * azimuth_bins as f64 / 360.0).round() as usize) % azimuth_bins
}

/// Nearest obstacle per front degree in meters, clamped to 50 m.
pub fn obstacle_distances(scan: &LidarScan) -> [f64; DISTANCE_LEN] {
    let mut d = [MAX_DISTANCE; DISTANCE_LEN];
    for (i, slot) in d.iter_mut().enumerate() {
        let bin = entry_bin(i, scan.azimuth_bins);
        for (c, &elev) in scan.elevations.iter().enumerate() {
            let r = scan.get(c, bin);
            if matches!(r.height, Some(h) if h >= OBSTACLE_MIN_HEIGHT) {
                *slot = slot.min(r.range * elev.cos());
            }
        }
    }
    d
}

/// Normalized distance vector: entries in `[0, 1]`, 1.0 where nothing is seen.
pub fn pointcloud_to_distance_vector(scan: &LidarScan) -> [f64; DISTANCE_LEN] {
    normalize_distances(&obstacle_distances(scan))
}

pub fn normalize_distances(meters: &[f64; DISTANCE_LEN]) -> [f64; DISTANCE_LEN] {
    meters.map(|m| m.clamp(0.0, MAX_DISTANCE) / MAX_DISTANCE)
}

/// Concatenates `c ++ s ++ d` into one model input row.
pub fn assemble_input(c: &[f64], s: &[f64], d: &[f64]) -> Result<Array1<f64>> {
    if c.len() != CONTROL_LEN {
        return Err(shape_err(CONTROL_LEN, c.len()));
    }
    if s.len() != STATE_LEN {
        return Err(shape_err(STATE_LEN, s.len()));
    }
    if d.len() != DISTANCE_LEN {
        return Err(shape_err(DISTANCE_LEN, d.len()));
    }
    Ok(c.iter().chain(s).chain(d).copied().collect())
}

/// One sample in physical units, as stored in dataset files.
#[derive(Clone, Debug, PartialEq)]
pub struct RawFrame {
    pub ci: PhysicalControl,
    pub speed: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    /// Meters, clamped to 50.
    pub distances: [f64; DISTANCE_LEN],
}

impl RawFrame {
    /// Frame from the vehicle and a 16-channel scan. The world is planar, so
    /// pitch and roll are zero.
    pub fn capture(ci: PhysicalControl, state: &VehicleState, scan16: &LidarScan) -> Self {
        Self {
            ci,
            speed: state.speed,
            yaw: state.yaw,
            pitch: 0.0,
            roll: 0.0,
            distances: obstacle_distances(scan16),
        }
    }

    pub fn with_ci(&self, ci: PhysicalControl) -> Self {
        Self { ci, ..self.clone() }
    }

    pub fn to_input(&self) -> Array1<f64> {
        let c = normalize_ci(self.ci.steer, self.ci.pedal);
        let s = normalize_state(self.speed, self.yaw, self.pitch, self.roll);
        let d = normalize_distances(&self.distances);
        assemble_input(&c.as_array(), &s, &d).expect("fixed-size components")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{LidarConfig, LidarReturn, AZIMUTH_BINS};
    use proptest::prelude::*;

    #[test]
    fn ci_examples() {
        assert_eq!(normalize_ci(0.0, 0.0), ControlVector::new(0.5, 0.5));
        assert_eq!(normalize_ci(-1.0, 1.0), ControlVector::new(0.0, 1.0));
        assert_eq!(normalize_ci(0.5, -0.25), ControlVector::new(0.75, 0.375));
        assert_eq!(normalize_ci(3.0, f64::NAN), ControlVector::new(1.0, 0.5));
    }

    #[test]
    fn state_examples() {
        assert_eq!(normalize_state(30.0, 0.0, 0.0, 0.0), [1.0, 0.5, 0.5, 0.5]);
        assert_eq!(normalize_state(0.0, 0.0, 0.0, 0.0)[0], 0.0);
        assert_eq!(normalize_state(15.0, 0.0, 0.0, 0.0)[0], 0.5);
    }

    fn scan_with(hits: &[(usize, usize, f64, f64)]) -> LidarScan {
        let mut s = LidarScan::empty(16, &LidarConfig::default());
        for &(c, bin, range, h) in hits {
            s.returns[c * AZIMUTH_BINS + bin] = LidarReturn {
                range,
                height: Some(h),
            };
        }
        s
    }

    #[test]
    fn downsample_examples() {
        let full = LidarScan::empty(64, &LidarConfig::default());
        let mut full = full;
        for (k, r) in full.returns.iter_mut().enumerate() {
            r.range = 1.0 + (k % 997) as f64 * 0.01;
        }
        let d = downsample_channels(&full).unwrap();
        assert_eq!(d.channels, 16);
        for c in 0..16 {
            assert_eq!(d.channel(c), full.channel(4 * c));
        }
        assert!(downsample_channels(&d).is_err());
        let empty = downsample_channels(&LidarScan::empty(64, &LidarConfig::default())).unwrap();
        assert!(empty.returns.iter().all(|r| r.range == 60.0 && !r.is_hit()));
    }

    /// Brute force: scan every return, convert its azimuth to a front degree.
    fn brute_force(scan: &LidarScan) -> Vec<f64> {
        let mut d = vec![1.0f64; 180];
        for c in 0..scan.channels {
            for bin in 0..scan.azimuth_bins {
                let r = scan.get(c, bin);
                let Some(h) = r.height else { continue };
                if h < 0.3 {
                    continue;
                }
                let az = bin as f64 * 360.0 / scan.azimuth_bins as f64;
                let signed = if az >= 180.0 { az - 360.0 } else { az };
                let i = (signed + 90.0).round();
                if (0.0..180.0).contains(&i) {
                    let horiz = r.range * scan.elevations[c].cos();
                    let v = (horiz / 50.0).min(1.0);
                    let slot = &mut d[i as usize];
                    *slot = slot.min(v);
                }
            }
        }
        d
    }

    #[test]
    fn distance_vector_examples() {
        let empty = LidarScan::empty(16, &LidarConfig::default());
        assert!(pointcloud_to_distance_vector(&empty).iter().all(|&v| v == 1.0));

        // Channel 2 of the reduced scan is horizontal; azimuth 0 is dead ahead.
        let s = scan_with(&[(2, 0, 25.0, 2.0)]);
        let d = pointcloud_to_distance_vector(&s);
        assert_eq!(d[90], 0.5);
        assert_eq!(d.to_vec(), brute_force(&s));

        let far = scan_with(&[(2, 10, 60.0, 2.0)]);
        assert_eq!(pointcloud_to_distance_vector(&far)[100], 1.0);

        // Ground returns and rear returns are ignored.
        let s = scan_with(&[(15, 0, 20.0, 0.0), (2, 180, 5.0, 3.0)]);
        assert!(pointcloud_to_distance_vector(&s).iter().all(|&v| v == 1.0));
        // Right is entry 0, left entry 179.
        let s = scan_with(&[(2, 270, 10.0, 3.0), (2, 89, 5.0, 3.0)]);
        let d = pointcloud_to_distance_vector(&s);
        assert_eq!(d[0], 0.2);
        assert_eq!(d[179], 0.1);
    }

    #[test]
    fn assemble_examples() {
        let c = [0.25, 0.75];
        let s = [0.1, 0.2, 0.3, 0.4];
        let d: Vec<f64> = (0..180).map(|i| i as f64 / 180.0).collect();
        let x = assemble_input(&c, &s, &d).unwrap();
        assert_eq!(x.len(), 186);
        assert_eq!(&x.as_slice().unwrap()[..2], &c);
        for i in 0..180 {
            assert_eq!(x[6 + i], d[i]);
        }
        let z = assemble_input(&[0.0; 2], &[0.0; 4], &[0.0; 180]).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        assert!(assemble_input(&[0.0; 3], &[0.0; 4], &[0.0; 180]).is_err());
        assert!(assemble_input(&[0.0; 2], &[0.0; 4], &[0.0; 179]).is_err());
    }

    proptest! {
        #[test]
        fn ci_round_trip(a in -1.0f64..=1.0, b in -1.0f64..=1.0) {
            let back = denormalize_ci(normalize_ci(a, b));
            prop_assert!((back.steer - a).abs() <= 1e-12);
            prop_assert!((back.pedal - b).abs() <= 1e-12);
        }

        #[test]
        fn inputs_are_unit_bounded(
            steer in -5.0f64..5.0, pedal in -5.0f64..5.0,
            speed in 0.0f64..=30.0, yaw in -std::f64::consts::PI..=std::f64::consts::PI,
            dist in proptest::collection::vec(0.0f64..100.0, 180),
        ) {
            let mut distances = [0.0; 180];
            distances.copy_from_slice(&dist);
            let f = RawFrame {
                ci: PhysicalControl::new(steer, pedal),
                speed, yaw, pitch: 0.0, roll: 0.0, distances,
            };
            let x = f.to_input();
            prop_assert_eq!(x.len(), INPUT_LEN);
            prop_assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn adding_a_return_never_increases_entries(
            base in proptest::collection::vec((0usize..16, 0usize..360, 0.5f64..60.0, 0.0f64..8.0), 0..40),
            extra in (0usize..16, 0usize..360, 0.5f64..60.0, 0.0f64..8.0),
        ) {
            prop_assume!(!base.iter().any(|b| b.0 == extra.0 && b.1 == extra.1));
            let before = pointcloud_to_distance_vector(&scan_with(&base));
            let mut more = base.clone();
            more.push(extra);
            let after_scan = scan_with(&more);
            let after = pointcloud_to_distance_vector(&after_scan);
            prop_assert!(before.iter().zip(&after).all(|(b, a)| a <= b));
            prop_assert_eq!(after.to_vec(), brute_force(&after_scan));
        }
    }
}
