use super::lidar::LidarScan;
use super::track::Track;
use super::vehicle::VehicleState;
use crate::error::Result;

/// Minimum hit height (m) for a return to count as an obstacle.
pub const OBSTACLE_MIN_HEIGHT: f64 = 0.3;

/// Signed lateral position, positive to the left of travel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LateralOffset {
    /// Distance to the centerline (ground truth).
    pub geometric: f64,
    /// `(right_clearance − left_clearance) / 2` from the scan, when both
    /// sides see an obstacle.
    pub lidar: Option<f64>,
}

/// Nearest horizontal obstacle distance over the azimuth bins `[lo, hi]`
/// (degrees counter-clockwise from the heading).
pub fn sector_clearance(scan: &LidarScan, lo: usize, hi: usize) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (c, &elev) in scan.elevations.iter().enumerate() {
        for bin in lo..=hi {
            let r = scan.get(c, bin % scan.azimuth_bins);
            if matches!(r.height, Some(h) if h >= OBSTACLE_MIN_HEIGHT) {
                let d = r.range * elev.cos();
                best = Some(best.map_or(d, |b: f64| b.min(d)));
            }
        }
    }
    best
}

/// LiDAR-estimated offset from the left (45–135°) and right (225–315°) sectors.
pub fn lidar_offset(scan: &LidarScan) -> Option<f64> {
    let left = sector_clearance(scan, 45, 135)?;
    let right = sector_clearance(scan, 225, 315)?;
    Some((right - left) / 2.0)
}

/// Both offset variants. Fails when the nearest centerline station is ambiguous.
pub fn lateral_offset(state: &VehicleState, track: &Track, scan: &LidarScan) -> Result<LateralOffset> {
    let geometric = track.project_checked(state.position)?.lateral;
    Ok(LateralOffset {
        geometric,
        lidar: lidar_offset(scan),
    })
}

#[cfg(test)]
mod tests {
    use super::super::geometry::Vec2;
    use super::super::lidar::{cast_lidar, LidarConfig};
    use super::super::terrain::TerrainSpec;
    use super::*;

    fn offset_at(y: f64) -> LateralOffset {
        let track = Track::new(TerrainSpec::straight(300.0, 12.0));
        let s = VehicleState::at_rest(Vec2::new(150.0, y), 0.0, 150.0);
        let scan = cast_lidar(&s, &track, 16, &LidarConfig::default()).unwrap();
        lateral_offset(&s, &track, &scan).unwrap()
    }

    #[test]
    fn centered_is_zero() {
        let o = offset_at(0.0);
        assert_eq!(o.geometric, 0.0);
        assert!(o.lidar.unwrap().abs() < 1e-9);
    }

    #[test]
    fn two_meters_left() {
        let o = offset_at(2.0);
        assert!((o.geometric - 2.0).abs() < 1e-12);
        // Walls at +6 and -6: clearances 4 and 8.
        let oracle = ((6.0 + 2.0) - (6.0 - 2.0)) / 2.0;
        assert!((o.lidar.unwrap() - oracle).abs() < 0.2);
    }

    #[test]
    fn lidar_tracks_ground_truth_in_straight_corridor() {
        for k in -8..=8 {
            let y = k as f64 * 0.5;
            let o = offset_at(y);
            assert!((o.lidar.unwrap() - o.geometric).abs() < 0.2, "y={y}");
        }
    }
}
