//! Deterministic 2D canyon world: terrain, vehicle dynamics, contacts and LiDAR.

pub mod contact;
pub mod geometry;
pub mod lidar;
pub mod offset;
pub mod terrain;
pub mod track;
pub mod vehicle;
pub mod world;

pub use contact::{detect_contacts, ContactDebouncer, ContactEvent, CrashKind};
pub use geometry::{wrap_angle, Vec2};
pub use lidar::{cast_lidar, LidarConfig, LidarReturn, LidarScan, AZIMUTH_BINS, FULL_CHANNELS, REDUCED_CHANNELS};
pub use offset::{lateral_offset, LateralOffset, OBSTACLE_MIN_HEIGHT};
pub use terrain::{generate_terrain, generate_terrain_with, Obstacle, TerrainParams, TerrainSpec};
pub use track::{Projection, Track};
pub use vehicle::{step_vehicle, PhysicalControl, VehicleSpec, VehicleState};
pub use world::{TickOutcome, World, WorldConfig, TICK_SECONDS};
