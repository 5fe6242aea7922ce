//! Synthetic driving-like worlds and LiDAR-derived ego-centric grids.
//!
//! Rectangular agents move at constant velocity and bounce off the world
//! bounds; a 360° scan from the ego is turned into a three-class grid by a
//! deterministic single-shot inverse sensor model.

mod dataset;
mod geometry;
mod lidar;
mod render;
mod world;

pub use dataset::{
    generate_dataset, load_sequence, render_scene, scene_world, single_agent_world, CountRange,
    DatasetManifest, Range, SequenceEntry, SimConfig, Split, SplitFractions, MANIFEST_FILE,
};
pub use geometry::{ray_direction, Aabb};
pub use lidar::{cast_rays, scan_angles, LidarScan};
pub use render::{render_ogm, MIN_OVERLAP};
pub use world::{step_world, Agent, World};
