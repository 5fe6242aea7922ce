//! Seeded synthetic scenes rendered into `OGMS` sequence files plus a JSON manifest.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::geometry::Aabb;
use super::lidar::cast_rays;
use super::render::render_ogm;
use super::world::{step_world, Agent, World};
use crate::hashing;
use crate::ogm::{read_sequence, write_sequence, GridSpec, ScenarioSequence};
use crate::rng::{stream_rng, streams};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn new(min: f64, max: f64) -> Self {
        Range { min, max }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..self.max)
        } else {
            self.min
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountRange {
    pub min: usize,
    pub max: usize,
}

impl CountRange {
    fn sample(&self, rng: &mut impl Rng) -> usize {
        rng.random_range(self.min..=self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

/// Simulation settings, stored as JSON.
///
/// Scenes are a straight corridor: the ego drives along `y = 0`, agents drive
/// in lanes parallel to it and static blocks line the corridor beyond
/// `obstacle_clearance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub grid: GridSpec,
    /// Seconds between frames.
    pub dt: f64,
    pub n_scenes: usize,
    pub frames_per_scene: usize,
    /// Observed frames per window (H).
    pub history: usize,
    /// Predicted frames per window (P).
    pub horizon: usize,
    pub n_rays: usize,
    pub max_range: f64,
    /// World extent: x in `[-half_length, half_length]`, y in `[-half_width, half_width]`.
    pub half_length: f64,
    pub half_width: f64,
    pub v_max: f64,
    pub agents: CountRange,
    pub obstacles: CountRange,
    pub agent_speed: Range,
    pub ego_speed: Range,
    /// Lateral offset of agent lanes from the ego path.
    pub lane_offset: Range,
    /// Minimum lateral distance of static blocks from the ego path.
    pub obstacle_clearance: f64,
    pub split: SplitFractions,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            grid: GridSpec::desk(),
            dt: 0.1,
            n_scenes: 100,
            frames_per_scene: 100,
            history: 5,
            horizon: 15,
            n_rays: 720,
            max_range: 30.0,
            half_length: 24.0,
            half_width: 12.0,
            v_max: 12.0,
            agents: CountRange { min: 3, max: 6 },
            obstacles: CountRange { min: 6, max: 12 },
            agent_speed: Range::new(2.0, 8.0),
            ego_speed: Range::new(1.0, 5.0),
            lane_offset: Range::new(3.0, 6.0),
            obstacle_clearance: 7.6,
            split: SplitFractions::default(),
        }
    }
}

impl SimConfig {
    /// The 10-scene configuration used for quick end-to-end runs.
    pub fn smoke() -> Self {
        SimConfig {
            n_scenes: 10,
            ..SimConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let cfg = |m: String| Err(Error::Config(m));
        if self.history < 1 || self.horizon < 1 {
            return cfg("history and horizon must be at least 1".into());
        }
        if self.frames_per_scene < self.history + self.horizon {
            return cfg(format!(
                "frames_per_scene {} is shorter than H + P = {}",
                self.frames_per_scene,
                self.history + self.horizon
            ));
        }
        if !(self.dt > 0.0) || self.n_scenes == 0 {
            return cfg("dt must be positive and n_scenes at least 1".into());
        }
        if self.n_rays < 4 || !(self.max_range > 0.0) {
            return cfg("need at least 4 rays and a positive max_range".into());
        }
        if self.agents.min > self.agents.max || self.obstacles.min > self.obstacles.max {
            return cfg("count ranges must have min <= max".into());
        }
        for r in [self.agent_speed, self.ego_speed, self.lane_offset] {
            if !(r.min >= 0.0 && r.min <= r.max) {
                return cfg(format!("invalid range {r:?}"));
            }
        }
        if self.agent_speed.max > self.v_max || self.ego_speed.max > self.v_max {
            return cfg("speed ranges exceed v_max".into());
        }
        if self.lane_offset.min < 2.5 {
            return cfg("lanes closer than 2.5 m would overlap the ego".into());
        }
        if self.obstacle_clearance <= self.lane_offset.max + 1.5 || self.obstacle_clearance >= self.half_width {
            return cfg("obstacle_clearance must lie between the outer lane and the world edge".into());
        }
        let s = self.split;
        if s.train < 0.0 || s.val < 0.0 || s.test < 0.0 || ((s.train + s.val + s.test) - 1.0).abs() > 1e-9 {
            return cfg(format!("split fractions must be non-negative and sum to 1, got {s:?}"));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        hashing::json_hash(self)
    }

    /// Scene counts `(train, val, test)`: val and test are `round(n·fraction)`,
    /// train takes the remainder.
    pub fn split_sizes(&self) -> (usize, usize, usize) {
        let n = self.n_scenes;
        let val = (n as f64 * self.split.val).round() as usize;
        let test = ((n as f64 * self.split.test).round() as usize).min(n - val.min(n));
        let val = val.min(n);
        (n - val - test, val, test)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub id: String,
    /// Relative to the manifest directory.
    pub path: String,
    pub split: Split,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub config: SimConfig,
    pub grid: GridSpec,
    pub history: usize,
    pub horizon: usize,
    pub sequences: Vec<SequenceEntry>,
}

impl DatasetManifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &SequenceEntry> {
        self.sequences.iter().filter(move |e| e.split == split)
    }
}

/// Builds scene `index` of a run seeded with `seed`.
pub fn scene_world(config: &SimConfig, seed: u64, index: usize) -> Result<World> {
    let mut rng = stream_rng(seed, streams::SCENE_BASE + index as u64);
    let (l, wd) = (config.half_length, config.half_width);
    let bounds = Aabb::new([-l, -wd], [l, wd]);
    let sign = |rng: &mut rand_chacha::ChaCha8Rng| if rng.random_bool(0.5) { 1.0 } else { -1.0 };

    let ego_speed = config.ego_speed.sample(&mut rng);
    let ego = Agent::new(
        [rng.random_range(-0.5 * l..0.5 * l), 0.0],
        [sign(&mut rng) * ego_speed, 0.0],
        [2.25, 1.0],
    );

    let n_obstacles = config.obstacles.sample(&mut rng);
    let obstacles = (0..n_obstacles)
        .map(|_| {
            let half = [rng.random_range(1.0..4.0), rng.random_range(1.0..3.0)];
            let cx = rng.random_range(-l..l);
            let inner = config.obstacle_clearance + half[1];
            let cy = if inner < wd {
                rng.random_range(inner..wd.max(inner + 1e-6))
            } else {
                inner
            };
            Aabb::from_center([cx, sign(&mut rng) * cy], half)
        })
        .collect();

    let n_agents = config.agents.sample(&mut rng);
    let agents = (0..n_agents)
        .map(|_| {
            let half = [rng.random_range(1.5..2.5), rng.random_range(0.8..1.1)];
            let y = sign(&mut rng) * config.lane_offset.sample(&mut rng);
            let x = rng.random_range(-l..l);
            let v = sign(&mut rng) * config.agent_speed.sample(&mut rng);
            Agent::new([x, y], [v, 0.0], half)
        })
        .collect();

    World::new(bounds, obstacles, agents, ego, config.v_max)
}

/// Renders `frames` ego-centric grids while stepping `world` forward.
pub fn render_scene(
    config: &SimConfig,
    mut world: World,
    frames: usize,
) -> Result<ScenarioSequence> {
    let mut ogms = Vec::with_capacity(frames);
    let mut poses = Vec::with_capacity(frames);
    for _ in 0..frames {
        let ego = *world.ego();
        let scan = cast_rays(&world, ego.position, config.n_rays, config.max_range)?;
        ogms.push(render_ogm(&scan, config.grid));
        poses.push([
            ego.position[0] as f32,
            ego.position[1] as f32,
            ego.heading() as f32,
        ]);
        world = step_world(&world, config.dt)?;
    }
    ScenarioSequence::new(config.grid, ogms, poses, config.history, config.horizon)
}

/// A static ego with a single agent driving past along +x and no other
/// structure: the simplest scene with one moving object.
pub fn single_agent_world(config: &SimConfig, lane: f64, speed: f64) -> Result<World> {
    let (l, wd) = (config.half_length, config.half_width);
    World::new(
        Aabb::new([-l, -wd], [l, wd]),
        vec![],
        vec![Agent::new([-4.0, lane], [speed, 0.0], [2.0, 1.0])],
        Agent::new([0.0, 0.0], [0.0, 0.0], [2.25, 1.0]),
        config.v_max,
    )
}

/// Writes one `scene_NNNN.ogms` per scene and `manifest.json` into `out_dir`.
///
/// Scene `i` draws only from its own stream, so the output is byte-identical
/// for the same `(config, seed)` no matter how scenes are scheduled.
pub fn generate_dataset(config: &SimConfig, seed: u64, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    config.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut order: Vec<usize> = (0..config.n_scenes).collect();
    order.shuffle(&mut stream_rng(seed, streams::SPLIT));
    let (n_train, n_val, _) = config.split_sizes();
    let mut splits = vec![Split::Test; config.n_scenes];
    for (rank, &scene) in order.iter().enumerate() {
        splits[scene] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }

    let entries = (0..config.n_scenes)
        .into_par_iter()
        .map(|i| {
            let id = format!("scene_{i:04}");
            let file = format!("{id}.ogms");
            let seq = render_scene(config, scene_world(config, seed, i)?, config.frames_per_scene)?;
            write_sequence(&seq, out_dir.join(&file))?;
            Ok(SequenceEntry {
                id,
                path: file,
                split: splits[i],
                frames: config.frames_per_scene,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = DatasetManifest {
        version: 1,
        seed,
        config_hash: config.hash(),
        config: config.clone(),
        grid: config.grid,
        history: config.history,
        horizon: config.horizon,
        sequences: entries,
    };
    manifest.save(out_dir)?;
    Ok(manifest)
}

/// Reads the sequence file of `entry` relative to the manifest directory.
pub fn load_sequence(dir: impl AsRef<Path>, entry: &SequenceEntry) -> Result<ScenarioSequence> {
    read_sequence(dir.as_ref().join(&entry.path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SimConfig {
        SimConfig {
            grid: GridSpec::new(16, 16, 0.5).unwrap(),
            n_scenes: 4,
            frames_per_scene: 6,
            history: 2,
            horizon: 3,
            n_rays: 64,
            ..SimConfig::default()
        }
    }

    #[test]
    fn short_scenes_are_a_configuration_error() {
        let cfg = SimConfig {
            frames_per_scene: 19,
            ..SimConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let dir = tempfile::tempdir().unwrap();
        assert!(generate_dataset(&cfg, 1, dir.path()).is_err());
    }

    #[test]
    fn split_counts() {
        let cfg = SimConfig::default();
        assert_eq!(cfg.split_sizes(), (70, 15, 15));
        assert_eq!(SimConfig::smoke().split_sizes(), (6, 2, 2));
        let one = SimConfig {
            n_scenes: 1,
            ..SimConfig::default()
        };
        assert_eq!(one.split_sizes(), (1, 0, 0));
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = tiny();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ma = generate_dataset(&cfg, 7, a.path()).unwrap();
        let mb = generate_dataset(&cfg, 7, b.path()).unwrap();
        assert_eq!(ma, mb);
        for e in &ma.sequences {
            let x = std::fs::read(a.path().join(&e.path)).unwrap();
            let y = std::fs::read(b.path().join(&e.path)).unwrap();
            assert_eq!(x, y);
        }
        assert_eq!(
            std::fs::read(a.path().join(MANIFEST_FILE)).unwrap(),
            std::fs::read(b.path().join(MANIFEST_FILE)).unwrap()
        );
        let loaded = DatasetManifest::load(a.path()).unwrap();
        assert_eq!(loaded, ma);
        let seq = load_sequence(a.path(), &loaded.sequences[0]).unwrap();
        assert_eq!(seq.len(), 6);
    }

    #[test]
    fn scenes_are_valid_worlds() {
        let cfg = SimConfig::default();
        for i in 0..50 {
            let w = scene_world(&cfg, 3, i).unwrap();
            let ego = w.ego().position;
            assert!(w.rectangles().all(|r| !r.contains(ego)));
        }
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = SimConfig::smoke();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: SimConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert!(serde_json::from_str::<SimConfig>("{\"grid\": 1}").is_err());
    }
}
