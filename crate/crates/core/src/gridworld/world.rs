use serde::{Deserialize, Serialize};

use super::geometry::Aabb;
use crate::{Error, Result};

/// A constant-velocity rectangular agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    /// Center, meters.
    pub position: [f64; 2],
    /// Meters per second.
    pub velocity: [f64; 2],
    /// Footprint half-extents, meters.
    pub half_extents: [f64; 2],
}

impl Agent {
    pub fn new(position: [f64; 2], velocity: [f64; 2], half_extents: [f64; 2]) -> Self {
        Agent {
            position,
            velocity,
            half_extents,
        }
    }

    pub fn footprint(&self) -> Aabb {
        Aabb::from_center(self.position, self.half_extents)
    }

    pub fn speed(&self) -> f64 {
        self.velocity[0].hypot(self.velocity[1])
    }

    /// Heading of the velocity vector, 0 for a stationary agent.
    pub fn heading(&self) -> f64 {
        if self.velocity == [0.0, 0.0] {
            0.0
        } else {
            self.velocity[1].atan2(self.velocity[0])
        }
    }

    fn validate(&self, v_max: f64) -> Result<()> {
        if !(self.half_extents[0] > 0.0 && self.half_extents[1] > 0.0) {
            return Err(Error::InvalidInput(format!(
                "agent half-extents must be positive, got {:?}",
                self.half_extents
            )));
        }
        if !self.position.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("agent position is not finite".into()));
        }
        let s = self.speed();
        if !s.is_finite() || s > v_max {
            return Err(Error::InvalidInput(format!(
                "agent speed {s} exceeds v_max {v_max}"
            )));
        }
        Ok(())
    }
}

/// A 2D world of static rectangles and moving agents around an ego agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    bounds: Aabb,
    obstacles: Vec<Aabb>,
    agents: Vec<Agent>,
    ego: Agent,
    v_max: f64,
}

impl World {
    pub fn new(
        bounds: Aabb,
        obstacles: Vec<Aabb>,
        agents: Vec<Agent>,
        ego: Agent,
        v_max: f64,
    ) -> Result<Self> {
        if !bounds.is_valid() {
            return Err(Error::InvalidInput(format!("invalid world bounds {bounds:?}")));
        }
        if !(v_max.is_finite() && v_max > 0.0) {
            return Err(Error::InvalidInput(format!("v_max must be positive, got {v_max}")));
        }
        for o in &obstacles {
            if !o.is_valid() || !o.intersects(&bounds) {
                return Err(Error::InvalidInput(format!(
                    "obstacle {o:?} is degenerate or outside the bounds"
                )));
            }
        }
        for a in agents.iter().chain(std::iter::once(&ego)) {
            a.validate(v_max)?;
            if !a.footprint().intersects(&bounds) {
                return Err(Error::InvalidInput(format!(
                    "agent at {:?} lies outside the bounds",
                    a.position
                )));
            }
        }
        Ok(World {
            bounds,
            obstacles,
            agents,
            ego,
            v_max,
        })
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn obstacles(&self) -> &[Aabb] {
        &self.obstacles
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn ego(&self) -> &Agent {
        &self.ego
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    /// Every rectangle a LiDAR ray from the ego can hit: static obstacles first,
    /// then agent footprints. The ego's own footprint is excluded.
    pub fn rectangles(&self) -> impl Iterator<Item = Aabb> + '_ {
        self.obstacles
            .iter()
            .copied()
            .chain(self.agents.iter().map(Agent::footprint))
    }
}

/// Advances every agent (and the ego) by `dt` seconds of constant-velocity
/// motion. Centers that leave the bounds are reflected back and the
/// corresponding velocity component is negated.
pub fn step_world(world: &World, dt: f64) -> Result<World> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let bounds = world.bounds;
    let advance = |a: &Agent| {
        let mut next = *a;
        for i in 0..2 {
            let (p, v) = reflect(a.position[i], a.velocity[i], bounds.min[i], bounds.max[i], dt);
            next.position[i] = p;
            next.velocity[i] = v;
        }
        next
    };
    Ok(World {
        bounds,
        obstacles: world.obstacles.clone(),
        agents: world.agents.iter().map(advance).collect(),
        ego: advance(&world.ego),
        v_max: world.v_max,
    })
}

fn reflect(pos: f64, vel: f64, lo: f64, hi: f64, dt: f64) -> (f64, f64) {
    let mut p = pos + vel * dt;
    let mut v = vel;
    loop {
        if p > hi {
            p = 2.0 * hi - p;
            v = -v;
        } else if p < lo {
            p = 2.0 * lo - p;
            v = -v;
        } else {
            return (p, v);
        }
    }
}
