//! Planar double-integrator kinematics and arena geometry.
//!
//! Every agent is a point mass whose control input is its acceleration.
//! Integration is semi-implicit Euler (velocity first), with the speed
//! clamped to `v_max` after each update.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 2-D vector used for positions, velocities and accelerations.
pub type Vec2 = nalgebra::Vector2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error("position ({x}, {y}) lies outside the wall square of half extent {half_extent}")]
    OutsideWalls { x: f64, y: f64, half_extent: f64 },
    #[error("invalid world configuration: {0}")]
    InvalidWorld(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec2,
    pub velocity: Vec2,
}

impl AgentState {
    pub fn new(position: Vec2, velocity: Vec2) -> Self {
        Self { position, velocity }
    }

    pub fn at_rest(position: Vec2) -> Self {
        Self::new(position, Vec2::zeros())
    }

    pub fn is_finite(&self) -> bool {
        is_finite(&self.position) && is_finite(&self.velocity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSpec {
    pub position: Vec2,
    #[serde(default)]
    pub radius: f64,
}

impl ObstacleSpec {
    pub fn point(x: f64, y: f64) -> Self {
        Self {
            position: Vec2::new(x, y),
            radius: 0.0,
        }
    }
}

/// Anything with a centre point that distances can be measured between.
pub trait Located {
    fn location(&self) -> Vec2;
}

impl Located for AgentState {
    fn location(&self) -> Vec2 {
        self.position
    }
}

impl Located for ObstacleSpec {
    fn location(&self) -> Vec2 {
        self.position
    }
}

impl Located for Vec2 {
    fn location(&self) -> Vec2 {
        *self
    }
}

/// The four faces of the square arena, in tie-breaking order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WallFace {
    PosX,
    NegX,
    PosY,
    NegY,
}

impl WallFace {
    pub const ALL: [WallFace; 4] = [WallFace::PosX, WallFace::NegX, WallFace::PosY, WallFace::NegY];

    /// Closest point on this face (as an infinite line clipped to the
    /// square) to `p`, and the distance to it.
    pub fn nearest_point(self, p: &Vec2, half_extent: f64) -> (Vec2, f64) {
        let h = half_extent;
        let clamp = |c: f64| c.clamp(-h, h);
        match self {
            WallFace::PosX => (Vec2::new(h, clamp(p.y)), h - p.x),
            WallFace::NegX => (Vec2::new(-h, clamp(p.y)), p.x + h),
            WallFace::PosY => (Vec2::new(clamp(p.x), h), h - p.y),
            WallFace::NegY => (Vec2::new(clamp(p.x), -h), p.y + h),
        }
    }

    /// Unit normal pointing out of the arena through this face.
    pub fn outward_normal(self) -> Vec2 {
        match self {
            WallFace::PosX => Vec2::new(1.0, 0.0),
            WallFace::NegX => Vec2::new(-1.0, 0.0),
            WallFace::PosY => Vec2::new(0.0, 1.0),
            WallFace::NegY => Vec2::new(0.0, -1.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WallFace::PosX => "+x",
            WallFace::NegX => "-x",
            WallFace::PosY => "+y",
            WallFace::NegY => "-y",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub wall_half_extent: f64,
    pub obstacles: Vec<ObstacleSpec>,
    pub checkin_points: Vec<Vec2>,
    /// Integration step (s).
    pub dt: f64,
    pub v_max: f64,
    /// Per-axis acceleration cap shared by every agent.
    pub a_max: f64,
    /// Patrolman II counts a check-in as reached within this distance.
    pub checkin_radius: f64,
    /// Extra clearance beyond the safe distance required at reset.
    pub reset_margin: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            wall_half_extent: 1.0,
            obstacles: vec![
                ObstacleSpec::point(-0.35, 0.0),
                ObstacleSpec::point(0.35, 0.25),
                ObstacleSpec::point(0.0, -0.45),
            ],
            checkin_points: vec![
                Vec2::new(0.7, 0.7),
                Vec2::new(-0.7, 0.7),
                Vec2::new(-0.7, -0.7),
                Vec2::new(0.7, -0.7),
                Vec2::new(0.0, 0.0),
            ],
            dt: 0.1,
            v_max: 1.0,
            a_max: 1.0,
            checkin_radius: 0.05,
            reset_margin: 0.05,
        }
    }
}

impl WorldConfig {
    /// Checks the structural invariants. `safe_distance` is the shield's
    /// `d_s`, needed to verify check-in points sit outside obstacle halos.
    pub fn validate(&self, safe_distance: f64) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidWorld(msg));
        let h = self.wall_half_extent;
        if !(h > 0.0 && h.is_finite()) {
            return bad(format!("wall_half_extent must be positive, got {h}"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.a_max > 0.0 && self.a_max.is_finite()) {
            return bad(format!("a_max must be positive, got {}", self.a_max));
        }
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return bad(format!("v_max must be positive, got {}", self.v_max));
        }
        if !(self.checkin_radius >= 0.0 && self.reset_margin >= 0.0) {
            return bad("checkin_radius and reset_margin must be non-negative".into());
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !is_finite(&o.position) || o.radius.is_nan() || o.radius < 0.0 {
                return bad(format!("obstacle {i} has non-finite position or negative radius"));
            }
            if o.position.x.abs() > h || o.position.y.abs() > h {
                return bad(format!("obstacle {i} lies outside the walls"));
            }
        }
        if self.checkin_points.is_empty() {
            return bad("at least one check-in point is required".into());
        }
        for (i, c) in self.checkin_points.iter().enumerate() {
            if !is_finite(c) || c.x.abs() >= h || c.y.abs() >= h {
                return bad(format!("check-in point {i} is not strictly inside the walls"));
            }
            for (j, o) in self.obstacles.iter().enumerate() {
                if pairwise_distance(c, o) <= safe_distance + o.radius {
                    return bad(format!("check-in point {i} lies inside obstacle {j}'s safe radius"));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn is_finite(v: &Vec2) -> bool {
    v.x.is_finite() && v.y.is_finite()
}

/// Semi-implicit Euler step: `v' = clamp(v + a dt)`, `p' = p + v' dt`.
/// The clamp rescales the velocity so its norm never exceeds `v_max`.
pub fn step_agent(state: &AgentState, accel: &Vec2, dt: f64, v_max: f64) -> Result<AgentState, SimError> {
    if !state.is_finite() {
        return Err(SimError::NonFinite("agent state"));
    }
    if !is_finite(accel) {
        return Err(SimError::NonFinite("acceleration"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::BadTimeStep(dt));
    }
    let mut velocity = state.velocity + accel * dt;
    let speed = velocity.norm();
    if speed > v_max {
        velocity *= v_max / speed;
    }
    Ok(AgentState {
        position: state.position + velocity * dt,
        velocity,
    })
}

/// Euclidean distance between the centres of two entities.
pub fn pairwise_distance(a: &impl Located, b: &impl Located) -> f64 {
    (a.location() - b.location()).norm()
}

/// Closest point on the arena boundary and its distance. Ties go to the
/// first face in [`WallFace::ALL`] order.
pub fn wall_clearance(state: &AgentState, world: &WorldConfig) -> Result<(Vec2, f64), SimError> {
    nearest_wall(&state.position, world.wall_half_extent).map(|(_, p, d)| (p, d))
}

pub fn nearest_wall(p: &Vec2, half_extent: f64) -> Result<(WallFace, Vec2, f64), SimError> {
    if !is_finite(p) {
        return Err(SimError::NonFinite("position"));
    }
    if p.x.abs() > half_extent || p.y.abs() > half_extent {
        return Err(SimError::OutsideWalls {
            x: p.x,
            y: p.y,
            half_extent,
        });
    }
    let mut best: Option<(WallFace, Vec2, f64)> = None;
    for face in WallFace::ALL {
        let (q, d) = face.nearest_point(p, half_extent);
        if best.is_none_or(|(_, _, bd)| d < bd) {
            best = Some((face, q, d));
        }
    }
    Ok(best.expect("four faces"))
}

/// Keeps a state inside the arena: positions past a face are projected
/// back onto it and the outward velocity component is removed.
pub fn confine_to_walls(state: &mut AgentState, half_extent: f64) -> bool {
    let mut hit = false;
    for axis in 0..2 {
        let c = state.position[axis];
        if c > half_extent {
            state.position[axis] = half_extent;
            state.velocity[axis] = state.velocity[axis].min(0.0);
            hit = true;
        } else if c < -half_extent {
            state.position[axis] = -half_extent;
            state.velocity[axis] = state.velocity[axis].max(0.0);
            hit = true;
        }
    }
    hit
}
