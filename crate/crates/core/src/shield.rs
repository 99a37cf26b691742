//! Per-agent safety filter.
//!
//! Each agent looks only at entities within its sensing radius, builds one
//! barrier constraint per neighbour, obstacle and wall face, and projects
//! its nominal action onto the intersection of the resulting half-planes.
//! If an agent or obstacle barrier is already violated, the agent instead
//! brakes at full authority directly away from the most threatening one.
//! A violated wall barrier only forbids accelerating further into that
//! wall.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cbf::{self, CbfError, ConstraintKind, EntityId, LinearConstraint, ShieldParams};
use crate::qp::{self, QpError, QpProblem, QpStatus};
use crate::sim::{
    is_finite, nearest_wall, pairwise_distance, AgentState, ObstacleSpec, SimError, Vec2, WallFace, WorldConfig,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShieldError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Cbf(#[from] CbfError),
    #[error("non-finite nominal action")]
    NonFiniteAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShieldStatus {
    Passthrough,
    Corrected,
    Relaxed,
    Fallback,
}

impl ShieldStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ShieldStatus::Passthrough => "passthrough",
            ShieldStatus::Corrected => "corrected",
            ShieldStatus::Relaxed => "relaxed",
            ShieldStatus::Fallback => "fallback",
        }
    }
}

impl std::str::FromStr for ShieldStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "passthrough" => Ok(Self::Passthrough),
            "corrected" => Ok(Self::Corrected),
            "relaxed" => Ok(Self::Relaxed),
            "fallback" => Ok(Self::Fallback),
            other => Err(format!("unknown shield status {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintCounts {
    pub cooperative: usize,
    pub noncooperative: usize,
    pub wall: usize,
}

impl ConstraintCounts {
    fn record(&mut self, kind: ConstraintKind) {
        match kind {
            ConstraintKind::Cooperative => self.cooperative += 1,
            ConstraintKind::NonCooperative => self.noncooperative += 1,
            ConstraintKind::Wall => self.wall += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.cooperative + self.noncooperative + self.wall
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShieldReport {
    pub agent_id: usize,
    pub u_nominal: Vec2,
    pub u_safe: Vec2,
    pub constraints_built: ConstraintCounts,
    pub status: ShieldStatus,
    /// Smallest barrier value seen; `+inf` with nothing in range and
    /// `-inf` when an entity is already inside its unsafe ball.
    pub min_h: f64,
    pub slack: f64,
    /// Entity the fallback braked away from.
    pub fallback_from: Option<EntityId>,
}

/// Entities within sensing range of one agent, in deterministic order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Neighborhood {
    pub agents: Vec<(usize, AgentState)>,
    pub obstacles: Vec<(usize, ObstacleSpec)>,
    pub wall_faces: Vec<(WallFace, Vec2, f64)>,
}

/// Entities whose centre distance is at most `r_sense`, excluding the
/// focal agent. Agents and obstacles keep ascending index order, wall
/// faces the fixed `+x, -x, +y, -y` order.
pub fn neighborhood(
    self_id: usize,
    all_agents: &[AgentState],
    obstacles: &[ObstacleSpec],
    world: &WorldConfig,
    r_sense: f64,
) -> Neighborhood {
    let me = &all_agents[self_id];
    let agents = all_agents
        .iter()
        .enumerate()
        .filter(|&(i, a)| i != self_id && pairwise_distance(me, a) <= r_sense)
        .map(|(i, a)| (i, *a))
        .collect();
    in_range(me, agents, obstacles, world, r_sense)
}

fn in_range(
    me: &AgentState,
    agents: Vec<(usize, AgentState)>,
    obstacles: &[ObstacleSpec],
    world: &WorldConfig,
    r_sense: f64,
) -> Neighborhood {
    let obstacles = obstacles
        .iter()
        .enumerate()
        .filter(|(_, o)| pairwise_distance(me, *o) <= r_sense)
        .map(|(i, o)| (i, *o))
        .collect();
    let wall_faces = WallFace::ALL
        .iter()
        .map(|&face| {
            let (p, d) = face.nearest_point(&me.position, world.wall_half_extent);
            (face, p, d)
        })
        .filter(|&(_, _, d)| d <= r_sense)
        .collect();
    Neighborhood {
        agents,
        obstacles,
        wall_faces,
    }
}

struct Violation {
    severity: f64,
    distance: f64,
    away: Vec2,
    entity: EntityId,
}

/// Filter one agent's nominal action. `others` may contain every other
/// agent; only those within `params.r_sense` are considered.
pub fn filter_action(
    agent_id: usize,
    u_nominal: &Vec2,
    me: &AgentState,
    others: &[(usize, AgentState)],
    obstacles: &[ObstacleSpec],
    world: &WorldConfig,
    params: &ShieldParams,
) -> Result<(Vec2, ShieldReport), ShieldError> {
    if !is_finite(u_nominal) {
        return Err(ShieldError::NonFiniteAction);
    }
    if !me.is_finite() {
        return Err(SimError::NonFinite("agent state").into());
    }
    nearest_wall(&me.position, world.wall_half_extent)?;

    let nearby_agents = others
        .iter()
        .filter(|(id, a)| *id != agent_id && pairwise_distance(me, a) <= params.r_sense)
        .copied()
        .collect();
    let near = in_range(me, nearby_agents, obstacles, world, params.r_sense);

    let mut constraints: Vec<LinearConstraint> = Vec::new();
    let mut counts = ConstraintCounts::default();
    let mut min_h = f64::INFINITY;
    let mut worst: Option<Violation> = None;

    let mut handle = |result: Result<(LinearConstraint, f64), CbfError>, away: Vec2, entity: EntityId| match result {
        Ok((c, h)) => {
            counts.record(c.kind);
            min_h = min_h.min(h);
            constraints.push(c);
            Ok(())
        }
        Err(e @ (CbfError::NonPositiveBarrier { .. } | CbfError::InsideUnsafeBall { .. })) => {
            let v = Violation {
                severity: e.severity(),
                distance: away.norm(),
                away,
                entity,
            };
            min_h = min_h.min(v.severity);
            let replace = worst
                .as_ref()
                .is_none_or(|w| v.severity < w.severity || (v.severity == w.severity && v.distance < w.distance));
            if replace {
                worst = Some(v);
            }
            Ok(())
        }
        Err(e) => Err(e),
    };

    for (id, other) in &near.agents {
        handle(
            cbf::cooperative_constraint(me, other, *id, params),
            me.position - other.position,
            EntityId::Agent(*id),
        )?;
    }
    for (id, obstacle) in &near.obstacles {
        handle(
            cbf::noncooperative_constraint(me, obstacle, *id, params),
            me.position - obstacle.position,
            EntityId::Obstacle(*id),
        )?;
    }
    for (face, _, _) in &near.wall_faces {
        match cbf::wall_constraint(me, *face, world.wall_half_extent, params) {
            Ok((c, h)) => {
                counts.record(c.kind);
                min_h = min_h.min(h);
                constraints.push(c);
            }
            Err(e @ (CbfError::NonPositiveBarrier { .. } | CbfError::InsideUnsafeBall { .. })) => {
                let c = cbf::wall_hold_constraint(*face);
                counts.record(c.kind);
                min_h = min_h.min(e.severity());
                constraints.push(c);
            }
            Err(e) => return Err(e.into()),
        }
    }

    let report = |u_safe: Vec2, status: ShieldStatus, slack: f64, from: Option<EntityId>| ShieldReport {
        agent_id,
        u_nominal: *u_nominal,
        u_safe,
        constraints_built: counts,
        status,
        min_h,
        slack,
        fallback_from: from,
    };

    if let Some(v) = worst {
        let u = braking_action(&v.away, me, params.a_max_self.min(world.a_max));
        return Ok((u, report(u, ShieldStatus::Fallback, 0.0, Some(v.entity))));
    }

    let problem = QpProblem::new(*u_nominal, constraints, world.a_max, params.slack_weight);
    let solution = qp::solve(&problem)?;
    let (u, status) = match solution.status {
        QpStatus::Optimal if solution.u_safe == *u_nominal => (solution.u_safe, ShieldStatus::Passthrough),
        QpStatus::Optimal => (solution.u_safe, ShieldStatus::Corrected),
        QpStatus::Relaxed => (solution.u_safe, ShieldStatus::Relaxed),
        QpStatus::Fallback => {
            // Brake away from the tightest constraint's counterpart.
            let tightest = problem
                .constraints
                .iter()
                .max_by(|a, b| a.violation(u_nominal).total_cmp(&b.violation(u_nominal)));
            let away = tightest.map_or(-me.velocity, |c| -c.normal);
            let u = braking_action(&away, me, params.a_max_self.min(world.a_max));
            return Ok((
                u,
                report(u, ShieldStatus::Fallback, 0.0, tightest.map(|c| c.counterpart)),
            ));
        }
    };
    Ok((u, report(u, status, solution.slack, None)))
}

/// Full-authority acceleration along `away`; degenerate directions fall
/// back to opposing the current velocity, then to `+x`.
fn braking_action(away: &Vec2, me: &AgentState, authority: f64) -> Vec2 {
    let dir = if away.norm() > 0.0 {
        away.normalize()
    } else if me.velocity.norm() > 0.0 {
        -me.velocity.normalize()
    } else {
        Vec2::new(1.0, 0.0)
    };
    dir * authority
}
