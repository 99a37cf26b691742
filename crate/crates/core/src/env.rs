//! Two-patrolman task: Patrolman I wanders, Patrolman II visits the
//! check-in points in order. Both are rewarded per nearby entity for
//! keeping clear of it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cbf::ShieldParams;
use crate::shield::ShieldStatus;
use crate::sim::{
    confine_to_walls, nearest_wall, pairwise_distance, step_agent, AgentState, SimError, Vec2, WorldConfig,
};

pub const AGENT_COUNT: usize = 2;
pub const PATROLMAN_I: usize = 0;
pub const PATROLMAN_II: usize = 1;

pub const REWARD_COLLISION: f64 = -50.0;
pub const REWARD_CLEAR: f64 = 50.0;
pub const REWARD_CHECKIN: f64 = 100.0;

pub const RESET_ATTEMPTS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("could not place agents after {0} attempts; world too crowded")]
    Crowded(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub agents: [AgentState; AGENT_COUNT],
    pub checkin_index: usize,
    pub checkins_reached: usize,
    pub step_count: usize,
    pub seed: u64,
}

/// Per-agent observation vectors.
pub type Observations = [Vec<f64>; AGENT_COUNT];

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub observations: Observations,
    pub rewards: [f64; AGENT_COUNT],
    pub done: bool,
    pub checkin_reached: bool,
}

/// Everything logged about one executed step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// States after the step.
    pub agents: [AgentState; AGENT_COUNT],
    pub nominal: [Vec2; AGENT_COUNT],
    pub executed: [Vec2; AGENT_COUNT],
    pub rewards: [f64; AGENT_COUNT],
    /// `None` when the shield is disabled.
    pub shield: [Option<ShieldStatus>; AGENT_COUNT],
    pub checkin_reached: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub total_reward: [f64; AGENT_COUNT],
    /// Steps on which some agent was within `d_s` of another agent or
    /// an obstacle.
    pub collision_count: usize,
    pub min_pairwise_distance: f64,
    pub checkins_reached: usize,
    pub shield_correction_count: usize,
    pub slack_events: usize,
    pub fallback_events: usize,
    pub steps: usize,
}

impl Default for EpisodeMetrics {
    fn default() -> Self {
        Self {
            total_reward: [0.0; AGENT_COUNT],
            collision_count: 0,
            min_pairwise_distance: f64::INFINITY,
            checkins_reached: 0,
            shield_correction_count: 0,
            slack_events: 0,
            fallback_events: 0,
            steps: 0,
        }
    }
}

impl EpisodeMetrics {
    pub fn collided(&self) -> bool {
        self.collision_count > 0
    }

    pub fn team_reward(&self) -> f64 {
        self.total_reward.iter().sum()
    }
}

/// What a reward term was earned against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardEntity {
    Agent(usize),
    Obstacle(usize),
}

#[derive(Debug, Clone)]
pub struct PatrolEnv {
    pub world: WorldConfig,
    pub safe_distance: f64,
    pub sense_radius: f64,
    pub episode_length: usize,
}

impl PatrolEnv {
    pub fn new(world: WorldConfig, shield: &ShieldParams, episode_length: usize) -> Self {
        Self {
            world,
            safe_distance: shield.d_s,
            sense_radius: shield.r_sense,
            episode_length,
        }
    }

    pub fn observation_dim(&self) -> usize {
        4 + 2 * (AGENT_COUNT - 1) + 2 * self.world.obstacles.len() + 2
    }

    pub fn current_target(&self, state: &EnvState) -> Vec2 {
        self.world.checkin_points[state.checkin_index]
    }

    /// Uniform placement by rejection: every agent-agent, agent-obstacle
    /// and agent-wall clearance must exceed `d_s + reset_margin`.
    pub fn reset(&self, seed: u64) -> Result<(EnvState, Observations), EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = self.world.wall_half_extent;
        let clearance = self.safe_distance + self.world.reset_margin;
        let mut placed: Vec<Vec2> = Vec::with_capacity(AGENT_COUNT);
        let mut failures = 0;
        while placed.len() < AGENT_COUNT {
            let p = Vec2::new(rng.random_range(-h..=h), rng.random_range(-h..=h));
            let wall_ok = nearest_wall(&p, h)?.2 > clearance;
            let obstacles_ok = self
                .world
                .obstacles
                .iter()
                .all(|o| pairwise_distance(&p, o) - o.radius > clearance);
            let agents_ok = placed.iter().all(|q| pairwise_distance(&p, q) > clearance);
            if wall_ok && obstacles_ok && agents_ok {
                placed.push(p);
            } else {
                failures += 1;
                if failures >= RESET_ATTEMPTS {
                    return Err(EnvError::Crowded(RESET_ATTEMPTS));
                }
            }
        }
        let state = EnvState {
            agents: [AgentState::at_rest(placed[0]), AgentState::at_rest(placed[1])],
            checkin_index: 0,
            checkins_reached: 0,
            step_count: 0,
            seed,
        };
        let obs = self.observe(&state);
        Ok((state, obs))
    }

    pub fn observe(&self, state: &EnvState) -> Observations {
        std::array::from_fn(|i| {
            let me = &state.agents[i];
            let p = me.position;
            let mut o = Vec::with_capacity(self.observation_dim());
            o.extend([p.x, p.y, me.velocity.x, me.velocity.y]);
            for (j, other) in state.agents.iter().enumerate() {
                if j != i {
                    let d = other.position - p;
                    o.extend([d.x, d.y]);
                }
            }
            for ob in &self.world.obstacles {
                let d = ob.position - p;
                o.extend([d.x, d.y]);
            }
            if i == PATROLMAN_II {
                let d = self.current_target(state) - p;
                o.extend([d.x, d.y]);
            } else {
                o.extend([0.0, 0.0]);
            }
            o
        })
    }

    /// Entities counted by agent `i`'s reward: the other agent and every
    /// obstacle within the sensing radius, with their distances.
    pub fn nearby_entities(&self, agents: &[AgentState; AGENT_COUNT], i: usize) -> Vec<(RewardEntity, f64, f64)> {
        let me = &agents[i];
        let mut out = Vec::new();
        for (j, other) in agents.iter().enumerate() {
            let d = pairwise_distance(me, other);
            if j != i && d <= self.sense_radius {
                out.push((RewardEntity::Agent(j), d, self.safe_distance));
            }
        }
        for (k, o) in self.world.obstacles.iter().enumerate() {
            let d = pairwise_distance(me, o);
            if d <= self.sense_radius {
                out.push((RewardEntity::Obstacle(k), d, self.safe_distance + o.radius));
            }
        }
        out
    }

    /// Per-entity reward terms for agent `i`; the step reward is their sum.
    pub fn reward_terms(
        &self,
        agents: &[AgentState; AGENT_COUNT],
        i: usize,
        target: Option<Vec2>,
    ) -> Vec<(RewardEntity, f64)> {
        let at_checkin = match target {
            Some(t) if i == PATROLMAN_II => pairwise_distance(&agents[i], &t) <= self.world.checkin_radius,
            _ => false,
        };
        self.nearby_entities(agents, i)
            .into_iter()
            .map(|(e, d, limit)| {
                let r = if d <= limit {
                    REWARD_COLLISION
                } else if at_checkin {
                    REWARD_CHECKIN
                } else {
                    REWARD_CLEAR
                };
                (e, r)
            })
            .collect()
    }

    /// Smallest agent-agent or agent-obstacle clearance, and whether any is
    /// at or inside the safe distance.
    pub fn proximity(&self, agents: &[AgentState; AGENT_COUNT]) -> (f64, bool) {
        let mut min = f64::INFINITY;
        let mut collided = false;
        for i in 0..AGENT_COUNT {
            for j in i + 1..AGENT_COUNT {
                let d = pairwise_distance(&agents[i], &agents[j]);
                min = min.min(d);
                collided |= d <= self.safe_distance;
            }
            for o in &self.world.obstacles {
                let d = pairwise_distance(&agents[i], o) - o.radius;
                min = min.min(d);
                collided |= d <= self.safe_distance;
            }
        }
        (min, collided)
    }

    /// Actions are clipped to the per-axis box before integration.
    pub fn step(&self, state: &EnvState, actions: &[Vec2; AGENT_COUNT]) -> Result<StepOutcome, EnvError> {
        let a = self.world.a_max;
        let mut agents = state.agents;
        for (agent, u) in agents.iter_mut().zip(actions) {
            let u = Vec2::new(u.x.clamp(-a, a), u.y.clamp(-a, a));
            *agent = step_agent(agent, &u, self.world.dt, self.world.v_max)?;
            confine_to_walls(agent, self.world.wall_half_extent);
        }
        let target = self.current_target(state);
        let rewards = std::array::from_fn(|i| self.reward_terms(&agents, i, Some(target)).iter().map(|(_, r)| r).sum());
        let checkin_reached = pairwise_distance(&agents[PATROLMAN_II], &target) <= self.world.checkin_radius;
        let mut next = EnvState {
            agents,
            checkin_index: state.checkin_index,
            checkins_reached: state.checkins_reached,
            step_count: state.step_count + 1,
            seed: state.seed,
        };
        if checkin_reached {
            next.checkin_index = (next.checkin_index + 1) % self.world.checkin_points.len();
            next.checkins_reached += 1;
        }
        let done = next.step_count >= self.episode_length || next.checkins_reached >= self.world.checkin_points.len();
        let observations = self.observe(&next);
        Ok(StepOutcome {
            state: next,
            observations,
            rewards,
            done,
            checkin_reached,
        })
    }

    /// Episode summary recomputed from the logged trajectory.
    pub fn collision_audit(&self, trajectory: &[StepRecord]) -> EpisodeMetrics {
        let mut m = EpisodeMetrics::default();
        for rec in trajectory {
            let (min, collided) = self.proximity(&rec.agents);
            m.min_pairwise_distance = m.min_pairwise_distance.min(min);
            m.collision_count += usize::from(collided);
            for i in 0..AGENT_COUNT {
                m.total_reward[i] += rec.rewards[i];
                match rec.shield[i] {
                    Some(ShieldStatus::Corrected) => m.shield_correction_count += 1,
                    Some(ShieldStatus::Relaxed) => {
                        m.shield_correction_count += 1;
                        m.slack_events += 1;
                    }
                    Some(ShieldStatus::Fallback) => {
                        m.shield_correction_count += 1;
                        m.fallback_events += 1;
                    }
                    _ => {}
                }
            }
            m.checkins_reached += usize::from(rec.checkin_reached);
            m.steps += 1;
        }
        m
    }
}
