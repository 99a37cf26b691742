//! Adversarial closed-loop scenarios: each agent pushes at full authority
//! toward the other agent or an obstacle while the shield filters.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safemarl::cbf::{h_cooperative, h_noncooperative};
use safemarl::env::EnvState;
use safemarl::marl::safe_actions;
use safemarl::{AgentState, PatrolEnv, ShieldParams, Vec2, WallFace, WorldConfig};

use crate::Verdict;

pub const NAME: &str = "1000 adversarial scenarios x 500 steps stay outside d_s within 60 s";

const SCENARIOS: usize = 1000;
const STEPS: usize = 500;
const TOLERANCE: f64 = 1e-3;
const BUDGET: Duration = Duration::from_secs(60);

#[derive(Clone, Copy, Debug)]
enum Attack {
    EachOther,
    Obstacle(usize),
}

fn barriers_positive(agents: &[AgentState; 2], world: &WorldConfig, params: &ShieldParams) -> bool {
    let positive = |h: Result<f64, _>| h.is_ok_and(|h: f64| h > 0.0);
    let pair = positive(h_cooperative(
        &(agents[0].position - agents[1].position),
        &(agents[0].velocity - agents[1].velocity),
        params,
    ));
    let obstacles = world.obstacles.iter().all(|o| {
        agents.iter().all(|s| {
            let dp = s.position - o.position;
            let scaled = dp * ((dp.norm() - o.radius) / dp.norm());
            positive(h_noncooperative(&scaled, &s.velocity, params))
        })
    });
    let walls = agents.iter().all(|s| {
        WallFace::ALL.iter().all(|f| {
            let (q, _) = f.nearest_point(&s.position, world.wall_half_extent);
            positive(h_noncooperative(&(s.position - q), &s.velocity, params))
        })
    });
    pair && obstacles && walls
}

/// Agents heading at each other from a state where every barrier is positive.
fn scenario(rng: &mut ChaCha8Rng, world: &WorldConfig, params: &ShieldParams) -> ([AgentState; 2], [Attack; 2]) {
    loop {
        let a = Vec2::new(rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8));
        let b = Vec2::new(rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8));
        let dir = (b - a).normalize();
        let agents = [
            AgentState::new(a, dir * rng.random_range(0.0..world.v_max)),
            AgentState::new(b, -dir * rng.random_range(0.0..world.v_max)),
        ];
        if !barriers_positive(&agents, world, params) {
            continue;
        }
        let mut pick = || {
            if rng.random_bool(0.75) {
                Attack::EachOther
            } else {
                Attack::Obstacle(rng.random_range(0..world.obstacles.len()))
            }
        };
        return (agents, [pick(), pick()]);
    }
}

fn nominal(state: &EnvState, attacks: &[Attack; 2], world: &WorldConfig) -> [Vec2; 2] {
    std::array::from_fn(|i| {
        let goal = match attacks[i] {
            Attack::EachOther => state.agents[1 - i].position,
            Attack::Obstacle(k) => world.obstacles[k].position,
        };
        let d = goal - state.agents[i].position;
        if d.norm() > 0.0 {
            d.normalize() * world.a_max
        } else {
            Vec2::new(world.a_max, 0.0)
        }
    })
}

pub fn check() -> Verdict {
    let world = WorldConfig::default();
    let params = ShieldParams::default();
    let env = PatrolEnv::new(world.clone(), &params, STEPS);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let started = Instant::now();
    let mut worst = f64::INFINITY;
    let mut breaches = 0;
    for _ in 0..SCENARIOS {
        let (agents, attacks) = scenario(&mut rng, &world, &params);
        let mut state = EnvState {
            agents,
            checkin_index: 0,
            checkins_reached: 0,
            step_count: 0,
            seed: 0,
        };
        let mut min_distance = env.proximity(&state.agents).0;
        for _ in 0..STEPS {
            let u = nominal(&state, &attacks, &world);
            let (safe, _) = safe_actions(&env, &state, &u, Some(&params)).map_err(|e| e.to_string())?;
            state = env.step(&state, &safe).map_err(|e| e.to_string())?.state;
            // Run past the environment's episode limit.
            state.step_count = 0;
            min_distance = min_distance.min(env.proximity(&state.agents).0);
        }
        worst = worst.min(min_distance);
        breaches += usize::from(min_distance < params.d_s - TOLERANCE);
    }
    let elapsed = started.elapsed();
    let detail = format!(
        "{breaches} breaches, min distance {worst:.5} (d_s {}), {:.1} s",
        params.d_s,
        elapsed.as_secs_f64()
    );
    if breaches == 0 && elapsed < BUDGET {
        Ok(detail)
    } else {
        Err(detail)
    }
}
