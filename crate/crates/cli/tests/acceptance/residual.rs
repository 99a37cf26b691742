//! Central finite differences of `B = 1/h` along shielded trajectories
//! satisfy `dB/dt - Gamma/B <= 1e-3`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safemarl::cbf::{h_cooperative, h_noncooperative};
use safemarl::env::EnvState;
use safemarl::marl::safe_actions;
use safemarl::{AgentState, PatrolEnv, ShieldParams, ShieldReport, ShieldStatus, Vec2, WallFace, WorldConfig};

use crate::Verdict;

pub const NAME: &str = "finite-difference barrier residual <= 1e-3 along 100 trajectories";

const TRAJECTORIES: u64 = 100;
const STEPS: usize = 200;
const DELTA: f64 = 1e-7;
const H_FLOOR: f64 = 1e-3;
const TOLERANCE: f64 = 1e-3;

fn advance(s: &AgentState, u: &Vec2, t: f64) -> AgentState {
    AgentState::new(s.position + s.velocity * t, s.velocity + u * t)
}

/// `dB/dt - Gamma/B`, skipped where `h` is too small to difference.
fn residual(h_at: impl Fn(f64) -> Option<f64>, gamma: f64) -> Option<f64> {
    let h = h_at(0.0)?;
    if h <= H_FLOOR {
        return None;
    }
    let b_dot = (1.0 / h_at(DELTA)? - 1.0 / h_at(-DELTA)?) / (2.0 * DELTA);
    Some(b_dot - gamma * h)
}

fn constrained(report: &Option<ShieldReport>) -> bool {
    matches!(
        report.as_ref().map(|r| r.status),
        Some(ShieldStatus::Passthrough | ShieldStatus::Corrected)
    )
}

/// Waypoint chaser that often targets the other agent or an obstacle.
fn pursue(
    rng: &mut ChaCha8Rng,
    goals: &mut [(Option<usize>, Vec2); 2],
    state: &EnvState,
    world: &WorldConfig,
) -> [Vec2; 2] {
    std::array::from_fn(|i| {
        let me = state.agents[i].position;
        let (goal, point) = &mut goals[i];
        if rng.random_bool(0.05) || (goal.is_none() && (*point - me).norm() < 0.1) {
            *goal = match rng.random_range(0..3) {
                0 => Some(1 - i),
                1 => None,
                _ => Some(2 + rng.random_range(0..world.obstacles.len())),
            };
            *point = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        let target = match *goal {
            Some(j) if j < 2 => state.agents[j].position,
            Some(k) => world.obstacles[k - 2].position,
            None => *point,
        };
        let d = target - me;
        if d.norm() > 0.0 {
            d.normalize() * world.a_max
        } else {
            Vec2::zeros()
        }
    })
}

pub fn check() -> Verdict {
    let world = WorldConfig::default();
    let params = ShieldParams::default();
    let env = PatrolEnv::new(world.clone(), &params, STEPS);
    let mut samples = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..TRAJECTORIES {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let (mut state, _) = env.reset(seed).map_err(|e| e.to_string())?;
        let mut goals = [(None, Vec2::zeros()); 2];
        for _ in 0..STEPS {
            let nominal = pursue(&mut rng, &mut goals, &state, &world);
            let (u, reports) = safe_actions(&env, &state, &nominal, Some(&params)).map_err(|e| e.to_string())?;
            let [a, b] = state.agents;
            let mut values = Vec::new();
            if constrained(&reports[0])
                && constrained(&reports[1])
                && (a.position - b.position).norm() <= params.r_sense
            {
                let pair = |t: f64| {
                    let (x, y) = (advance(&a, &u[0], t), advance(&b, &u[1], t));
                    h_cooperative(&(x.position - y.position), &(x.velocity - y.velocity), &params).ok()
                };
                values.push(residual(pair, params.gamma_coo));
            }
            for (i, me) in [a, b].iter().enumerate() {
                if !constrained(&reports[i]) {
                    continue;
                }
                for o in world
                    .obstacles
                    .iter()
                    .filter(|o| (me.position - o.position).norm() <= params.r_sense)
                {
                    let h = |t: f64| {
                        let x = advance(me, &u[i], t);
                        h_noncooperative(&(x.position - o.position), &x.velocity, &params).ok()
                    };
                    values.push(residual(h, params.gamma_non));
                }
                for face in WallFace::ALL {
                    // Walls are modelled as the static nearest boundary point.
                    let (q, d) = face.nearest_point(&me.position, world.wall_half_extent);
                    if d > params.r_sense {
                        continue;
                    }
                    let h = |t: f64| {
                        let x = advance(me, &u[i], t);
                        h_noncooperative(&(x.position - q), &x.velocity, &params).ok()
                    };
                    values.push(residual(h, params.gamma_non));
                }
            }
            for r in values.into_iter().flatten() {
                samples += 1;
                worst = worst.max(r);
            }
            state = env.step(&state, &u).map_err(|e| e.to_string())?.state;
            state.step_count = 0;
        }
    }
    let detail = format!("{samples} barrier samples, worst residual {worst:.2e}");
    if samples > 0 && worst <= TOLERANCE {
        Ok(detail)
    } else {
        Err(detail)
    }
}
