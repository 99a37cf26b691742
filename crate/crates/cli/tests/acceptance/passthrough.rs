//! Nominal actions that already satisfy every constraint leave the shield
//! bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safemarl::cbf::{cooperative_constraint, noncooperative_constraint, wall_constraint};
use safemarl::shield::neighborhood;
use safemarl::{filter_action, AgentState, LinearConstraint, ShieldParams, ShieldStatus, Vec2, WorldConfig};

use crate::Verdict;

pub const NAME: &str = "10000 feasible nominal actions pass through bit-exactly";

const STATES: usize = 10_000;

fn random_agent(rng: &mut ChaCha8Rng) -> AgentState {
    let p = Vec2::new(rng.random_range(-0.95..0.95), rng.random_range(-0.95..0.95));
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    AgentState::new(p, Vec2::new(angle.cos(), angle.sin()) * rng.random_range(0.0..1.0))
}

/// The focal agent's constraints, or `None` if a barrier is already violated.
fn constraints(agents: &[AgentState; 2], world: &WorldConfig, params: &ShieldParams) -> Option<Vec<LinearConstraint>> {
    let me = &agents[0];
    let near = neighborhood(0, agents, &world.obstacles, world, params.r_sense);
    let mut out = Vec::new();
    for (id, other) in &near.agents {
        out.push(cooperative_constraint(me, other, *id, params).ok()?.0);
    }
    for (id, o) in &near.obstacles {
        out.push(noncooperative_constraint(me, o, *id, params).ok()?.0);
    }
    for (face, _, _) in &near.wall_faces {
        out.push(wall_constraint(me, *face, world.wall_half_extent, params).ok()?.0);
    }
    Some(out)
}

pub fn check() -> Verdict {
    let world = WorldConfig::default();
    let params = ShieldParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    let mut altered = 0;
    while checked < STATES {
        let agents = [random_agent(&mut rng), random_agent(&mut rng)];
        let Some(rows) = constraints(&agents, &world, &params) else {
            continue;
        };
        let u = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if !rows.iter().all(|c| c.normal.dot(&u) <= c.bound) {
            continue;
        }
        let (safe, report) = filter_action(0, &u, &agents[0], &[(1, agents[1])], &world.obstacles, &world, &params)
            .map_err(|e| e.to_string())?;
        let exact = safe.x.to_bits() == u.x.to_bits() && safe.y.to_bits() == u.y.to_bits();
        altered += usize::from(!exact || report.status != ShieldStatus::Passthrough);
        checked += 1;
    }
    let detail = format!("{checked} states, {altered} altered");
    if altered == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}
