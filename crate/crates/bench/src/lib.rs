//! Deterministic inputs for the benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safemarl::{AgentState, ConstraintKind, EntityId, LinearConstraint, QpProblem, Vec2};

/// Random projection problems with `constraints` rows each, all feasible
/// at the origin.
pub fn qp_problems(count: usize, constraints: usize, seed: u64) -> Vec<QpProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let rows = (0..constraints)
                .map(|k| {
                    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    LinearConstraint::new(
                        Vec2::new(angle.cos(), angle.sin()),
                        rng.random_range(0.05..0.8),
                        ConstraintKind::NonCooperative,
                        EntityId::Obstacle(k),
                    )
                })
                .collect();
            let nominal = Vec2::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            QpProblem::new(nominal, rows, 1.0, 1e6)
        })
        .collect()
}

/// Pairs of agents placed uniformly in the arena with random velocities.
pub fn agent_pairs(count: usize, seed: u64) -> Vec<[AgentState; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = || {
        AgentState::new(
            Vec2::new(rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9)),
            Vec2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)),
        )
    };
    (0..count).map(|_| [agent(), agent()]).collect()
}

/// A `rows x cols` matrix of uniform values in `[-1, 1)`.
pub fn batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}
