//! The active-set solver against exhaustive enumeration of active sets on
//! random feasible problems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safemarl::qp::{kkt_check, solve};
use safemarl::{ConstraintKind, EntityId, LinearConstraint, QpProblem, QpStatus, Vec2};

use crate::Verdict;

pub const NAME: &str = "1000 QPs match the enumeration oracle (gap <= 1e-6, KKT <= 1e-9)";

const PROBLEMS: usize = 1000;
const BOX: f64 = 1.0;
const MAX_GAP: f64 = 1e-6;
const MAX_KKT: f64 = 1e-9;

fn objective(p: &QpProblem, u: &Vec2) -> f64 {
    0.5 * (u - p.nominal).norm_squared()
}

fn rows(p: &QpProblem) -> Vec<(Vec2, f64)> {
    let mut rows: Vec<(Vec2, f64)> = p.constraints.iter().map(|c| (c.normal, c.bound)).collect();
    rows.extend([
        (Vec2::new(1.0, 0.0), BOX),
        (Vec2::new(-1.0, 0.0), BOX),
        (Vec2::new(0.0, 1.0), BOX),
        (Vec2::new(0.0, -1.0), BOX),
    ]);
    rows
}

/// A planar strictly convex QP has at most two active rows, so its optimum
/// is the best feasible point among the nominal, its projection onto each
/// row and every pairwise row intersection.
fn oracle(p: &QpProblem) -> Option<Vec2> {
    let rows = rows(p);
    let mut candidates = vec![p.nominal];
    for (n, b) in &rows {
        candidates.push(p.nominal - n * ((n.dot(&p.nominal) - b) / n.norm_squared()));
    }
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let (n1, b1) = rows[i];
            let (n2, b2) = rows[j];
            let det = n1.x * n2.y - n1.y * n2.x;
            if det.abs() > 1e-12 {
                candidates.push(Vec2::new((b1 * n2.y - b2 * n1.y) / det, (n1.x * b2 - n2.x * b1) / det));
            }
        }
    }
    candidates
        .into_iter()
        .filter(|u| rows.iter().all(|(n, b)| n.dot(u) <= b + 1e-10))
        .min_by(|a, b| objective(p, a).total_cmp(&objective(p, b)))
}

fn random_problem(rng: &mut ChaCha8Rng) -> QpProblem {
    let nominal = Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    // Every row keeps `anchor` feasible.
    let anchor = Vec2::new(rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9));
    let m = rng.random_range(0..=6);
    let constraints = (0..m)
        .map(|k| {
            let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let normal = Vec2::new(angle.cos(), angle.sin()) * rng.random_range(0.2..3.0);
            let bound = normal.dot(&anchor) + rng.random_range(0.0..0.6);
            LinearConstraint::new(normal, bound, ConstraintKind::NonCooperative, EntityId::Obstacle(k))
        })
        .collect();
    QpProblem::new(nominal, constraints, BOX, 1e6)
}

pub fn check() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_gap = 0.0f64;
    let mut worst_kkt = 0.0f64;
    for k in 0..PROBLEMS {
        let p = random_problem(&mut rng);
        let s = solve(&p).map_err(|e| format!("problem {k}: {e}"))?;
        if s.status != QpStatus::Optimal {
            return Err(format!("problem {k}: status {:?}", s.status));
        }
        let exact = oracle(&p).ok_or_else(|| format!("problem {k}: oracle found no feasible point"))?;
        worst_gap = worst_gap.max((objective(&p, &s.u_safe) - objective(&p, &exact)).abs());
        worst_kkt = worst_kkt.max(kkt_check(&p, &s));
    }
    let detail = format!("worst gap {worst_gap:.2e}, worst KKT residual {worst_kkt:.2e}");
    if worst_gap <= MAX_GAP && worst_kkt <= MAX_KKT {
        Ok(detail)
    } else {
        Err(detail)
    }
}
