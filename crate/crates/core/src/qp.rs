//! Minimal-interference projection of a nominal action onto the safe
//! action set.
//!
//! The problem is tiny (two variables, a dozen half-planes), so it is
//! solved exactly with a primal active-set method. A feasible starting
//! vertex is found by enumerating intersections of constraint lines.
//! When no vertex is feasible, a single shared slack `s >= 0` relaxes every
//! linear constraint and is penalised by `slack_weight * s^2`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cbf::LinearConstraint;
use crate::sim::{is_finite, Vec2};

pub const MAX_ITERATIONS: usize = 64;
/// Feasibility and optimality tolerance.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("non-finite {0} in QP data")]
    NonFinite(&'static str),
    #[error("box limit must be positive, got {0}")]
    BadBox(f64),
    #[error("slack weight must be non-negative, got {0}")]
    BadSlackWeight(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub nominal: Vec2,
    pub constraints: Vec<LinearConstraint>,
    /// Per-axis bound: `|u_x|, |u_y| <= box_limit`.
    pub box_limit: f64,
    pub slack_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    Relaxed,
    /// Iteration cap hit; `u_safe` is only the clipped nominal and the
    /// caller is expected to substitute its own fallback action.
    Fallback,
}

/// Row indices `0..m` refer to `constraints`; `m..m+4` are the box rows
/// `u_x <= A`, `-u_x <= A`, `u_y <= A`, `-u_y <= A`; for relaxed
/// solutions, row `m+4` is `-s <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u_safe: Vec2,
    pub slack: f64,
    pub active_set: Vec<usize>,
    pub multipliers: Vec<f64>,
    pub kkt_residual: f64,
    pub status: QpStatus,
    pub iterations: usize,
}

impl QpProblem {
    pub fn new(nominal: Vec2, constraints: Vec<LinearConstraint>, box_limit: f64, slack_weight: f64) -> Self {
        Self {
            nominal,
            constraints,
            box_limit,
            slack_weight,
        }
    }

    fn validate(&self) -> Result<(), QpError> {
        if !is_finite(&self.nominal) {
            return Err(QpError::NonFinite("nominal action"));
        }
        if self
            .constraints
            .iter()
            .any(|c| !is_finite(&c.normal) || !c.bound.is_finite())
        {
            return Err(QpError::NonFinite("constraint"));
        }
        if !(self.box_limit > 0.0 && self.box_limit.is_finite()) {
            return Err(QpError::BadBox(self.box_limit));
        }
        if !(self.slack_weight >= 0.0 && self.slack_weight.is_finite()) {
            return Err(QpError::BadSlackWeight(self.slack_weight));
        }
        Ok(())
    }

    /// Whether `u` satisfies every row exactly (no tolerance).
    pub fn is_feasible(&self, u: &Vec2) -> bool {
        let a = self.box_limit;
        u.x.abs() <= a && u.y.abs() <= a && self.constraints.iter().all(|c| c.normal.dot(u) <= c.bound)
    }

    fn rows(&self, relaxed: bool) -> Vec<Row> {
        let slack = if relaxed { -1.0 } else { 0.0 };
        let a = self.box_limit;
        let mut rows: Vec<Row> = self
            .constraints
            .iter()
            .map(|c| Row {
                g: [c.normal.x, c.normal.y, slack],
                c: c.bound,
            })
            .collect();
        rows.extend([
            Row {
                g: [1.0, 0.0, 0.0],
                c: a,
            },
            Row {
                g: [-1.0, 0.0, 0.0],
                c: a,
            },
            Row {
                g: [0.0, 1.0, 0.0],
                c: a,
            },
            Row {
                g: [0.0, -1.0, 0.0],
                c: a,
            },
        ]);
        if relaxed {
            rows.push(Row {
                g: [0.0, 0.0, -1.0],
                c: 0.0,
            });
        }
        rows
    }

    fn clip(&self, u: &Vec2) -> Vec2 {
        let a = self.box_limit;
        Vec2::new(u.x.clamp(-a, a), u.y.clamp(-a, a))
    }
}

#[derive(Debug, Clone, Copy)]
struct Row {
    g: [f64; 3],
    c: f64,
}

impl Row {
    fn dot(&self, z: &[f64; 3]) -> f64 {
        self.g[0] * z[0] + self.g[1] * z[1] + self.g[2] * z[2]
    }
}

/// Strictly convex separable objective `sum_k w_k (z_k - t_k)^2 / 2`.
struct Objective {
    weights: [f64; 3],
    target: [f64; 3],
    dims: usize,
}

struct ActiveSetResult {
    z: [f64; 3],
    working: Vec<usize>,
    lambdas: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Solve a dense system of at most 3 equations with partial pivoting.
fn solve_small(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            let (head, tail) = m.split_at_mut(r);
            for (a, b) in tail[0][col..].iter_mut().zip(&head[col][col..]) {
                *a -= f * b;
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * x[k]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    Some(x)
}

fn primal_active_set(obj: &Objective, rows: &[Row], start: [f64; 3], mut working: Vec<usize>) -> ActiveSetResult {
    let n = obj.dims;
    let mut z = start;
    let mut after_full_step = false;
    for iteration in 1..=MAX_ITERATIONS {
        let grad: [f64; 3] = std::array::from_fn(|k| {
            if k < n {
                obj.weights[k] * (z[k] - obj.target[k])
            } else {
                0.0
            }
        });
        // Equality-constrained step: p = -H^-1 (grad + G^T lambda), G p = 0.
        let w = working.len();
        let lambdas = if w == 0 {
            Vec::new()
        } else {
            let m: Vec<Vec<f64>> = working
                .iter()
                .map(|&i| {
                    working
                        .iter()
                        .map(|&j| (0..n).map(|k| rows[i].g[k] * rows[j].g[k] / obj.weights[k]).sum())
                        .collect()
                })
                .collect();
            let rhs: Vec<f64> = working
                .iter()
                .map(|&i| -(0..n).map(|k| rows[i].g[k] * grad[k] / obj.weights[k]).sum::<f64>())
                .collect();
            match solve_small(m, rhs) {
                Some(l) => l,
                None => {
                    return ActiveSetResult {
                        z,
                        working,
                        lambdas: Vec::new(),
                        iterations: iteration,
                        converged: false,
                    }
                }
            }
        };
        let mut p = [0.0; 3];
        let mut stationary = true;
        for k in 0..n {
            let constraint_force: f64 = working.iter().zip(&lambdas).map(|(&i, l)| rows[i].g[k] * l).sum();
            let magnitude: f64 = grad[k].abs()
                + working
                    .iter()
                    .zip(&lambdas)
                    .map(|(&i, l)| (rows[i].g[k] * l).abs())
                    .sum::<f64>();
            p[k] = -(grad[k] + constraint_force) / obj.weights[k];
            // Cancellation noise scales with the largest summed term.
            let noise = 1e-13 * (magnitude / obj.weights[k] + 1.0 + z[k].abs());
            stationary &= p[k].abs() <= noise;
        }
        // A full unblocked step lands on the working-set minimiser, so what
        // remains of p is rounding.
        if stationary || after_full_step {
            // Stationary on the working set; check multiplier signs.
            let worst = lambdas
                .iter()
                .enumerate()
                .filter(|(_, &l)| l < -1e-12)
                .min_by(|a, b| a.1.total_cmp(b.1).then(working[a.0].cmp(&working[b.0])));
            match worst {
                None => {
                    return ActiveSetResult {
                        z,
                        working,
                        lambdas,
                        iterations: iteration,
                        converged: true,
                    }
                }
                Some((pos, _)) => {
                    working.remove(pos);
                    after_full_step = false;
                    continue;
                }
            }
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for (i, row) in rows.iter().enumerate() {
            if working.contains(&i) {
                continue;
            }
            let gp = row.dot(&p);
            if gp > 1e-15 {
                let step = ((row.c - row.dot(&z)) / gp).max(0.0);
                if step < alpha {
                    alpha = step;
                    blocking = Some(i);
                }
            }
        }
        for k in 0..n {
            z[k] += alpha * p[k];
        }
        after_full_step = blocking.is_none();
        if let Some(i) = blocking {
            working.push(i);
        }
    }
    ActiveSetResult {
        z,
        working,
        lambdas: Vec::new(),
        iterations: MAX_ITERATIONS,
        converged: false,
    }
}

/// Lowest-objective feasible intersection of two constraint lines.
fn feasible_vertex(problem: &QpProblem, rows: &[Row]) -> Option<([f64; 3], [usize; 2])> {
    let mut best: Option<(f64, [f64; 3], [usize; 2])> = None;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let (a, b) = (rows[i].g, rows[j].g);
            let det = a[0] * b[1] - a[1] * b[0];
            let scale = (a[0].hypot(a[1])) * (b[0].hypot(b[1]));
            if det.abs() <= 1e-12 * scale {
                continue;
            }
            let x = (rows[i].c * b[1] - a[1] * rows[j].c) / det;
            let y = (a[0] * rows[j].c - rows[i].c * b[0]) / det;
            let z = [x, y, 0.0];
            let feasible = rows.iter().all(|r| r.dot(&z) - r.c <= 1e-12 * (1.0 + r.c.abs()));
            if !feasible {
                continue;
            }
            let f = (x - problem.nominal.x).powi(2) + (y - problem.nominal.y).powi(2);
            if best.as_ref().is_none_or(|(bf, _, _)| f < *bf) {
                best = Some((f, z, [i, j]));
            }
        }
    }
    best.map(|(_, z, w)| (z, w))
}

fn expand_multipliers(count: usize, working: &[usize], lambdas: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; count];
    for (&i, &l) in working.iter().zip(lambdas) {
        out[i] = l.max(0.0);
    }
    out
}

/// Project `problem.nominal` onto the constraint set (see module docs).
pub fn solve(problem: &QpProblem) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let m = problem.constraints.len();

    if problem.is_feasible(&problem.nominal) {
        return Ok(QpSolution {
            u_safe: problem.nominal,
            slack: 0.0,
            active_set: Vec::new(),
            multipliers: vec![0.0; m + 4],
            kkt_residual: 0.0,
            status: QpStatus::Optimal,
            iterations: 0,
        });
    }

    let rows = problem.rows(false);
    if let Some((start, pair)) = feasible_vertex(problem, &rows) {
        let obj = Objective {
            weights: [1.0, 1.0, 1.0],
            target: [problem.nominal.x, problem.nominal.y, 0.0],
            dims: 2,
        };
        let result = primal_active_set(&obj, &rows, start, pair.to_vec());
        return Ok(finish(problem, result, QpStatus::Optimal, m + 4, 2));
    }

    // Infeasible: relax every linear row by one shared slack.
    let rows = problem.rows(true);
    let u0 = problem.clip(&problem.nominal);
    let s0 = problem
        .constraints
        .iter()
        .map(|c| c.violation(&u0))
        .fold(0.0f64, f64::max);
    if problem.slack_weight == 0.0 {
        let mut sol = QpSolution {
            u_safe: u0,
            slack: s0,
            active_set: Vec::new(),
            multipliers: vec![0.0; m + 5],
            kkt_residual: 0.0,
            status: QpStatus::Relaxed,
            iterations: 0,
        };
        sol.kkt_residual = kkt_check(problem, &sol);
        return Ok(sol);
    }
    let obj = Objective {
        weights: [1.0, 1.0, 2.0 * problem.slack_weight],
        target: [problem.nominal.x, problem.nominal.y, 0.0],
        dims: 3,
    };
    let result = primal_active_set(&obj, &rows, [u0.x, u0.y, s0], Vec::new());
    Ok(finish(problem, result, QpStatus::Relaxed, m + 5, 3))
}

fn finish(problem: &QpProblem, result: ActiveSetResult, status: QpStatus, rows: usize, dims: usize) -> QpSolution {
    if !result.converged {
        return QpSolution {
            u_safe: problem.clip(&problem.nominal),
            slack: 0.0,
            active_set: Vec::new(),
            multipliers: vec![0.0; rows],
            kkt_residual: f64::INFINITY,
            status: QpStatus::Fallback,
            iterations: result.iterations,
        };
    }
    let mut active_set = result.working.clone();
    active_set.sort_unstable();
    let a = problem.box_limit;
    // Active-set steps land on the box exactly up to rounding; snap so the
    // returned action never leaves it.
    let u = Vec2::new(result.z[0].clamp(-a, a), result.z[1].clamp(-a, a));
    let mut sol = QpSolution {
        u_safe: u,
        slack: if dims == 3 { result.z[2].max(0.0) } else { 0.0 },
        active_set,
        multipliers: expand_multipliers(rows, &result.working, &result.lambdas),
        kkt_residual: 0.0,
        status,
        iterations: result.iterations,
    };
    sol.kkt_residual = kkt_check(problem, &sol);
    sol
}

/// Largest of the stationarity and complementarity residuals, using the
/// multipliers stored in `solution`. Stationarity is divided by the objective's curvature in
/// each coordinate, so the slack's large penalty does not swamp it.
pub fn kkt_check(problem: &QpProblem, solution: &QpSolution) -> f64 {
    let relaxed = solution.status == QpStatus::Relaxed;
    let rows = problem.rows(relaxed);
    let z = [solution.u_safe.x, solution.u_safe.y, solution.slack];
    let dims = if relaxed { 3 } else { 2 };
    let weights = [1.0, 1.0, 2.0 * problem.slack_weight];
    let target = [problem.nominal.x, problem.nominal.y, 0.0];
    let lambda = |i: usize| solution.multipliers.get(i).copied().unwrap_or(0.0);

    let mut residual = 0.0f64;
    for k in 0..dims {
        let force: f64 = rows.iter().enumerate().map(|(i, r)| lambda(i) * r.g[k]).sum();
        residual = residual.max(((weights[k] * (z[k] - target[k]) + force) / weights[k]).abs());
    }
    if !relaxed {
        residual = residual.max(solution.slack.abs());
    }
    // Natural residual |min(lambda, c - g.z)| covers primal feasibility,
    // dual feasibility and complementarity together.
    for (i, r) in rows.iter().enumerate() {
        let room = r.c - r.dot(&z);
        residual = residual.max(lambda(i).min(room).abs());
    }
    residual
}
