//! Cooperative and non-cooperative barrier functions for double-integrator
//! agents, and the linear action constraints they induce.
//!
//! Both barriers share one shape. For a relative position `dp`, relative
//! velocity `dv` and braking authority `a`:
//!
//! ```text
//! h = dp·dv / |dp| + sqrt(2 a (|dp| - d_s)),     B = 1 / h
//! ```
//!
//! `h >= 0` says the pair can still stop before closing to `d_s`. Requiring
//! `dB/dt <= gamma / B` and expanding `dh/dt` gives the half-plane
//!
//! ```text
//! -dp·du <= gamma h^3 |dp| - (dv·dp)^2 / |dp|^2 + |dv|^2 + a dv·dp / sqrt(2 a (|dp| - d_s))
//! ```
//!
//! on the relative acceleration `du`. Agent pairs use `du = a_self - a_other`
//! and `a = a_max_self + a_max_other`; static obstacles and walls use
//! `du = a_self`, `dv = v_self`, `a = a_max_self`.
//!
//! The constraint builders evaluate `d_s` as `ShieldParams::barrier_distance`,
//! the configured safe distance plus a sampling margin.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{is_finite, AgentState, ObstacleSpec, Vec2, WallFace};

/// `|dp| - d_s` is floored at this value inside the constraint bound.
pub const SQRT_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CbfError {
    #[error("separation {distance} is inside the unsafe ball of radius {safe_distance}")]
    InsideUnsafeBall { distance: f64, safe_distance: f64 },
    #[error("barrier value {h} is not positive")]
    NonPositiveBarrier { h: f64 },
    #[error("barrier condition undefined for h = {0}")]
    Domain(f64),
    #[error("invalid shield parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
}

impl CbfError {
    /// Barrier value to rank violations by; entities inside the unsafe
    /// ball have no defined `h` and rank below everything else.
    pub fn severity(&self) -> f64 {
        match self {
            CbfError::NonPositiveBarrier { h } => *h,
            _ => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShieldParams {
    /// Safe distance `d_s`.
    pub d_s: f64,
    /// Extra clearance added to `d_s` inside the barrier. The barrier
    /// condition is enforced only at sample instants, so the continuous
    /// guarantee can overshoot by a fraction of one step's travel.
    pub margin: f64,
    pub a_max_self: f64,
    pub a_max_other: f64,
    pub gamma_coo: f64,
    pub gamma_non: f64,
    pub r_sense: f64,
    pub slack_weight: f64,
}

impl Default for ShieldParams {
    fn default() -> Self {
        Self {
            d_s: 0.075,
            margin: 0.03,
            a_max_self: 1.0,
            a_max_other: 1.0,
            gamma_coo: 0.5,
            gamma_non: 0.5,
            r_sense: 1.5,
            slack_weight: 1e6,
        }
    }
}

impl ShieldParams {
    pub fn validate(&self) -> Result<(), CbfError> {
        let fields = [
            self.d_s,
            self.margin,
            self.a_max_self,
            self.a_max_other,
            self.gamma_coo,
            self.gamma_non,
            self.r_sense,
            self.slack_weight,
        ];
        if fields.iter().any(|f| !f.is_finite()) {
            return Err(CbfError::NonFinite("shield parameter"));
        }
        let bad = |m: &str| Err(CbfError::InvalidParams(m.to_string()));
        if self.d_s <= 0.0 {
            return bad("d_s must be positive");
        }
        if self.margin < 0.0 {
            return bad("margin must be non-negative");
        }
        if self.a_max_self < 0.0 || self.a_max_other < 0.0 {
            return bad("acceleration caps must be non-negative");
        }
        if self.gamma_coo <= 0.0 || self.gamma_non <= 0.0 {
            return bad("gamma_coo and gamma_non must be positive");
        }
        if self.r_sense <= self.barrier_distance() {
            return bad("r_sense must exceed d_s + margin");
        }
        if self.slack_weight < 0.0 {
            return bad("slack_weight must be non-negative");
        }
        Ok(())
    }

    /// Distance at which barriers vanish: `d_s + margin`.
    pub fn barrier_distance(&self) -> f64 {
        self.d_s + self.margin
    }

    pub fn cooperative_authority(&self) -> f64 {
        self.a_max_self + self.a_max_other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintKind {
    Cooperative,
    NonCooperative,
    Wall,
}

/// What a constraint protects against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityId {
    Agent(usize),
    Obstacle(usize),
    Wall(WallFace),
}

impl std::fmt::Display for EntityId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EntityId::Agent(i) => write!(f, "agent{i}"),
            EntityId::Obstacle(i) => write!(f, "obstacle{i}"),
            EntityId::Wall(face) => write!(f, "wall{}", face.as_str()),
        }
    }
}

/// One half-plane `normal · u <= bound` on the focal agent's acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub normal: Vec2,
    pub bound: f64,
    pub kind: ConstraintKind,
    pub counterpart: EntityId,
}

impl LinearConstraint {
    pub fn new(normal: Vec2, bound: f64, kind: ConstraintKind, counterpart: EntityId) -> Self {
        Self {
            normal,
            bound,
            kind,
            counterpart,
        }
    }

    pub fn violation(&self, u: &Vec2) -> f64 {
        self.normal.dot(u) - self.bound
    }
}

/// `h` for separation `dp`, relative velocity `dv`, braking authority
/// `authority`, and safe distance `safe_distance`.
pub fn barrier_value(dp: &Vec2, dv: &Vec2, authority: f64, safe_distance: f64) -> Result<f64, CbfError> {
    if !is_finite(dp) || !is_finite(dv) {
        return Err(CbfError::NonFinite("relative state"));
    }
    let dist = dp.norm();
    if dist <= safe_distance {
        return Err(CbfError::InsideUnsafeBall {
            distance: dist,
            safe_distance,
        });
    }
    Ok(dp.dot(dv) / dist + (2.0 * authority * (dist - safe_distance)).sqrt())
}

/// Time derivative of `h` under relative acceleration `du`.
pub fn barrier_rate(dp: &Vec2, dv: &Vec2, du: &Vec2, authority: f64, safe_distance: f64) -> f64 {
    let dist = dp.norm();
    let radial = dp.dot(dv);
    let projection_rate = (dv.norm_squared() + dp.dot(du)) / dist - radial * radial / dist.powi(3);
    let root = (2.0 * authority * (dist - safe_distance)).sqrt();
    let braking_rate = if root > 0.0 {
        authority * radial / (dist * root)
    } else {
        0.0
    };
    projection_rate + braking_rate
}

/// Right-hand side of `-dp·du <= bound`, before any responsibility split.
pub fn barrier_bound(dp: &Vec2, dv: &Vec2, h: f64, authority: f64, gamma: f64, safe_distance: f64) -> f64 {
    let dist = dp.norm();
    let radial = dv.dot(dp);
    let gap = (dist - safe_distance).max(SQRT_FLOOR);
    let braking = if authority > 0.0 {
        authority * radial / (2.0 * authority * gap).sqrt()
    } else {
        0.0
    };
    gamma * h.powi(3) * dist - radial * radial / (dist * dist) + dv.norm_squared() + braking
}

pub fn h_cooperative(dp: &Vec2, dv: &Vec2, params: &ShieldParams) -> Result<f64, CbfError> {
    barrier_value(dp, dv, params.cooperative_authority(), params.barrier_distance())
}

pub fn h_noncooperative(dp: &Vec2, v_self: &Vec2, params: &ShieldParams) -> Result<f64, CbfError> {
    barrier_value(dp, v_self, params.a_max_self, params.barrier_distance())
}

fn positive(h: f64) -> Result<f64, CbfError> {
    if h > 0.0 {
        Ok(h)
    } else {
        Err(CbfError::NonPositiveBarrier { h })
    }
}

/// Cooperative constraint for `me` against agent `other_id`. The pairwise
/// bound is split evenly, so the two agents' constraints sum to the joint
/// condition on `a_me - a_other`.
pub fn cooperative_constraint(
    me: &AgentState,
    other: &AgentState,
    other_id: usize,
    params: &ShieldParams,
) -> Result<(LinearConstraint, f64), CbfError> {
    let dp = me.position - other.position;
    let dv = me.velocity - other.velocity;
    let h = positive(h_cooperative(&dp, &dv, params)?)?;
    let bound = barrier_bound(
        &dp,
        &dv,
        h,
        params.cooperative_authority(),
        params.gamma_coo,
        params.barrier_distance(),
    );
    Ok((
        LinearConstraint::new(-dp, 0.5 * bound, ConstraintKind::Cooperative, EntityId::Agent(other_id)),
        h,
    ))
}

/// Non-cooperative constraint for `me` against a static obstacle; the
/// obstacle's radius widens the safe distance.
pub fn noncooperative_constraint(
    me: &AgentState,
    obstacle: &ObstacleSpec,
    obstacle_id: usize,
    params: &ShieldParams,
) -> Result<(LinearConstraint, f64), CbfError> {
    static_constraint(
        me,
        &obstacle.position,
        params.barrier_distance() + obstacle.radius,
        params,
        ConstraintKind::NonCooperative,
        EntityId::Obstacle(obstacle_id),
    )
}

/// Replacement for a violated wall barrier: forbid accelerating further
/// into the face. Walls confine agents physically, so a breached wall
/// barrier never justifies the braking fallback that would ignore nearby
/// agents.
pub fn wall_hold_constraint(face: WallFace) -> LinearConstraint {
    LinearConstraint::new(face.outward_normal(), 0.0, ConstraintKind::Wall, EntityId::Wall(face))
}

/// Wall faces act as static obstacles located at the nearest boundary point.
pub fn wall_constraint(
    me: &AgentState,
    face: WallFace,
    half_extent: f64,
    params: &ShieldParams,
) -> Result<(LinearConstraint, f64), CbfError> {
    let (point, _) = face.nearest_point(&me.position, half_extent);
    static_constraint(
        me,
        &point,
        params.barrier_distance(),
        params,
        ConstraintKind::Wall,
        EntityId::Wall(face),
    )
}

fn static_constraint(
    me: &AgentState,
    point: &Vec2,
    safe_distance: f64,
    params: &ShieldParams,
    kind: ConstraintKind,
    counterpart: EntityId,
) -> Result<(LinearConstraint, f64), CbfError> {
    let dp = me.position - point;
    let h = positive(barrier_value(&dp, &me.velocity, params.a_max_self, safe_distance)?)?;
    let bound = barrier_bound(&dp, &me.velocity, h, params.a_max_self, params.gamma_non, safe_distance);
    Ok((LinearConstraint::new(-dp, bound, kind, counterpart), h))
}

/// `dB/dt - gamma / B` for `B = 1/h`, written in terms of `h`.
/// Non-positive exactly when the barrier condition holds.
pub fn cbf_condition_residual(h_value: f64, h_dot: f64, gamma: f64) -> Result<f64, CbfError> {
    if h_value.is_nan() || h_value <= 0.0 {
        return Err(CbfError::Domain(h_value));
    }
    Ok(-h_dot / (h_value * h_value) - gamma * h_value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: f64, y: f64) -> Vec2 {
        Vec2::new(x, y)
    }

    fn params() -> ShieldParams {
        ShieldParams {
            margin: 0.0,
            ..ShieldParams::default()
        }
    }

    #[test]
    fn h_cooperative_hand_value() {
        let h = h_cooperative(&v(1.0, 0.0), &v(-0.5, 0.0), &params()).unwrap();
        let expected = -0.5 + (4.0f64 * 0.925).sqrt();
        assert!((h - expected).abs() < 1e-14);
        assert!((h - 1.42354).abs() < 1e-5);
    }

    #[test]
    fn h_vanishes_at_the_safe_radius() {
        let p = params();
        let mut prev = f64::INFINITY;
        for eps in [1e-2, 1e-4, 1e-6, 1e-10] {
            let h = h_cooperative(&v(p.d_s + eps, 0.0), &Vec2::zeros(), &p).unwrap();
            assert!(h > 0.0 && h < prev);
            prev = h;
        }
        assert!(prev < 1e-4);
        assert!(matches!(
            h_cooperative(&v(p.d_s, 0.0), &Vec2::zeros(), &p),
            Err(CbfError::InsideUnsafeBall { .. })
        ));
    }

    #[test]
    fn h_noncooperative_cases() {
        let p = params();
        let h = h_noncooperative(&v(1.0, 0.0), &Vec2::zeros(), &p).unwrap();
        assert!((h - (2.0f64 * 0.925).sqrt()).abs() < 1e-14);
        assert!((h - 1.36015).abs() < 1e-5);

        let closing = -(2.0f64 * 0.925).sqrt();
        let h0 = h_noncooperative(&v(1.0, 0.0), &v(closing, 0.0), &p).unwrap();
        assert!(h0.abs() < 1e-15);

        let mut stronger = p;
        stronger.a_max_self *= 2.0;
        let v_self = v(-0.4, 0.3);
        assert!(
            h_noncooperative(&v(0.5, 0.2), &v_self, &stronger).unwrap()
                > h_noncooperative(&v(0.5, 0.2), &v_self, &p).unwrap()
        );
    }

    #[test]
    fn receding_pair_constraint_is_slack() {
        let p = params();
        let me = AgentState::new(v(0.5, 0.0), v(0.25, 0.0));
        let other = AgentState::new(v(-0.5, 0.0), v(-0.25, 0.0));
        let (c, _) = cooperative_constraint(&me, &other, 1, &p).unwrap();
        // Worst case over the acceleration disc |u| <= a_max.
        let worst = c.normal.norm() * p.a_max_self;
        assert!(c.bound > worst, "bound {} vs {}", c.bound, worst);
        // Hand evaluation of the unsplit bound at dp=(1,0), dv=(0.5,0).
        let h = 0.5 + (4.0f64 * 0.925).sqrt();
        let full = 0.5 * h.powi(3) - 0.25 + 0.25 + 2.0 * 0.5 / (4.0f64 * 0.925).sqrt();
        assert!((c.bound - 0.5 * full).abs() < 1e-12);
    }

    #[test]
    fn pair_normals_are_negated() {
        let p = params();
        let a = AgentState::new(v(0.2, -0.1), v(0.3, 0.1));
        let b = AgentState::new(v(-0.3, 0.4), v(-0.2, 0.0));
        let (ca, ha) = cooperative_constraint(&a, &b, 1, &p).unwrap();
        let (cb, hb) = cooperative_constraint(&b, &a, 0, &p).unwrap();
        assert_eq!(ca.normal, -cb.normal);
        assert_eq!(ca.bound, cb.bound);
        assert_eq!(ha, hb);
    }

    #[test]
    fn gamma_enters_the_bound_linearly() {
        let p = params();
        let a = AgentState::new(v(0.2, -0.1), v(0.3, 0.1));
        let b = AgentState::new(v(-0.3, 0.4), v(-0.2, 0.0));
        let mut doubled = p;
        doubled.gamma_coo *= 2.0;
        let (c1, h) = cooperative_constraint(&a, &b, 1, &p).unwrap();
        let (c2, _) = cooperative_constraint(&a, &b, 1, &doubled).unwrap();
        let dist = (a.position - b.position).norm();
        let first_term = p.gamma_coo * h.powi(3) * dist;
        assert!((2.0 * (c2.bound - c1.bound) - first_term).abs() < 1e-12);
    }

    #[test]
    fn resting_agent_near_obstacle_is_feasible_at_zero() {
        let p = params();
        let me = AgentState::at_rest(v(0.2, 0.0));
        let (c, h) = noncooperative_constraint(&me, &ObstacleSpec::point(0.0, 0.0), 0, &p).unwrap();
        let dist = 0.2;
        assert!((c.bound - p.gamma_non * h.powi(3) * dist).abs() < 1e-15);
        assert!(c.violation(&Vec2::zeros()) < 0.0);
    }

    #[test]
    fn receding_from_obstacle_terms_are_nonnegative() {
        let p = params();
        let me = AgentState::new(v(0.3, 0.1), v(0.6, 0.2));
        let (c, h) = noncooperative_constraint(&me, &ObstacleSpec::point(0.0, 0.0), 0, &p).unwrap();
        let dp = me.position;
        let dv = me.velocity;
        let radial = dv.dot(&dp);
        // Velocity parallel to dp: the two middle terms cancel.
        let middle = dv.norm_squared() - radial * radial / dp.norm_squared();
        assert!(middle.abs() < 1e-12);
        assert!(radial > 0.0 && h > 0.0);
        assert!(c.bound > c.normal.norm() * p.a_max_self);
    }

    #[test]
    fn violated_states_emit_no_constraint() {
        let p = params();
        let me = AgentState::new(v(0.1, 0.0), v(-1.0, 0.0));
        let r = noncooperative_constraint(&me, &ObstacleSpec::point(0.0, 0.0), 0, &p);
        assert!(matches!(r, Err(CbfError::NonPositiveBarrier { .. })));
        let inside = AgentState::at_rest(v(0.05, 0.0));
        let r = noncooperative_constraint(&inside, &ObstacleSpec::point(0.0, 0.0), 0, &p);
        assert!(matches!(r, Err(CbfError::InsideUnsafeBall { .. })));
    }

    #[test]
    fn residual_cases() {
        assert_eq!(cbf_condition_residual(2.0, 0.0, 0.5).unwrap(), -1.0);
        assert_eq!(cbf_condition_residual(1.0, -0.5, 0.5).unwrap(), 0.0);
        assert_eq!(cbf_condition_residual(1.0, -1.0, 0.5).unwrap(), 0.5);
        assert!(matches!(
            cbf_condition_residual(0.0, 1.0, 0.5),
            Err(CbfError::Domain(_))
        ));
    }

    #[test]
    fn params_validation() {
        params().validate().unwrap();
        let mut p = params();
        p.r_sense = 0.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.gamma_non = 0.0;
        assert!(p.validate().is_err());
    }

    fn state() -> impl Strategy<Value = (Vec2, Vec2)> {
        (0.1f64..1.5, 0.0f64..std::f64::consts::TAU, -1.5f64..1.5, -1.5f64..1.5)
            .prop_map(|(r, th, vx, vy)| (v(r * th.cos(), r * th.sin()), v(vx, vy)))
    }

    proptest! {
        #[test]
        fn cooperative_swap_symmetry((dp, dv) in state()) {
            let p = params();
            let a = h_cooperative(&dp, &dv, &p).unwrap();
            let b = h_cooperative(&-dp, &-dv, &p).unwrap();
            prop_assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }

        // Half-plane form and the barrier condition agree for every action.
        #[test]
        fn constraint_matches_barrier_condition((dp, dv) in state(), ux in -2.0f64..2.0, uy in -2.0f64..2.0, coop in any::<bool>()) {
            let p = params();
            let (authority, gamma) = if coop {
                (p.cooperative_authority(), p.gamma_coo)
            } else {
                (p.a_max_self, p.gamma_non)
            };
            let h = barrier_value(&dp, &dv, authority, p.d_s).unwrap();
            prop_assume!(h > 1e-3);
            prop_assume!(dp.norm() - p.d_s > 1e-3);
            let u = v(ux, uy);
            let bound = barrier_bound(&dp, &dv, h, authority, gamma, p.d_s);
            let lhs = -dp.dot(&u);
            let hdot = barrier_rate(&dp, &dv, &u, authority, p.d_s);
            let residual = cbf_condition_residual(h, hdot, gamma).unwrap();
            // residual * h^2 * |dp| = lhs - bound
            let scaled = residual * h * h * dp.norm();
            prop_assert!((scaled - (lhs - bound)).abs() < 1e-9 * (1.0 + bound.abs() + lhs.abs()));
            if (lhs - bound).abs() > 1e-9 {
                prop_assert_eq!(lhs <= bound, residual <= 0.0);
            }
        }

        #[test]
        fn analytic_rate_matches_finite_differences((dp, dv) in state(), ux in -1.0f64..1.0, uy in -1.0f64..1.0) {
            let p = params();
            let authority = p.cooperative_authority();
            prop_assume!(dp.norm() - p.d_s > 1e-3);
            let u = v(ux, uy);
            let eps = 1e-6;
            let at = |t: f64| {
                let q = dp + dv * t + u * (0.5 * t * t);
                let w = dv + u * t;
                barrier_value(&q, &w, authority, p.d_s).unwrap()
            };
            let fd = (at(eps) - at(-eps)) / (2.0 * eps);
            let analytic = barrier_rate(&dp, &dv, &u, authority, p.d_s);
            prop_assert!((fd - analytic).abs() <= 1e-4 * analytic.abs().max(1.0));
        }

        #[test]
        fn boundary_membership_flips_with_h(r in 0.0f64..0.2) {
            let p = params();
            let dp = v(p.d_s + r, 0.0);
            match h_cooperative(&dp, &Vec2::zeros(), &p) {
                Ok(h) => prop_assert!(h > 0.0 && r > 0.0),
                Err(_) => prop_assert!(r == 0.0),
            }
        }
    }
}
