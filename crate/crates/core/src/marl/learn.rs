//! Actor and critic networks and the per-minibatch learning steps.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::adam::Adam;
use super::buffer::Batch;
use super::mlp::{Activation, Gradients, Mlp};
use super::MarlError;
use crate::sim::Vec2;

/// Actions per agent.
pub const ACTION_DIM: usize = 2;

/// Deterministic policy: `a_max * tanh(net(obs))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    pub net: Mlp,
    pub a_max: f64,
}

impl Actor {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], a_max: f64, rng: &mut R) -> Self {
        let sizes: Vec<usize> = std::iter::once(obs_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(ACTION_DIM))
            .collect();
        Self {
            net: Mlp::new(&sizes, Activation::Relu, Activation::Tanh, rng),
            a_max,
        }
    }

    pub fn forward(&self, obs: ArrayView2<f64>) -> Array2<f64> {
        self.net.forward(obs) * self.a_max
    }

    pub fn act(&self, obs: &[f64]) -> Vec2 {
        let x = ArrayView2::from_shape((1, obs.len()), obs).expect("row vector");
        let out = self.forward(x);
        Vec2::new(out[[0, 0]], out[[0, 1]])
    }
}

/// Centralised action-value function over the joint state and all actions.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub net: Mlp,
}

impl Critic {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let sizes: Vec<usize> = std::iter::once(state_dim + action_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        Self {
            net: Mlp::new(&sizes, Activation::Relu, Activation::Identity, rng),
        }
    }

    /// States (ascending agent id) followed by actions (ascending agent id).
    pub fn input(states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array2<f64> {
        concatenate![Axis(1), states, actions]
    }
}

/// Anything usable as a critic by the policy-gradient step.
pub trait QFunction {
    fn value(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array1<f64>;

    /// Values and `dQ/d(actions)` per sample.
    fn action_gradient(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>);
}

impl QFunction for Critic {
    fn value(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array1<f64> {
        self.net
            .forward(Critic::input(states, actions).view())
            .column(0)
            .to_owned()
    }

    fn action_gradient(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
        let input = Critic::input(states, actions);
        let (q, cache) = self.net.forward_cached(input.view());
        let ones = Array2::ones((input.nrows(), 1));
        let (_, grad_in) = self.net.backward(&cache, ones.view());
        let grad_actions = grad_in.slice(s![.., states.ncols()..]).to_owned();
        (q.column(0).to_owned(), grad_actions)
    }
}

pub fn observation_slice(states: &Array2<f64>, agent: usize, obs_dim: usize) -> ArrayView2<'_, f64> {
    states.slice(s![.., agent * obs_dim..(agent + 1) * obs_dim])
}

/// `y = r_agent + gamma * Q'(x', pi'_1(o'_1), ..., pi'_N(o'_N))`, with the
/// bootstrap term dropped on terminal samples.
pub fn td_target(
    batch: &Batch,
    target_actors: &[Actor],
    target_critic: &impl QFunction,
    agent: usize,
    gamma: f64,
    obs_dim: usize,
) -> Array1<f64> {
    let next_actions: Vec<Array2<f64>> = target_actors
        .iter()
        .enumerate()
        .map(|(k, a)| a.forward(observation_slice(&batch.next_states, k, obs_dim)))
        .collect();
    let views: Vec<ArrayView2<f64>> = next_actions.iter().map(|a| a.view()).collect();
    let joint = concatenate(Axis(1), &views).expect("matching batch sizes");
    let q_next = target_critic.value(batch.next_states.view(), joint.view());
    let rewards = batch.rewards.column(agent);
    let mut y = Array1::zeros(batch.len());
    for j in 0..batch.len() {
        y[j] = if batch.done[j] > 0.0 {
            rewards[j]
        } else {
            rewards[j] + gamma * q_next[j]
        };
    }
    y
}

/// Mean squared TD error and its parameter gradient.
pub fn critic_loss_and_grad(critic: &Critic, batch: &Batch, targets: &Array1<f64>) -> (f64, Gradients) {
    let input = Critic::input(batch.states.view(), batch.actions.view());
    let (q, cache) = critic.net.forward_cached(input.view());
    let n = batch.len() as f64;
    let diff = &q.column(0) - targets;
    let loss = diff.mapv(|d| d * d).sum() / n;
    let grad_out = (diff * (2.0 / n)).insert_axis(Axis(1));
    let (grads, _) = critic.net.backward(&cache, grad_out.view());
    (loss, grads)
}

/// Knobs shared by the actor and critic steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRules {
    /// Weight of the mean squared pre-activation of the actor's output
    /// layer, which keeps the saturating head out of its flat region.
    pub preact_reg: f64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl StepRules {
    pub const PLAIN: StepRules = StepRules {
        preact_reg: 0.0,
        grad_clip: None,
    };

    fn clip(&self, grads: &mut Gradients) -> f64 {
        match self.grad_clip {
            Some(max) => grads.clip_norm(max),
            None => grads.norm(),
        }
    }
}

/// One optimizer step on the critic; returns the loss before the step.
pub fn critic_update(
    critic: &mut Critic,
    opt: &mut Adam,
    batch: &Batch,
    targets: &Array1<f64>,
    rules: &StepRules,
) -> Result<f64, MarlError> {
    let (loss, mut grads) = critic_loss_and_grad(critic, batch, targets);
    if !loss.is_finite() {
        return Err(MarlError::NonFinite("critic loss"));
    }
    rules.clip(&mut grads);
    opt.step(&mut critic.net, &grads);
    Ok(loss)
}

/// Negated mean Q with the focal agent's batch action replaced by its
/// policy output, plus `preact_reg` times the mean squared output
/// pre-activation, and the gradient of that objective w.r.t. actor
/// parameters. The shield is not differentiated through.
pub fn actor_objective_and_grad(
    actor: &Actor,
    critic: &impl QFunction,
    batch: &Batch,
    agent: usize,
    obs_dim: usize,
    preact_reg: f64,
) -> (f64, Gradients) {
    let obs = observation_slice(&batch.states, agent, obs_dim);
    let (raw, cache) = actor.net.forward_cached(obs);
    let policy_actions = &raw * actor.a_max;
    let mut actions = batch.actions.clone();
    let cols = s![.., agent * ACTION_DIM..(agent + 1) * ACTION_DIM];
    actions.slice_mut(cols).assign(&policy_actions);
    let (q, dq) = critic.action_gradient(batch.states.view(), actions.view());
    let n = batch.len() as f64;
    let mut grad_pre = dq.slice(cols).mapv(|g| -g * actor.a_max / n);
    grad_pre.zip_mut_with(&raw, |g, &y| *g *= 1.0 - y * y);
    let z = cache.output_pre();
    let count = z.len() as f64;
    grad_pre.zip_mut_with(z, |g, &z| *g += 2.0 * preact_reg * z / count);
    let penalty = preact_reg * z.mapv(|z| z * z).sum() / count;
    let (grads, _) = actor.net.backward_from_pre(&cache, grad_pre);
    (-q.sum() / n + penalty, grads)
}

/// Ascend the deterministic policy gradient; returns its norm before
/// clipping.
pub fn actor_update(
    actor: &mut Actor,
    opt: &mut Adam,
    critic: &impl QFunction,
    batch: &Batch,
    agent: usize,
    obs_dim: usize,
    rules: &StepRules,
) -> Result<f64, MarlError> {
    let (objective, mut grads) = actor_objective_and_grad(actor, critic, batch, agent, obs_dim, rules.preact_reg);
    let norm = rules.clip(&mut grads);
    if !objective.is_finite() || !norm.is_finite() {
        return Err(MarlError::NonFinite("actor gradient"));
    }
    opt.step(&mut actor.net, &grads);
    Ok(norm)
}
