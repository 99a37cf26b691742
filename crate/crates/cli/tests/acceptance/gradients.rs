//! Analytic gradients against central finite differences for the network,
//! the critic loss and the actor objective.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safemarl::marl::learn::{actor_objective_and_grad, critic_loss_and_grad};
use safemarl::marl::{Activation, Actor, Batch, Critic, Mlp, Transition};

use crate::Verdict;

pub const NAME: &str = "gradient checks on 20 instances have relative error < 1e-4";

const INSTANCES: u64 = 20;
const EPS: f64 = 1e-5;
const MAX_RELATIVE_ERROR: f64 = 1e-4;
/// Entries this small are compared absolutely.
const FLOOR: f64 = 1e-6;

fn relative_error(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(FLOOR)
}

/// Worst relative error over every parameter of `net`.
fn worst_param_error(net: &Mlp, analytic: &[f64], loss: impl Fn(&Mlp) -> f64) -> f64 {
    let base = net.flat_params();
    assert_eq!(base.len(), analytic.len());
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for k in 0..base.len() {
        let mut p = base.clone();
        p[k] = base[k] + EPS;
        probe.set_flat_params(&p).expect("same length");
        let up = loss(&probe);
        p[k] = base[k] - EPS;
        probe.set_flat_params(&p).expect("same length");
        let down = loss(&probe);
        worst = worst.max(relative_error((up - down) / (2.0 * EPS), analytic[k]));
    }
    worst
}

struct Instance {
    rng: ChaCha8Rng,
    obs_dim: usize,
    hidden: Vec<usize>,
    batch: usize,
}

impl Instance {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs_dim = rng.random_range(2..6);
        let hidden = (0..rng.random_range(1..3)).map(|_| rng.random_range(3..7)).collect();
        let batch = rng.random_range(2..7);
        Self {
            rng,
            obs_dim,
            hidden,
            batch,
        }
    }

    fn batch(&mut self) -> Batch {
        let n = 2 * self.obs_dim;
        let rng = &mut self.rng;
        let ts: Vec<Transition> = (0..self.batch)
            .map(|_| Transition {
                state: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                actions: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
                rewards: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                next_state: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                done: rng.random_bool(0.3),
            })
            .collect();
        Batch::from_transitions(&ts.iter().collect::<Vec<_>>())
    }
}

fn mlp_error(seed: u64) -> f64 {
    let activations = [Activation::Relu, Activation::Tanh, Activation::Identity];
    let mut inst = Instance::new(seed);
    let mut sizes = vec![inst.obs_dim];
    sizes.extend(&inst.hidden);
    sizes.push(3);
    let net = Mlp::new(
        &sizes,
        activations[(seed as usize / 3) % 3],
        activations[seed as usize % 3],
        &mut inst.rng,
    );
    let x = Array2::from_shape_fn((inst.batch, inst.obs_dim), |_| inst.rng.random_range(-1.0..1.0));
    let w = Array2::from_shape_fn((inst.batch, 3), |_| inst.rng.random_range(-1.0..1.0));
    let loss = |n: &Mlp, x: &Array2<f64>| (n.forward(x.view()) * &w).sum();
    let (_, cache) = net.forward_cached(x.view());
    let (grads, grad_x) = net.backward(&cache, w.view());
    let mut worst = worst_param_error(&net, &grads.flat(), |n| loss(n, &x));
    for ((r, c), analytic) in grad_x.indexed_iter() {
        let mut up = x.clone();
        up[[r, c]] += EPS;
        let mut down = x.clone();
        down[[r, c]] -= EPS;
        let fd = (loss(&net, &up) - loss(&net, &down)) / (2.0 * EPS);
        worst = worst.max(relative_error(fd, *analytic));
    }
    worst
}

fn critic_error(seed: u64) -> f64 {
    let mut inst = Instance::new(100 + seed);
    let critic = Critic::new(2 * inst.obs_dim, 4, &inst.hidden, &mut inst.rng);
    let batch = inst.batch();
    let targets = Array1::from_shape_fn(inst.batch, |_| inst.rng.random_range(-2.0..2.0));
    let (_, grads) = critic_loss_and_grad(&critic, &batch, &targets);
    worst_param_error(&critic.net, &grads.flat(), |n| {
        critic_loss_and_grad(&Critic { net: n.clone() }, &batch, &targets).0
    })
}

fn actor_error(seed: u64) -> f64 {
    let mut inst = Instance::new(300 + seed);
    let a_max = inst.rng.random_range(0.5..2.0);
    let actor = Actor::new(inst.obs_dim, &inst.hidden, a_max, &mut inst.rng);
    let critic = Critic::new(2 * inst.obs_dim, 4, &inst.hidden, &mut inst.rng);
    let batch = inst.batch();
    let agent = (seed % 2) as usize;
    let reg = if seed % 4 < 2 { 0.0 } else { 1e-2 };
    let (_, grads) = actor_objective_and_grad(&actor, &critic, &batch, agent, inst.obs_dim, reg);
    worst_param_error(&actor.net, &grads.flat(), |n| {
        let a = Actor { net: n.clone(), a_max };
        actor_objective_and_grad(&a, &critic, &batch, agent, inst.obs_dim, reg).0
    })
}

pub fn check() -> Verdict {
    let mut worst = [0.0f64; 3];
    for seed in 0..INSTANCES {
        worst[0] = worst[0].max(mlp_error(seed));
        worst[1] = worst[1].max(critic_error(seed));
        worst[2] = worst[2].max(actor_error(seed));
    }
    let detail = format!(
        "worst relative error: network {:.2e}, critic {:.2e}, actor {:.2e}",
        worst[0], worst[1], worst[2]
    );
    if worst.iter().all(|&e| e < MAX_RELATIVE_ERROR) {
        Ok(detail)
    } else {
        Err(detail)
    }
}
