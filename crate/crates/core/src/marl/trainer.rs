//! Training loop and greedy rollouts.
//!
//! Each run derives independent random streams from its seed: network
//! initialisation, exploration noise, episode reset seeds and minibatch
//! sampling. Toggling the shield therefore leaves initial weights and
//! start positions unchanged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::adam::{Adam, AdamConfig};
use super::buffer::{ReplayBuffer, Transition};
use super::learn::{self, Actor, Critic, StepRules, ACTION_DIM};
use super::mlp::soft_update;
use super::{MarlError, TrainerConfig};
use crate::cbf::ShieldParams;
use crate::env::{EnvState, EpisodeMetrics, Observations, PatrolEnv, StepRecord, AGENT_COUNT};
use crate::shield::{filter_action, ShieldReport, ShieldStatus};
use crate::sim::Vec2;

const STREAM_INIT: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_RESET: u64 = 2;
const STREAM_SAMPLE: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// One agent's online and target networks with their optimizers.
#[derive(Debug, Clone)]
pub struct Learner {
    pub actor: Actor,
    pub critic: Critic,
    pub target_actor: Actor,
    pub target_critic: Critic,
    actor_opt: Adam,
    critic_opt: Adam,
}

impl Learner {
    pub fn new(actor: Actor, critic: Critic, config: &TrainerConfig) -> Self {
        Self {
            actor_opt: Adam::new(&actor.net, AdamConfig::with_learning_rate(config.actor_lr)),
            critic_opt: Adam::new(&critic.net, AdamConfig::with_learning_rate(config.critic_lr)),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct Maddpg {
    pub config: TrainerConfig,
    pub obs_dim: usize,
    pub learners: Vec<Learner>,
    pub buffer: ReplayBuffer,
    sample_rng: ChaCha8Rng,
}

impl Maddpg {
    pub fn new(config: TrainerConfig, obs_dim: usize, a_max: f64) -> Self {
        let mut rng = stream(config.seed, STREAM_INIT);
        let state_dim = AGENT_COUNT * obs_dim;
        let learners = (0..AGENT_COUNT)
            .map(|_| {
                let actor = Actor::new(obs_dim, &config.hidden, a_max, &mut rng);
                let critic = Critic::new(state_dim, AGENT_COUNT * ACTION_DIM, &config.hidden, &mut rng);
                Learner::new(actor, critic, &config)
            })
            .collect();
        Self {
            buffer: ReplayBuffer::new(config.buffer_capacity),
            sample_rng: stream(config.seed, STREAM_SAMPLE),
            obs_dim,
            learners,
            config,
        }
    }

    pub fn actors(&self) -> Vec<Actor> {
        self.learners.iter().map(|l| l.actor.clone()).collect()
    }

    pub fn critics(&self) -> Vec<Critic> {
        self.learners.iter().map(|l| l.critic.clone()).collect()
    }

    /// Sample a minibatch per agent, update its critic then its actor,
    /// then soft-update every target network.
    pub fn update(&mut self) -> Result<[UpdateStats; AGENT_COUNT], MarlError> {
        let target_actors: Vec<Actor> = self.learners.iter().map(|l| l.target_actor.clone()).collect();
        let rules = StepRules {
            preact_reg: self.config.preact_reg,
            grad_clip: self.config.grad_clip,
        };
        let mut stats = [UpdateStats {
            critic_loss: 0.0,
            actor_grad_norm: 0.0,
        }; AGENT_COUNT];
        for (i, stat) in stats.iter_mut().enumerate() {
            let batch = self.buffer.sample(&mut self.sample_rng, self.config.batch_size);
            let l = &mut self.learners[i];
            let y = learn::td_target(
                &batch,
                &target_actors,
                &l.target_critic,
                i,
                self.config.gamma,
                self.obs_dim,
            );
            stat.critic_loss = learn::critic_update(&mut l.critic, &mut l.critic_opt, &batch, &y, &rules)?;
            stat.actor_grad_norm = learn::actor_update(
                &mut l.actor,
                &mut l.actor_opt,
                &l.critic,
                &batch,
                i,
                self.obs_dim,
                &rules,
            )?;
        }
        for l in &mut self.learners {
            soft_update(&mut l.target_actor.net, &l.actor.net, self.config.tau)?;
            soft_update(&mut l.target_critic.net, &l.critic.net, self.config.tau)?;
        }
        Ok(stats)
    }
}

/// Hooks into the training loop.
pub trait TrainObserver {
    fn on_step(
        &mut self,
        _episode: usize,
        _record: &StepRecord,
        _reports: &[Option<ShieldReport>; AGENT_COUNT],
        _stored: &Transition,
    ) {
    }

    fn on_episode(&mut self, _episode: usize, _metrics: &EpisodeMetrics) {}
}

impl TrainObserver for () {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Vec<EpisodeMetrics>,
    pub trainer: Maddpg,
}

fn joint(obs: &Observations) -> Vec<f64> {
    obs.concat()
}

fn clip(u: Vec2, a: f64) -> Vec2 {
    Vec2::new(u.x.clamp(-a, a), u.y.clamp(-a, a))
}

/// Clip nominal actions to the box and, if `shield` is set, filter each
/// agent's action against the current state of the others.
pub fn safe_actions(
    env: &PatrolEnv,
    state: &EnvState,
    nominal: &[Vec2; AGENT_COUNT],
    shield: Option<&ShieldParams>,
) -> Result<([Vec2; AGENT_COUNT], [Option<ShieldReport>; AGENT_COUNT]), MarlError> {
    let clipped = nominal.map(|u| clip(u, env.world.a_max));
    let Some(params) = shield else {
        return Ok((clipped, [None, None]));
    };
    let everyone: Vec<(usize, _)> = state.agents.iter().copied().enumerate().collect();
    let mut executed = clipped;
    let mut reports: [Option<ShieldReport>; AGENT_COUNT] = [None, None];
    for i in 0..AGENT_COUNT {
        let (u, report) = filter_action(
            i,
            &clipped[i],
            &state.agents[i],
            &everyone,
            &env.world.obstacles,
            &env.world,
            params,
        )?;
        executed[i] = u;
        reports[i] = Some(report);
    }
    Ok((executed, reports))
}

fn status_of(reports: &[Option<ShieldReport>; AGENT_COUNT]) -> [Option<ShieldStatus>; AGENT_COUNT] {
    std::array::from_fn(|i| reports[i].as_ref().map(|r| r.status))
}

/// Run the configured number of episodes. Errors raised inside an
/// episode are wrapped with that episode's index.
pub fn train(
    env: &PatrolEnv,
    shield: Option<&ShieldParams>,
    config: &TrainerConfig,
    observer: &mut impl TrainObserver,
) -> Result<TrainOutcome, MarlError> {
    config.validate()?;
    let mut trainer = Maddpg::new(config.clone(), env.observation_dim(), env.world.a_max);
    let mut noise_rng = stream(config.seed, STREAM_NOISE);
    let mut reset_rng = stream(config.seed, STREAM_RESET);
    let mut sigma = config.noise_std;
    let mut total_steps = 0usize;
    let mut metrics = Vec::with_capacity(config.episodes);

    for episode in 0..config.episodes {
        let reset_seed = reset_rng.random::<u64>();
        let records = run_training_episode(
            env,
            shield,
            &mut trainer,
            &mut noise_rng,
            sigma,
            reset_seed,
            episode,
            &mut total_steps,
            observer,
        )
        .map_err(|e| MarlError::Divergence {
            episode,
            source: Box::new(e),
        })?;
        let m = env.collision_audit(&records);
        observer.on_episode(episode, &m);
        metrics.push(m);
        sigma *= config.noise_decay;
    }
    Ok(TrainOutcome { metrics, trainer })
}

#[allow(clippy::too_many_arguments)]
fn run_training_episode(
    env: &PatrolEnv,
    shield: Option<&ShieldParams>,
    trainer: &mut Maddpg,
    noise_rng: &mut ChaCha8Rng,
    sigma: f64,
    reset_seed: u64,
    episode: usize,
    total_steps: &mut usize,
    observer: &mut impl TrainObserver,
) -> Result<Vec<StepRecord>, MarlError> {
    let noise = Normal::new(0.0, sigma).map_err(|_| MarlError::NonFinite("noise scale"))?;
    let (mut state, mut obs) = env.reset(reset_seed)?;
    let mut records = Vec::with_capacity(env.episode_length);
    loop {
        let nominal: [Vec2; AGENT_COUNT] = std::array::from_fn(|i| {
            let a = trainer.learners[i].actor.act(&obs[i]);
            a + Vec2::new(noise.sample(noise_rng), noise.sample(noise_rng))
        });
        let (executed, reports) = safe_actions(env, &state, &nominal, shield)?;
        let out = env.step(&state, &executed)?;
        let transition = Transition {
            state: joint(&obs),
            actions: executed.iter().flat_map(|u| [u.x, u.y]).collect(),
            rewards: out.rewards.map(|r| r * trainer.config.reward_scale),
            next_state: joint(&out.observations),
            // Hitting the step limit is a truncation, not a terminal state.
            done: out.done && out.state.step_count < env.episode_length,
        };
        let record = StepRecord {
            step: state.step_count,
            agents: out.state.agents,
            nominal,
            executed,
            rewards: out.rewards,
            shield: status_of(&reports),
            checkin_reached: out.checkin_reached,
        };
        observer.on_step(episode, &record, &reports, &transition);
        trainer.buffer.push(transition);
        records.push(record);
        *total_steps += 1;
        let cfg = &trainer.config;
        if trainer.buffer.len() >= cfg.warmup.max(cfg.batch_size) && total_steps.is_multiple_of(cfg.update_every) {
            trainer.update()?;
        }
        state = out.state;
        obs = out.observations;
        if out.done {
            return Ok(records);
        }
    }
}

/// A noise-free episode.
#[derive(Debug, Clone)]
pub struct RolloutEpisode {
    pub seed: u64,
    pub initial: EnvState,
    pub records: Vec<StepRecord>,
    pub reports: Vec<[Option<ShieldReport>; AGENT_COUNT]>,
    pub metrics: EpisodeMetrics,
}

/// Greedy episode from `env.reset(seed)`.
pub fn rollout(
    env: &PatrolEnv,
    actors: &[Actor],
    shield: Option<&ShieldParams>,
    seed: u64,
) -> Result<RolloutEpisode, MarlError> {
    if actors.len() != AGENT_COUNT {
        return Err(MarlError::ShapeMismatch {
            expected: format!("{AGENT_COUNT} actors"),
            found: format!("{} actors", actors.len()),
        });
    }
    let (initial, mut obs) = env.reset(seed)?;
    let mut state = initial.clone();
    let mut records = Vec::new();
    let mut reports_log = Vec::new();
    loop {
        let nominal: [Vec2; AGENT_COUNT] = std::array::from_fn(|i| actors[i].act(&obs[i]));
        let (executed, reports) = safe_actions(env, &state, &nominal, shield)?;
        let out = env.step(&state, &executed)?;
        records.push(StepRecord {
            step: state.step_count,
            agents: out.state.agents,
            nominal,
            executed,
            rewards: out.rewards,
            shield: status_of(&reports),
            checkin_reached: out.checkin_reached,
        });
        reports_log.push(reports);
        state = out.state;
        obs = out.observations;
        if out.done {
            break;
        }
    }
    let metrics = env.collision_audit(&records);
    Ok(RolloutEpisode {
        seed,
        initial,
        records,
        reports: reports_log,
        metrics,
    })
}
