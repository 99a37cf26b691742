//! `eval`: greedy rollouts of a checkpoint with trajectory logs and plots.

use std::path::{Path, PathBuf};

use safemarl::marl::learn::ACTION_DIM;
use safemarl::marl::{rollout, Actor, Checkpoint, RolloutEpisode};
use safemarl::{PatrolEnv, RunConfig, ShieldStatus, Vec2, AGENT_COUNT};
use serde::{Deserialize, Serialize};

use crate::artifacts::{
    clearances, trajectory_fields, write_json, write_text, CheckpointMeta, CsvSink, EvalEpisode, Provenance,
    TRAJECTORY_COLUMNS, TRAJECTORY_FILE, TRAJECTORY_SCHEMA,
};
use crate::error::CliError;
use crate::svg::{line_chart, trajectory_plot, window_around, with_metadata, Series, TrajectoryView, AGENT_COLORS};

pub const EVAL_SUMMARY_FILE: &str = "eval_summary.json";
pub const EVAL_SUMMARY_SCHEMA: &str = "safemarl-eval-summary/1";
/// Steps either side of the event a zoomed plot is centred on.
const ZOOM_HALF_WIDTH: usize = 15;

/// What to evaluate.
#[derive(Debug, Clone)]
pub struct EvalRequest {
    pub checkpoint: PathBuf,
    /// Overrides the configuration embedded in the checkpoint.
    pub config: Option<RunConfig>,
    pub episodes: usize,
    /// Episode `k` resets with `seed + k`; defaults to the training seed.
    pub seed: Option<u64>,
    pub shield: bool,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub schema: String,
    pub seed: u64,
    pub shield: bool,
    pub config: RunConfig,
    pub episodes: Vec<EvalEpisode>,
    pub total_collision_steps: usize,
}

/// Layer widths the configuration implies, in checkpoint order.
pub fn expected_architecture(config: &RunConfig) -> Vec<Vec<usize>> {
    let env = PatrolEnv::new(config.world.clone(), &config.shield, config.trainer.episode_length);
    let obs = env.observation_dim();
    let with = |input: usize, output: usize| {
        std::iter::once(input)
            .chain(config.trainer.hidden.iter().copied())
            .chain(std::iter::once(output))
            .collect::<Vec<_>>()
    };
    let actor = with(obs, ACTION_DIM);
    let critic = with(AGENT_COUNT * (obs + ACTION_DIM), 1);
    std::iter::repeat_n(actor, AGENT_COUNT)
        .chain(std::iter::repeat_n(critic, AGENT_COUNT))
        .collect()
}

/// Read a checkpoint and its metadata.
pub fn load_checkpoint(path: &Path) -> Result<(Checkpoint, CheckpointMeta), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::read(path, e))?;
    let ck = Checkpoint::from_bytes(&bytes).map_err(|e| CliError::Artifact(format!("{}: {e}", path.display())))?;
    let meta: CheckpointMeta = serde_json::from_str(&ck.metadata)
        .map_err(|e| CliError::Artifact(format!("{}: metadata: {e}", path.display())))?;
    if meta.schema != crate::artifacts::CHECKPOINT_META_SCHEMA {
        return Err(CliError::Artifact(format!(
            "{}: metadata schema {}, expected {}",
            path.display(),
            meta.schema,
            crate::artifacts::CHECKPOINT_META_SCHEMA
        )));
    }
    Ok((ck, meta))
}

pub fn run(req: &EvalRequest) -> Result<EvalSummary, CliError> {
    let (ck, meta) = load_checkpoint(&req.checkpoint)?;
    let config = req.config.clone().unwrap_or(meta.config);
    ck.expect_architecture(&expected_architecture(&config))
        .map_err(|e| CliError::Artifact(format!("{}: {e}", req.checkpoint.display())))?;
    let actors: Vec<Actor> = ck.networks[..AGENT_COUNT]
        .iter()
        .map(|net| Actor {
            net: net.clone(),
            a_max: config.world.a_max,
        })
        .collect();
    let seed = req.seed.unwrap_or(meta.seed);
    let env = PatrolEnv::new(config.world.clone(), &config.shield, config.trainer.episode_length);
    let shield = req.shield.then_some(&config.shield);

    let provenance = Provenance {
        seed,
        config: config.clone(),
    };
    let mut csv = CsvSink::create(
        &req.out.join(TRAJECTORY_FILE),
        TRAJECTORY_SCHEMA,
        &provenance,
        &TRAJECTORY_COLUMNS,
    )?;
    let metadata = serde_json::to_string(&provenance).expect("provenance serializes");
    let mut episodes = Vec::with_capacity(req.episodes);
    for k in 0..req.episodes {
        let ep = rollout(&env, &actors, shield, seed.wrapping_add(k as u64))
            .map_err(|e| CliError::Divergence(format!("evaluation episode {k}: {e}")))?;
        for record in &ep.records {
            for row in trajectory_fields(k, record, clearances(&record.agents, &config.world)) {
                csv.row(row)?;
            }
        }
        write_plots(&req.out, k, &ep, &config, &metadata)?;
        let m = &ep.metrics;
        episodes.push(EvalEpisode {
            episode: k,
            seed: ep.seed,
            steps: m.steps,
            checkins_reached: m.checkins_reached,
            collision_steps: m.collision_count,
            min_dist: m.min_pairwise_distance,
            reward: m.total_reward,
            shield_corrections: m.shield_correction_count,
            fallback_events: m.fallback_events,
        });
    }
    csv.finish()?;
    let summary = EvalSummary {
        schema: EVAL_SUMMARY_SCHEMA.to_string(),
        seed,
        shield: req.shield,
        config,
        total_collision_steps: episodes.iter().map(|e| e.collision_steps).sum(),
        episodes,
    };
    write_json(&req.out.join(EVAL_SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// File names of the plots for episode `k`.
pub fn plot_files(k: usize) -> [String; 4] {
    ["trajectory", "zoom_1", "zoom_2", "reward"].map(|s| format!("episode_{k:02}_{s}.svg"))
}

/// Positions per agent: the start, then one per step.
fn paths(ep: &RolloutEpisode) -> [Vec<Vec2>; AGENT_COUNT] {
    std::array::from_fn(|i| {
        std::iter::once(ep.initial.agents[i].position)
            .chain(ep.records.iter().map(|r| r.agents[i].position))
            .collect()
    })
}

/// Path indices at which the shield changed an agent's action. Path index
/// `t + 1` is the state after step `t`.
fn corrections(ep: &RolloutEpisode) -> [Vec<usize>; AGENT_COUNT] {
    std::array::from_fn(|i| {
        ep.records
            .iter()
            .enumerate()
            .filter(|(_, r)| matches!(r.shield[i], Some(s) if s != ShieldStatus::Passthrough))
            .map(|(t, _)| t + 1)
            .collect()
    })
}

/// Path indices of the closest agent-agent and agent-obstacle approaches.
fn zoom_centres(path: &[Vec<Vec2>; AGENT_COUNT], config: &RunConfig) -> [usize; 2] {
    let argmin = |d: &dyn Fn(usize) -> f64| (0..path[0].len()).min_by(|&a, &b| d(a).total_cmp(&d(b))).unwrap_or(0);
    let pair = argmin(&|t| (path[0][t] - path[1][t]).norm());
    let obstacle = argmin(&|t| {
        (0..AGENT_COUNT)
            .flat_map(|i| {
                config
                    .world
                    .obstacles
                    .iter()
                    .map(move |o| (path[i][t] - o.position).norm() - o.radius)
            })
            .fold(f64::INFINITY, f64::min)
    });
    [pair, obstacle]
}

fn write_plots(out: &Path, k: usize, ep: &RolloutEpisode, config: &RunConfig, metadata: &str) -> Result<(), CliError> {
    let files = plot_files(k);
    let write = |name: &str, svg: String| write_text(&out.join(name), &with_metadata(&svg, metadata));
    let full = paths(ep);
    let corrected = corrections(ep);
    let view = |title: &str, range: std::ops::Range<usize>, window| {
        let clip = |t: &usize| range.contains(t);
        trajectory_plot(&TrajectoryView {
            title,
            world: &config.world,
            safe_distance: config.shield.d_s,
            paths: std::array::from_fn(|i| full[i][range.clone()].to_vec()),
            corrected: std::array::from_fn(|i| {
                corrected[i]
                    .iter()
                    .filter(|t| clip(t))
                    .map(|t| t - range.start)
                    .collect()
            }),
            window,
        })
    };

    let n = full[0].len();
    write(&files[0], view(&format!("Episode {k}: trajectories"), 0..n, None))?;
    let what = ["closest agent approach", "closest obstacle approach"];
    for (z, centre) in zoom_centres(&full, config).into_iter().enumerate() {
        let range = centre.saturating_sub(ZOOM_HALF_WIDTH)..(centre + ZOOM_HALF_WIDTH + 1).min(n);
        let pts: Vec<Vec2> = full.iter().flat_map(|p| p[range.clone()].iter().copied()).collect();
        let window = window_around(&pts, 0.1);
        let title = format!("Episode {k}: {} (steps {}-{})", what[z], range.start, range.end - 1);
        write(&files[1 + z], view(&title, range, window))?;
    }

    let series: Vec<Series> = (0..AGENT_COUNT)
        .map(|i| {
            let mut total = 0.0;
            Series {
                label: ["Patrolman I", "Patrolman II"][i],
                color: AGENT_COLORS[i],
                points: ep
                    .records
                    .iter()
                    .map(|r| {
                        total += r.rewards[i];
                        ((r.step + 1) as f64, total)
                    })
                    .collect(),
            }
        })
        .collect();
    write(
        &files[3],
        line_chart(&format!("Episode {k}: cumulative reward"), "step", "reward", &series),
    )
}
