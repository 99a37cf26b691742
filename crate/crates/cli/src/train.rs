//! `train`: run every configured seed and write per-run artifacts plus a
//! variant summary.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use safemarl::marl::{train, Checkpoint, MarlError, TrainObserver, Transition};
use safemarl::{EpisodeMetrics, PatrolEnv, RunConfig, ShieldReport, ShieldStatus, StepRecord, AGENT_COUNT};

use crate::artifacts::{
    diagnostics_fields, run_dir, write_text, CheckpointMeta, CsvSink, MetricsRow, Provenance, RunSummary, Summary,
    Variant, CHECKPOINT_FILE, CHECKPOINT_META_SCHEMA, DIAGNOSTICS_COLUMNS, DIAGNOSTICS_FILE, DIAGNOSTICS_SCHEMA,
    METRICS_COLUMNS, METRICS_FILE, METRICS_SCHEMA, SUMMARY_FILE,
};
use crate::error::CliError;

/// Execution knobs that do not affect results.
#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    /// Runs trained concurrently; each writes its own directory.
    pub jobs: usize,
    /// Per-run progress lines on stderr.
    pub progress: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
            progress: true,
        }
    }
}

/// Configuration of run `index`: the trainer seed is the run's seed.
pub fn run_config(config: &RunConfig, index: usize) -> RunConfig {
    let mut c = config.clone();
    c.trainer.seed = config.seeds[index];
    c
}

/// Network order inside checkpoints.
pub fn network_names() -> Vec<String> {
    let actors = (0..AGENT_COUNT).map(|i| format!("actor_{i}"));
    let critics = (0..AGENT_COUNT).map(|i| format!("critic_{i}"));
    actors.chain(critics).collect()
}

/// Streams metrics and shield diagnostics while training.
struct Writer {
    metrics: CsvSink,
    diagnostics: Option<CsvSink>,
    rows: Vec<MetricsRow>,
    error: Option<CliError>,
}

impl Writer {
    fn keep(&mut self, r: Result<(), CliError>) {
        if let Err(e) = r {
            self.error.get_or_insert(e);
        }
    }
}

impl TrainObserver for Writer {
    fn on_step(
        &mut self,
        episode: usize,
        record: &StepRecord,
        reports: &[Option<ShieldReport>; AGENT_COUNT],
        _stored: &Transition,
    ) {
        if self.error.is_some() {
            return;
        }
        let Some(sink) = self.diagnostics.as_mut() else {
            return;
        };
        let mut result = Ok(());
        for r in reports.iter().flatten() {
            if r.status != ShieldStatus::Passthrough {
                result = result.and_then(|_| sink.row(diagnostics_fields(episode, record.step, r)));
            }
        }
        self.keep(result);
    }

    fn on_episode(&mut self, episode: usize, metrics: &EpisodeMetrics) {
        let row = MetricsRow::new(episode, metrics);
        self.rows.push(row);
        if self.error.is_none() {
            let r = self.metrics.row(row.fields());
            self.keep(r);
        }
    }
}

fn classify(e: MarlError) -> CliError {
    match e {
        MarlError::InvalidConfig(m) => CliError::Config(m),
        e => CliError::Divergence(e.to_string()),
    }
}

/// Train run `index` of `config` into `dir`.
pub fn train_run(config: &RunConfig, index: usize, dir: &Path) -> Result<RunSummary, CliError> {
    let rc = run_config(config, index);
    let seed = rc.trainer.seed;
    let variant = Variant::of(&rc);
    let provenance = Provenance {
        seed,
        config: rc.clone(),
    };
    let metrics = CsvSink::create(&dir.join(METRICS_FILE), METRICS_SCHEMA, &provenance, &METRICS_COLUMNS)?;
    let diagnostics = match variant {
        Variant::Shielded => Some(CsvSink::create(
            &dir.join(DIAGNOSTICS_FILE),
            DIAGNOSTICS_SCHEMA,
            &provenance,
            &DIAGNOSTICS_COLUMNS,
        )?),
        Variant::Unshielded => None,
    };
    let mut writer = Writer {
        metrics,
        diagnostics,
        rows: Vec::with_capacity(rc.trainer.episodes),
        error: None,
    };

    let env = PatrolEnv::new(rc.world.clone(), &rc.shield, rc.trainer.episode_length);
    let shield = rc.shield_enabled.then_some(&rc.shield);
    let outcome = train(&env, shield, &rc.trainer, &mut writer).map_err(classify)?;
    if let Some(e) = writer.error {
        return Err(e);
    }
    writer.metrics.finish()?;
    if let Some(d) = writer.diagnostics {
        d.finish()?;
    }

    let meta = CheckpointMeta {
        schema: CHECKPOINT_META_SCHEMA.to_string(),
        variant,
        seed,
        episodes_trained: outcome.metrics.len(),
        networks: network_names(),
        config: rc,
    };
    let learners = &outcome.trainer.learners;
    let checkpoint = Checkpoint {
        metadata: serde_json::to_string(&meta).expect("metadata serializes"),
        networks: learners
            .iter()
            .map(|l| l.actor.net.clone())
            .chain(learners.iter().map(|l| l.critic.net.clone()))
            .collect(),
    };
    let path = dir.join(CHECKPOINT_FILE);
    std::fs::write(&path, checkpoint.to_bytes()).map_err(|e| CliError::output(&path, e))?;
    Ok(RunSummary::from_rows(index + 1, seed, &writer.rows))
}

fn ensure_writable(root: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(root).map_err(|e| CliError::output(root, e))?;
    let probe = root.join(".write-probe");
    write_text(&probe, "")?;
    std::fs::remove_file(&probe).map_err(|e| CliError::output(&probe, e))
}

/// Train every run of `config` under `config.output_dir` and write the
/// variant summary. Returns the summary and its path.
pub fn run(config: &RunConfig, options: TrainOptions) -> Result<(Summary, PathBuf), CliError> {
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let root = &config.output_dir;
    ensure_writable(root)?;
    let variant = Variant::of(config);

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunSummary, CliError>>>> =
        Mutex::new((0..config.runs).map(|_| None).collect());
    let worker = || loop {
        let k = next.fetch_add(1, Ordering::SeqCst);
        if k >= config.runs {
            return;
        }
        let dir = run_dir(root, variant, k);
        let r = train_run(config, k, &dir);
        if options.progress {
            match &r {
                Ok(s) => eprintln!(
                    "{} run {}/{} seed {}: {} episodes, {} with collisions, mean team reward {}",
                    variant.dir_name(),
                    k + 1,
                    config.runs,
                    s.seed,
                    s.episodes,
                    s.collision_episodes,
                    s.mean_team_reward.map_or("n/a".to_string(), |m| format!("{m:.1}")),
                ),
                Err(e) => eprintln!("{} run {}/{}: {e}", variant.dir_name(), k + 1, config.runs),
            }
        }
        results.lock().expect("no worker panicked")[k] = Some(r);
    };
    std::thread::scope(|s| {
        for _ in 0..options.jobs.clamp(1, config.runs.max(1)) {
            s.spawn(worker);
        }
    });

    let runs = results
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every run index was claimed"))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = Summary::new(variant, config.clone(), runs);
    let path = root.join(variant.dir_name()).join(SUMMARY_FILE);
    summary.write(&path)?;
    Ok((summary, path))
}
