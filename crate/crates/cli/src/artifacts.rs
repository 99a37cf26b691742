//! On-disk formats for run artifacts.
//!
//! Every CSV begins with `#` comment lines: the schema tag first, then the
//! seed and the resolved configuration as one-line JSON. Readers check the
//! schema tag before touching any row.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use safemarl::{EpisodeMetrics, RunConfig, ShieldReport, StepRecord, AGENT_COUNT};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const METRICS_SCHEMA: &str = "safemarl-metrics/1";
pub const DIAGNOSTICS_SCHEMA: &str = "safemarl-shield-diagnostics/1";
pub const TRAJECTORY_SCHEMA: &str = "safemarl-trajectory/1";
pub const SUMMARY_SCHEMA: &str = "safemarl-summary/1";
pub const CHECKPOINT_META_SCHEMA: &str = "safemarl-checkpoint-meta/1";

pub const METRICS_FILE: &str = "metrics.csv";
pub const DIAGNOSTICS_FILE: &str = "shield_diagnostics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";

pub const METRICS_COLUMNS: [&str; 7] = [
    "episode",
    "reward_I",
    "reward_II",
    "collisions_step",
    "collisions_episode",
    "min_dist",
    "slack_events",
];

pub const DIAGNOSTICS_COLUMNS: [&str; 14] = [
    "episode",
    "step",
    "agent_id",
    "status",
    "ax_nominal",
    "ay_nominal",
    "ax_safe",
    "ay_safe",
    "min_h",
    "slack",
    "cooperative",
    "noncooperative",
    "wall",
    "fallback_from",
];

pub const TRAJECTORY_COLUMNS: [&str; 14] = [
    "episode",
    "step",
    "agent_id",
    "px",
    "py",
    "vx",
    "vy",
    "ax_nominal",
    "ay_nominal",
    "ax_safe",
    "ay_safe",
    "reward",
    "min_dist",
    "shield_status",
];

/// Which training variant a run belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Shielded,
    Unshielded,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Shielded, Variant::Unshielded];

    pub fn of(config: &RunConfig) -> Self {
        if config.shield_enabled {
            Variant::Shielded
        } else {
            Variant::Unshielded
        }
    }

    pub fn dir_name(self) -> &'static str {
        match self {
            Variant::Shielded => "shielded",
            Variant::Unshielded => "unshielded",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Shielded => "Shielded",
            Variant::Unshielded => "Unshielded",
        }
    }
}

/// `root/{variant}/run_XX`, numbered from 1.
pub fn run_dir(root: &Path, variant: Variant, run_index: usize) -> PathBuf {
    root.join(variant.dir_name()).join(format!("run_{:02}", run_index + 1))
}

/// Provenance embedded in every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config: RunConfig,
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x}")
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::output(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::output(path, e))
}

/// CSV file with the provenance comment header already written.
pub struct CsvSink {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvSink {
    pub fn create(path: &Path, schema: &str, provenance: &Provenance, columns: &[&str]) -> Result<Self, CliError> {
        let mut file = create(path)?;
        let config = serde_json::to_string(&provenance.config).expect("config serializes");
        write!(
            file,
            "# schema: {schema}\n# seed: {}\n# config: {config}\n",
            provenance.seed
        )
        .map_err(|e| CliError::output(path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(columns).map_err(|e| CliError::output(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer
            .write_record(fields)
            .map_err(|e| CliError::output(&self.path, e))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|e| CliError::output(&self.path, e))
    }
}

/// One row of a metrics CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub episode: usize,
    pub reward: [f64; AGENT_COUNT],
    pub collisions_step: usize,
    pub collisions_episode: usize,
    pub min_dist: f64,
    pub slack_events: usize,
}

impl MetricsRow {
    pub fn new(episode: usize, m: &EpisodeMetrics) -> Self {
        Self {
            episode,
            reward: m.total_reward,
            collisions_step: m.collision_count,
            collisions_episode: usize::from(m.collided()),
            min_dist: m.min_pairwise_distance,
            slack_events: m.slack_events,
        }
    }

    pub fn team_reward(&self) -> f64 {
        self.reward.iter().sum()
    }

    pub fn fields(&self) -> [String; 7] {
        [
            self.episode.to_string(),
            num(self.reward[0]),
            num(self.reward[1]),
            self.collisions_step.to_string(),
            self.collisions_episode.to_string(),
            num(self.min_dist),
            self.slack_events.to_string(),
        ]
    }
}

pub fn diagnostics_fields(episode: usize, step: usize, r: &ShieldReport) -> [String; 14] {
    [
        episode.to_string(),
        step.to_string(),
        r.agent_id.to_string(),
        r.status.as_str().to_string(),
        num(r.u_nominal.x),
        num(r.u_nominal.y),
        num(r.u_safe.x),
        num(r.u_safe.y),
        num(r.min_h),
        num(r.slack),
        r.constraints_built.cooperative.to_string(),
        r.constraints_built.noncooperative.to_string(),
        r.constraints_built.wall.to_string(),
        r.fallback_from.map(|e| e.to_string()).unwrap_or_default(),
    ]
}

/// Trajectory rows of one step, one per agent.
pub fn trajectory_fields(
    episode: usize,
    record: &StepRecord,
    clearance: [f64; AGENT_COUNT],
) -> [[String; 14]; AGENT_COUNT] {
    std::array::from_fn(|i| {
        let s = &record.agents[i];
        [
            episode.to_string(),
            record.step.to_string(),
            i.to_string(),
            num(s.position.x),
            num(s.position.y),
            num(s.velocity.x),
            num(s.velocity.y),
            num(record.nominal[i].x),
            num(record.nominal[i].y),
            num(record.executed[i].x),
            num(record.executed[i].y),
            num(record.rewards[i]),
            num(clearance[i]),
            record.shield[i].map_or("off", |s| s.as_str()).to_string(),
        ]
    })
}

/// Header comments and the reader positioned after them.
pub struct Parsed {
    pub schema: String,
    pub provenance: Option<Provenance>,
    pub records: Vec<csv::StringRecord>,
}

/// Read a commented CSV, insisting on `schema` and `columns`.
pub fn read_csv(path: &Path, schema: &str, columns: &[&str]) -> Result<Parsed, CliError> {
    let file = File::open(path).map_err(|e| CliError::read(path, e))?;
    let mut reader = BufReader::new(file);
    let mut found_schema = None;
    let mut seed = None;
    let mut config = None;
    let mut line = String::new();
    let mut body = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(|e| CliError::read(path, e))? == 0 {
            break;
        }
        let Some(comment) = line.strip_prefix('#') else {
            body.push_str(&line);
            break;
        };
        let comment = comment.trim();
        if let Some(v) = comment.strip_prefix("schema:") {
            found_schema = Some(v.trim().to_string());
        } else if let Some(v) = comment.strip_prefix("seed:") {
            seed = v.trim().parse::<u64>().ok();
        } else if let Some(v) = comment.strip_prefix("config:") {
            config = Some(
                RunConfig::from_json(v.trim())
                    .map_err(|e| CliError::Artifact(format!("{}: embedded config: {e}", path.display())))?,
            );
        }
    }
    let found = found_schema.ok_or_else(|| CliError::Artifact(format!("{}: no schema header", path.display())))?;
    if found != schema {
        return Err(CliError::Artifact(format!(
            "{}: schema {found}, expected {schema}",
            path.display()
        )));
    }
    std::io::Read::read_to_string(&mut reader, &mut body).map_err(|e| CliError::read(path, e))?;
    let mut csv = csv::Reader::from_reader(body.as_bytes());
    let header = csv.headers().map_err(|e| CliError::read(path, e))?.clone();
    if header.iter().ne(columns.iter().copied()) {
        return Err(CliError::Artifact(format!(
            "{}: columns {:?}, expected {:?}",
            path.display(),
            header.iter().collect::<Vec<_>>(),
            columns
        )));
    }
    let records = csv
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::read(path, e))?;
    let provenance = match (seed, config) {
        (Some(seed), Some(config)) => Some(Provenance { seed, config }),
        _ => None,
    };
    Ok(Parsed {
        schema: found,
        provenance,
        records,
    })
}

fn field<T: std::str::FromStr>(path: &Path, r: &csv::StringRecord, k: usize) -> Result<T, CliError> {
    r.get(k).and_then(|v| v.parse().ok()).ok_or_else(|| {
        let line = r.position().map_or(0, |p| p.line());
        CliError::Artifact(format!(
            "{}: bad {} on data line {line}",
            path.display(),
            METRICS_COLUMNS.get(k).unwrap_or(&"field")
        ))
    })
}

pub fn read_metrics(path: &Path) -> Result<(Option<Provenance>, Vec<MetricsRow>), CliError> {
    let parsed = read_csv(path, METRICS_SCHEMA, &METRICS_COLUMNS)?;
    let rows = parsed
        .records
        .iter()
        .map(|r| {
            Ok(MetricsRow {
                episode: field(path, r, 0)?,
                reward: [field(path, r, 1)?, field(path, r, 2)?],
                collisions_step: field(path, r, 3)?,
                collisions_episode: field(path, r, 4)?,
                min_dist: field(path, r, 5)?,
                slack_events: field(path, r, 6)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok((parsed.provenance, rows))
}

/// Per-run totals in a variant summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub episodes: usize,
    pub collision_episodes: usize,
    pub collision_steps: usize,
    pub collision_ratio: f64,
    pub min_dist: Option<f64>,
    pub slack_events: usize,
    pub mean_team_reward: Option<f64>,
    /// Mean team reward over the first [`early_window`] episodes.
    pub early_mean_team_reward: Option<f64>,
}

/// Episodes counted as early training: the first tenth, at least one.
pub fn early_window(episodes: usize) -> usize {
    (episodes / 10).max(1).min(episodes)
}

/// Mean team reward of `rows`, `None` when empty.
pub fn mean_team_reward(rows: &[MetricsRow]) -> Option<f64> {
    (!rows.is_empty()).then(|| rows.iter().map(MetricsRow::team_reward).sum::<f64>() / rows.len() as f64)
}

impl RunSummary {
    pub fn from_rows(run: usize, seed: u64, rows: &[MetricsRow]) -> Self {
        let episodes = rows.len();
        let collision_episodes = rows.iter().map(|r| r.collisions_episode).sum();
        Self {
            run,
            seed,
            episodes,
            collision_episodes,
            collision_steps: rows.iter().map(|r| r.collisions_step).sum(),
            collision_ratio: ratio(collision_episodes, episodes),
            min_dist: rows.iter().map(|r| r.min_dist).reduce(f64::min),
            slack_events: rows.iter().map(|r| r.slack_events).sum(),
            mean_team_reward: mean_team_reward(rows),
            early_mean_team_reward: mean_team_reward(&rows[..early_window(episodes)]),
        }
    }
}

/// `summary.json` for one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: String,
    pub variant: Variant,
    pub config: RunConfig,
    pub runs: Vec<RunSummary>,
    pub total_episodes: usize,
    /// Episodes with at least one collision.
    pub total_collisions: usize,
    pub total_collision_steps: usize,
    pub collision_ratio: f64,
}

impl Summary {
    pub fn new(variant: Variant, config: RunConfig, runs: Vec<RunSummary>) -> Self {
        let total_episodes = runs.iter().map(|r| r.episodes).sum();
        let total_collisions = runs.iter().map(|r| r.collision_episodes).sum();
        Self {
            schema: SUMMARY_SCHEMA.to_string(),
            variant,
            config,
            total_collision_steps: runs.iter().map(|r| r.collision_steps).sum(),
            collision_ratio: ratio(total_collisions, total_episodes),
            total_episodes,
            total_collisions,
            runs,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
        let s: Summary = serde_json::from_str(&text).map_err(|e| CliError::read(path, e))?;
        if s.schema != SUMMARY_SCHEMA {
            return Err(CliError::Artifact(format!(
                "{}: schema {}, expected {SUMMARY_SCHEMA}",
                path.display(),
                s.schema
            )));
        }
        Ok(s)
    }
}

/// Collisions per episode; zero for an empty run.
pub fn ratio(collisions: usize, episodes: usize) -> f64 {
    if episodes == 0 {
        0.0
    } else {
        collisions as f64 / episodes as f64
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut file = create(path)?;
    serde_json::to_writer_pretty(&mut file, value).map_err(|e| CliError::output(path, e))?;
    file.write_all(b"\n")
        .and_then(|_| file.flush())
        .map_err(|e| CliError::output(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut file = create(path)?;
    file.write_all(text.as_bytes())
        .and_then(|_| file.flush())
        .map_err(|e| CliError::output(path, e))
}

/// Checkpoint metadata JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub schema: String,
    pub variant: Variant,
    pub seed: u64,
    pub episodes_trained: usize,
    /// Network order in the file.
    pub networks: Vec<String>,
    pub config: RunConfig,
}

/// Summary of one evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub episode: usize,
    pub seed: u64,
    pub steps: usize,
    pub checkins_reached: usize,
    pub collision_steps: usize,
    pub min_dist: f64,
    pub reward: [f64; AGENT_COUNT],
    pub shield_corrections: usize,
    pub fallback_events: usize,
}

/// Distance from each agent to its nearest other agent or obstacle surface.
pub fn clearances(
    state_agents: &[safemarl::AgentState; AGENT_COUNT],
    world: &safemarl::WorldConfig,
) -> [f64; AGENT_COUNT] {
    std::array::from_fn(|i| {
        let me = state_agents[i].position;
        let agents = (0..AGENT_COUNT)
            .filter(|&j| j != i)
            .map(|j| (state_agents[j].position - me).norm());
        let obstacles = world.obstacles.iter().map(|o| (o.position - me).norm() - o.radius);
        agents.chain(obstacles).fold(f64::INFINITY, f64::min)
    })
}
