//! Full-scale training of both variants with the default configuration.

use safemarl::RunConfig;
use safemarl_cli::artifacts::{
    early_window, mean_team_reward, read_metrics, run_dir, MetricsRow, Summary, Variant, METRICS_FILE,
};
use safemarl_cli::train::{run, TrainOptions};

use crate::Verdict;

pub const NAMES: [&str; 3] = [
    "shielded training never comes within the safe distance",
    "unshielded training collides in more than 10% of episodes",
    "shielded early reward beats unshielded in every run",
];

const RUNS: usize = 5;
const EPISODES: usize = 500;
const STEPS: usize = 200;
const DISTANCE_TOLERANCE: f64 = 1e-3;
const MIN_UNSHIELDED_RATIO: f64 = 0.10;

pub struct Trained {
    pub config: RunConfig,
    pub variants: Vec<(Variant, Summary, Vec<Vec<MetricsRow>>)>,
}

impl Trained {
    fn get(&self, v: Variant) -> (&Summary, &[Vec<MetricsRow>]) {
        let (_, s, m) = self
            .variants
            .iter()
            .find(|(x, _, _)| *x == v)
            .expect("both variants trained");
        (s, m)
    }
}

/// Train both variants and read the metrics back from disk.
pub fn train_both() -> Result<Trained, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut base = RunConfig {
        output_dir: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    if base.runs != RUNS {
        return Err(format!("default configuration has {} runs, expected {RUNS}", base.runs));
    }
    base.trainer.episodes = EPISODES;
    base.trainer.episode_length = STEPS;
    let mut variants = Vec::new();
    for shield in [true, false] {
        let config = RunConfig {
            shield_enabled: shield,
            ..base.clone()
        };
        let (summary, _) = run(&config, TrainOptions::default()).map_err(|e| e.to_string())?;
        let variant = Variant::of(&config);
        let metrics = (0..config.runs)
            .map(|k| {
                let path = run_dir(dir.path(), variant, k).join(METRICS_FILE);
                read_metrics(&path).map(|(_, rows)| rows).map_err(|e| e.to_string())
            })
            .collect::<Result<Vec<_>, _>>()?;
        if metrics.iter().any(|m| m.len() != EPISODES) {
            return Err(format!(
                "{} metrics are not {EPISODES} rows per run",
                variant.dir_name()
            ));
        }
        variants.push((variant, summary, metrics));
    }
    Ok(Trained { config: base, variants })
}

pub fn shielded_is_safe(t: &Trained) -> Verdict {
    let (_, runs) = t.get(Variant::Shielded);
    let collisions: usize = runs.iter().flatten().map(|r| r.collisions_episode).sum();
    let min = runs.iter().flatten().map(|r| r.min_dist).fold(f64::INFINITY, f64::min);
    let floor = t.config.shield.d_s - DISTANCE_TOLERANCE;
    let detail = format!(
        "{RUNS} runs x {EPISODES} episodes, {collisions} collision episodes, min distance {min:.5} (floor {floor:.5})"
    );
    if collisions == 0 && min >= floor {
        Ok(detail)
    } else {
        Err(detail)
    }
}

pub fn unshielded_collides(t: &Trained) -> Verdict {
    let (summary, runs) = t.get(Variant::Unshielded);
    let collisions: usize = runs.iter().flatten().map(|r| r.collisions_episode).sum();
    let episodes: usize = runs.iter().map(Vec::len).sum();
    let ratio = collisions as f64 / episodes as f64;
    let detail = format!("{collisions}/{episodes} episodes collided, ratio {:.3}%", 100.0 * ratio);
    if summary.total_collisions != collisions {
        return Err(format!("{detail}; summary says {}", summary.total_collisions));
    }
    if ratio > MIN_UNSHIELDED_RATIO {
        Ok(detail)
    } else {
        Err(detail)
    }
}

pub fn shield_helps_early(t: &Trained) -> Verdict {
    let (_, shielded) = t.get(Variant::Shielded);
    let (_, unshielded) = t.get(Variant::Unshielded);
    let window = early_window(EPISODES);
    let mut lines = Vec::new();
    let mut ok = true;
    for (k, (s, u)) in shielded.iter().zip(unshielded).enumerate() {
        let s_mean = mean_team_reward(&s[..window]).unwrap_or(f64::NAN);
        let u_mean = mean_team_reward(&u[..window]).unwrap_or(f64::NAN);
        ok &= s_mean > u_mean;
        lines.push(format!("seed {} {s_mean:.1} vs {u_mean:.1}", t.config.seeds[k]));
    }
    let detail = format!("first {window} episodes: {}", lines.join(", "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}
