//! `report`: collision table and averaged reward curve from a training
//! output directory.

use std::fmt::Write;
use std::path::{Path, PathBuf};

use crate::artifacts::{
    read_metrics, run_dir, write_text, MetricsRow, RunSummary, Summary, Variant, CHECKPOINT_FILE, METRICS_FILE,
    SUMMARY_FILE,
};
use crate::error::CliError;
use crate::svg::{line_chart, with_metadata, Series};

pub const REPORT_FILE: &str = "report.md";
pub const REWARD_CURVE_FILE: &str = "reward_curve.svg";

/// One variant's verified runs.
#[derive(Debug, Clone)]
pub struct VariantRuns {
    pub variant: Variant,
    pub summary: Summary,
    pub metrics: Vec<Vec<MetricsRow>>,
}

impl VariantRuns {
    /// Per-episode team reward averaged over runs, truncated to the
    /// shortest run.
    pub fn mean_reward_curve(&self) -> Vec<f64> {
        let len = self.metrics.iter().map(Vec::len).min().unwrap_or(0);
        (0..len)
            .map(|e| self.metrics.iter().map(|rows| rows[e].team_reward()).sum::<f64>() / self.metrics.len() as f64)
            .collect()
    }
}

/// Collisions over episodes as a percentage with three decimals.
pub fn percent(ratio: f64) -> String {
    format!("{:.3}%", 100.0 * ratio)
}

/// Load and cross-check every run listed in each variant summary.
pub fn load(dir: &Path) -> Result<Vec<VariantRuns>, CliError> {
    let mut missing: Vec<PathBuf> = Vec::new();
    let mut found = Vec::new();
    for v in Variant::ALL {
        let vdir = dir.join(v.dir_name());
        if !vdir.is_dir() {
            continue;
        }
        let spath = vdir.join(SUMMARY_FILE);
        if !spath.is_file() {
            missing.push(spath);
            continue;
        }
        let summary = Summary::read(&spath)?;
        if summary.variant != v {
            return Err(CliError::Artifact(format!(
                "{}: variant {:?} stored under {}",
                spath.display(),
                summary.variant,
                v.dir_name()
            )));
        }
        for r in &summary.runs {
            let rd = run_dir(dir, v, r.run.saturating_sub(1));
            for f in [METRICS_FILE, CHECKPOINT_FILE] {
                if !rd.join(f).is_file() {
                    missing.push(rd.join(f));
                }
            }
        }
        found.push((v, summary));
    }
    if found.is_empty() && missing.is_empty() {
        missing = Variant::ALL
            .iter()
            .map(|v| dir.join(v.dir_name()).join(SUMMARY_FILE))
            .collect();
    }
    if !missing.is_empty() {
        return Err(CliError::Missing(missing));
    }

    found
        .into_iter()
        .map(|(variant, summary)| {
            let metrics = summary
                .runs
                .iter()
                .map(|r| {
                    let path = run_dir(dir, variant, r.run.saturating_sub(1)).join(METRICS_FILE);
                    let (prov, rows) = read_metrics(&path)?;
                    check_run(&path, r, prov.map(|p| p.seed), &rows)?;
                    Ok(rows)
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            Ok(VariantRuns {
                variant,
                summary,
                metrics,
            })
        })
        .collect()
}

/// The metrics file must reproduce the summary's counts.
fn check_run(path: &Path, r: &RunSummary, seed: Option<u64>, rows: &[MetricsRow]) -> Result<(), CliError> {
    let recomputed = RunSummary::from_rows(r.run, r.seed, rows);
    let same = recomputed.episodes == r.episodes
        && recomputed.collision_episodes == r.collision_episodes
        && recomputed.collision_steps == r.collision_steps;
    if !same {
        return Err(CliError::Artifact(format!(
            "{}: {} episodes / {} collisions, summary says {} / {}",
            path.display(),
            recomputed.episodes,
            recomputed.collision_episodes,
            r.episodes,
            r.collision_episodes
        )));
    }
    if seed.is_some_and(|s| s != r.seed) {
        return Err(CliError::Artifact(format!(
            "{}: seed {:?}, summary says {}",
            path.display(),
            seed,
            r.seed
        )));
    }
    Ok(())
}

fn opt(x: Option<f64>, decimals: usize) -> String {
    x.map_or("n/a".to_string(), |v| format!("{v:.decimals$}"))
}

pub fn markdown(variants: &[VariantRuns]) -> String {
    let mut md = String::from("# Training report\n\n");
    let head: Vec<&str> = variants.iter().map(|v| v.variant.label()).collect();
    let _ = writeln!(md, "| | {} |", head.join(" | "));
    let _ = writeln!(md, "|---|{}", "---:|".repeat(variants.len()));
    let row = |label: &str, cell: &dyn Fn(&Summary) -> String| {
        let cells: Vec<String> = variants.iter().map(|v| cell(&v.summary)).collect();
        format!("| {label} | {} |\n", cells.join(" | "))
    };
    md += &row("Number of collisions", &|s| s.total_collisions.to_string());
    md += &row("Number of episodes", &|s| s.total_episodes.to_string());
    md += &row("Collision ratio", &|s| percent(s.collision_ratio));
    md += &row("Runs", &|s| s.runs.len().to_string());
    md += "\nA collision is an episode in which an agent came within the safe distance of the other agent or an obstacle.\n";
    md += "\n## Runs\n\n";
    md += "| Variant | Run | Seed | Episodes | Collisions | Collision steps | Ratio | Min distance | Mean reward | Early mean reward |\n";
    md += "|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n";
    for v in variants {
        for r in &v.summary.runs {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                v.variant.label(),
                r.run,
                r.seed,
                r.episodes,
                r.collision_episodes,
                r.collision_steps,
                percent(r.collision_ratio),
                opt(r.min_dist, 4),
                opt(r.mean_team_reward, 1),
                opt(r.early_mean_team_reward, 1),
            );
        }
    }
    md += "\nEarly mean reward averages the first tenth of each run's episodes. Rewards are team totals (Patrolman I plus Patrolman II).\n";
    md
}

/// Seeds and resolved configuration of each variant.
pub fn provenance(variants: &[VariantRuns]) -> serde_json::Value {
    variants
        .iter()
        .map(|v| {
            serde_json::json!({
                "variant": v.variant,
                "seeds": v.summary.runs.iter().map(|r| r.seed).collect::<Vec<_>>(),
                "config": v.summary.config,
            })
        })
        .collect()
}

/// `markdown` followed by the provenance of every variant.
pub fn report_file(variants: &[VariantRuns]) -> String {
    let mut md = markdown(variants);
    md += "\n## Provenance\n";
    for v in variants {
        let seeds: Vec<String> = v.summary.runs.iter().map(|r| r.seed.to_string()).collect();
        let config = serde_json::to_string_pretty(&v.summary.config).expect("config serializes");
        let _ = write!(
            md,
            "\n{} seeds: {}\n\n```json\n{config}\n```\n",
            v.variant.label(),
            seeds.join(", ")
        );
    }
    md
}

pub fn reward_curve(variants: &[VariantRuns]) -> String {
    let colors = ["#2ca02c", "#9467bd"];
    let series: Vec<Series> = variants
        .iter()
        .map(|v| Series {
            label: v.variant.label(),
            color: colors[v.variant as usize],
            points: v
                .mean_reward_curve()
                .into_iter()
                .enumerate()
                .map(|(e, r)| (e as f64, r))
                .collect(),
        })
        .collect();
    let svg = line_chart("Average total reward", "episode", "team reward", &series);
    with_metadata(&svg, &provenance(variants).to_string())
}

/// Write `report.md` and `reward_curve.svg` into `dir`.
pub fn run(dir: &Path) -> Result<Vec<VariantRuns>, CliError> {
    let variants = load(dir)?;
    write_text(&dir.join(REPORT_FILE), &report_file(&variants))?;
    write_text(&dir.join(REWARD_CURVE_FILE), &reward_curve(&variants))?;
    Ok(variants)
}
