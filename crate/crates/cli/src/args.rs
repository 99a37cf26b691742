//! Command-line interface definition and dispatch.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{self, Overrides};
use crate::error::CliError;
use crate::report::{percent, REPORT_FILE, REWARD_CURVE_FILE};
use crate::{eval, report, train};

/// Environment variable consulted when `--out` is absent.
pub const OUT_ENV: &str = "CBF_SHIELD_OUT";

#[derive(Debug, Parser)]
#[command(name = "safemarl", version, about = "Shielded multi-agent patrol training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train every configured run and write metrics, checkpoints and a summary.
    Train(TrainArgs),
    /// Roll out a checkpoint greedily and plot the trajectories.
    Eval(EvalArgs),
    /// Tabulate collisions and plot the averaged reward curve.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of runs; seeds become consecutive from the first seed.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Episodes per run.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Train without the safety shield.
    #[arg(long)]
    pub no_shield: bool,
    /// First run seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output root.
    #[arg(long, env = OUT_ENV)]
    pub out: Option<PathBuf>,
    /// Runs trained concurrently; defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Suppress per-run progress lines.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Configuration to evaluate under; defaults to the one in the checkpoint.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of greedy episodes.
    #[arg(long, default_value_t = 1)]
    pub episodes: usize,
    /// Reset seed of the first episode; defaults to the training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Evaluate without the safety shield.
    #[arg(long)]
    pub no_shield: bool,
    /// Output root; results go to its `eval` subdirectory.
    #[arg(long, env = OUT_ENV)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Training output root holding `shielded/` and `unshielded/`.
    #[arg(env = OUT_ENV, default_value = "out")]
    pub dir: PathBuf,
}

/// Run a parsed command; returns the text for stdout.
pub fn execute(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn cmd_train(a: TrainArgs) -> Result<String, CliError> {
    let base = config::load(a.config.as_deref())?;
    let resolved = config::resolve(
        base,
        &Overrides {
            runs: a.runs,
            episodes: a.episodes,
            no_shield: a.no_shield,
            seed: a.seed,
            out: a.out,
        },
    )?;
    let mut options = train::TrainOptions {
        progress: !a.quiet,
        ..train::TrainOptions::default()
    };
    if let Some(j) = a.jobs {
        options.jobs = j;
    }
    let (summary, path) = train::run(&resolved, options)?;
    Ok(format!(
        "{}: {} runs, {} collisions in {} episodes ({})\nsummary: {}\n",
        summary.variant.dir_name(),
        summary.runs.len(),
        summary.total_collisions,
        summary.total_episodes,
        percent(summary.collision_ratio),
        path.display()
    ))
}

fn cmd_eval(a: EvalArgs) -> Result<String, CliError> {
    let config = a.config.as_deref().map(|p| config::load(Some(p))).transpose()?;
    let root = match (&a.out, &config) {
        (Some(out), _) => out.clone(),
        (None, Some(c)) => c.output_dir.clone(),
        (None, None) => eval::load_checkpoint(&a.checkpoint)?.1.config.output_dir,
    };
    let out = root.join("eval");
    let summary = eval::run(&eval::EvalRequest {
        checkpoint: a.checkpoint,
        config,
        episodes: a.episodes,
        seed: a.seed,
        shield: !a.no_shield,
        out: out.clone(),
    })?;
    let mut text = String::new();
    for e in &summary.episodes {
        text += &format!(
            "episode {} (seed {}): {} steps, {} check-ins, {} collision steps, min distance {:.4}\n",
            e.episode, e.seed, e.steps, e.checkins_reached, e.collision_steps, e.min_dist
        );
    }
    text += &format!("output: {}\n", out.display());
    Ok(text)
}

fn cmd_report(a: ReportArgs) -> Result<String, CliError> {
    let variants = report::run(&a.dir)?;
    let mut text = report::markdown(&variants);
    text += &format!(
        "\nwrote {} and {}\n",
        a.dir.join(REPORT_FILE).display(),
        a.dir.join(REWARD_CURVE_FILE).display()
    );
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn train_flags_parse() {
        let cli = Cli::try_parse_from([
            "safemarl",
            "train",
            "--config",
            "c.json",
            "--runs",
            "5",
            "--episodes",
            "0",
            "--no-shield",
            "--seed",
            "9",
            "--out",
            "o",
        ])
        .unwrap();
        let Command::Train(a) = cli.command else { panic!() };
        assert_eq!(a.runs, Some(5));
        assert_eq!(a.episodes, Some(0));
        assert!(a.no_shield);
        assert_eq!(a.seed, Some(9));
        assert_eq!(a.out, Some(PathBuf::from("o")));
    }

    #[test]
    fn eval_requires_a_checkpoint() {
        assert!(Cli::try_parse_from(["safemarl", "eval"]).is_err());
    }
}
