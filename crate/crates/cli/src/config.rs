//! Loading the run configuration and applying command-line overrides.

use std::path::{Path, PathBuf};

use safemarl::{ConfigError, RunConfig};

use crate::error::CliError;

/// Command-line values that replace fields of the loaded configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub runs: Option<usize>,
    pub episodes: Option<usize>,
    pub no_shield: bool,
    /// First seed; runs use consecutive seeds from here.
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Read and parse a JSON configuration, or the defaults when `path` is
/// `None`. Parse and validation errors name the file and line.
pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, &path.display().to_string())
}

/// Parse and validate `text`; `origin` prefixes every message.
pub fn parse(text: &str, origin: &str) -> Result<RunConfig, CliError> {
    let config = RunConfig::from_json(text).map_err(|e| located(e, text, origin))?;
    config.validate().map_err(|e| located(e, text, origin))?;
    Ok(config)
}

fn located(e: ConfigError, text: &str, origin: &str) -> CliError {
    match e {
        ConfigError::Parse { line, column, message } => {
            CliError::Config(format!("{origin}:{line}:{column}: {}", strip_position(&message)))
        }
        ConfigError::Invalid(message) => match key_line(text, &message) {
            Some(line) => CliError::Config(format!("{origin}:{line}: {message}")),
            None => CliError::Config(format!("{origin}: {message}")),
        },
    }
}

/// serde_json appends " at line L column C"; the prefix already says so.
fn strip_position(message: &str) -> &str {
    message.find(" at line ").map_or(message, |k| &message[..k])
}

/// Line of the first JSON key named in a validation message, if the file
/// spells one out.
fn key_line(text: &str, message: &str) -> Option<usize> {
    let words = message
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|w| w.len() > 1);
    let mut best: Option<usize> = None;
    for w in words {
        let key = format!("\"{w}\"");
        if let Some(line) = text.lines().position(|l| l.contains(&key)) {
            // Prefer the most specific, i.e. latest, key mentioned.
            best = Some(best.map_or(line + 1, |b| b.max(line + 1)));
        }
    }
    best
}

/// Apply `o` to `config` and revalidate. The output directory resolves as
/// `--out`, then `CBF_SHIELD_OUT` (handled by the argument parser), then
/// the configuration file.
pub fn resolve(mut config: RunConfig, o: &Overrides) -> Result<RunConfig, CliError> {
    if let Some(n) = o.episodes {
        config.trainer.episodes = n;
    }
    if o.no_shield {
        config.shield_enabled = false;
    }
    if o.runs.is_some() || o.seed.is_some() {
        let runs = o.runs.unwrap_or(config.runs);
        let first = o.seed.or(config.seeds.first().copied()).unwrap_or(1);
        config.runs = runs;
        config.seeds = RunConfig::seed_range(first, runs);
    }
    if let Some(out) = &o.out {
        config.output_dir = out.clone();
    }
    config
        .validate()
        .map_err(|e| CliError::Config(format!("after command-line overrides: {e}")))?;
    Ok(config)
}
