//! Run configuration: flags override the config file, which overrides
//! built-in defaults.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Deserialize;

use kgexplain::explain::BandThresholds;
use kgexplain::extraction::DEFAULT_CHUNK_SIZE;
use kgexplain::generator::{LiveConfig, RetryPolicy};
use kgexplain::retrieval::RetrievalSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Live,
    Replay,
}

/// Keys accepted in the config file; all optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub corpus: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub backend: Option<BackendKind>,
    pub mock_rules: Option<PathBuf>,
    pub replay_dir: Option<PathBuf>,
    pub record_dir: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
    pub timeout_secs: Option<u64>,
    pub retries: Option<u32>,
    pub chunk_size: Option<usize>,
    pub max_paths: Option<usize>,
    pub fallback_k: Option<usize>,
    pub window: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub in_flight: Option<usize>,
    pub band_high: Option<usize>,
    pub band_moderate: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Default, Clone, Args)]
pub struct CommonArgs {
    /// Flat TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Corpus file or directory (.txt and .jsonl documents).
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Graph file (JSONL).
    #[arg(long, global = true)]
    pub graph: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Mock rule table (JSON) for the mock backend.
    #[arg(long, global = true)]
    pub mock_rules: Option<PathBuf>,
    /// Recorded exchanges for the replay backend.
    #[arg(long, global = true)]
    pub replay_dir: Option<PathBuf>,
    /// Record every live exchange into this directory.
    #[arg(long, global = true)]
    pub record_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Text-baseline window size, in tokens.
    #[arg(long, global = true)]
    pub window: Option<usize>,
    #[arg(long, global = true)]
    pub max_paths: Option<usize>,
    #[arg(long, global = true)]
    pub fallback_k: Option<usize>,
    #[arg(long, global = true)]
    pub chunk_size: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Questions processed in parallel.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Concurrent generator calls.
    #[arg(long, global = true)]
    pub in_flight: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub graph: PathBuf,
    pub out: PathBuf,
    pub backend: BackendKind,
    pub mock_rules: Option<PathBuf>,
    pub replay_dir: Option<PathBuf>,
    pub record_dir: Option<PathBuf>,
    pub live: LiveConfig,
    pub timeout: Duration,
    pub chunk_size: usize,
    pub retrieval: RetrievalSettings,
    pub window: usize,
    pub seed: Option<u64>,
    pub jobs: usize,
    pub in_flight: usize,
    pub bands: BandThresholds,
}

pub const DEFAULT_WINDOW: usize = 5;
pub const DEFAULT_OUT: &str = "out";

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        Self::merge(args, file)
    }

    pub fn merge(a: &CommonArgs, f: FileConfig) -> Result<Self> {
        let out = a.out.clone().or(f.out).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        let defaults = LiveConfig::default();
        let mut retry = RetryPolicy::default();
        if let Some(r) = f.retries {
            retry.retries = r;
        }
        let cfg = Self {
            corpus: a.corpus.clone().or(f.corpus),
            graph: a.graph.clone().or(f.graph).unwrap_or_else(|| out.join("graph.jsonl")),
            backend: a.backend.or(f.backend).unwrap_or(BackendKind::Mock),
            mock_rules: a.mock_rules.clone().or(f.mock_rules),
            replay_dir: a.replay_dir.clone().or(f.replay_dir),
            record_dir: a.record_dir.clone().or(f.record_dir),
            live: LiveConfig {
                endpoint: a.endpoint.clone().or(f.endpoint).unwrap_or(defaults.endpoint),
                model: a.model.clone().or(f.model).unwrap_or(defaults.model),
                api_key_env: f.api_key_env.unwrap_or(defaults.api_key_env),
                retry,
            },
            timeout: Duration::from_secs(f.timeout_secs.unwrap_or(60)),
            chunk_size: a.chunk_size.or(f.chunk_size).unwrap_or(DEFAULT_CHUNK_SIZE),
            retrieval: RetrievalSettings {
                max_paths: a
                    .max_paths
                    .or(f.max_paths)
                    .unwrap_or(RetrievalSettings::default().max_paths),
                fallback_k: a
                    .fallback_k
                    .or(f.fallback_k)
                    .unwrap_or(RetrievalSettings::default().fallback_k),
            },
            window: a.window.or(f.window).unwrap_or(DEFAULT_WINDOW),
            seed: a.seed.or(f.seed),
            jobs: a.jobs.or(f.jobs).unwrap_or(1),
            in_flight: a.in_flight.or(f.in_flight).unwrap_or(4),
            bands: BandThresholds {
                high: f.band_high.unwrap_or(BandThresholds::default().high),
                moderate: f.band_moderate.unwrap_or(BandThresholds::default().moderate),
            },
            out,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let ranged = |name: &str, v: usize, lo: usize, hi: usize| {
            if v < lo || v > hi {
                bail!("{name} must be in {lo}..={hi}, got {v}");
            }
            Ok(())
        };
        ranged("chunk_size", self.chunk_size, 1, 1_000_000)?;
        ranged("max_paths", self.retrieval.max_paths, 1, 1000)?;
        ranged("fallback_k", self.retrieval.fallback_k, 1, 1000)?;
        ranged("window", self.window, 1, 100_000)?;
        ranged("jobs", self.jobs, 1, 256)?;
        ranged("in_flight", self.in_flight, 1, 256)?;
        if self.bands.moderate == 0 || self.bands.high < self.bands.moderate {
            bail!("band thresholds need 1 <= band_moderate <= band_high");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file: FileConfig = toml::from_str("window = 7\nmax_paths = 2\nout = \"from-file\"\n").unwrap();
        let args = CommonArgs {
            window: Some(9),
            ..Default::default()
        };
        let cfg = RunConfig::merge(&args, file).unwrap();
        assert_eq!(cfg.window, 9);
        assert_eq!(cfg.retrieval.max_paths, 2);
        assert_eq!(cfg.retrieval.fallback_k, 3);
        assert_eq!(cfg.graph, PathBuf::from("from-file/graph.jsonl"));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_ranges() {
        assert!(toml::from_str::<FileConfig>("windw = 3\n").is_err());
        let args = CommonArgs {
            window: Some(0),
            ..Default::default()
        };
        assert!(RunConfig::merge(&args, FileConfig::default()).is_err());
    }
}
