use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use trade_reid::evaluator::BetaGrid;
use trade_reid::selector::{HeuristicScorerConfig, ScorerKind};
use trade_reid::synthworld::WorldConfig;
use trade_reid::{GalleryMode, PipelineConfig};

#[derive(Debug, Parser)]
#[command(
    name = "trade-reid",
    version,
    about = "Live person re-identification over chunked video"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory.
    Gen(GenArgs),
    /// Build galleries, rank queries and evaluate one configuration.
    Run(RunArgs),
    /// Re-evaluate a stored run.
    Eval(EvalArgs),
    /// Run one configuration for several tracklet lengths.
    #[command(name = "sweep-n")]
    SweepN(SweepArgs),
    /// Side-by-side table of gallery modes on one dataset.
    Compare(CompareArgs),
    /// Repeat the command recorded in a manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Noisy multi-camera world used for mode comparisons.
    Default,
    /// One ~1.5 minute clip with sparse traffic.
    ShortClip,
    /// Busy scenes with frequent crossings.
    Crowded,
    /// People visible for the whole video, perfectly detected.
    Persistent,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    pub preset: Preset,
    /// JSON file with world settings; unspecified fields keep preset values.
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Persons for the persistent preset.
    #[arg(long, default_value_t = 3)]
    pub persons: usize,
    /// Frames per video for the persistent preset.
    #[arg(long, default_value_t = 2000)]
    pub frames: u32,
    #[arg(long)]
    pub out_dir: PathBuf,
}

impl GenArgs {
    pub fn world_config(&self) -> anyhow::Result<WorldConfig> {
        let mut base = match self.preset {
            Preset::Default => WorldConfig::default(),
            Preset::ShortClip => WorldConfig::short_clip(self.seed),
            Preset::Crowded => WorldConfig::crowded_crossings(self.seed),
            Preset::Persistent => WorldConfig::persistent(self.persons, self.frames, self.seed),
        };
        base.seed = self.seed;
        let Some(path) = &self.world else {
            return Ok(base);
        };
        let text = std::fs::read_to_string(path).map_err(|e| trade_reid::Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let patch: serde_json::Value =
            serde_json::from_str(&text).map_err(trade_reid::Error::from)?;
        let mut merged = serde_json::to_value(&base)?;
        let obj = patch.as_object().ok_or_else(|| {
            trade_reid::Error::Config(format!("{} must hold a JSON object", path.display()))
        })?;
        for (k, v) in obj {
            if merged.get(k).is_none() {
                return Err(
                    trade_reid::Error::Config(format!("unknown world setting `{k}`")).into(),
                );
            }
            merged[k] = v.clone();
        }
        if obj.get("seed").is_none() {
            merged["seed"] = self.seed.into();
        }
        Ok(serde_json::from_value(merged).map_err(trade_reid::Error::from)?)
    }
}

/// Settings shared by every command that runs the pipeline.
#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Maximum tracklet length and detector period.
    #[arg(long = "n", default_value_t = 20)]
    pub n: usize,
    /// Frames per chunk.
    #[arg(long, default_value_t = 1000)]
    pub tau: u32,
    /// Candidates presented per alert.
    #[arg(long, default_value_t = 20)]
    pub eta: usize,
    #[arg(long, default_value_t = 0.02)]
    pub beta_step: f64,
    #[arg(long, default_value = "heuristic")]
    pub scorer: ScorerKind,
    #[arg(long, default_value = "greedy-iou")]
    pub tracker: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub min_confidence: f64,
    /// Frame size seen by the heuristic scorer.
    #[arg(long, default_value_t = 640.0)]
    pub frame_width: f64,
    #[arg(long, default_value_t = 480.0)]
    pub frame_height: f64,
}

impl PipelineArgs {
    pub fn config(&self, mode: GalleryMode) -> anyhow::Result<PipelineConfig> {
        let cfg = PipelineConfig {
            mode,
            max_len: self.n,
            tau: self.tau,
            eta: self.eta,
            beta_grid: BetaGrid::from_step(self.beta_step)?,
            scorer: self.scorer,
            tracker: self.tracker.clone(),
            min_confidence: self.min_confidence,
            heuristic: HeuristicScorerConfig {
                frame_width: self.frame_width,
                frame_height: self.frame_height,
                ..HeuristicScorerConfig::default()
            },
            seed: self.seed,
            ..PipelineConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "trade")]
    pub mode: GalleryMode,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory written by `run`.
    #[arg(long)]
    pub run_dir: PathBuf,
    /// Dataset directory; defaults to the one recorded in the run manifest.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "trade")]
    pub mode: GalleryMode,
    /// Tracklet lengths to run.
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,20,40,80")]
    pub ns: Vec<usize>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Dataset directory to run every mode on.
    #[arg(long, requires = "modes", conflicts_with = "runs")]
    pub data: Option<PathBuf>,
    /// Modes to compare, e.g. `baseline,skip,trade`.
    #[arg(long, value_delimiter = ',')]
    pub modes: Vec<GalleryMode>,
    /// Directories written by `run`, compared as stored.
    #[arg(long, num_args = 1.., required_unless_present = "data")]
    pub runs: Vec<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    /// Manifest file written by an earlier command.
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}
