use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use dropsync_eval::{CombinerKind, ExperimentConfig};
use dropsync_neural::Preset;

use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "dropsync", version, about = "Sample-drop detection in multi-device recordings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand. Unset flags keep the value of the
/// experiment config (`--experiment`) or the desk defaults.
#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = ["desk", "paper"])]
    pub preset: Option<String>,
    #[arg(long = "frame-ms", value_parser = parse_frame_ms)]
    pub frame_ms: Option<u32>,
    #[arg(long, value_parser = ["mean", "median", "majority"])]
    pub combiner: Option<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Experiment config JSON (corpus sizes, training stages, sampler).
    #[arg(long)]
    pub experiment: Option<PathBuf>,
    /// Root under which the run directory is created.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
}

fn parse_frame_ms(s: &str) -> std::result::Result<u32, String> {
    match s.parse::<u32>() {
        Ok(v @ (32 | 64)) => Ok(v),
        _ => Err(format!("`{s}` is not one of 32, 64")),
    }
}

impl Common {
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let preset = self.preset.as_deref().map(Preset::from_name).transpose()?;
        let mut cfg = match &self.experiment {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                let mut cfg: ExperimentConfig =
                    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                if let Some(p) = preset {
                    cfg.preset = p;
                }
                cfg
            }
            None => ExperimentConfig::for_preset(preset.unwrap_or(Preset::Desk), 0),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(f) = self.frame_ms {
            cfg.frame_len_ms = f;
        }
        if let Some(c) = &self.combiner {
            cfg.combiner = CombinerKind::from_name(c)?;
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct XcorrFlags {
    /// Pattern length in seconds.
    #[arg(long = "pattern-s")]
    pub pattern_s: Option<f64>,
    /// Search radius in seconds.
    #[arg(long = "radius-s")]
    pub radius_s: Option<f64>,
    /// Anchor step in seconds.
    #[arg(long = "step-s")]
    pub step_s: Option<f64>,
    /// Smallest shift change, in frames, reported as a jump.
    #[arg(long = "min-jump")]
    pub min_jump: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a multi-device scene to one WAV per device plus ground truth.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Scene config JSON; sampled from the experiment sampler when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Device count for sampled scenes.
        #[arg(long, default_value_t = 6)]
        devices: usize,
    },
    /// Inject sample drops into a rendered scene.
    Inject {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 1)]
        drops: usize,
        /// Drop-duration distribution JSON (mean, std, left_cut, unit).
        #[arg(long = "drop-config")]
        drop_config: Option<PathBuf>,
    },
    /// Cross-correlation shift tracks and drop candidates.
    Xcorr {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        xcorr: XcorrFlags,
    },
    /// Two-stage training on the synthetic corpora.
    Train {
        #[command(flatten)]
        common: Common,
        /// attention, attention-kref or concat.
        #[arg(long, default_value = "attention")]
        head: String,
    },
    /// Window-level P/R/F1 of a checkpoint on the eval split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Full detection pipeline on a scene directory.
    Detect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        xcorr: XcorrFlags,
    },
    /// Finite-difference check of the full model's gradients.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "attention")]
        head: String,
        /// Input length in frames.
        #[arg(long, default_value_t = 12)]
        frames: usize,
        /// Approximate number of parameter coordinates to probe.
        #[arg(long, default_value_t = 3000)]
        coords: usize,
    },
    /// Train and score the four ablation rows.
    Table1 {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Inject { .. } => "inject",
            Command::Xcorr { .. } => "xcorr",
            Command::Train { .. } => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::Detect { .. } => "detect",
            Command::Gradcheck { .. } => "gradcheck",
            Command::Table1 { .. } => "table1",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Simulate { common, .. }
            | Command::Inject { common, .. }
            | Command::Xcorr { common, .. }
            | Command::Train { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Detect { common, .. }
            | Command::Gradcheck { common, .. }
            | Command::Table1 { common } => common,
        }
    }
}
