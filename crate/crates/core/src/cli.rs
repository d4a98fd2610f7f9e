//! Command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::dataset::{draw_statistics, relabel, render_one, resume_campaign, run_campaign, Campaign, CampaignConfig};
use crate::error::Result;
use crate::eval::{evaluate, load_predictions, UseCaseRule};
use crate::jsonio::write_json;
use crate::label::CocoDataset;

#[derive(Debug, Parser)]
#[command(name = "drgen", version, about = "Domain-randomized synthetic dataset generator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a campaign config and its scene; print the normalized config digest.
    Validate {
        /// Campaign config JSON.
        #[arg(long)]
        config: PathBuf,
    },
    /// Render one frame of a campaign with the campaign's file layout.
    RenderOne {
        /// Campaign config JSON.
        #[arg(long)]
        config: PathBuf,
        /// Frame index within the campaign.
        #[arg(long)]
        frame: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a full dataset.
    Generate {
        /// Campaign config JSON.
        #[arg(long)]
        config: PathBuf,
        /// Complete an interrupted campaign in the configured output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Re-derive annotations from stored ID maps under the config's label policy.
    Relabel {
        /// Campaign config JSON.
        #[arg(long)]
        config: PathBuf,
        /// Directory for the new annotations/ (default: the dataset itself).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score detections against COCO ground truth.
    Eval {
        /// Ground-truth COCO annotations.
        #[arg(long)]
        gt: PathBuf,
        /// Detections as a COCO results array.
        #[arg(long)]
        pred: PathBuf,
        /// Use-case rule JSON.
        #[arg(long)]
        rule: PathBuf,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Histogram the material, HDRI and rotation draws of simulated frames.
    Stats {
        /// Campaign config JSON.
        #[arg(long)]
        config: PathBuf,
        /// Number of frames to sample.
        #[arg(long, default_value_t = 1000)]
        samples: u64,
        /// Write the JSON statistics here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_campaign(config: &Path) -> Result<Campaign> {
    Campaign::load(config)
}

/// Executes a parsed command, returning what it prints on stdout.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Validate { config } => {
            let c = load_campaign(&config)?;
            Ok(format!(
                "ok: {} frames, {} parts ({} labeled), {} HDRIs\nconfig digest: {}\n",
                c.config.total_images,
                c.scene.parts.len(),
                c.scene.labeled_parts().count(),
                c.randomizer.hdri_count(),
                c.config.digest()
            ))
        }
        Command::RenderOne { config, frame, out } => {
            let c = load_campaign(&config)?;
            let r = render_one(&c, frame, &out)?;
            Ok(format!("frame {frame}: {} ({} annotations)\n", out.join(&r.image).display(), r.annotations.len()))
        }
        Command::Generate { config, resume } => {
            let cfg = CampaignConfig::load(&config)?;
            let manifest = if resume { resume_campaign(cfg)? } else { run_campaign(cfg)? };
            let counts: Vec<String> = manifest.split_counts.iter().map(|(s, n)| format!("{} {n}", s.dir())).collect();
            Ok(format!("generated {} frames ({})\n", manifest.records.len(), counts.join(", ")))
        }
        Command::Relabel { config, out } => {
            let summary = relabel(CampaignConfig::load(&config)?, out.as_deref())?;
            let counts: Vec<String> = summary.annotations.iter().map(|(s, n)| format!("{} {n}", s.dir())).collect();
            Ok(format!(
                "relabeled {} frames into {} ({})\n",
                summary.frames,
                summary.output.join("annotations").display(),
                counts.join(", ")
            ))
        }
        Command::Eval { gt, pred, rule, out } => {
            let gt = CocoDataset::load(&gt)?;
            let preds = load_predictions(&pred)?;
            let rule = UseCaseRule::load(&rule)?;
            let report = evaluate(&gt, &preds, &rule)?;
            if let Some(out) = out {
                write_json(&out, &report)?;
            }
            Ok(report.table())
        }
        Command::Stats { config, samples, out } => {
            let c = load_campaign(&config)?;
            let stats = draw_statistics(&c, samples)?;
            if let Some(out) = out {
                write_json(&out, &stats)?;
            }
            Ok(stats.render_text())
        }
    }
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::FAILURE
        }
    }
}
