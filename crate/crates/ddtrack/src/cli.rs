//! `ddtrack <stage> --config <path> [--out <dir>] [--seed N] [--profile paper|desk]`

use std::path::PathBuf;

use clap::Parser;

use crate::config::{ExperimentConfig, Profile};
use crate::pipeline::{run_stage, Stage};

#[derive(Debug, Parser)]
#[command(name = "ddtrack", version, about = "Delay-Doppler multi-target tracking: EvolveGCN vs. DBSCAN/GNN/Kalman baseline")]
pub struct Cli {
    /// Pipeline stage to run.
    #[arg(value_enum)]
    pub stage: Stage,
    /// Experiment config (TOML), laid over the selected profile.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Experiment seed (overrides `seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Base profile (overrides the file's `profile` key).
    #[arg(long, value_enum)]
    pub profile: Option<Profile>,
}

impl Cli {
    pub fn experiment(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config, self.profile)?;
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parse and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let cfg = match cli.experiment() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("ddtrack: {} stage failed: config: {e:#}", cli.stage);
            return 2;
        }
    };
    match run_stage(cli.stage, &cfg) {
        Ok(()) => {
            println!("ddtrack {}: done, outputs in {}", cli.stage, cfg.out_dir.display());
            0
        }
        Err(e) => {
            eprintln!("ddtrack: {e}");
            1
        }
    }
}
