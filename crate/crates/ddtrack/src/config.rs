//! Experiment configuration and the built-in `paper` / `desk` profiles.
//!
//! A config file is a TOML table laid over the selected profile: tables are
//! merged key by key, every other value replaces the profile's. Unknown keys
//! are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ddtrack_core::baseline::BaselineParams;
use ddtrack_core::channel::OfdmParams;
use ddtrack_core::detect::{CfarThreshold, OsCfarParams};
use ddtrack_core::graph::Thresholds;
use ddtrack_core::rng::rng_from;
use ddtrack_core::scene::{GainRange, Scene, SceneGenerator};
use ddtrack_core::tgnn::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Table values of the reference setup: 1024 x 1400 grid.
    Paper,
    /// 256 x 256 grid with the same delay/Doppler resolution.
    Desk,
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Paper => "paper",
            Profile::Desk => "desk",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphParams {
    /// Edge thresholds in bins (delay, Doppler).
    pub edge_delay_bins: f64,
    pub edge_doppler_bins: f64,
    /// Labelling gate in bins (delay, Doppler).
    pub label_delay_bins: f64,
    pub label_doppler_bins: f64,
}

impl GraphParams {
    pub fn edge_thresholds(&self, ofdm: &OfdmParams) -> Thresholds {
        Thresholds::from_bins(self.edge_delay_bins, self.edge_doppler_bins, ofdm)
    }

    pub fn label_gate(&self, ofdm: &OfdmParams) -> Thresholds {
        Thresholds::from_bins(self.label_delay_bins, self.label_doppler_bins, ofdm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactOptions {
    /// Also dump every CFR window (large).
    pub cfr_dumps: bool,
    /// PNG heatmap of the first window of each scene.
    pub heatmaps: bool,
    /// SVG track and RMSE plots from `report`.
    pub plots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Number of generated scenes; ignored when `scenes` is non-empty.
    pub n_scenes: usize,
    pub ofdm: OfdmParams,
    pub scene_generator: SceneGenerator,
    /// Explicit scenes, used instead of the generator when present.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scenes: Vec<Scene>,
    pub cfar: OsCfarParams,
    pub graph: GraphParams,
    pub train: TrainConfig,
    pub baseline: BaselineParams,
    pub artifacts: ArtifactOptions,
}

/// Per-target RCS ranges (dB) of the reference target set.
const TARGET_GAINS: [(f64, f64); 3] = [(-1.36, 33.98), (3.44, 32.97), (3.85, 7.54)];

impl ExperimentConfig {
    pub fn profile(profile: Profile) -> Self {
        let target_gains = TARGET_GAINS.iter().map(|&(min_db, max_db)| GainRange { min_db, max_db }).collect();
        let scene_generator = SceneGenerator {
            area_size: 100.0,
            tx_height: 10.0,
            rx_height: 10.0,
            target_height: 1.5,
            min_clearance: 10.0,
            min_baseline: 30.0,
            speed_min_kmh: 10.0,
            speed_max_kmh: 15.0,
            carrier_freq: 5e9,
            // 36 dB below unit gain: with the 48 dB processing gain of a
            // 256 x 256 window the targets peak 16-46 dB above the noise.
            noise_power: Some(4e3),
            los_gain_db: Some(20.0),
            target_gains,
        };
        let ofdm = match profile {
            // 15 s tracking time in 30 windows: P = 7500 symbols of 1/15 kHz.
            Profile::Paper => OfdmParams::new(15e3, 1024, 1400, 7500, 30),
            // Same 65.1 ns / 10.71 Hz bins on a 256 x 256 grid: 60 kHz spacing
            // and symbols sampled every 1400/256 reference symbols.
            Profile::Desk => {
                let symbol_duration = 1400.0 / 15e3 / 256.0;
                OfdmParams { symbol_duration, ..OfdmParams::new(60e3, 256, 256, (0.5 / symbol_duration).round() as usize, 30) }
            }
        };
        Self {
            profile,
            seed: 2024,
            out_dir: PathBuf::from("out"),
            n_scenes: 4,
            ofdm,
            scene_generator,
            scenes: Vec::new(),
            cfar: OsCfarParams { threshold: CfarThreshold::Pfa(1e-4), ..OsCfarParams::default() },
            graph: GraphParams { edge_delay_bins: 9.0, edge_doppler_bins: 9.0, label_delay_bins: 9.0, label_doppler_bins: 9.0 },
            train: TrainConfig::default(),
            baseline: BaselineParams::default(),
            artifacts: ArtifactOptions { cfr_dumps: false, heatmaps: true, plots: true },
        }
    }

    /// Parse `text` over the profile named by `profile`, else by the file's
    /// own `profile` key, else `desk`.
    pub fn from_toml_str(text: &str, profile: Option<Profile>) -> Result<Self> {
        let file: toml::Table = toml::from_str(text).context("config is not valid TOML")?;
        let named = match file.get("profile") {
            Some(v) => Some(Profile::deserialize(v.clone()).context("unknown profile")?),
            None => None,
        };
        let chosen = profile.or(named).unwrap_or(Profile::Desk);
        let mut merged = toml::Table::try_from(Self::profile(chosen)).context("serializing profile defaults")?;
        merge(&mut merged, file);
        merged.insert("profile".into(), toml::Value::String(chosen.to_string()));
        let config: Self = toml::Value::Table(merged).try_into().context("invalid config")?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, profile: Option<Profile>) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml_str(&text, profile).with_context(|| format!("loading config {}", path.display()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.ofdm.validate()?;
        self.cfar.rank()?;
        self.cfar.alpha()?;
        self.train.validate()?;
        // Seeds are written back to TOML, whose integers are signed 64-bit.
        if i64::try_from(self.seed).is_err() || i64::try_from(self.train.seed).is_err() {
            bail!("seeds must be below 2^63");
        }
        if self.scenes.is_empty() && self.n_scenes == 0 {
            bail!("n_scenes must be at least 1");
        }
        if self.scene_generator.target_gains.is_empty() && self.scenes.is_empty() {
            bail!("the scene generator needs at least one target");
        }
        for s in &self.scenes {
            s.validate()?;
        }
        if self.scenes.windows(2).any(|w| w[0].targets.len() != w[1].targets.len()) {
            bail!("all scenes must have the same number of targets");
        }
        let g = &self.graph;
        if [g.edge_delay_bins, g.edge_doppler_bins, g.label_delay_bins, g.label_doppler_bins].iter().any(|&b| !(b > 0.0)) {
            bail!("graph thresholds must be positive");
        }
        if !(self.baseline.dbscan.eps > 0.0) || self.baseline.dbscan.min_pts == 0 {
            bail!("DBSCAN needs eps > 0 and min_pts >= 1");
        }
        let map_d = 2 * (self.cfar.guard_delay + self.cfar.train_delay) + 1;
        let map_p = 2 * (self.cfar.guard_doppler + self.cfar.train_doppler) + 1;
        if self.ofdm.n_subcarriers <= map_d || self.ofdm.symbols_per_window <= map_p {
            bail!("CFAR window {map_d}x{map_p} does not fit the {}x{} map", self.ofdm.n_subcarriers, self.ofdm.symbols_per_window);
        }
        Ok(())
    }

    /// The scenes of this experiment: the explicit list, or `n_scenes`
    /// generated ones, scene `s` drawn from the stream `(seed, s)`.
    pub fn resolve_scenes(&self) -> Vec<Scene> {
        if !self.scenes.is_empty() {
            return self.scenes.clone();
        }
        (0..self.n_scenes).map(|s| self.scene_generator.generate(&mut rng_from(self.seed, &[SCENE_STREAM, s as u64]))).collect()
    }

    pub fn n_targets(&self) -> usize {
        self.scenes.first().map_or(self.scene_generator.target_gains.len(), |s| s.targets.len())
    }
}

const SCENE_STREAM: u64 = 0x7363_656e;

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
