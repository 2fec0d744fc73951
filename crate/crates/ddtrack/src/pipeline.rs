//! The pipeline stages. Each stage reads the previous stage's files under the
//! output directory and writes its own, so any stage can be rerun alone.

use std::fmt;
use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use ddtrack_core::baseline::run_baseline;
use ddtrack_core::channel::synthesize_cfr;
use ddtrack_core::ddmap::DdTransform;
use ddtrack_core::detect::os_cfar_2d;
use ddtrack_core::graph::{build_graph, label_nodes, DdGraph, FeatureScaler};
use ddtrack_core::metrics::{estimate_from_labels, nmse, per_step_errors, rmse, MaskedSeries, TrackRecord};
use ddtrack_core::rng::{derive_seed, rng_from};
use ddtrack_core::scene::{DelayDoppler, Scene};
use ddtrack_core::tgnn::{self, EvolveGcn, GraphInput, ModelDims, Split, TrainConfig};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::formats::{self, Checkpoint, DetectionRow, TrackRow, TruthRow, DETECTION_HEADER};
use crate::plot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Stage {
    Simulate,
    Detect,
    Graph,
    Train,
    Eval,
    Baseline,
    Report,
    RunAll,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Simulate => "simulate",
            Stage::Detect => "detect",
            Stage::Graph => "graph",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Baseline => "baseline",
            Stage::Report => "report",
            Stage::RunAll => "run-all",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source:#}")]
pub struct StageError {
    pub stage: Stage,
    pub source: anyhow::Error,
}

pub const PIPELINE: [Stage; 7] = [Stage::Simulate, Stage::Detect, Stage::Graph, Stage::Train, Stage::Eval, Stage::Baseline, Stage::Report];

pub fn run_stage(stage: Stage, cfg: &ExperimentConfig) -> std::result::Result<(), StageError> {
    let wrap = |stage, r: Result<()>| r.map_err(|source| StageError { stage, source });
    match stage {
        Stage::Simulate => wrap(stage, simulate(cfg)),
        Stage::Detect => wrap(stage, detect(cfg)),
        Stage::Graph => wrap(stage, graph(cfg)),
        Stage::Train => wrap(stage, train(cfg)),
        Stage::Eval => wrap(stage, eval(cfg)),
        Stage::Baseline => wrap(stage, baseline(cfg)),
        Stage::Report => wrap(stage, report(cfg).map(|_| ())),
        Stage::RunAll => PIPELINE.iter().try_for_each(|&s| run_stage(s, cfg)),
    }
}

/// File locations under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }
    pub fn scene(&self, s: usize) -> PathBuf {
        self.root.join(format!("scenes/scene_{s}.toml"))
    }
    pub fn ground_truth(&self) -> PathBuf {
        self.root.join("ground_truth.csv")
    }
    pub fn dd_map(&self, s: usize, k: usize) -> PathBuf {
        self.root.join(format!("maps/scene_{s}/window_{k:03}.ddp"))
    }
    pub fn cfr(&self, s: usize, k: usize) -> PathBuf {
        self.root.join(format!("cfr/scene_{s}/window_{k:03}.cfr"))
    }
    pub fn detections(&self, s: usize) -> PathBuf {
        self.root.join(format!("detections/scene_{s}.csv"))
    }
    pub fn graph(&self, s: usize, k: usize) -> PathBuf {
        self.root.join(format!("graphs/scene_{s}/window_{k:03}.graph"))
    }
    pub fn model(&self, s: usize) -> PathBuf {
        self.root.join(format!("models/scene_{s}.json"))
    }
    pub fn train_log(&self, s: usize) -> PathBuf {
        self.root.join(format!("models/scene_{s}_loss.csv"))
    }
    pub fn tgnn_tracks(&self) -> PathBuf {
        self.root.join("tracks/evolvegcn.csv")
    }
    pub fn kf_tracks(&self) -> PathBuf {
        self.root.join("tracks/kalman.csv")
    }
    pub fn nmse(&self) -> PathBuf {
        self.root.join("metrics/nmse.csv")
    }
    pub fn rmse(&self) -> PathBuf {
        self.root.join("metrics/rmse_per_target.csv")
    }
    pub fn predictions(&self, s: usize) -> PathBuf {
        self.root.join(format!("predictions/scene_{s}.csv"))
    }
    pub fn node_accuracy(&self) -> PathBuf {
        self.root.join("metrics/node_accuracy.csv")
    }
    pub fn plots(&self) -> PathBuf {
        self.root.join("plots")
    }
}

fn layout(cfg: &ExperimentConfig) -> Layout {
    Layout::new(&cfg.out_dir)
}

fn n_scenes(cfg: &ExperimentConfig) -> usize {
    if cfg.scenes.is_empty() {
        cfg.n_scenes
    } else {
        cfg.scenes.len()
    }
}

fn read_scenes(cfg: &ExperimentConfig) -> Result<Vec<Scene>> {
    let l = layout(cfg);
    (0..n_scenes(cfg)).map(|s| formats::read_scene(&l.scene(s))).collect()
}

// ---------------------------------------------------------------- simulate

pub fn simulate(cfg: &ExperimentConfig) -> Result<()> {
    let l = layout(cfg);
    let scenes = cfg.resolve_scenes();
    formats::write_text(&l.config(), &cfg.to_toml_string()?)?;
    let ofdm = &cfg.ofdm;
    let transform = DdTransform::new(ofdm);
    let mut truth = Vec::new();
    for (s, scene) in scenes.iter().enumerate() {
        formats::write_scene(&l.scene(s), scene)?;
        for k in 0..ofdm.n_windows {
            let t0 = ofdm.window_start_time(k);
            for (c, gt) in scene.ground_truth_all(t0)?.into_iter().enumerate() {
                truth.push(TruthRow { s, c, k, tau_s: gt.delay, nu_hz: gt.doppler });
            }
            let cfr = synthesize_cfr(scene, ofdm, k)?;
            if cfg.artifacts.cfr_dumps {
                formats::write_cfr(&l.cfr(s, k), &cfr, ofdm.subcarrier_spacing, ofdm.symbol_duration)?;
            }
            let map = transform.apply(&cfr, ofdm)?;
            formats::write_dd_power(&l.dd_map(s, k), &map)?;
            if k == 0 && cfg.artifacts.heatmaps {
                plot::save_heatmap(&l.plots().join(format!("ddmap_scene_{s}_window_000.png")), &map)?;
            }
        }
    }
    formats::write_csv(&l.ground_truth(), &truth)
}

// ---------------------------------------------------------------- detect

pub fn detect(cfg: &ExperimentConfig) -> Result<()> {
    let l = layout(cfg);
    for s in 0..n_scenes(cfg) {
        let mut rows = Vec::new();
        for k in 0..cfg.ofdm.n_windows {
            let map = formats::read_dd_power(&l.dd_map(s, k))?;
            ensure!(
                (map.n_delay, map.n_doppler) == (cfg.ofdm.n_subcarriers, cfg.ofdm.symbols_per_window),
                "map {} is {}x{}, config expects {}x{}",
                l.dd_map(s, k).display(),
                map.n_delay,
                map.n_doppler,
                cfg.ofdm.n_subcarriers,
                cfg.ofdm.symbols_per_window
            );
            rows.extend(os_cfar_2d(&map, &cfg.cfar)?.iter().map(|d| DetectionRow::new(k, d)));
        }
        formats::write_csv_with_header(&l.detections(s), &DETECTION_HEADER, &rows)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- graph

pub fn graph(cfg: &ExperimentConfig) -> Result<()> {
    let l = layout(cfg);
    let truth = formats::read_ground_truth(&l.ground_truth())?;
    let n_doppler = cfg.ofdm.n_doppler_bins();
    for s in 0..n_scenes(cfg) {
        let dets = formats::read_detections(&l.detections(s), cfg.ofdm.n_windows)?;
        let gt = truth.get(s).with_context(|| format!("no ground truth for scene {s}"))?;
        for (k, d) in dets.iter().enumerate() {
            let mut g = build_graph(d, k, cfg.graph.edge_thresholds(&cfg.ofdm), n_doppler)?;
            let gt_k = gt.get(k).with_context(|| format!("no ground truth for scene {s} window {k}"))?;
            label_nodes(&mut g, gt_k, cfg.graph.label_gate(&cfg.ofdm));
            formats::write_graph(&l.graph(s, k), &g)?;
        }
    }
    Ok(())
}

fn read_graphs(cfg: &ExperimentConfig, s: usize) -> Result<Vec<DdGraph>> {
    let l = layout(cfg);
    (0..cfg.ofdm.n_windows).map(|k| formats::read_graph(&l.graph(s, k))).collect()
}

// ---------------------------------------------------------------- train

const MODEL_STREAM: u64 = 0x6d6f_6465;

fn split(cfg: &ExperimentConfig) -> Result<Split> {
    Ok(Split::new(cfg.ofdm.n_windows, cfg.train.split)?)
}

fn labelled_inputs(model: &EvolveGcn, graphs: &[DdGraph]) -> Result<Vec<GraphInput>> {
    graphs
        .iter()
        .map(|g| {
            ensure!(g.labels.iter().all(Option::is_some), "graph of window {} is not labelled", g.window_index);
            Ok(model.prepare(g))
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct LossRow {
    epoch: usize,
    train_loss: f64,
    validation_loss: f64,
}

pub fn train(cfg: &ExperimentConfig) -> Result<()> {
    let l = layout(cfg);
    let split = split(cfg)?;
    let dims = ModelDims::standard(cfg.n_targets() + 1);
    for s in 0..n_scenes(cfg) {
        let graphs = read_graphs(cfg, s)?;
        let mut model = EvolveGcn::new(dims.clone(), &mut rng_from(cfg.seed, &[MODEL_STREAM, s as u64]))?;
        model.scaler = FeatureScaler::fit(&graphs[split.train.clone()]);
        let inputs = labelled_inputs(&model, &graphs)?;
        let tc = TrainConfig { seed: derive_seed(cfg.seed, &[cfg.train.seed, s as u64]), ..cfg.train.clone() };
        let report = tgnn::train(&mut model, &inputs, &split, &tc).with_context(|| format!("training scene {s}"))?;
        let mut ckpt = Checkpoint::new(&model, tc.history_window);
        if !report.epochs.is_empty() {
            ckpt.best_epoch = Some(report.best_epoch);
            ckpt.best_validation_loss = Some(report.best_validation_loss);
        }
        formats::write_checkpoint(&l.model(s), &ckpt)?;
        let log: Vec<LossRow> = report
            .epochs
            .iter()
            .map(|e| LossRow { epoch: e.epoch, train_loss: e.train_loss, validation_loss: e.validation_loss })
            .collect();
        formats::write_csv_with_header(&l.train_log(s), &["epoch", "train_loss", "validation_loss"], &log)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Serialize)]
struct PredictionRow {
    k: usize,
    node_id: u64,
    true_label: Option<usize>,
    predicted: usize,
}

#[derive(Debug, Serialize)]
struct AccuracyRow {
    scene: usize,
    test_nodes: usize,
    correct: usize,
    accuracy: f64,
}

pub fn eval(cfg: &ExperimentConfig) -> Result<()> {
    let l = layout(cfg);
    let split = split(cfg)?;
    let n_targets = cfg.n_targets();
    let mut rows = Vec::new();
    let mut accuracy = Vec::new();
    for s in 0..n_scenes(cfg) {
        let ckpt = formats::read_checkpoint(&l.model(s))?;
        let model = ckpt.model().with_context(|| format!("loading {}", l.model(s).display()))?;
        if model.dims.n_classes != n_targets + 1 {
            bail!("model {} has {} classes, config needs {} targets + background", l.model(s).display(), model.dims.n_classes, n_targets);
        }
        let graphs = read_graphs(cfg, s)?;
        let inputs: Vec<GraphInput> = graphs.iter().map(|g| model.prepare(g)).collect();
        let predicted = tgnn::predict(&model, &inputs, split.test.clone(), ckpt.history_window)?;
        let (mut n, mut correct) = (0, 0);
        let mut node_rows = Vec::new();
        for (k, labels) in split.test.clone().zip(&predicted) {
            let est = estimate_from_labels(&graphs[k], labels, n_targets)?;
            for (c, e) in est.into_iter().enumerate() {
                rows.push(TrackRow::new(s, c, k, e));
            }
            for ((p, t), node) in labels.iter().zip(&graphs[k].labels).zip(&graphs[k].nodes) {
                node_rows.push(PredictionRow { k, node_id: node.id, true_label: *t, predicted: *p });
                n += 1;
                correct += (Some(*p) == *t) as usize;
            }
        }
        formats::write_csv(&l.predictions(s), &node_rows)?;
        accuracy.push(AccuracyRow { scene: s, test_nodes: n, correct, accuracy: if n > 0 { correct as f64 / n as f64 } else { f64::NAN } });
    }
    formats::write_csv(&l.tgnn_tracks(), &rows)?;
    formats::write_csv(&l.node_accuracy(), &accuracy)
}

// ---------------------------------------------------------------- baseline

pub fn baseline(cfg: &ExperimentConfig) -> Result<()> {
    let l = layout(cfg);
    let truth = formats::read_ground_truth(&l.ground_truth())?;
    let scenes = read_scenes(cfg)?;
    let mut rows = Vec::new();
    for (s, scene) in scenes.iter().enumerate() {
        let dets = formats::read_detections(&l.detections(s), cfg.ofdm.n_windows)?;
        let init = truth.get(s).and_then(|t| t.first()).with_context(|| format!("no ground truth for scene {s} window 0"))?;
        let rec = run_baseline(&dets, init, &cfg.baseline, &cfg.ofdm, scene.carrier_freq)?;
        for (c, series) in rec.estimates.iter().enumerate() {
            for (&k, e) in rec.windows.iter().zip(series) {
                rows.push(TrackRow::new(s, c, k, *e));
            }
        }
    }
    formats::write_csv(&l.kf_tracks(), &rows)
}

// ---------------------------------------------------------------- report

pub const METHODS: [&str; 2] = ["EvolveGCN", "Kalman filter"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NmseRow {
    #[serde(rename = "Method")]
    pub method: String,
    #[serde(rename = "NMSE_tau")]
    pub nmse_tau: f64,
    #[serde(rename = "NMSE_nu")]
    pub nmse_nu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseRow {
    pub method: String,
    pub target: usize,
    pub rmse_delay_bins: f64,
    pub rmse_doppler_bins: f64,
    pub rmse_delay_s: f64,
    pub rmse_doppler_hz: f64,
    pub valid_steps: usize,
    pub total_steps: usize,
}

/// Everything `report` computes, for programmatic use.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub nmse: Vec<NmseRow>,
    pub rmse: Vec<RmseRow>,
}

/// Track CSV rows as `TrackRecord`s per scene over `windows`.
pub fn records_from_rows(rows: &[TrackRow], n_scenes: usize, n_targets: usize, windows: &[usize]) -> Result<Vec<TrackRecord>> {
    let mut out: Vec<TrackRecord> = (0..n_scenes).map(|_| TrackRecord::new(n_targets, windows.to_vec())).collect();
    for r in rows {
        ensure!(r.scene < n_scenes && r.target < n_targets, "track row for scene {} target {} out of range", r.scene, r.target);
        if let Some(i) = windows.iter().position(|&w| w == r.k) {
            out[r.scene].estimates[r.target][i] = r.estimate();
        }
    }
    Ok(out)
}

fn method_metrics(
    name: &str,
    records: &[TrackRecord],
    truth: &[Vec<Vec<DelayDoppler>>],
    windows: &[usize],
    delay_bin: f64,
    doppler_bin: f64,
) -> Result<(NmseRow, Vec<RmseRow>)> {
    let n_targets = records.first().map_or(0, TrackRecord::n_targets);
    let (mut tau_series, mut nu_series) = (Vec::new(), Vec::new());
    // (delay, Doppler) errors per target, masked steps as None
    let mut per_target: Vec<[Vec<Option<f64>>; 2]> = vec![[Vec::new(), Vec::new()]; n_targets];
    for (s, rec) in records.iter().enumerate() {
        for c in 0..n_targets {
            let tau_true: Vec<f64> = windows.iter().map(|&k| truth[s][k][c].delay).collect();
            let nu_true: Vec<f64> = windows.iter().map(|&k| truth[s][k][c].doppler).collect();
            let tau_hat: Vec<Option<f64>> = rec.estimates[c].iter().map(|e| e.map(|e| e.delay)).collect();
            let nu_hat: Vec<Option<f64>> = rec.estimates[c].iter().map(|e| e.map(|e| e.doppler)).collect();
            per_target[c][0].extend(per_step_errors(&tau_hat, &tau_true));
            per_target[c][1].extend(per_step_errors(&nu_hat, &nu_true));
            tau_series.push(MaskedSeries::from_options(&tau_hat, &tau_true));
            nu_series.push(MaskedSeries::from_options(&nu_hat, &nu_true));
        }
    }
    // No available estimate at all gives an undefined (NaN) entry rather than
    // aborting the report.
    let nmse_or_nan = |s: &[MaskedSeries]| nmse(s).unwrap_or(f64::NAN);
    let row = NmseRow { method: name.into(), nmse_tau: nmse_or_nan(&tau_series), nmse_nu: nmse_or_nan(&nu_series) };
    let rmse_rows = per_target
        .iter()
        .enumerate()
        .map(|(c, [et, en])| {
            let (rt, rn) = (rmse(et).unwrap_or(f64::NAN), rmse(en).unwrap_or(f64::NAN));
            RmseRow {
                method: name.into(),
                target: c,
                rmse_delay_bins: rt / delay_bin,
                rmse_doppler_bins: rn / doppler_bin,
                rmse_delay_s: rt,
                rmse_doppler_hz: rn,
                valid_steps: et.iter().flatten().count(),
                total_steps: et.len(),
            }
        })
        .collect();
    Ok((row, rmse_rows))
}

pub fn report(cfg: &ExperimentConfig) -> Result<Report> {
    let l = layout(cfg);
    let truth = formats::read_ground_truth(&l.ground_truth())?;
    let n_s = n_scenes(cfg);
    let n_targets = cfg.n_targets();
    ensure!(truth.len() == n_s, "ground truth has {} scenes, config {}", truth.len(), n_s);
    let windows: Vec<usize> = split(cfg)?.test.collect();
    let (dt, df) = (cfg.ofdm.delay_resolution(), cfg.ofdm.doppler_resolution());

    let tgnn_rows: Vec<TrackRow> = formats::read_csv(&l.tgnn_tracks())?;
    let kf_rows: Vec<TrackRow> = formats::read_csv(&l.kf_tracks())?;
    let tgnn = records_from_rows(&tgnn_rows, n_s, n_targets, &windows)?;
    let kf = records_from_rows(&kf_rows, n_s, n_targets, &windows)?;

    let mut nmse_rows = Vec::new();
    let mut rmse_rows = Vec::new();
    for (name, recs) in METHODS.iter().zip([&tgnn, &kf]) {
        let (n, r) = method_metrics(name, recs, &truth, &windows, dt, df)?;
        nmse_rows.push(n);
        rmse_rows.extend(r);
    }
    formats::write_csv(&l.nmse(), &nmse_rows)?;
    formats::write_csv(&l.rmse(), &rmse_rows)?;
    if cfg.artifacts.plots {
        write_plots(&l, &truth, &tgnn, &kf, &windows, &rmse_rows, dt, df)?;
    }
    Ok(Report { nmse: nmse_rows, rmse: rmse_rows })
}

const COLOURS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

#[allow(clippy::too_many_arguments)]
fn write_plots(
    l: &Layout,
    truth: &[Vec<Vec<DelayDoppler>>],
    tgnn: &[TrackRecord],
    kf: &[TrackRecord],
    windows: &[usize],
    rmse_rows: &[RmseRow],
    dt: f64,
    df: f64,
) -> Result<()> {
    let dir = l.plots();
    for s in 0..truth.len() {
        for (axis, unit, scale) in [("delay", "delay bins", dt), ("doppler", "Doppler bins", df)] {
            let pick = |d: &DelayDoppler| if axis == "delay" { d.delay / scale } else { d.doppler / scale };
            let mut series = Vec::new();
            for c in 0..tgnn[s].n_targets() {
                let colour = COLOURS[c % COLOURS.len()];
                let gt = windows.iter().map(|&k| (k as f64, Some(pick(&truth[s][k][c])))).collect();
                let est = |r: &TrackRecord| windows.iter().zip(&r.estimates[c]).map(|(&k, e)| (k as f64, e.as_ref().map(pick))).collect();
                series.push(plot::Series { name: format!("T{} GT", c + 1), colour, dashed: false, points: gt });
                series.push(plot::Series { name: format!("T{} EvolveGCN", c + 1), colour, dashed: true, points: est(&tgnn[s]) });
                series.push(plot::Series { name: format!("T{} KF", c + 1), colour: "#7f7f7f", dashed: true, points: est(&kf[s]) });
            }
            let svg = plot::line_chart(&format!("Scene {s}: {axis} tracking"), "window k", unit, &series);
            formats::write_text(&dir.join(format!("{axis}_tracks_scene_{s}.svg")), &svg)?;
        }
    }
    let targets: Vec<usize> = rmse_rows.iter().map(|r| r.target).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let cats: Vec<String> = targets.iter().map(|t| format!("Target {}", t + 1)).collect();
    for (field, title) in [("doppler", "Doppler RMSE per target"), ("delay", "Delay RMSE per target")] {
        let values = |m: &str| -> Vec<f64> {
            targets
                .iter()
                .map(|&t| {
                    rmse_rows.iter().find(|r| r.method == m && r.target == t).map_or(f64::NAN, |r| {
                        if field == "delay" {
                            r.rmse_delay_bins
                        } else {
                            r.rmse_doppler_bins
                        }
                    })
                })
                .collect()
        };
        let svg = plot::bar_chart(
            title,
            "RMSE (bins)",
            &cats,
            &[(METHODS[0], "#1f77b4", values(METHODS[0])), (METHODS[1], "#ff7f0e", values(METHODS[1]))],
        );
        formats::write_text(&dir.join(format!("rmse_{field}.svg")), &svg)?;
    }
    Ok(())
}
