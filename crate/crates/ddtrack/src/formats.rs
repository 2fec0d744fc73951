//! On-disk formats of the pipeline stages.
//!
//! | artifact      | format                                                   |
//! |---------------|----------------------------------------------------------|
//! | scene         | TOML, the `Scene` fields (meters, km/h, Hz, dB)          |
//! | CFR / DD map  | binary grid dump, see [`GridHeader`]                     |
//! | detections    | CSV `k,l,p,tau_s,nu_hz,power_db`                         |
//! | ground truth  | CSV `s,c,k,tau_s,nu_hz`                                  |
//! | graph         | text, header + `node` and `edge` lines                   |
//! | model         | JSON checkpoint, see [`Checkpoint`]                      |
//! | tracks        | CSV `scene,target,k,tau_hat_s,nu_hat_hz,available`      |

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, ensure, Context, Result};
use ddtrack_core::channel::CfrWindow;
use ddtrack_core::ddmap::DdMap;
use ddtrack_core::detect::Detection;
use ddtrack_core::graph::{node_id, DdGraph, FeatureScaler, Node, FEATURE_DIM};
use ddtrack_core::scene::{DelayDoppler, Scene};
use ddtrack_core::tgnn::{EvolveGcn, Matrix, ModelDims};
use ddtrack_core::Complex64;
use serde::{Deserialize, Serialize};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("missing upstream artifact {}", path.display()))?))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- scenes

pub fn scene_to_toml(scene: &Scene) -> Result<String> {
    Ok(toml::to_string(scene)?)
}

pub fn scene_from_toml(text: &str) -> Result<Scene> {
    let scene: Scene = toml::from_str(text)?;
    scene.validate()?;
    Ok(scene)
}

pub fn write_scene(path: &Path, scene: &Scene) -> Result<()> {
    write_text(path, &scene_to_toml(scene)?)
}

pub fn read_scene(path: &Path) -> Result<Scene> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text)?;
    scene_from_toml(&text).with_context(|| format!("parsing scene {}", path.display()))
}

// ---------------------------------------------------------------- grids

const GRID_MAGIC: [u8; 8] = *b"DDTGRID\0";
const GRID_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum GridKind {
    Cfr = 1,
    /// Linear power of a delay-Doppler map.
    DdPower = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum DType {
    Complex128 = 1,
    Float64 = 2,
}

/// Little-endian header of a grid dump: magic, version, kind, dtype, rows,
/// cols, window index, start symbol and two axis steps (Hz and s for a CFR,
/// s and Hz for a DD map), followed by the row-major payload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridHeader {
    pub kind: GridKind,
    pub dtype: DType,
    pub rows: u64,
    pub cols: u64,
    pub window_index: u64,
    pub start_symbol: u64,
    pub step0: f64,
    pub step1: f64,
}

impl GridHeader {
    fn write(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&GRID_MAGIC)?;
        for v in [GRID_VERSION, self.kind as u32, self.dtype as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in [self.rows, self.cols, self.window_index, self.start_symbol] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in [self.step0, self.step1] {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    fn read(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        ensure!(magic == GRID_MAGIC, "not a grid dump");
        let mut u32s = [0u32; 3];
        for v in &mut u32s {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *v = u32::from_le_bytes(b);
        }
        ensure!(u32s[0] == GRID_VERSION, "unsupported grid version {}", u32s[0]);
        let kind = match u32s[1] {
            1 => GridKind::Cfr,
            2 => GridKind::DdPower,
            k => bail!("unknown grid kind {k}"),
        };
        let dtype = match u32s[2] {
            1 => DType::Complex128,
            2 => DType::Float64,
            d => bail!("unknown grid dtype {d}"),
        };
        let mut u64s = [0u64; 4];
        for v in &mut u64s {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *v = u64::from_le_bytes(b);
        }
        let mut f64s = [0f64; 2];
        for v in &mut f64s {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *v = f64::from_le_bytes(b);
        }
        Ok(Self { kind, dtype, rows: u64s[0], cols: u64s[1], window_index: u64s[2], start_symbol: u64s[3], step0: f64s[0], step1: f64s[1] })
    }
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes).context("truncated grid payload")?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn write_cfr(path: &Path, cfr: &CfrWindow, subcarrier_spacing: f64, symbol_duration: f64) -> Result<()> {
    let mut w = create(path)?;
    GridHeader {
        kind: GridKind::Cfr,
        dtype: DType::Complex128,
        rows: cfr.n_subcarriers as u64,
        cols: cfr.n_symbols as u64,
        window_index: cfr.window_index as u64,
        start_symbol: cfr.start_symbol as u64,
        step0: subcarrier_spacing,
        step1: symbol_duration,
    }
    .write(&mut w)?;
    for c in &cfr.data {
        w.write_all(&c.re.to_le_bytes())?;
        w.write_all(&c.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cfr(path: &Path) -> Result<CfrWindow> {
    let mut r = open(path)?;
    let h = GridHeader::read(&mut r).with_context(|| format!("reading {}", path.display()))?;
    ensure!(h.kind == GridKind::Cfr && h.dtype == DType::Complex128, "{} is not a complex CFR dump", path.display());
    let (rows, cols) = (h.rows as usize, h.cols as usize);
    let raw = read_f64s(&mut r, 2 * rows * cols)?;
    Ok(CfrWindow {
        n_subcarriers: rows,
        n_symbols: cols,
        data: raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect(),
        window_index: h.window_index as usize,
        start_symbol: h.start_symbol as usize,
    })
}

pub fn write_dd_power(path: &Path, map: &DdMap) -> Result<()> {
    let mut w = create(path)?;
    GridHeader {
        kind: GridKind::DdPower,
        dtype: DType::Float64,
        rows: map.n_delay as u64,
        cols: map.n_doppler as u64,
        window_index: map.window_index as u64,
        start_symbol: 0,
        step0: map.delay_resolution,
        step1: map.doppler_resolution,
    }
    .write(&mut w)?;
    for p in map.linear_power() {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// A DD map rebuilt from a power dump (zero phase).
pub fn read_dd_power(path: &Path) -> Result<DdMap> {
    let mut r = open(path)?;
    let h = GridHeader::read(&mut r).with_context(|| format!("reading {}", path.display()))?;
    ensure!(h.kind == GridKind::DdPower && h.dtype == DType::Float64, "{} is not a DD power dump", path.display());
    let (rows, cols) = (h.rows as usize, h.cols as usize);
    let power = read_f64s(&mut r, rows * cols)?;
    let mut map = DdMap::from_linear_power(rows, cols, &power, h.step0, h.step1)?;
    map.window_index = h.window_index as usize;
    Ok(map)
}

// ---------------------------------------------------------------- CSVs

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub k: usize,
    pub l: usize,
    pub p: usize,
    pub tau_s: f64,
    pub nu_hz: f64,
    pub power_db: f64,
}

impl DetectionRow {
    pub fn new(k: usize, d: &Detection) -> Self {
        Self { k, l: d.delay_bin, p: d.doppler_bin, tau_s: d.delay, nu_hz: d.doppler, power_db: d.power_db() }
    }

    pub fn detection(&self) -> Detection {
        Detection { delay_bin: self.l, doppler_bin: self.p, delay: self.tau_s, doppler: self.nu_hz, power: db_to_linear(self.power_db) }
    }
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub s: usize,
    pub c: usize,
    pub k: usize,
    pub tau_s: f64,
    pub nu_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackRow {
    pub scene: usize,
    pub target: usize,
    pub k: usize,
    pub tau_hat_s: Option<f64>,
    pub nu_hat_hz: Option<f64>,
    pub available: u8,
}

impl TrackRow {
    pub fn new(scene: usize, target: usize, k: usize, est: Option<DelayDoppler>) -> Self {
        Self { scene, target, k, tau_hat_s: est.map(|e| e.delay), nu_hat_hz: est.map(|e| e.doppler), available: est.is_some() as u8 }
    }

    pub fn estimate(&self) -> Option<DelayDoppler> {
        match (self.available, self.tau_hat_s, self.nu_hat_hz) {
            (1, Some(delay), Some(doppler)) => Some(DelayDoppler { delay, doppler }),
            _ => None,
        }
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes only the header when `rows` is empty.
pub fn write_csv_with_header<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(open(path)?);
    r.deserialize().collect::<std::result::Result<Vec<T>, _>>().with_context(|| format!("parsing {}", path.display()))
}

pub const DETECTION_HEADER: [&str; 6] = ["k", "l", "p", "tau_s", "nu_hz", "power_db"];

/// Per-window detection lists of one scene.
pub fn read_detections(path: &Path, n_windows: usize) -> Result<Vec<Vec<Detection>>> {
    let mut out = vec![Vec::new(); n_windows];
    for row in read_csv::<DetectionRow>(path)? {
        let slot = out.get_mut(row.k).ok_or_else(|| anyhow!("{}: window {} out of range", path.display(), row.k))?;
        slot.push(row.detection());
    }
    Ok(out)
}

/// Ground truth indexed `[s][k][c]`.
pub fn read_ground_truth(path: &Path) -> Result<Vec<Vec<Vec<DelayDoppler>>>> {
    let rows = read_csv::<TruthRow>(path)?;
    let n_s = rows.iter().map(|r| r.s + 1).max().unwrap_or(0);
    let n_k = rows.iter().map(|r| r.k + 1).max().unwrap_or(0);
    let n_c = rows.iter().map(|r| r.c + 1).max().unwrap_or(0);
    let mut out = vec![vec![vec![None; n_c]; n_k]; n_s];
    for r in &rows {
        out[r.s][r.k][r.c] = Some(DelayDoppler { delay: r.tau_s, doppler: r.nu_hz });
    }
    out.into_iter()
        .map(|scene| scene.into_iter().map(|w| w.into_iter().collect::<Option<Vec<_>>>()).collect::<Option<Vec<_>>>())
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| anyhow!("{} does not cover every (s, c, k)", path.display()))
}

// ---------------------------------------------------------------- graphs

const GRAPH_MAGIC: &str = "# ddtrack graph v1";

/// Text form of a graph snapshot:
///
/// ```text
/// # ddtrack graph v1
/// k <k> n_nodes <N_k> n_doppler <N_nu> n_edges <E>
/// node <id> <8 features> <linear power> <label or -1>
/// edge <id_u> <id_v>
/// ```
pub fn graph_to_text(g: &DdGraph) -> String {
    let mut s = format!("{GRAPH_MAGIC}\nk {} n_nodes {} n_doppler {} n_edges {}\n", g.window_index, g.len(), g.n_doppler, g.edges.len());
    for ((node, x), label) in g.nodes.iter().zip(g.features()).zip(&g.labels) {
        s.push_str(&format!("node {}", node.id));
        for v in x {
            s.push_str(&format!(" {v:?}"));
        }
        s.push_str(&format!(" {:?}", node.detection.power));
        match label {
            Some(c) => s.push_str(&format!(" {c}\n")),
            None => s.push_str(" -1\n"),
        }
    }
    for &(u, v) in &g.edges {
        s.push_str(&format!("edge {} {}\n", g.nodes[u].id, g.nodes[v].id));
    }
    s
}

pub fn graph_from_text(text: &str) -> Result<DdGraph> {
    let mut lines = text.lines();
    ensure!(lines.next() == Some(GRAPH_MAGIC), "missing graph header");
    let head: Vec<&str> = lines.next().ok_or_else(|| anyhow!("missing graph size line"))?.split_whitespace().collect();
    ensure!(
        head.len() == 8 && head[0] == "k" && head[2] == "n_nodes" && head[4] == "n_doppler" && head[6] == "n_edges",
        "malformed graph size line"
    );
    let k: usize = head[1].parse()?;
    let n: usize = head[3].parse()?;
    let n_doppler: usize = head[5].parse()?;
    let n_edges: usize = head[7].parse()?;
    ensure!(n_doppler > 0, "n_doppler must be positive");
    let mut nodes = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut edges = Vec::with_capacity(n_edges);
    for line in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.first() {
            Some(&"node") => {
                ensure!(f.len() == 4 + FEATURE_DIM, "node line needs id, {FEATURE_DIM} features, power and a label");
                let id: u64 = f[1].parse()?;
                let x = f[2..2 + FEATURE_DIM].iter().map(|v| v.parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>()?;
                let (l, p) = ((id / n_doppler as u64) as usize, (id % n_doppler as u64) as usize);
                ensure!(node_id(l, p, n_doppler)? == id && x[0] == id as f64, "node id {id} does not match its feature");
                let detection = Detection { delay_bin: l, doppler_bin: p, delay: x[2], doppler: x[3], power: f[2 + FEATURE_DIM].parse()? };
                nodes.push(Node { id, detection, mean_delay: x[5], mean_doppler: x[6], mean_power_db: x[7] });
                let label: i64 = f[3 + FEATURE_DIM].parse()?;
                labels.push(if label < 0 { None } else { Some(label as usize) });
            }
            Some(&"edge") => {
                ensure!(f.len() == 3, "edge line needs two ids");
                let (a, b): (u64, u64) = (f[1].parse()?, f[2].parse()?);
                let find = |id: u64| nodes.binary_search_by_key(&id, |n: &Node| n.id).map_err(|_| anyhow!("edge to unknown node {id}"));
                let (u, v) = (find(a)?, find(b)?);
                ensure!(u != v, "self-loop on node {a}");
                edges.push((u.min(v), u.max(v)));
            }
            None => {}
            Some(other) => bail!("unknown graph line kind {other:?}"),
        }
    }
    ensure!(nodes.len() == n && edges.len() == n_edges, "graph counts do not match its header");
    ensure!(nodes.windows(2).all(|w| w[0].id < w[1].id), "nodes out of canonical order");
    edges.sort_unstable();
    Ok(DdGraph { window_index: k, n_doppler, nodes, edges, labels })
}

pub fn write_graph(path: &Path, g: &DdGraph) -> Result<()> {
    write_text(path, &graph_to_text(g))
}

pub fn read_graph(path: &Path) -> Result<DdGraph> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text)?;
    graph_from_text(&text).with_context(|| format!("parsing graph {}", path.display()))
}

// ---------------------------------------------------------------- models

const CHECKPOINT_FORMAT: &str = "ddtrack-evolvegcn";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Versioned JSON checkpoint: dimensions, parameters by name, the feature
/// scaler, the history window and the training summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub dims: ModelDims,
    pub history_window: usize,
    pub scaler: FeatureScaler,
    pub parameters: Vec<Tensor>,
    pub best_epoch: Option<usize>,
    pub best_validation_loss: Option<f64>,
}

impl Checkpoint {
    pub fn new(model: &EvolveGcn, history_window: usize) -> Self {
        let parameters = model
            .parameter_names()
            .into_iter()
            .zip(model.parameters())
            .map(|(name, m)| Tensor { name, rows: m.rows, cols: m.cols, data: m.data.clone() })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            dims: model.dims.clone(),
            history_window,
            scaler: model.scaler.clone(),
            parameters,
            best_epoch: None,
            best_validation_loss: None,
        }
    }

    /// Rebuild the model, rejecting any dimension mismatch.
    pub fn model(&self) -> Result<EvolveGcn> {
        ensure!(self.format == CHECKPOINT_FORMAT, "not a model checkpoint (format {:?})", self.format);
        ensure!(self.version == CHECKPOINT_VERSION, "unsupported checkpoint version {}", self.version);
        self.dims.validate()?;
        ensure!(self.dims.input == FEATURE_DIM, "model input width {} but graphs have {FEATURE_DIM} features", self.dims.input);
        let shapes = EvolveGcn::parameter_shapes(&self.dims);
        ensure!(self.parameters.len() == shapes.len(), "checkpoint has {} tensors, dims need {}", self.parameters.len(), shapes.len());
        let mut model = EvolveGcn::new(self.dims.clone(), &mut ddtrack_core::rng::rng_from(0, &[]))?;
        let names = model.parameter_names();
        for ((slot, t), (name, shape)) in model.parameters_mut().into_iter().zip(&self.parameters).zip(names.iter().zip(&shapes)) {
            ensure!(&t.name == name, "tensor {:?} where {:?} was expected", t.name, name);
            ensure!((t.rows, t.cols) == *shape, "tensor {name} is {}x{}, dims need {}x{}", t.rows, t.cols, shape.0, shape.1);
            *slot = Matrix::from_vec(t.rows, t.cols, t.data.clone())?;
        }
        model.scaler = self.scaler.clone();
        Ok(model)
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer(&mut w, ckpt)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    serde_json::from_reader(open(path)?).with_context(|| format!("parsing checkpoint {}", path.display()))
}
