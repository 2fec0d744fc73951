//! EvolveGCN with GRU-evolved layer weights.
//!
//! For every layer `l` the GCN weight `W_l` (shape `d_in x d_out`) is the
//! hidden state of a matrix GRU. At snapshot `k` the layer input `H` is
//! summarized into `d_out` rows (top-scoring nodes under a learned scorer,
//! each scaled by `tanh` of its score, zero-padded when the graph is small),
//! transposed to `d_in x d_out`, and fed as the GRU input:
//!
//! ```text
//! Z  = sigmoid(Wz X + Uz W + Bz)
//! R  = sigmoid(Wr X + Ur W + Br)
//! W~ = tanh(Wh X + Uh (R o W) + Bh)
//! W' = (1 - Z) o W + Z o W~
//! ```
//!
//! The evolved weight then drives `H' = relu(D^-1/2 (A + I) D^-1/2 H W')`.
//! Node embeddings of the last layer go through a one-hidden-layer MLP.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::matrix::Matrix;
use super::tape::{Tape, Var};
use crate::graph::{DdGraph, FeatureScaler, FEATURE_DIM};
use crate::rng::SeededRng;
use crate::{math, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelDims {
    pub input: usize,
    /// Output width of each GCN layer.
    pub gcn: Vec<usize>,
    pub decoder_hidden: usize,
    pub n_classes: usize,
}

impl ModelDims {
    /// 8 -> 64 -> 32 GCN, 32-unit decoder.
    pub fn standard(n_classes: usize) -> Self {
        Self { input: FEATURE_DIM, gcn: vec![64, 32], decoder_hidden: 32, n_classes }
    }

    fn layer_shapes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        core::iter::once(self.input).chain(self.gcn.iter().copied()).zip(self.gcn.iter().copied())
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.gcn.is_empty() || self.gcn.contains(&0) || self.decoder_hidden == 0 || self.n_classes < 1 {
            return Err(Error::InvalidParameter(format!("degenerate model dimensions {self:?}")));
        }
        Ok(())
    }
}

/// Matrix GRU whose hidden state is a `rows x cols` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGru {
    pub w_z: Matrix,
    pub u_z: Matrix,
    pub b_z: Matrix,
    pub w_r: Matrix,
    pub u_r: Matrix,
    pub b_r: Matrix,
    pub w_h: Matrix,
    pub u_h: Matrix,
    pub b_h: Matrix,
}

impl MatrixGru {
    pub fn new(rows: usize, cols: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / math::sqrt(rows as f64);
        let mut sq = || Matrix::uniform(rows, rows, bound, rng);
        Self {
            w_z: sq(),
            u_z: sq(),
            w_r: sq(),
            u_r: sq(),
            w_h: sq(),
            u_h: sq(),
            b_z: Matrix::zeros(rows, cols),
            b_r: Matrix::zeros(rows, cols),
            b_h: Matrix::zeros(rows, cols),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolvingLayer {
    /// Weight before the first snapshot.
    pub initial_weight: Matrix,
    /// `d_in x 1` summarization scorer.
    pub scorer: Matrix,
    pub gru: MatrixGru,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveGcn {
    pub dims: ModelDims,
    pub layers: Vec<EvolvingLayer>,
    pub decoder: Decoder,
    /// Feature standardization fitted on the training split.
    pub scaler: FeatureScaler,
}

impl EvolveGcn {
    pub fn new(dims: ModelDims, rng: &mut SeededRng) -> Result<Self> {
        dims.validate()?;
        let layers = dims
            .layer_shapes()
            .map(|(d_in, d_out)| EvolvingLayer {
                initial_weight: Matrix::glorot(d_in, d_out, rng),
                scorer: Matrix::uniform(d_in, 1, 1.0 / math::sqrt(d_in as f64), rng),
                gru: MatrixGru::new(d_in, d_out, rng),
            })
            .collect();
        let last = *dims.gcn.last().expect("validated");
        let decoder = Decoder {
            w1: Matrix::glorot(last, dims.decoder_hidden, rng),
            b1: Matrix::zeros(1, dims.decoder_hidden),
            w2: Matrix::glorot(dims.decoder_hidden, dims.n_classes, rng),
            b2: Matrix::zeros(1, dims.n_classes),
        };
        Ok(Self { dims, layers, decoder, scaler: FeatureScaler::identity() })
    }

    /// Every trainable tensor, in a fixed order.
    pub fn parameters(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for l in &self.layers {
            let g = &l.gru;
            out.extend([&l.initial_weight, &l.scorer, &g.w_z, &g.u_z, &g.b_z, &g.w_r, &g.u_r, &g.b_r, &g.w_h, &g.u_h, &g.b_h]);
        }
        let d = &self.decoder;
        out.extend([&d.w1, &d.b1, &d.w2, &d.b2]);
        out
    }

    /// Same order as [`EvolveGcn::parameters`].
    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            let g = &mut l.gru;
            out.extend([
                &mut l.initial_weight,
                &mut l.scorer,
                &mut g.w_z,
                &mut g.u_z,
                &mut g.b_z,
                &mut g.w_r,
                &mut g.u_r,
                &mut g.b_r,
                &mut g.w_h,
                &mut g.u_h,
                &mut g.b_h,
            ]);
        }
        let d = &mut self.decoder;
        out.extend([&mut d.w1, &mut d.b1, &mut d.w2, &mut d.b2]);
        out
    }

    /// Names matching [`EvolveGcn::parameters`].
    pub fn parameter_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..self.layers.len() {
            for n in ["initial_weight", "scorer", "w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"] {
                out.push(format!("layer{i}.{n}"));
            }
        }
        out.extend(["decoder.w1", "decoder.b1", "decoder.w2", "decoder.b2"].map(String::from));
        out
    }

    pub fn n_parameters(&self) -> usize {
        self.parameters().iter().map(|m| m.data.len()).sum()
    }

    /// Expected `(rows, cols)` of every parameter for these dimensions.
    pub fn parameter_shapes(dims: &ModelDims) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (d_in, d_out) in dims.layer_shapes() {
            out.extend([(d_in, d_out), (d_in, 1)]);
            for _ in 0..3 {
                out.extend([(d_in, d_in), (d_in, d_in), (d_in, d_out)]);
            }
        }
        let last = *dims.gcn.last().unwrap_or(&0);
        out.extend([(last, dims.decoder_hidden), (1, dims.decoder_hidden), (dims.decoder_hidden, dims.n_classes), (1, dims.n_classes)]);
        out
    }

    /// Register all parameters on a tape.
    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        let vars = self.parameters().into_iter().map(|m| tape.param(m.clone())).collect();
        BoundModel { vars, n_layers: self.layers.len() }
    }

    /// Standardize and package a graph for the model.
    pub fn prepare(&self, graph: &DdGraph) -> GraphInput {
        GraphInput::new(graph, &self.scaler)
    }
}

/// Tape handles for every parameter, in [`EvolveGcn::parameters`] order.
#[derive(Debug, Clone)]
pub struct BoundModel {
    pub vars: Vec<Var>,
    n_layers: usize,
}

const PER_LAYER: usize = 11;

struct LayerVars {
    initial_weight: Var,
    scorer: Var,
    w_z: Var,
    u_z: Var,
    b_z: Var,
    w_r: Var,
    u_r: Var,
    b_r: Var,
    w_h: Var,
    u_h: Var,
    b_h: Var,
}

impl BoundModel {
    fn layer(&self, l: usize) -> LayerVars {
        let v = &self.vars[l * PER_LAYER..(l + 1) * PER_LAYER];
        LayerVars {
            initial_weight: v[0],
            scorer: v[1],
            w_z: v[2],
            u_z: v[3],
            b_z: v[4],
            w_r: v[5],
            u_r: v[6],
            b_r: v[7],
            w_h: v[8],
            u_h: v[9],
            b_h: v[10],
        }
    }

    fn decoder(&self) -> [Var; 4] {
        let d = &self.vars[self.n_layers * PER_LAYER..];
        [d[0], d[1], d[2], d[3]]
    }
}

/// A graph snapshot ready for the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    /// `D^-1/2 (A + I) D^-1/2`
    pub norm_adjacency: Matrix,
    /// Standardized `N x 8` features.
    pub features: Matrix,
    /// Class per node, if labelled.
    pub labels: Option<Vec<usize>>,
}

impl GraphInput {
    pub fn new(graph: &DdGraph, scaler: &FeatureScaler) -> Self {
        let n = graph.len();
        let rows = scaler.transform(&graph.features());
        let features = Matrix { rows: n, cols: FEATURE_DIM, data: rows.into_iter().flatten().collect() };
        let labels = graph.labels.iter().copied().collect::<Option<Vec<_>>>();
        Self { norm_adjacency: normalized_adjacency(n, &graph.adjacency()), features, labels }
    }

    pub fn from_parts(adjacency: &Matrix, features: Matrix, labels: Option<Vec<usize>>) -> Self {
        Self { norm_adjacency: normalized_adjacency(adjacency.rows, &adjacency.data), features, labels }
    }

    pub fn n_nodes(&self) -> usize {
        self.features.rows
    }
}

/// `D~^-1/2 (A + I) D~^-1/2` for a dense `n x n` 0/1 adjacency.
pub fn normalized_adjacency(n: usize, adjacency: &[f64]) -> Matrix {
    let mut a = Matrix { rows: n, cols: n, data: adjacency.to_vec() };
    for i in 0..n {
        a.data[i * n + i] += 1.0;
    }
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / math::sqrt(a.row(i).iter().sum::<f64>())).collect();
    for i in 0..n {
        for j in 0..n {
            a.data[i * n + j] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    a
}

/// Indices of the `k` highest scores, best first, ties to the lower index;
/// `None` pads when there are fewer than `k` rows.
pub fn top_k_rows(scores: &[f64], k: usize) -> Vec<Option<usize>> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    (0..k).map(|i| idx.get(i).copied()).collect()
}

/// Record one GRU weight update on the tape.
fn evolve_on_tape(tape: &mut Tape, layer: &LayerVars, h_in: Var, w_prev: Var) -> Var {
    let d_out = tape.value(w_prev).cols;
    let raw = tape.matmul(h_in, layer.scorer);
    let scores = tape.div_norm(raw, layer.scorer);
    let picked = top_k_rows(&tape.value(scores).data, d_out);
    let gate = tape.tanh(scores);
    let rows = tape.gather_rows(h_in, picked.clone());
    let gate = tape.gather_rows(gate, picked);
    let summary = tape.scale_rows(rows, gate);
    let x = tape.transpose(summary);

    let gated = |tape: &mut Tape, w: Var, u: Var, b: Var, h: Var| {
        let wx = tape.matmul(w, x);
        let uh = tape.matmul(u, h);
        let s = tape.add(wx, uh);
        tape.add(s, b)
    };
    let z = gated(tape, layer.w_z, layer.u_z, layer.b_z, w_prev);
    let z = tape.sigmoid(z);
    let r = gated(tape, layer.w_r, layer.u_r, layer.b_r, w_prev);
    let r = tape.sigmoid(r);
    let rw = tape.mul(r, w_prev);
    let cand = gated(tape, layer.w_h, layer.u_h, layer.b_h, rw);
    let cand = tape.tanh(cand);
    let delta = tape.sub(cand, w_prev);
    let step = tape.mul(z, delta);
    tape.add(w_prev, step)
}

/// Run the model over time-ordered snapshots, returning per-snapshot logits
/// (`N_k x n_classes`) as tape variables.
pub fn forward_on_tape(model: &BoundModel, tape: &mut Tape, inputs: &[&GraphInput]) -> Result<Vec<Var>> {
    let mut weights: Vec<Var> = (0..model.n_layers).map(|l| model.layer(l).initial_weight).collect();
    let [w1, b1, w2, b2] = model.decoder();
    let expected_width = tape.value(weights[0]).rows;
    let mut out = Vec::with_capacity(inputs.len());
    for g in inputs {
        if g.features.cols != expected_width {
            return Err(Error::DimensionMismatch {
                context: "node features vs model input",
                expected: (g.features.rows, expected_width),
                found: g.features.shape(),
            });
        }
        let adj = tape.constant(g.norm_adjacency.clone());
        let mut h = tape.constant(g.features.clone());
        for (l, w) in weights.iter_mut().enumerate() {
            let layer = model.layer(l);
            *w = evolve_on_tape(tape, &layer, h, *w);
            let hw = tape.matmul(h, *w);
            let agg = tape.matmul(adj, hw);
            h = tape.relu(agg);
        }
        let hidden = tape.matmul(h, w1);
        let hidden = tape.add_row(hidden, b1);
        let hidden = tape.relu(hidden);
        let logits = tape.matmul(hidden, w2);
        out.push(tape.add_row(logits, b2));
    }
    Ok(out)
}

/// Per-snapshot logits for a sequence, starting from the initial weights.
pub fn forward_sequence(model: &EvolveGcn, inputs: &[&GraphInput]) -> Result<Vec<Matrix>> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let vars = forward_on_tape(&bound, &mut tape, inputs)?;
    Ok(vars.into_iter().map(|v| tape.value(v).clone()).collect())
}

/// Evolved weight of one layer after a single GRU step (no tape bookkeeping
/// exposed). `h_in` is the layer input of the current snapshot.
pub fn evolve_weights(layer: &EvolvingLayer, h_in: &Matrix, w_prev: &Matrix) -> Result<Matrix> {
    if h_in.cols != w_prev.rows || layer.gru.u_z.cols != w_prev.rows || layer.gru.b_z.shape() != w_prev.shape() {
        return Err(Error::DimensionMismatch {
            context: "GRU evolver input",
            expected: layer.gru.b_z.shape(),
            found: (h_in.cols, w_prev.cols),
        });
    }
    let mut tape = Tape::new();
    let g = &layer.gru;
    let vars = LayerVars {
        initial_weight: tape.constant(w_prev.clone()),
        scorer: tape.constant(layer.scorer.clone()),
        w_z: tape.constant(g.w_z.clone()),
        u_z: tape.constant(g.u_z.clone()),
        b_z: tape.constant(g.b_z.clone()),
        w_r: tape.constant(g.w_r.clone()),
        u_r: tape.constant(g.u_r.clone()),
        b_r: tape.constant(g.b_r.clone()),
        w_h: tape.constant(g.w_h.clone()),
        u_h: tape.constant(g.u_h.clone()),
        b_h: tape.constant(g.b_h.clone()),
    };
    let h = tape.constant(h_in.clone());
    let out = evolve_on_tape(&mut tape, &vars, h, vars.initial_weight);
    Ok(tape.value(out).clone())
}

/// `sigma(D^-1/2 (A + I) D^-1/2 H W)` with an optional ReLU.
pub fn gcn_layer_forward(adjacency: &Matrix, h: &Matrix, w: &Matrix, relu: bool) -> Result<Matrix> {
    if adjacency.rows != adjacency.cols || adjacency.rows != h.rows || h.cols != w.rows {
        return Err(Error::DimensionMismatch { context: "GCN layer", expected: (h.rows, w.rows), found: (adjacency.rows, h.cols) });
    }
    let norm = normalized_adjacency(adjacency.rows, &adjacency.data);
    let out = norm.matmul(&h.matmul(w));
    Ok(if relu { out.map(|x| x.max(0.0)) } else { out })
}

/// Sum of softmax cross-entropy over nodes.
pub fn loss(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    if logits.rows != labels.len() {
        return Err(Error::DimensionMismatch { context: "logits vs labels", expected: (labels.len(), logits.cols), found: logits.shape() });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= logits.cols) {
        return Err(Error::InvalidParameter(format!("label {bad} outside 0..{}", logits.cols)));
    }
    let mut tape = Tape::new();
    let z = tape.constant(logits.clone());
    let l = tape.cross_entropy(z, labels.to_vec(), None);
    Ok(tape.value(l).data[0])
}

/// Argmax per row, ties to the lower class.
pub fn argmax_rows(logits: &Matrix) -> Vec<usize> {
    (0..logits.rows)
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
