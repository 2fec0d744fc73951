//! Delay-Doppler graph snapshots built from CFAR detections.
//!
//! Each detected bin becomes a node with identifier `l * N_nu + p`, so the
//! same physical bin keeps its identifier across windows. Two nodes are joined
//! when they are within `gamma_tau` in delay and `gamma_nu` in Doppler (both
//! inclusive). Node features are
//!
//! ```text
//! [id, k, tau, nu, power_db, mean tau, mean nu, mean power_db]
//! ```
//!
//! where the means run over graph neighbours, falling back to the node's own
//! values when it has none.

use alloc::vec;
use alloc::vec::Vec;

use crate::channel::OfdmParams;
use crate::detect::Detection;
use crate::scene::DelayDoppler;
use crate::{math, Error, Result};

pub const FEATURE_DIM: usize = 8;

/// Relative slack on threshold comparisons, so a separation of exactly
/// `n` bins computed as a difference of axis values still counts as `n`.
const THRESHOLD_SLACK: f64 = 1e-9;

pub type Features = [f64; FEATURE_DIM];

pub fn node_id(delay_bin: usize, doppler_bin: usize, n_doppler: usize) -> Result<u64> {
    if doppler_bin >= n_doppler {
        return Err(Error::InvalidParameter(alloc::format!("Doppler bin {doppler_bin} outside 0..{n_doppler}")));
    }
    Ok(delay_bin as u64 * n_doppler as u64 + doppler_bin as u64)
}

/// Proximity thresholds in physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// seconds
    pub delay: f64,
    /// Hz
    pub doppler: f64,
}

impl Thresholds {
    pub fn from_bins(delay_bins: f64, doppler_bins: f64, params: &OfdmParams) -> Self {
        Self { delay: delay_bins * params.delay_resolution(), doppler: doppler_bins * params.doppler_resolution() }
    }

    #[inline]
    pub fn within(&self, a: &Detection, b: &Detection) -> bool {
        within(a.delay - b.delay, self.delay) && within(a.doppler - b.doppler, self.doppler)
    }
}

#[inline]
fn within(diff: f64, gamma: f64) -> bool {
    diff.abs() <= gamma * (1.0 + THRESHOLD_SLACK)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: u64,
    pub detection: Detection,
    pub mean_delay: f64,
    pub mean_doppler: f64,
    pub mean_power_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdGraph {
    pub window_index: usize,
    pub n_doppler: usize,
    /// Canonical order: ascending `(delay_bin, doppler_bin)`.
    pub nodes: Vec<Node>,
    /// Undirected edges as `(u, v)` node indices with `u < v`, sorted.
    pub edges: Vec<(usize, usize)>,
    /// Class per node; `None` until labelled.
    pub labels: Vec<Option<usize>>,
}

impl DdGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Dense symmetric 0/1 adjacency, row-major, zero diagonal.
    pub fn adjacency(&self) -> Vec<f64> {
        let n = self.len();
        let mut a = vec![0.0; n * n];
        for &(u, v) in &self.edges {
            a[u * n + v] = 1.0;
            a[v * n + u] = 1.0;
        }
        a
    }

    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.len()];
        for &(u, v) in &self.edges {
            out[u].push(v);
            out[v].push(u);
        }
        out
    }

    pub fn features(&self) -> Vec<Features> {
        let k = self.window_index as f64;
        self.nodes
            .iter()
            .map(|n| {
                [
                    n.id as f64,
                    k,
                    n.detection.delay,
                    n.detection.doppler,
                    n.detection.power_db(),
                    n.mean_delay,
                    n.mean_doppler,
                    n.mean_power_db,
                ]
            })
            .collect()
    }
}

/// Build the graph snapshot of window `k` from its detections.
pub fn build_graph(detections: &[Detection], k: usize, thresholds: Thresholds, n_doppler: usize) -> Result<DdGraph> {
    if !(thresholds.delay > 0.0 && thresholds.doppler > 0.0) {
        return Err(Error::InvalidParameter("graph thresholds must be positive".into()));
    }
    let mut dets = detections.to_vec();
    dets.sort_by_key(|d| (d.delay_bin, d.doppler_bin));
    if let Some(w) = dets.windows(2).find(|w| (w[0].delay_bin, w[0].doppler_bin) == (w[1].delay_bin, w[1].doppler_bin)) {
        return Err(Error::DuplicateBin { delay_bin: w[0].delay_bin, doppler_bin: w[0].doppler_bin });
    }

    // Sorted by delay bin, so the delay gate lets the inner scan stop early.
    let mut edges = Vec::new();
    for u in 0..dets.len() {
        for v in u + 1..dets.len() {
            if !within(dets[v].delay - dets[u].delay, thresholds.delay) {
                break;
            }
            if within(dets[v].doppler - dets[u].doppler, thresholds.doppler) {
                edges.push((u, v));
            }
        }
    }

    let mut sums = vec![(0.0, 0.0, 0.0, 0usize); dets.len()];
    for &(u, v) in &edges {
        for (a, b) in [(u, v), (v, u)] {
            let s = &mut sums[a];
            s.0 += dets[b].delay;
            s.1 += dets[b].doppler;
            s.2 += dets[b].power_db();
            s.3 += 1;
        }
    }
    let nodes = dets
        .iter()
        .zip(&sums)
        .map(|(d, &(st, sn, sp, cnt))| {
            let (mean_delay, mean_doppler, mean_power_db) = if cnt == 0 {
                (d.delay, d.doppler, d.power_db())
            } else {
                let c = cnt as f64;
                (st / c, sn / c, sp / c)
            };
            Ok(Node { id: node_id(d.delay_bin, d.doppler_bin, n_doppler)?, detection: *d, mean_delay, mean_doppler, mean_power_db })
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = vec![None; nodes.len()];
    Ok(DdGraph { window_index: k, n_doppler, nodes, edges, labels })
}

/// Assign each node the class of the nearest ground-truth target under the
/// normalized Chebyshev distance `max(|d tau| / gate_tau, |d nu| / gate_nu)`.
/// Nodes farther than 1 from every target get the background class
/// `truth.len()`. Ties (within a relative 1e-9) go to the lower target index.
pub fn label_nodes(graph: &mut DdGraph, truth: &[DelayDoppler], gate: Thresholds) {
    let background = truth.len();
    for (node, label) in graph.nodes.iter().zip(graph.labels.iter_mut()) {
        let mut best = (f64::INFINITY, background);
        for (c, gt) in truth.iter().enumerate() {
            let dist =
                ((node.detection.delay - gt.delay).abs() / gate.delay).max((node.detection.doppler - gt.doppler).abs() / gate.doppler);
            // distances equal up to rounding count as ties
            if dist < best.0 * (1.0 - THRESHOLD_SLACK) {
                best = (dist, c);
            }
        }
        *label = Some(if best.0 <= 1.0 + THRESHOLD_SLACK { best.1 } else { background });
    }
}

/// Per-column z-score statistics of node features.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureScaler {
    pub mean: Features,
    pub std: Features,
}

impl FeatureScaler {
    pub fn identity() -> Self {
        Self { mean: [0.0; FEATURE_DIM], std: [1.0; FEATURE_DIM] }
    }

    /// Fit on every node of `graphs`. Columns with (near) zero spread keep a
    /// unit scale.
    pub fn fit<'a>(graphs: impl IntoIterator<Item = &'a DdGraph>) -> Self {
        let mut count = 0usize;
        let mut sum = [0.0; FEATURE_DIM];
        let mut sum_sq = [0.0; FEATURE_DIM];
        let rows: Vec<Features> = graphs.into_iter().flat_map(|g| g.features()).collect();
        for row in &rows {
            count += 1;
            for j in 0..FEATURE_DIM {
                sum[j] += row[j];
            }
        }
        if count == 0 {
            return Self::identity();
        }
        let mut mean = [0.0; FEATURE_DIM];
        for j in 0..FEATURE_DIM {
            mean[j] = sum[j] / count as f64;
        }
        for row in &rows {
            for j in 0..FEATURE_DIM {
                let d = row[j] - mean[j];
                sum_sq[j] += d * d;
            }
        }
        let mut std = [1.0; FEATURE_DIM];
        for j in 0..FEATURE_DIM {
            let s = math::sqrt(sum_sq[j] / count as f64);
            if s > 0.0 && s > 1e-12 * mean[j].abs() {
                std[j] = s;
            }
        }
        Self { mean, std }
    }

    pub fn transform(&self, rows: &[Features]) -> Vec<Features> {
        rows.iter().map(|r| core::array::from_fn(|j| (r[j] - self.mean[j]) / self.std[j])).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn det(l: usize, p: usize, power: f64) -> Detection {
        Detection { delay_bin: l, doppler_bin: p, delay: l as f64 * 65.1e-9, doppler: (p as f64 - 64.0) * 10.75, power }
    }

    fn thresholds(bins: f64) -> Thresholds {
        Thresholds { delay: bins * 65.1e-9, doppler: bins * 10.75 }
    }

    #[test]
    fn node_ids() {
        assert_eq!(node_id(0, 0, 1400).unwrap(), 0);
        assert_eq!(node_id(3, 5, 1400).unwrap(), 4205);
        assert!(node_id(3, 1400, 1400).is_err());
    }

    #[test]
    fn same_bin_same_id_across_windows() {
        let a = build_graph(&[det(12, 70, 1.0)], 0, thresholds(9.0), 128).unwrap();
        let b = build_graph(&[det(3, 3, 1.0), det(12, 70, 5.0)], 7, thresholds(9.0), 128).unwrap();
        assert_eq!(a.nodes[0].id, b.nodes[1].id);
    }

    #[test]
    fn edge_threshold_is_inclusive() {
        let g = build_graph(&[det(10, 64, 1.0), det(19, 64, 1.0)], 0, thresholds(9.0), 128).unwrap();
        assert_eq!(g.edges, vec![(0, 1)]);
        let g = build_graph(&[det(10, 64, 1.0), det(20, 64, 1.0)], 0, thresholds(9.0), 128).unwrap();
        assert!(g.edges.is_empty());
        let g = build_graph(&[det(10, 50, 1.0), det(10, 59, 1.0)], 0, thresholds(9.0), 128).unwrap();
        assert_eq!(g.edges, vec![(0, 1)]);
    }

    #[test]
    fn duplicate_bins_rejected() {
        let err = build_graph(&[det(1, 2, 1.0), det(1, 2, 3.0)], 0, thresholds(9.0), 128).unwrap_err();
        assert_eq!(err, Error::DuplicateBin { delay_bin: 1, doppler_bin: 2 });
    }

    #[test]
    fn isolated_node_means_are_own_values() {
        let g = build_graph(&[det(1, 2, 10.0), det(50, 100, 1.0)], 4, thresholds(9.0), 128).unwrap();
        let x = g.features();
        for row in &x {
            assert_eq!(row[5], row[2]);
            assert_eq!(row[6], row[3]);
            assert_eq!(row[7], row[4]);
            assert_eq!(row[1], 4.0);
        }
        assert!(x.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn neighbour_means() {
        let g = build_graph(&[det(1, 60, 10.0), det(2, 61, 100.0), det(3, 62, 1000.0)], 0, thresholds(1.0), 128).unwrap();
        assert_eq!(g.edges, vec![(0, 1), (1, 2)]);
        let x = g.features();
        assert!((x[1][7] - 20.0).abs() < 1e-12); // mean of 10 dB and 30 dB
        assert!((x[0][5] - 2.0 * 65.1e-9).abs() < 1e-20);
    }

    #[test]
    fn labelling_rules() {
        let truth = [
            DelayDoppler { delay: 10.0 * 65.1e-9, doppler: 0.0 },
            DelayDoppler { delay: 30.0 * 65.1e-9, doppler: 100.0 },
            DelayDoppler { delay: 20.0 * 65.1e-9, doppler: 0.0 },
        ];
        let dets = [
            Detection { delay_bin: 30, doppler_bin: 0, delay: truth[1].delay, doppler: 100.0, power: 1.0 },
            Detection { delay_bin: 15, doppler_bin: 1, delay: 15.0 * 65.1e-9, doppler: 0.0, power: 1.0 },
            Detection { delay_bin: 90, doppler_bin: 2, delay: 90.0 * 65.1e-9, doppler: 0.0, power: 1.0 },
        ];
        let mut g = build_graph(&dets, 0, thresholds(9.0), 128).unwrap();
        label_nodes(&mut g, &truth, thresholds(9.0));
        // canonical order: (15,1), (30,0), (90,2)
        assert_eq!(g.labels, vec![Some(0), Some(1), Some(3)]);
    }

    #[test]
    fn scaler_standardizes() {
        let g = build_graph(&[det(1, 2, 10.0), det(50, 100, 1.0), det(20, 30, 3.0)], 4, thresholds(9.0), 128).unwrap();
        let s = FeatureScaler::fit([&g]);
        let z = s.transform(&g.features());
        for j in 0..FEATURE_DIM {
            let m: f64 = z.iter().map(|r| r[j]).sum::<f64>() / 3.0;
            assert!(m.abs() < 1e-9);
        }
        assert_eq!(s.std[1], 1.0); // constant window index column
    }
}
