//! Per-target estimates, per-step errors, RMSE and masked NMSE.

use alloc::vec;
use alloc::vec::Vec;

use crate::graph::DdGraph;
use crate::scene::DelayDoppler;
use crate::{math, Error, Result};

/// Per-target, per-window estimates. `None` marks an unavailable estimate
/// (mask 0).
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRecord {
    /// `estimates[c][i]` is target `c` at the `i`-th recorded window.
    pub estimates: Vec<Vec<Option<DelayDoppler>>>,
    /// Window index of each recorded column.
    pub windows: Vec<usize>,
}

impl TrackRecord {
    pub fn new(n_targets: usize, windows: Vec<usize>) -> Self {
        Self { estimates: vec![vec![None; windows.len()]; n_targets], windows }
    }

    pub fn n_targets(&self) -> usize {
        self.estimates.len()
    }

    /// Keep only the listed windows (in the given order).
    pub fn restrict(&self, windows: &[usize]) -> TrackRecord {
        let cols: Vec<Option<usize>> = windows.iter().map(|w| self.windows.iter().position(|x| x == w)).collect();
        TrackRecord {
            estimates: self.estimates.iter().map(|row| cols.iter().map(|c| c.and_then(|i| row[i])).collect()).collect(),
            windows: windows.to_vec(),
        }
    }
}

/// Power-weighted centroid of `(tau, nu)` over the nodes predicted as each
/// target class. Classes `>= n_targets` (background) are ignored; a class
/// with no nodes yields `None`.
pub fn estimate_from_labels(graph: &DdGraph, predicted: &[usize], n_targets: usize) -> Result<Vec<Option<DelayDoppler>>> {
    if predicted.len() != graph.len() {
        return Err(Error::DimensionMismatch {
            context: "predicted labels vs nodes",
            expected: (graph.len(), 1),
            found: (predicted.len(), 1),
        });
    }
    let mut acc = vec![(0.0, 0.0, 0.0); n_targets];
    for (node, &c) in graph.nodes.iter().zip(predicted) {
        if let Some(a) = acc.get_mut(c) {
            let w = node.detection.power;
            a.0 += w * node.detection.delay;
            a.1 += w * node.detection.doppler;
            a.2 += w;
        }
    }
    Ok(acc.into_iter().map(|(st, sn, w)| (w > 0.0).then(|| DelayDoppler { delay: st / w, doppler: sn / w })).collect())
}

/// `|estimate - truth|` where the estimate is available, `None` elsewhere.
pub fn per_step_errors(estimates: &[Option<f64>], truth: &[f64]) -> Vec<Option<f64>> {
    estimates.iter().zip(truth).map(|(e, &t)| e.map(|e| (e - t).abs())).collect()
}

/// Root mean square over the available errors.
pub fn rmse(errors: &[Option<f64>]) -> Result<f64> {
    let (sum, n) = errors.iter().flatten().fold((0.0, 0usize), |(s, n), e| (s + e * e, n + 1));
    if n == 0 {
        return Err(Error::EmptyInput("no valid steps for RMSE"));
    }
    Ok(math::sqrt(sum / n as f64))
}

/// One `(scene, target)` series of estimate/truth pairs with its mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSeries {
    pub estimate: Vec<f64>,
    pub truth: Vec<f64>,
    pub mask: Vec<bool>,
}

impl MaskedSeries {
    /// Mask is 1 exactly where the estimate exists and both values are finite.
    pub fn from_options(estimate: &[Option<f64>], truth: &[f64]) -> Self {
        let mask: Vec<bool> = estimate.iter().zip(truth).map(|(e, t)| matches!(e, Some(v) if v.is_finite()) && t.is_finite()).collect();
        Self { estimate: estimate.iter().map(|e| e.unwrap_or(f64::NAN)).collect(), truth: truth.to_vec(), mask }
    }
}

/// `sum m (x_hat - x)^2 / sum m x^2` over every series and step.
pub fn nmse(series: &[MaskedSeries]) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for s in series {
        for ((&e, &t), &m) in s.estimate.iter().zip(&s.truth).zip(&s.mask) {
            if m {
                num += (e - t) * (e - t);
                den += t * t;
            }
        }
    }
    if den <= 0.0 {
        return Err(Error::EmptyInput("NMSE denominator is zero under the mask"));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::Detection;
    use crate::graph::{build_graph, Thresholds};

    fn graph() -> DdGraph {
        let det = |l: usize, p: usize, power: f64| Detection {
            delay_bin: l,
            doppler_bin: p,
            delay: l as f64 * 1e-7,
            doppler: p as f64 * 10.0,
            power,
        };
        build_graph(&[det(1, 1, 1.0), det(2, 2, 3.0), det(30, 9, 2.0)], 0, Thresholds { delay: 9e-7, doppler: 90.0 }, 16).unwrap()
    }

    #[test]
    fn estimates_from_labels() {
        let g = graph();
        let est = estimate_from_labels(&g, &[1, 1, 2], 3).unwrap();
        assert_eq!(est[0], None);
        let e1 = est[1].unwrap();
        assert!((e1.delay - (1.0 * 1e-7 + 3.0 * 2e-7) / 4.0).abs() < 1e-20);
        assert!((e1.doppler - (10.0 + 3.0 * 20.0) / 4.0).abs() < 1e-12);
        assert_eq!(est[2].unwrap().doppler, 90.0);
        // background class 3 ignored
        let est = estimate_from_labels(&g, &[3, 3, 0], 3).unwrap();
        assert_eq!(est[0].unwrap().delay, 30.0 * 1e-7);
        assert!(est[1].is_none() && est[2].is_none());
    }

    #[test]
    fn errors_and_rmse() {
        let truth = [1.0, 2.0, 3.0];
        assert_eq!(per_step_errors(&[Some(1.0), Some(2.0), Some(3.0)], &truth), vec![Some(0.0); 3]);
        let e = per_step_errors(&[Some(1.5), None, Some(3.5)], &truth);
        assert_eq!(e, vec![Some(0.5), None, Some(0.5)]);
        assert_eq!(rmse(&e).unwrap(), 0.5);
        assert_eq!(rmse(&[Some(-2.0)]).unwrap(), 2.0);
        assert!(rmse(&[None, None]).is_err());
    }

    #[test]
    fn nmse_closed_forms() {
        let s = MaskedSeries::from_options(&[Some(0.0), Some(0.0)], &[3.0, -4.0]);
        assert_eq!(nmse(&[s]).unwrap(), 1.0);
        let s = MaskedSeries::from_options(&[Some(3.0), None], &[3.0, -4.0]);
        assert_eq!(nmse(&[s]).unwrap(), 0.0);
        let s = MaskedSeries::from_options(&[None], &[3.0]);
        assert!(nmse(&[s]).is_err());
    }

    #[test]
    fn restrict_windows() {
        let mut r = TrackRecord::new(1, vec![0, 1, 2]);
        r.estimates[0][2] = Some(DelayDoppler { delay: 1.0, doppler: 2.0 });
        let t = r.restrict(&[2, 5]);
        assert_eq!(t.estimates[0], vec![Some(DelayDoppler { delay: 1.0, doppler: 2.0 }), None]);
    }
}
