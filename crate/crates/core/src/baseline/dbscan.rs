//! DBSCAN over detections with the Chebyshev bin distance
//! `max(|d delay_bin|, |d doppler_bin|)`.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::detect::Detection;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct DbscanParams {
    /// Neighbourhood radius, bins.
    pub eps: f64,
    /// Points (including the point itself) needed within `eps` for a core point.
    pub min_pts: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self { eps: 3.0, min_pts: 2 }
    }
}

pub fn bin_distance(a: &Detection, b: &Detection) -> f64 {
    a.delay_bin.abs_diff(b.delay_bin).max(a.doppler_bin.abs_diff(b.doppler_bin)) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Detections in canonical `(delay_bin, doppler_bin)` order.
    pub points: Vec<Detection>,
    /// Cluster of each point; `None` is noise.
    pub assignment: Vec<Option<usize>>,
    pub n_clusters: usize,
}

impl Clustering {
    pub fn clusters(&self) -> Vec<Vec<Detection>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (p, a) in self.points.iter().zip(&self.assignment) {
            if let Some(c) = a {
                out[*c].push(*p);
            }
        }
        out
    }

    pub fn noise(&self) -> Vec<Detection> {
        self.points.iter().zip(&self.assignment).filter(|(_, a)| a.is_none()).map(|(p, _)| *p).collect()
    }
}

/// Cluster `detections`. They are first put in canonical order, so the result
/// does not depend on input order.
pub fn dbscan(detections: &[Detection], params: DbscanParams) -> Result<Clustering> {
    if !(params.eps > 0.0) || params.min_pts == 0 {
        return Err(Error::InvalidParameter("DBSCAN needs eps > 0 and min_pts >= 1".into()));
    }
    let mut points = detections.to_vec();
    points.sort_by_key(|d| (d.delay_bin, d.doppler_bin));
    let n = points.len();
    let neighbours: Vec<Vec<usize>> =
        (0..n).map(|i| (0..n).filter(|&j| bin_distance(&points[i], &points[j]) <= params.eps).collect()).collect();
    let is_core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= params.min_pts).collect();

    let mut assignment = vec![None; n];
    let mut n_clusters = 0;
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if assignment[seed].is_some() || !is_core[seed] {
            continue;
        }
        let c = n_clusters;
        n_clusters += 1;
        assignment[seed] = Some(c);
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            for &j in &neighbours[i] {
                if assignment[j].is_none() {
                    assignment[j] = Some(c);
                    if is_core[j] {
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    Ok(Clustering { points, assignment, n_clusters })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn det(l: usize, p: usize) -> Detection {
        Detection { delay_bin: l, doppler_bin: p, delay: l as f64, doppler: p as f64, power: 1.0 }
    }

    #[test]
    fn two_separated_blobs() {
        let mut dets = Vec::new();
        for (l, p) in [(10, 10), (11, 10), (10, 11), (12, 12), (11, 12)] {
            dets.push(det(l, p));
            dets.push(det(l + 50, p + 50));
        }
        let c = dbscan(&dets, DbscanParams { eps: 3.0, min_pts: 3 }).unwrap();
        assert_eq!(c.n_clusters, 2);
        assert!(c.noise().is_empty());
        assert!(c.clusters().iter().all(|m| m.len() == 5));
    }

    #[test]
    fn lone_point_is_noise() {
        let c = dbscan(&[det(4, 4)], DbscanParams { eps: 3.0, min_pts: 2 }).unwrap();
        assert_eq!(c.n_clusters, 0);
        assert_eq!(c.noise().len(), 1);
    }

    #[test]
    fn empty_input() {
        let c = dbscan(&[], DbscanParams::default()).unwrap();
        assert_eq!(c.n_clusters, 0);
    }
}
