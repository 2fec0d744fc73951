//! Global nearest neighbour association.
//!
//! Minimizes the total squared Mahalanobis distance over one-to-one
//! track/measurement pairings. Leaving a track unassigned costs the gate value,
//! and pairs outside the gate are forbidden. The problem is solved exactly as
//! a rectangular assignment (tracks x (measurements + one dummy per track))
//! with the Hungarian method.

use alloc::vec;
use alloc::vec::Vec;

use super::kalman::{KfModel, KfState, Vec2};
use crate::math;

/// `chi^2_2` quantile: `-2 ln(1 - p)`.
pub fn chi2_2dof_quantile(probability: f64) -> f64 {
    -2.0 * math::ln(1.0 - probability)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(track index, measurement index)` pairs, sorted by track.
    pub pairs: Vec<(usize, usize)>,
    pub unassigned_tracks: Vec<usize>,
    pub unassigned_measurements: Vec<usize>,
    /// Sum of pair costs plus `gate` per unassigned track.
    pub cost: f64,
}

/// Cost matrix `tracks x measurements`; `None` where outside the gate.
pub fn gated_costs(tracks: &[KfState], measurements: &[Vec2], model: &KfModel, gate: f64) -> Vec<Vec<Option<f64>>> {
    tracks
        .iter()
        .map(|t| {
            measurements
                .iter()
                .map(|z| {
                    let d = t.mahalanobis_sq(z, model);
                    (d <= gate).then_some(d)
                })
                .collect()
        })
        .collect()
}

pub fn gnn_associate(tracks: &[KfState], measurements: &[Vec2], model: &KfModel, gate: f64) -> Assignment {
    solve_gated(&gated_costs(tracks, measurements, model, gate), gate)
}

/// Optimal assignment for a gated cost matrix.
pub fn solve_gated(costs: &[Vec<Option<f64>>], gate: f64) -> Assignment {
    let n = costs.len();
    let m = costs.first().map_or(0, |r| r.len());
    // Forbidden entries get a cost no feasible solution can approach.
    let forbidden = (n as f64 + 1.0) * (gate.abs() + 1.0) * 1e6;
    let cols = m + n;
    let cost = |i: usize, j: usize| -> f64 {
        if j < m {
            costs[i][j].unwrap_or(forbidden)
        } else if j - m == i {
            gate
        } else {
            forbidden
        }
    };
    let row_of_col = hungarian(n, cols, cost);

    let mut pairs = Vec::new();
    let mut assigned_track = vec![false; n];
    let mut assigned_meas = vec![false; m];
    let mut total = 0.0;
    for (j, r) in row_of_col.iter().enumerate() {
        if let Some(i) = *r {
            if j < m {
                pairs.push((i, j));
                assigned_track[i] = true;
                assigned_meas[j] = true;
                total += costs[i][j].expect("forbidden pair chosen");
            }
        }
    }
    pairs.sort_unstable();
    let unassigned_tracks: Vec<usize> = (0..n).filter(|&i| !assigned_track[i]).collect();
    total += gate * unassigned_tracks.len() as f64;
    Assignment { pairs, unassigned_tracks, unassigned_measurements: (0..m).filter(|&j| !assigned_meas[j]).collect(), cost: total }
}

/// Shortest-augmenting-path Hungarian algorithm for `rows <= cols`.
/// Returns the row matched to each column.
fn hungarian(rows: usize, cols: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<Option<usize>> {
    debug_assert!(rows <= cols);
    // 1-based potentials; column 0 is the virtual start.
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut way = vec![0usize; cols + 1];
    let mut matched = vec![0usize; cols + 1];
    for i in 1..=rows {
        matched[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=cols).map(|j| (matched[j] != 0).then(|| matched[j] - 1)).collect()
}

/// Greedy nearest-pair association under the same costs.
pub fn greedy_associate(costs: &[Vec<Option<f64>>], gate: f64) -> Assignment {
    let n = costs.len();
    let m = costs.first().map_or(0, |r| r.len());
    let mut cand: Vec<(f64, usize, usize)> = (0..n).flat_map(|i| (0..m).filter_map(move |j| costs[i][j].map(|c| (c, i, j)))).collect();
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let (mut ti, mut mj) = (vec![false; n], vec![false; m]);
    let mut pairs = Vec::new();
    let mut total = 0.0;
    for (c, i, j) in cand {
        if !ti[i] && !mj[j] {
            ti[i] = true;
            mj[j] = true;
            pairs.push((i, j));
            total += c;
        }
    }
    pairs.sort_unstable();
    let unassigned_tracks: Vec<usize> = (0..n).filter(|&i| !ti[i]).collect();
    total += gate * unassigned_tracks.len() as f64;
    Assignment { pairs, unassigned_tracks, unassigned_measurements: (0..m).filter(|&j| !mj[j]).collect(), cost: total }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_value() {
        assert!((chi2_2dof_quantile(0.99) - 9.210340371976184).abs() < 1e-12);
    }

    #[test]
    fn single_in_gate_pair() {
        let a = solve_gated(&[vec![Some(1.0)]], 9.21);
        assert_eq!(a.pairs, vec![(0, 0)]);
        assert_eq!(a.cost, 1.0);
    }

    #[test]
    fn all_out_of_gate() {
        let a = solve_gated(&[vec![None, None], vec![None, None]], 9.21);
        assert!(a.pairs.is_empty());
        assert_eq!(a.unassigned_tracks, vec![0, 1]);
        assert_eq!(a.unassigned_measurements, vec![0, 1]);
    }

    #[test]
    fn crossed_nearest_neighbours_beat_greedy() {
        // greedy grabs (0,0)=1 and is left with (1,1)=8; optimum is 2+2
        let costs = vec![vec![Some(1.0), Some(2.0)], vec![Some(2.0), Some(8.0)]];
        let g = solve_gated(&costs, 9.21);
        let greedy = greedy_associate(&costs, 9.21);
        assert_eq!(g.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(g.cost, 4.0);
        assert_eq!(greedy.cost, 9.0);
    }

    #[test]
    fn no_tracks_or_measurements() {
        assert!(solve_gated(&[], 9.21).pairs.is_empty());
        let a = solve_gated(&[vec![], vec![]], 9.21);
        assert_eq!(a.unassigned_tracks, vec![0, 1]);
    }
}
