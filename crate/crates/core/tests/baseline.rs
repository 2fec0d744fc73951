#![allow(clippy::needless_range_loop)]

use ddtrack_core::baseline::kalman::{diag, inverse, is_spd, mat_add, mat_mul, mat_vec, transpose, Mat2, Vec2};
use ddtrack_core::baseline::{
    cluster_centroid, dbscan, gnn_associate, greedy_associate, kf_predict, kf_update, run_baseline, solve_gated, BaselineParams,
    DbscanParams, KfModel, KfState,
};
use ddtrack_core::channel::OfdmParams;
use ddtrack_core::detect::Detection;
use ddtrack_core::rng::{rng_from, standard_normal};
use ddtrack_core::scene::DelayDoppler;
use proptest::prelude::*;
use rand::Rng;

fn ofdm() -> OfdmParams {
    OfdmParams::new(60e3, 256, 256, 1371, 30)
}

fn det(l: usize, p: usize, power: f64) -> Detection {
    let o = ofdm();
    Detection {
        delay_bin: l,
        doppler_bin: p,
        delay: l as f64 * o.delay_resolution(),
        doppler: (p as f64 - 128.0) * o.doppler_resolution(),
        power,
    }
}

/// DBSCAN by transitive closure: clusters are connected components of core
/// points, numbered by their smallest member; a border point joins the
/// lowest-numbered cluster among its core neighbours.
fn reachability_oracle(points: &[Detection], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let near = |i: usize, j: usize| {
        (points[i].delay_bin.abs_diff(points[j].delay_bin).max(points[i].doppler_bin.abs_diff(points[j].doppler_bin))) as f64 <= eps
    };
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            reach[i][j] = core[i] && core[j] && near(i, j);
        }
    }
    for m in 0..n {
        for i in 0..n {
            if reach[i][m] {
                for j in 0..n {
                    if reach[m][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut label = vec![None; n];
    let mut next = 0;
    for i in 0..n {
        if core[i] && label[i].is_none() {
            for j in 0..n {
                if reach[i][j] {
                    label[j] = Some(next);
                }
            }
            next += 1;
        }
    }
    for i in 0..n {
        if !core[i] {
            label[i] = (0..n).filter(|&j| core[j] && near(i, j)).filter_map(|j| label[j]).min();
        }
    }
    label
}

fn arb_points() -> impl Strategy<Value = Vec<Detection>> {
    prop::collection::btree_set((0usize..30, 0usize..30), 0..40).prop_map(|s| s.into_iter().map(|(l, p)| det(l, p, 1.0)).collect())
}

proptest! {
    #[test]
    fn dbscan_matches_reachability(points in arb_points(), eps in 1.0f64..4.0, min_pts in 1usize..5) {
        let c = dbscan(&points, DbscanParams { eps, min_pts }).unwrap();
        prop_assert_eq!(&c.points, &points);
        prop_assert_eq!(c.assignment, reachability_oracle(&points, eps, min_pts));
    }

    #[test]
    fn dbscan_ignores_input_order(points in arb_points()) {
        let mut rev = points.clone();
        rev.reverse();
        let p = DbscanParams::default();
        prop_assert_eq!(dbscan(&points, p).unwrap(), dbscan(&rev, p).unwrap());
    }
}

#[test]
fn dbscan_examples() {
    let c = dbscan(&[det(5, 5, 1.0)], DbscanParams { eps: 3.0, min_pts: 2 }).unwrap();
    assert_eq!(c.n_clusters, 0);
    assert_eq!(c.noise().len(), 1);
    let mut blobs = Vec::new();
    for (l, p) in [(0, 0), (1, 0), (0, 1), (1, 1), (2, 2)] {
        blobs.push(det(l + 10, p + 10, 1.0));
        blobs.push(det(l + 60, p + 60, 1.0));
    }
    let c = dbscan(&blobs, DbscanParams { eps: 3.0, min_pts: 3 }).unwrap();
    assert_eq!(c.n_clusters, 2);
    assert!(c.clusters().iter().all(|k| k.len() == 5));
}

#[test]
fn centroid_examples() {
    let a = det(10, 100, 2.0);
    assert_eq!(cluster_centroid(&[a]).unwrap(), [a.delay, a.doppler]);
    let b = det(12, 104, 2.0);
    let m = cluster_centroid(&[a, b]).unwrap();
    assert!((m[0] - 0.5 * (a.delay + b.delay)).abs() < 1e-20);
    assert!((m[1] - 0.5 * (a.doppler + b.doppler)).abs() < 1e-12);
    assert!(cluster_centroid(&[]).is_err());
    let mut rng = rng_from(1, &[]);
    let cluster: Vec<Detection> = (0..7).map(|i| det(20 + i, 90 + 2 * i, rng.gen_range(0.1..5.0))).collect();
    let w: f64 = cluster.iter().map(|d| d.power).sum();
    let tau = cluster.iter().map(|d| d.power * d.delay).sum::<f64>() / w;
    let nu = cluster.iter().map(|d| d.power * d.doppler).sum::<f64>() / w;
    let c = cluster_centroid(&cluster).unwrap();
    assert!((c[0] - tau).abs() <= 1e-12 * tau && (c[1] - nu).abs() <= 1e-12 * nu.abs());
}

/// Minimum total cost by enumerating every partial injection.
fn exhaustive(costs: &[Vec<Option<f64>>], gate: f64) -> f64 {
    fn go(i: usize, costs: &[Vec<Option<f64>>], used: &mut Vec<bool>, gate: f64) -> f64 {
        if i == costs.len() {
            return 0.0;
        }
        let mut best = gate + go(i + 1, costs, used, gate);
        for j in 0..used.len() {
            if let (false, Some(c)) = (used[j], costs[i][j]) {
                used[j] = true;
                best = best.min(c + go(i + 1, costs, used, gate));
                used[j] = false;
            }
        }
        best
    }
    let m = costs.first().map_or(0, |r| r.len());
    go(0, costs, &mut vec![false; m], gate)
}

fn arb_costs() -> impl Strategy<Value = Vec<Vec<Option<f64>>>> {
    (0usize..=4, 0usize..=6)
        .prop_flat_map(|(n, m)| prop::collection::vec(prop::collection::vec(prop::option::weighted(0.7, 0.0f64..9.21), m), n))
}

proptest! {
    #[test]
    fn assignment_is_optimal(costs in arb_costs()) {
        let gate = 9.21;
        let a = solve_gated(&costs, gate);
        let g = greedy_associate(&costs, gate);
        let best = exhaustive(&costs, gate);
        prop_assert!((a.cost - best).abs() < 1e-9, "hungarian {} exhaustive {}", a.cost, best);
        prop_assert!(a.cost <= g.cost + 1e-9);
        // the reported cost is the cost of the reported pairs
        let direct: f64 = a.pairs.iter().map(|&(i, j)| costs[i][j].unwrap()).sum::<f64>() + gate * a.unassigned_tracks.len() as f64;
        prop_assert!((direct - a.cost).abs() < 1e-9);
        prop_assert_eq!(a.pairs.len() + a.unassigned_tracks.len(), costs.len());
    }
}

#[test]
fn association_uses_mahalanobis_gate() {
    let o = ofdm();
    let model = BaselineParams::default().model(&o, 5e9);
    let track = |tau: f64, nu: f64| KfState { mean: [tau, nu], covariance: model.measurement_noise, track_id: 0, misses: 0 };
    let tracks = [track(1e-6, 30.0)];
    // one bin away: d^2 = 1 / (2/12) = 6 < 9.21; two bins: 24 > 9.21
    let near = [1e-6 + o.delay_resolution(), 30.0];
    let far = [1e-6 + 2.0 * o.delay_resolution(), 30.0];
    assert_eq!(gnn_associate(&tracks, &[near], &model, 9.21).pairs, vec![(0, 0)]);
    let a = gnn_associate(&tracks, &[far], &model, 9.21);
    assert!(a.pairs.is_empty());
    assert_eq!(a.unassigned_measurements, vec![0]);
}

fn random_spd(rng: &mut impl Rng, s0: f64, s1: f64) -> Mat2 {
    let a =
        [[rng.gen_range(-1.0..1.0) * s0, rng.gen_range(-1.0..1.0) * s0], [rng.gen_range(-1.0..1.0) * s1, rng.gen_range(-1.0..1.0) * s1]];
    mat_add(&mat_mul(&a, &transpose(&a)), &diag(1e-6 * s0 * s0, 1e-6 * s1 * s1))
}

#[test]
fn covariance_stays_spd() {
    let mut rng = rng_from(42, &[]);
    let (dt, df) = (6.5e-8, 10.7);
    let mut state = KfState { mean: [1e-6, 0.0], covariance: diag(dt * dt, df * df), track_id: 0, misses: 0 };
    for cycle in 0..10_000 {
        let model = KfModel::coupled(rng.gen_range(0.01..2.0), 5e9, random_spd(&mut rng, dt * 0.1, df * 0.1), random_spd(&mut rng, dt, df));
        state = kf_predict(&state, &model);
        assert!(is_spd(&state.covariance), "predict {cycle}: {:?}", state.covariance);
        let z = [state.mean[0] + dt * standard_normal(&mut rng), state.mean[1] + df * standard_normal(&mut rng)];
        state = kf_update(&state, &z, &model).unwrap();
        assert!(is_spd(&state.covariance), "update {cycle}: {:?}", state.covariance);
    }
}

/// With `Q = 0` the filter equals regularized batch least squares on the
/// initial state: `x0 = argmin |x0 - m0|^2_{P0^-1} + sum_k |z_k - F^k x0|^2_{R^-1}`.
#[test]
fn constant_velocity_matches_batch_least_squares() {
    let o = ofdm();
    let (dt, df) = (o.delay_resolution(), o.doppler_resolution());
    let r = diag(dt * dt / 12.0, df * df / 12.0);
    let model = KfModel::coupled(o.window_period(), 5e9, [[0.0; 2]; 2], r);
    let truth0: Vec2 = [4e-7, -37.0];
    let m0: Vec2 = [truth0[0] + 3.0 * dt, truth0[1] - 4.0 * df];
    let p0 = diag(4.0 * dt * dt, 4.0 * df * df);
    let f = model.transition;

    let mut state = KfState { mean: m0, covariance: p0, track_id: 0, misses: 0 };
    let mut fk = [[1.0, 0.0], [0.0, 1.0]];
    let ri = inverse(&r).unwrap();
    let mut info = inverse(&p0).unwrap();
    let mut rhs = mat_vec(&info, &m0);
    let mut truth = truth0;
    let initial_err = ((m0[0] - truth0[0]) / dt).abs();
    for _ in 0..25 {
        state = kf_predict(&state, &model);
        fk = mat_mul(&f, &fk);
        truth = mat_vec(&f, &truth);
        state = kf_update(&state, &truth, &model).unwrap();
        let ft_ri = mat_mul(&transpose(&fk), &ri);
        info = mat_add(&info, &mat_mul(&ft_ri, &fk));
        let add = mat_vec(&ft_ri, &truth);
        rhs = [rhs[0] + add[0], rhs[1] + add[1]];
        let x0 = mat_vec(&inverse(&info).unwrap(), &rhs);
        let oracle = mat_vec(&fk, &x0);
        assert!(((state.mean[0] - oracle[0]) / dt).abs() < 1e-6, "delay {:?} vs {:?}", state.mean, oracle);
        assert!(((state.mean[1] - oracle[1]) / df).abs() < 1e-6, "doppler {:?} vs {:?}", state.mean, oracle);
    }
    assert!(((state.mean[0] - truth[0]) / dt).abs() < 0.1 * initial_err);
    assert!(((state.mean[1] - truth[1]) / df).abs() < 0.5);
}

fn blob(l: usize, p: usize) -> Vec<Detection> {
    vec![det(l, p - 1, 1.0), det(l, p, 1.0), det(l, p + 1, 1.0)]
}

#[test]
fn stationary_target_is_tracked_exactly() {
    let o = ofdm();
    let dets: Vec<Vec<Detection>> = (0..10).map(|_| blob(40, 128)).collect();
    let start = DelayDoppler { delay: 40.0 * o.delay_resolution(), doppler: 0.0 };
    let rec = run_baseline(&dets, &[start], &BaselineParams::default(), &o, 5e9).unwrap();
    for e in &rec.estimates[0] {
        let e = e.unwrap();
        assert!(((e.delay - start.delay) / o.delay_resolution()).abs() < 1e-9);
        assert!((e.doppler / o.doppler_resolution()).abs() < 1e-9);
    }
}

/// Delay drifting by exactly `nu * dt / f_c` per window; detections at the
/// nearest bins.
fn drifting(nu_bins: f64, windows: usize, withheld: &[usize]) -> (Vec<Vec<Detection>>, Vec<DelayDoppler>) {
    let o = ofdm();
    let fc = 5e9;
    let nu = nu_bins * o.doppler_resolution();
    let tau0 = 120.0 * o.delay_resolution();
    let truth: Vec<DelayDoppler> =
        (0..windows).map(|k| DelayDoppler { delay: tau0 - nu * o.window_period() * k as f64 / fc, doppler: nu }).collect();
    let dets = truth
        .iter()
        .enumerate()
        .map(|(k, t)| {
            if withheld.contains(&k) {
                return Vec::new();
            }
            let l = (t.delay / o.delay_resolution()).round() as usize;
            blob(l, (128.0 + nu_bins).round() as usize)
        })
        .collect();
    (dets, truth)
}

#[test]
fn constant_doppler_follows_closed_form_delay() {
    let o = ofdm();
    let (dets, truth) = drifting(30.0, 30, &[]);
    // sanity: the target really crosses several delay bins
    assert!((truth[0].delay - truth[29].delay) / o.delay_resolution() > 3.0);
    let rec = run_baseline(&dets, &truth[..1], &BaselineParams::default(), &o, 5e9).unwrap();
    for (e, t) in rec.estimates[0].iter().zip(&truth) {
        let e = e.unwrap();
        assert!(((e.delay - t.delay) / o.delay_resolution()).abs() <= 1.0);
    }
}

#[test]
fn withheld_detections_still_produce_estimates() {
    let o = ofdm();
    let (dets, truth) = drifting(30.0, 12, &[4, 5, 6]);
    let rec = run_baseline(&dets, &truth[..1], &BaselineParams::default(), &o, 5e9).unwrap();
    assert!(rec.estimates[0].iter().all(|e| e.is_some()));
    for k in 4..7 {
        let e = rec.estimates[0][k].unwrap();
        assert!(((e.delay - truth[k].delay) / o.delay_resolution()).abs() <= 1.0);
    }
}

#[test]
fn track_is_dropped_after_consecutive_misses() {
    let o = ofdm();
    let (dets, truth) = drifting(30.0, 20, &(3..20).collect::<Vec<_>>());
    let params = BaselineParams { max_misses: 4, ..BaselineParams::default() };
    let rec = run_baseline(&dets, &truth[..1], &params, &o, 5e9).unwrap();
    let available: Vec<bool> = rec.estimates[0].iter().map(|e| e.is_some()).collect();
    // misses at windows 3,4,5,6; dropped from window 7
    assert!(available[..7].iter().all(|&a| a));
    assert!(available[7..].iter().all(|&a| !a));
}
