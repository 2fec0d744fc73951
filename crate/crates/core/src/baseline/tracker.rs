//! Window-by-window tracking loop of the baseline.

use alloc::vec::Vec;

use super::assoc::{chi2_2dof_quantile, gnn_associate};
use super::dbscan::{dbscan, DbscanParams};
use super::kalman::{diag, kf_predict, kf_update, KfModel, KfState, Vec2};
use crate::channel::OfdmParams;
use crate::detect::Detection;
use crate::metrics::TrackRecord;
use crate::scene::DelayDoppler;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct BaselineParams {
    pub dbscan: DbscanParams,
    /// Gate probability for the `chi^2_2` association gate.
    pub gate_probability: f64,
    /// A track is dropped after this many consecutive windows without a
    /// measurement.
    pub max_misses: usize,
    /// Process noise standard deviation per window, in delay and Doppler bins.
    pub process_noise_bins: [f64; 2],
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self { dbscan: DbscanParams::default(), gate_probability: 0.99, max_misses: 10, process_noise_bins: [0.1, 0.1] }
    }
}

impl BaselineParams {
    pub fn gate(&self) -> f64 {
        chi2_2dof_quantile(self.gate_probability)
    }

    /// Kalman model for the given waveform: `Q` from `process_noise_bins`,
    /// `R` the variance of a uniform quantization error over one bin.
    pub fn model(&self, ofdm: &OfdmParams, carrier_freq: f64) -> KfModel {
        let (dt, df) = (ofdm.delay_resolution(), ofdm.doppler_resolution());
        let [qt, qf] = self.process_noise_bins;
        KfModel::coupled(
            ofdm.window_period(),
            carrier_freq,
            diag((qt * dt) * (qt * dt), (qf * df) * (qf * df)),
            diag(dt * dt / 12.0, df * df / 12.0),
        )
    }
}

/// Power-weighted mean `(delay, doppler)` of a cluster.
pub fn cluster_centroid(cluster: &[Detection]) -> Result<Vec2> {
    if cluster.is_empty() {
        return Err(Error::EmptyInput("empty cluster"));
    }
    let (mut st, mut sn, mut w) = (0.0, 0.0, 0.0);
    for d in cluster {
        st += d.power * d.delay;
        sn += d.power * d.doppler;
        w += d.power;
    }
    if !(w > 0.0) {
        let n = cluster.len() as f64;
        return Ok([cluster.iter().map(|d| d.delay).sum::<f64>() / n, cluster.iter().map(|d| d.doppler).sum::<f64>() / n]);
    }
    Ok([st / w, sn / w])
}

/// Cluster centroids of one window's detections; noise points are dropped.
pub fn window_measurements(detections: &[Detection], params: DbscanParams) -> Result<Vec<Vec2>> {
    dbscan(detections, params)?.clusters().iter().map(|c| cluster_centroid(c)).collect()
}

/// Run the baseline over windows `0..detections.len()`.
///
/// Track `c` is initialized from `initial[c]` (ground truth at window 0) with
/// covariance `R`, and its window-0 estimate is that initial state. For each
/// later window the tracks are predicted, the detections clustered, centroids
/// associated and matched tracks updated. An unmatched track reports its
/// prediction; after `max_misses` consecutive misses it is dropped and
/// reports nothing from the next window on.
pub fn run_baseline(
    detections: &[Vec<Detection>],
    initial: &[DelayDoppler],
    params: &BaselineParams,
    ofdm: &OfdmParams,
    carrier_freq: f64,
) -> Result<TrackRecord> {
    if !(params.gate_probability > 0.0 && params.gate_probability < 1.0) {
        return Err(Error::InvalidParameter("gate probability must be in (0, 1)".into()));
    }
    let model = params.model(ofdm, carrier_freq);
    let gate = params.gate();
    let n_windows = detections.len();
    let mut record = TrackRecord::new(initial.len(), (0..n_windows).collect());
    let mut tracks: Vec<KfState> = initial
        .iter()
        .enumerate()
        .map(|(c, g)| KfState { mean: [g.delay, g.doppler], covariance: model.measurement_noise, track_id: c, misses: 0 })
        .collect();
    if n_windows == 0 {
        return Ok(record);
    }
    for t in &tracks {
        record.estimates[t.track_id][0] = Some(DelayDoppler { delay: t.mean[0], doppler: t.mean[1] });
    }
    for (k, dets) in detections.iter().enumerate().skip(1) {
        for t in tracks.iter_mut() {
            *t = kf_predict(t, &model);
        }
        let measurements = window_measurements(dets, params.dbscan)?;
        let assignment = gnn_associate(&tracks, &measurements, &model, gate);
        for &(ti, mi) in &assignment.pairs {
            tracks[ti] = kf_update(&tracks[ti], &measurements[mi], &model)?;
        }
        for &ti in &assignment.unassigned_tracks {
            tracks[ti].misses += 1;
        }
        for t in &tracks {
            record.estimates[t.track_id][k] = Some(DelayDoppler { delay: t.mean[0], doppler: t.mean[1] });
        }
        tracks.retain(|t| t.misses < params.max_misses);
    }
    Ok(record)
}
