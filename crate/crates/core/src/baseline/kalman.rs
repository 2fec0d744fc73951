//! Linear Kalman filter on `[delay, doppler]`.
//!
//! The Doppler drives the delay rate through `nu = -f_c d tau / dt`, so
//! `F = [[1, -dt / f_c], [0, 1]]` with `dt` the window hop. Both components
//! are measured directly (`H = I`).

use crate::{math, Error, Result};

pub type Mat2 = [[f64; 2]; 2];
pub type Vec2 = [f64; 2];

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn mat_add(a: &Mat2, b: &Mat2) -> Mat2 {
    [[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]]
}

pub fn transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

pub fn mat_vec(a: &Mat2, v: &Vec2) -> Vec2 {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

pub fn inverse(a: &Mat2) -> Option<Mat2> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some([[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]])
}

pub fn diag(a: f64, b: f64) -> Mat2 {
    [[a, 0.0], [0.0, b]]
}

/// Symmetric positive-definite test for a 2x2 matrix (Sylvester).
pub fn is_spd(a: &Mat2) -> bool {
    let sym_tol = 1e-12 * (a[0][1].abs() + a[1][0].abs());
    (a[0][1] - a[1][0]).abs() <= sym_tol && a[0][0] > 0.0 && a[1][1] > 0.0 && a[0][0] * a[1][1] - a[0][1] * a[1][0] > 0.0
}

/// Symmetrize and, if needed, lift the diagonal until the matrix is SPD.
pub fn repair_spd(a: &Mat2) -> Mat2 {
    let off = 0.5 * (a[0][1] + a[1][0]);
    let mut out = [[a[0][0], off], [off, a[1][1]]];
    let mut jitter = 1e-12;
    while !is_spd(&out) {
        for i in 0..2 {
            out[i][i] = out[i][i].abs().max(f64::MIN_POSITIVE) * (1.0 + jitter);
        }
        // shrink the correlation if the diagonal alone cannot fix it
        let bound = math::sqrt(out[0][0] * out[1][1]) * (1.0 - jitter);
        if out[0][1].abs() >= bound {
            let c = bound.copysign(out[0][1]);
            out[0][1] = c;
            out[1][0] = c;
        }
        jitter *= 10.0;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KfModel {
    pub transition: Mat2,
    pub process_noise: Mat2,
    pub measurement_noise: Mat2,
}

impl KfModel {
    /// Physics-coupled transition for a window hop `dt` at carrier `fc`.
    pub fn coupled(dt: f64, carrier_freq: f64, process_noise: Mat2, measurement_noise: Mat2) -> Self {
        Self { transition: [[1.0, -dt / carrier_freq], [0.0, 1.0]], process_noise, measurement_noise }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KfState {
    /// `[delay s, doppler Hz]`
    pub mean: Vec2,
    pub covariance: Mat2,
    pub track_id: usize,
    /// Consecutive windows without an associated measurement.
    pub misses: usize,
}

impl KfState {
    pub fn innovation_covariance(&self, model: &KfModel) -> Mat2 {
        mat_add(&self.covariance, &model.measurement_noise)
    }

    /// Squared Mahalanobis distance of `z` under the innovation covariance.
    pub fn mahalanobis_sq(&self, z: &Vec2, model: &KfModel) -> f64 {
        let s = self.innovation_covariance(model);
        let Some(si) = inverse(&s) else { return f64::INFINITY };
        let y = [z[0] - self.mean[0], z[1] - self.mean[1]];
        let t = mat_vec(&si, &y);
        y[0] * t[0] + y[1] * t[1]
    }
}

pub fn kf_predict(state: &KfState, model: &KfModel) -> KfState {
    let f = &model.transition;
    let p = mat_add(&mat_mul(&mat_mul(f, &state.covariance), &transpose(f)), &model.process_noise);
    KfState { mean: mat_vec(f, &state.mean), covariance: repair_spd(&p), ..*state }
}

/// Measurement update with the Joseph-form covariance.
pub fn kf_update(state: &KfState, z: &Vec2, model: &KfModel) -> Result<KfState> {
    let s = state.innovation_covariance(model);
    let si = inverse(&s).ok_or_else(|| Error::InvalidParameter("singular innovation covariance".into()))?;
    let gain = mat_mul(&state.covariance, &si);
    let y = [z[0] - state.mean[0], z[1] - state.mean[1]];
    let ky = mat_vec(&gain, &y);
    let mean = [state.mean[0] + ky[0], state.mean[1] + ky[1]];
    let i_minus_k = [[1.0 - gain[0][0], -gain[0][1]], [-gain[1][0], 1.0 - gain[1][1]]];
    let p = mat_add(
        &mat_mul(&mat_mul(&i_minus_k, &state.covariance), &transpose(&i_minus_k)),
        &mat_mul(&mat_mul(&gain, &model.measurement_noise), &transpose(&gain)),
    );
    Ok(KfState { mean, covariance: repair_spd(&p), misses: 0, ..*state })
}
