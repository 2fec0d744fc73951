//! Bistatic scene geometry and per-target ground truth.
//!
//! A scene is a static transmitter, a static receiver and a handful of point
//! scatterers moving at constant velocity. The only target quantities used
//! downstream are the two-leg bistatic delay and its Doppler shift.

use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

use rand::Rng;

use crate::rng::SeededRng;
use crate::{math, Error, Result, SPEED_OF_LIGHT};

pub const KMH_PER_MPS: f64 = 3.6;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(from = "[f64; 3]", into = "[f64; 3]"))]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        math::sqrt(self.dot(self))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Inclusive gain range in dB from which a per-window path gain is drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GainRange {
    pub min_db: f64,
    pub max_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Target {
    /// Position at t = 0, meters.
    pub initial_pos: Vec3,
    /// Constant velocity in km/h, the unit the scene files use.
    pub velocity: Vec3,
    /// Path gain magnitude in dB (RCS stand-in).
    pub gain_db: f64,
    /// When present, the gain is redrawn uniformly from this range per window.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub gain_range_db: Option<GainRange>,
    pub label: usize,
}

impl Target {
    pub fn velocity_mps(&self) -> Vec3 {
        self.velocity * (1.0 / KMH_PER_MPS)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Scene {
    pub tx_pos: Vec3,
    pub rx_pos: Vec3,
    /// Carrier frequency, Hz.
    pub carrier_freq: f64,
    /// Complex AWGN power per CFR cell (linear). `None` means noise-free.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub noise_power: Option<f64>,
    /// Gain in dB of the static Tx->Rx line-of-sight path. `None` omits it.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub los_gain_db: Option<f64>,
    pub rng_seed: u64,
    pub targets: Vec<Target>,
}

/// Delay and Doppler of one target at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayDoppler {
    /// Bistatic delay, seconds.
    pub delay: f64,
    /// Doppler shift, Hz.
    pub doppler: f64,
}

/// Ground truth for every target at one instant, indexed by label.
pub type GroundTruth = Vec<DelayDoppler>;

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_freq > 0.0 && self.carrier_freq.is_finite()) {
            return Err(Error::InvalidParameter("carrier frequency must be positive".into()));
        }
        if !self.tx_pos.is_finite() || !self.rx_pos.is_finite() {
            return Err(Error::InvalidParameter("Tx/Rx positions must be finite".into()));
        }
        if self.tx_pos == self.rx_pos {
            return Err(Error::InvalidParameter("Tx and Rx must not coincide".into()));
        }
        if let Some(p) = self.noise_power {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::InvalidParameter("noise power must be finite and >= 0".into()));
            }
        }
        let mut seen = alloc::vec![false; self.targets.len()];
        for (i, t) in self.targets.iter().enumerate() {
            if !t.initial_pos.is_finite() || !t.velocity.is_finite() || !t.gain_db.is_finite() {
                return Err(Error::InvalidParameter(alloc::format!("target {i} has non-finite fields")));
            }
            if t.initial_pos == self.tx_pos || t.initial_pos == self.rx_pos {
                return Err(Error::CoincidentTarget { index: i });
            }
            if let Some(r) = t.gain_range_db {
                if !(r.min_db <= r.max_db) {
                    return Err(Error::InvalidParameter(alloc::format!("target {i} has an empty gain range")));
                }
            }
            match seen.get_mut(t.label) {
                Some(s) if !*s => *s = true,
                _ => return Err(Error::InvalidParameter("target labels must be unique and contiguous from 0".into())),
            }
        }
        Ok(())
    }

    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    /// Targets ordered by label.
    pub fn targets_by_label(&self) -> Vec<&Target> {
        let mut v: Vec<&Target> = self.targets.iter().collect();
        v.sort_by_key(|t| t.label);
        v
    }

    fn target(&self, c: usize) -> Result<&Target> {
        self.targets.get(c).ok_or(Error::InvalidTarget { index: c, count: self.targets.len() })
    }

    /// Direct-path delay between Tx and Rx.
    pub fn baseline_delay(&self) -> f64 {
        (self.rx_pos - self.tx_pos).norm() / SPEED_OF_LIGHT
    }

    pub fn target_position(&self, c: usize, t: f64) -> Result<Vec3> {
        let target = self.target(c)?;
        Ok(target.initial_pos + target.velocity_mps() * t)
    }

    /// Bistatic delay and Doppler of target `c` at time `t`.
    ///
    /// Doppler follows `nu = -f_c * d tau / dt`, so a target closing on both
    /// Tx and Rx has positive Doppler.
    pub fn ground_truth(&self, c: usize, t: f64) -> Result<DelayDoppler> {
        let p = self.target_position(c, t)?;
        let v = self.target(c)?.velocity_mps();
        let to_tx = p - self.tx_pos;
        let to_rx = p - self.rx_pos;
        let (d_tx, d_rx) = (to_tx.norm(), to_rx.norm());
        if d_tx == 0.0 || d_rx == 0.0 {
            return Err(Error::CoincidentTarget { index: c });
        }
        let range_rate = v.dot(to_tx) / d_tx + v.dot(to_rx) / d_rx;
        Ok(DelayDoppler { delay: (d_tx + d_rx) / SPEED_OF_LIGHT, doppler: -self.carrier_freq / SPEED_OF_LIGHT * range_rate })
    }

    /// Ground truth of all targets at `t`, indexed by label.
    pub fn ground_truth_all(&self, t: f64) -> Result<GroundTruth> {
        let mut out = alloc::vec![DelayDoppler { delay: 0.0, doppler: 0.0 }; self.targets.len()];
        for (i, target) in self.targets.iter().enumerate() {
            out[target.label] = self.ground_truth(i, t)?;
        }
        Ok(out)
    }
}

/// Bounds for randomized scene generation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SceneGenerator {
    /// Side of the square area (centered on the origin) in which Tx, Rx and
    /// target start positions are drawn, meters.
    pub area_size: f64,
    pub tx_height: f64,
    pub rx_height: f64,
    pub target_height: f64,
    /// Minimum distance between any target start and Tx/Rx, meters.
    pub min_clearance: f64,
    /// Minimum Tx-Rx separation, meters.
    pub min_baseline: f64,
    pub speed_min_kmh: f64,
    pub speed_max_kmh: f64,
    pub carrier_freq: f64,
    pub noise_power: Option<f64>,
    pub los_gain_db: Option<f64>,
    /// One entry per target. Its gain is drawn from this range per window.
    pub target_gains: Vec<GainRange>,
}

impl SceneGenerator {
    /// Draw one scene. Fixed `rng` state gives a fixed scene.
    pub fn generate(&self, rng: &mut SeededRng) -> Scene {
        let half = self.area_size / 2.0;
        let planar = |rng: &mut SeededRng, z: f64| Vec3::new(rng.gen_range(-half..=half), rng.gen_range(-half..=half), z);
        let tx_pos = planar(rng, self.tx_height);
        let rx_pos = loop {
            let p = planar(rng, self.rx_height);
            if (p - tx_pos).norm() >= self.min_baseline {
                break p;
            }
        };
        let targets = self
            .target_gains
            .iter()
            .enumerate()
            .map(|(label, gains)| {
                let initial_pos = loop {
                    let p = planar(rng, self.target_height);
                    if (p - tx_pos).norm() >= self.min_clearance && (p - rx_pos).norm() >= self.min_clearance {
                        break p;
                    }
                };
                let speed = rng.gen_range(self.speed_min_kmh..=self.speed_max_kmh);
                let heading = rng.gen_range(0.0..core::f64::consts::TAU);
                let (s, c) = math::sin_cos(heading);
                Target {
                    initial_pos,
                    velocity: Vec3::new(speed * c, speed * s, 0.0),
                    gain_db: 0.5 * (gains.min_db + gains.max_db),
                    gain_range_db: Some(*gains),
                    label,
                }
            })
            .collect();
        Scene {
            tx_pos,
            rx_pos,
            carrier_freq: self.carrier_freq,
            noise_power: self.noise_power,
            los_gain_db: self.los_gain_db,
            rng_seed: rng.gen::<u64>() >> 1,
            targets,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn scene(targets: Vec<Target>) -> Scene {
        Scene {
            tx_pos: Vec3::new(0.0, 0.0, 0.0),
            rx_pos: Vec3::new(100.0, 0.0, 0.0),
            carrier_freq: 5e9,
            noise_power: None,
            los_gain_db: None,
            rng_seed: 0,
            targets,
        }
    }

    fn target(pos: Vec3, v_kmh: Vec3, label: usize) -> Target {
        Target { initial_pos: pos, velocity: v_kmh, gain_db: 0.0, gain_range_db: None, label }
    }

    #[test]
    fn linear_motion() {
        let s = scene(vec![target(Vec3::ZERO + Vec3::new(0.0, 5.0, 0.0), Vec3::new(3.6, 0.0, 0.0), 0)]);
        assert_eq!(s.target_position(0, 2.0).unwrap(), Vec3::new(2.0, 5.0, 0.0));
        assert_eq!(s.target_position(0, 0.0).unwrap(), Vec3::new(0.0, 5.0, 0.0));
    }

    #[test]
    fn kmh_position_matches_scalar_arithmetic() {
        let s = scene(vec![target(Vec3::new(50.0, 50.0, 0.0), Vec3::new(-10.0, -10.0, 0.0), 0)]);
        let p = s.target_position(0, 15.0).unwrap();
        // 10 km/h for 15 s = 150/3.6 m = 41.666... m
        let expected = 50.0 - 41.666_666_666_666_664;
        assert!((p.x - expected).abs() < 1e-12 && (p.y - expected).abs() < 1e-12);
        assert_eq!(p.z, 0.0);
    }

    #[test]
    fn invalid_index_rejected() {
        let s = scene(vec![]);
        assert_eq!(s.target_position(0, 0.0), Err(Error::InvalidTarget { index: 0, count: 0 }));
    }

    #[test]
    fn symmetric_crossing_has_zero_doppler() {
        let s = scene(vec![target(Vec3::new(50.0, 50.0, 0.0), Vec3::new(36.0, 0.0, 0.0), 0)]);
        let gt = s.ground_truth(0, 0.0).unwrap();
        assert!(gt.doppler.abs() < 1e-9, "{}", gt.doppler);
        assert!(gt.delay >= s.baseline_delay());
    }

    #[test]
    fn stationary_target() {
        let s = scene(vec![target(Vec3::new(20.0, 30.0, 1.0), Vec3::ZERO, 0)]);
        let a = s.ground_truth(0, 0.0).unwrap();
        let b = s.ground_truth(0, 7.5).unwrap();
        assert_eq!(a.doppler, 0.0);
        assert_eq!(a.delay, b.delay);
    }

    #[test]
    fn coincident_target_is_an_error() {
        let s = scene(vec![target(Vec3::new(-1.0, 0.0, 0.0), Vec3::new(3.6, 0.0, 0.0), 0)]);
        assert_eq!(s.ground_truth(0, 1.0), Err(Error::CoincidentTarget { index: 0 }));
    }

    #[test]
    fn validation() {
        let mut s = scene(vec![target(Vec3::new(1.0, 1.0, 0.0), Vec3::ZERO, 1)]);
        assert!(s.validate().is_err());
        s.targets[0].label = 0;
        assert!(s.validate().is_ok());
        s.rx_pos = s.tx_pos;
        assert!(s.validate().is_err());
    }
}
