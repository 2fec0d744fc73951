//! Two-dimensional ordered-statistics CFAR on the delay-Doppler power map.
//!
//! For each cell under test the training set is the rectangular ring between
//! the guard extent and the guard+train extent, wrapped toroidally at the map
//! edges so every cell sees exactly `N_train` training cells. The noise level
//! is the `k_os`-th smallest training power; the cell is declared a detection
//! when its power exceeds `alpha * Z`. Everything runs on linear power.

use alloc::format;
use alloc::vec::Vec;

use crate::ddmap::DdMap;
use crate::{math, Error, Result};

/// How the CFAR multiplier is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CfarThreshold {
    /// Fixed multiplier `alpha_os`.
    Scale(f64),
    /// Target false-alarm probability for i.i.d. exponential cells.
    Pfa(f64),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct OsCfarParams {
    pub guard_delay: usize,
    pub guard_doppler: usize,
    pub train_delay: usize,
    pub train_doppler: usize,
    /// `k_os = round(rank_fraction * N_train)`.
    pub rank_fraction: f64,
    pub threshold: CfarThreshold,
    /// Doppler bins with `|p - p_0| <= halfwidth` around 0 Hz are never
    /// tested. `None` disables the mask.
    pub zero_doppler_mask_halfwidth: Option<usize>,
}

impl Default for OsCfarParams {
    fn default() -> Self {
        Self {
            guard_delay: 2,
            guard_doppler: 2,
            train_delay: 8,
            train_doppler: 8,
            rank_fraction: 0.75,
            threshold: CfarThreshold::Pfa(1e-3),
            zero_doppler_mask_halfwidth: Some(2),
        }
    }
}

impl OsCfarParams {
    /// Number of training cells in the ring.
    pub fn n_train(&self) -> usize {
        let outer = (2 * (self.guard_delay + self.train_delay) + 1) * (2 * (self.guard_doppler + self.train_doppler) + 1);
        let inner = (2 * self.guard_delay + 1) * (2 * self.guard_doppler + 1);
        outer - inner
    }

    pub fn rank(&self) -> Result<usize> {
        let n = self.n_train();
        if n == 0 {
            return Err(Error::DegenerateWindow("training ring is empty".into()));
        }
        if !(self.rank_fraction > 0.0 && self.rank_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!("rank fraction {} outside (0, 1]", self.rank_fraction)));
        }
        let k = math::round(self.rank_fraction * n as f64) as usize;
        if k == 0 || k > n {
            return Err(Error::DegenerateWindow(format!("rank {k} outside 1..={n}")));
        }
        Ok(k)
    }

    /// Resolved multiplier `alpha_os`.
    pub fn alpha(&self) -> Result<f64> {
        match self.threshold {
            CfarThreshold::Scale(a) if a > 0.0 && a.is_finite() => Ok(a),
            CfarThreshold::Scale(a) => Err(Error::InvalidParameter(format!("CFAR scale {a} must be positive"))),
            CfarThreshold::Pfa(pfa) => alpha_from_pfa(self.n_train(), self.rank()?, pfa),
        }
    }

    fn training_offsets(&self) -> Vec<(isize, isize)> {
        let (gd, gp) = (self.guard_delay as isize, self.guard_doppler as isize);
        let (ed, ep) = (gd + self.train_delay as isize, gp + self.train_doppler as isize);
        let mut offsets = Vec::with_capacity(self.n_train());
        for dl in -ed..=ed {
            for dp in -ep..=ep {
                if dl.abs() <= gd && dp.abs() <= gp {
                    continue;
                }
                offsets.push((dl, dp));
            }
        }
        offsets
    }
}

/// One CFAR-detected delay-Doppler bin.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Detection {
    pub delay_bin: usize,
    pub doppler_bin: usize,
    /// seconds
    pub delay: f64,
    /// Hz
    pub doppler: f64,
    /// Linear power of the cell.
    pub power: f64,
}

impl Detection {
    pub fn power_db(&self) -> f64 {
        if self.power > 0.0 {
            10.0 * math::log10(self.power)
        } else {
            crate::ddmap::POWER_FLOOR_DB
        }
    }
}

/// Probability that an OS-CFAR cell fires on i.i.d. exponential noise,
/// `prod_{i<k} (N - i) / (N - i + alpha)`.
pub fn os_cfar_pfa(n_train: usize, k_os: usize, alpha: f64) -> f64 {
    math::exp(log_pfa(n_train, k_os, alpha))
}

fn log_pfa(n_train: usize, k_os: usize, alpha: f64) -> f64 {
    (0..k_os)
        .map(|i| {
            let m = (n_train - i) as f64;
            -math::ln_1p(alpha / m)
        })
        .sum()
}

/// Multiplier giving false-alarm probability `pfa`, by bisection on the
/// monotone product formula.
pub fn alpha_from_pfa(n_train: usize, k_os: usize, pfa: f64) -> Result<f64> {
    if k_os == 0 || k_os > n_train {
        return Err(Error::NoRoot(format!("rank {k_os} outside 1..={n_train}")));
    }
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(Error::NoRoot(format!("pfa {pfa} outside (0, 1)")));
    }
    let target = math::ln(pfa);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while log_pfa(n_train, k_os, hi) > target {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::NoRoot(format!("pfa {pfa} unreachable with N={n_train}, k={k_os}")));
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if log_pfa(n_train, k_os, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Run OS-CFAR over a delay-Doppler map. Detections come out ordered by
/// `(delay_bin, doppler_bin)`.
pub fn os_cfar_2d(map: &DdMap, params: &OsCfarParams) -> Result<Vec<Detection>> {
    let (nd, np) = (map.n_delay, map.n_doppler);
    let win_d = 2 * (params.guard_delay + params.train_delay) + 1;
    let win_p = 2 * (params.guard_doppler + params.train_doppler) + 1;
    if nd <= win_d || np <= win_p {
        return Err(Error::DegenerateWindow(format!("{win_d}x{win_p} window does not fit a {nd}x{np} map")));
    }
    let k_os = params.rank()?;
    let alpha = params.alpha()?;
    let offsets = params.training_offsets();
    let power = map.linear_power();
    let zero = map.zero_doppler_bin();

    let mut training = Vec::with_capacity(offsets.len());
    let mut out = Vec::new();
    for l in 0..nd {
        for p in 0..np {
            if let Some(h) = params.zero_doppler_mask_halfwidth {
                if p.abs_diff(zero) <= h {
                    continue;
                }
            }
            training.clear();
            training.extend(offsets.iter().map(|&(dl, dp)| {
                let ll = (l as isize + dl).rem_euclid(nd as isize) as usize;
                let pp = (p as isize + dp).rem_euclid(np as isize) as usize;
                power[ll * np + pp]
            }));
            let (_, z, _) = training.select_nth_unstable_by(k_os - 1, f64::total_cmp);
            let cut = power[l * np + p];
            if cut > alpha * *z {
                out.push(Detection { delay_bin: l, doppler_bin: p, delay: map.delay_at(l), doppler: map.doppler_at(p), power: cut });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn flat_map(n: usize, value: f64) -> DdMap {
        DdMap::from_linear_power(n, n, &vec![value; n * n], 1e-7, 10.0).unwrap()
    }

    fn no_mask(threshold: CfarThreshold) -> OsCfarParams {
        OsCfarParams { threshold, zero_doppler_mask_halfwidth: None, ..OsCfarParams::default() }
    }

    /// Reference detector: full scan of the window with explicit guard test
    /// and a complete sort.
    fn brute_force(power: &[f64], n: usize, params: &OsCfarParams, alpha: f64) -> Vec<(usize, usize)> {
        let g = params.guard_delay as isize;
        let e = g + params.train_delay as isize;
        let mut hits = Vec::new();
        for l in 0..n as isize {
            for p in 0..n as isize {
                let mut ring = Vec::new();
                for a in (l - e)..=(l + e) {
                    for b in (p - e)..=(p + e) {
                        if (a - l).abs() > g || (b - p).abs() > g {
                            let (aa, bb) = (a.rem_euclid(n as isize) as usize, b.rem_euclid(n as isize) as usize);
                            ring.push(power[aa * n + bb]);
                        }
                    }
                }
                ring.sort_by(f64::total_cmp);
                let k = math::round(params.rank_fraction * ring.len() as f64) as usize;
                if power[l as usize * n + p as usize] > alpha * ring[k - 1] {
                    hits.push((l as usize, p as usize));
                }
            }
        }
        hits
    }

    #[test]
    fn default_geometry() {
        let p = OsCfarParams::default();
        assert_eq!(p.n_train(), 21 * 21 - 25);
        assert_eq!(p.rank().unwrap(), 312);
    }

    #[test]
    fn constant_map_has_no_detections() {
        let map = flat_map(32, 3.0);
        assert!(os_cfar_2d(&map, &no_mask(CfarThreshold::Scale(1.5))).unwrap().is_empty());
    }

    #[test]
    fn single_strong_cell_matches_brute_force() {
        let n = 64;
        let mut rng = crate::rng::rng_from(11, &[]);
        let mut power: Vec<f64> = (0..n * n).map(|_| 1.0 + 0.01 * crate::rng::exponential(&mut rng)).collect();
        power[20 * n + 45] = 1e4;
        let map = DdMap::from_linear_power(n, n, &power, 1e-7, 10.0).unwrap();
        let params = no_mask(CfarThreshold::Scale(10.0));
        let dets = os_cfar_2d(&map, &params).unwrap();
        let got: Vec<_> = dets.iter().map(|d| (d.delay_bin, d.doppler_bin)).collect();
        assert_eq!(got, vec![(20, 45)]);
        assert_eq!(got, brute_force(&power, n, &params, 10.0));
    }

    #[test]
    fn random_map_matches_brute_force() {
        let n = 40;
        let mut rng = crate::rng::rng_from(3, &[]);
        let power: Vec<f64> = (0..n * n).map(|_| crate::rng::exponential(&mut rng)).collect();
        let map = DdMap::from_linear_power(n, n, &power, 1e-7, 10.0).unwrap();
        let params =
            OsCfarParams { guard_delay: 1, guard_doppler: 1, train_delay: 4, train_doppler: 4, ..no_mask(CfarThreshold::Scale(2.5)) };
        let got: Vec<_> = os_cfar_2d(&map, &params).unwrap().iter().map(|d| (d.delay_bin, d.doppler_bin)).collect();
        assert!(!got.is_empty());
        assert_eq!(got, brute_force(&power, n, &params, 2.5));
    }

    #[test]
    fn detections_carry_axis_values_and_respect_mask() {
        let n = 32;
        let mut power = vec![1.0; n * n];
        power[5 * n + 16] = 1e6; // 0 Hz column
        power[7 * n + 20] = 1e6;
        let map = DdMap::from_linear_power(n, n, &power, 1e-7, 10.0).unwrap();
        let params = OsCfarParams {
            guard_delay: 1,
            guard_doppler: 1,
            train_delay: 3,
            train_doppler: 3,
            threshold: CfarThreshold::Scale(10.0),
            ..OsCfarParams::default()
        };
        let dets = os_cfar_2d(&map, &params).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].delay, map.delay_at(7));
        assert_eq!(dets[0].doppler, map.doppler_at(20));
        assert_eq!(dets[0].doppler, 40.0);
    }

    #[test]
    fn degenerate_geometry_rejected() {
        let map = flat_map(16, 1.0);
        assert!(matches!(os_cfar_2d(&map, &OsCfarParams::default()), Err(Error::DegenerateWindow(_))));
    }

    #[test]
    fn alpha_self_consistent() {
        let a = alpha_from_pfa(24, 18, 1e-3).unwrap();
        let back = os_cfar_pfa(24, 18, a);
        assert!(((back - 1e-3) / 1e-3).abs() < 1e-9, "{back}");
    }

    #[test]
    fn alpha_limits_and_monotonicity() {
        assert!(alpha_from_pfa(24, 18, 1.0 - 1e-12).unwrap() < 1e-9);
        let mut prev = 0.0;
        let mut pfa = 0.5;
        for _ in 0..20 {
            let a = alpha_from_pfa(416, 312, pfa).unwrap();
            assert!(a > prev);
            prev = a;
            pfa /= 2.0;
        }
        assert!(alpha_from_pfa(24, 0, 0.1).is_err());
        assert!(alpha_from_pfa(24, 25, 0.1).is_err());
        assert!(alpha_from_pfa(24, 18, 0.0).is_err());
    }
}
