//! OFDM channel-frequency-response synthesis per observation window.
//!
//! Each window `k` spans symbols `kP .. kP + N_sym - 1`. Path delays and
//! Dopplers are frozen at the window start; inside the window the CFR is
//!
//! ```text
//! H[n, m] = sum_l a_l exp(-j 2 pi n df tau_l) exp(+j 2 pi nu_l t_m) + w[n, m]
//! ```
//!
//! with `t_m = (kP + m) T_sym`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Range;

use rand::Rng;

use crate::math::{self, cis};
use crate::rng::{self, standard_normal};
use crate::scene::Scene;
use crate::{Complex64, Error, Result};

const NOISE_STREAM: u64 = 0x006e_6f69_7365;
const GAIN_STREAM: u64 = 0x6761_696e;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct OfdmParams {
    /// Subcarrier spacing, Hz.
    pub subcarrier_spacing: f64,
    pub n_subcarriers: usize,
    pub symbols_per_window: usize,
    /// Window hop `P`, in OFDM symbols.
    pub window_gap: usize,
    pub n_windows: usize,
    /// Symbol period, seconds. Defaults to `1 / subcarrier_spacing` when built
    /// with [`OfdmParams::new`].
    pub symbol_duration: f64,
}

impl OfdmParams {
    pub fn new(subcarrier_spacing: f64, n_subcarriers: usize, symbols_per_window: usize, window_gap: usize, n_windows: usize) -> Self {
        Self { subcarrier_spacing, n_subcarriers, symbols_per_window, window_gap, n_windows, symbol_duration: 1.0 / subcarrier_spacing }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subcarriers == 0 || self.symbols_per_window == 0 || self.window_gap == 0 || self.n_windows == 0 {
            return Err(Error::InvalidParameter("N_FFT, symbols per window, window gap and window count must all be >= 1".into()));
        }
        if !(self.subcarrier_spacing > 0.0 && self.symbol_duration > 0.0) {
            return Err(Error::InvalidParameter("subcarrier spacing and symbol duration must be positive".into()));
        }
        Ok(())
    }

    /// Delay bin width `1 / (N_FFT df)`.
    pub fn delay_resolution(&self) -> f64 {
        1.0 / (self.n_subcarriers as f64 * self.subcarrier_spacing)
    }

    /// Doppler bin width `1 / (N_sym T_sym)`.
    pub fn doppler_resolution(&self) -> f64 {
        1.0 / (self.symbols_per_window as f64 * self.symbol_duration)
    }

    pub fn n_doppler_bins(&self) -> usize {
        self.symbols_per_window
    }

    /// Time between consecutive window starts, `P T_sym`.
    pub fn window_period(&self) -> f64 {
        self.window_gap as f64 * self.symbol_duration
    }

    pub fn window_start_time(&self, k: usize) -> f64 {
        (k * self.window_gap) as f64 * self.symbol_duration
    }

    /// Symbols needed to cover all `K` windows.
    pub fn total_symbols(&self) -> usize {
        (self.n_windows - 1) * self.window_gap + self.symbols_per_window
    }

    /// Symbol indices of window `k`.
    pub fn window_indices(&self, k: usize) -> Result<Range<usize>> {
        if k >= self.n_windows {
            return Err(Error::WindowOutOfRange { k, n_windows: self.n_windows });
        }
        let start = k * self.window_gap;
        Ok(start..start + self.symbols_per_window)
    }

    pub fn windows_overlap(&self) -> bool {
        self.window_gap < self.symbols_per_window
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: Complex64,
    /// seconds
    pub delay: f64,
    /// Hz
    pub doppler: f64,
}

pub type PathSet = Vec<Path>;

/// One window of the CFR, subcarriers along rows, symbols along columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CfrWindow {
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    /// Row-major `n_subcarriers x n_symbols`.
    pub data: Vec<Complex64>,
    pub window_index: usize,
    pub start_symbol: usize,
}

impl CfrWindow {
    pub fn zeros(params: &OfdmParams, k: usize) -> Self {
        Self {
            n_subcarriers: params.n_subcarriers,
            n_symbols: params.symbols_per_window,
            data: vec![Complex64::new(0.0, 0.0); params.n_subcarriers * params.symbols_per_window],
            window_index: k,
            start_symbol: k * params.window_gap,
        }
    }

    #[inline]
    pub fn get(&self, n: usize, m: usize) -> Complex64 {
        self.data[n * self.n_symbols + m]
    }
}

/// Propagation paths active in window `k`: the optional static LOS path and
/// one path per target, frozen at the window start.
///
/// Target gains with a configured range are redrawn per window from a stream
/// keyed on `(scene.rng_seed, k)`. The carrier phase `exp(-j 2 pi f_c tau)` is
/// folded into each complex gain.
pub fn paths_for_window(scene: &Scene, params: &OfdmParams, k: usize) -> Result<PathSet> {
    params.window_indices(k)?;
    let t0 = params.window_start_time(k);
    let fc = scene.carrier_freq;
    let mut rng = rng::rng_from(scene.rng_seed, &[GAIN_STREAM, k as u64]);
    let mut paths = Vec::with_capacity(scene.targets.len() + 1);
    if let Some(g) = scene.los_gain_db {
        let delay = scene.baseline_delay();
        paths.push(Path { gain: amplitude(g) * cis(-2.0 * PI * fc * delay), delay, doppler: 0.0 });
    }
    for (c, target) in scene.targets.iter().enumerate() {
        let gain_db = match target.gain_range_db {
            Some(r) if r.max_db > r.min_db => rng.gen_range(r.min_db..=r.max_db),
            _ => target.gain_db,
        };
        let gt = scene.ground_truth(c, t0)?;
        paths.push(Path { gain: amplitude(gain_db) * cis(-2.0 * PI * fc * gt.delay), delay: gt.delay, doppler: gt.doppler });
    }
    Ok(paths)
}

fn amplitude(gain_db: f64) -> f64 {
    libm::pow(10.0, gain_db / 20.0)
}

/// Noise-free CFR of a path set over window `k`.
pub fn cfr_from_paths(paths: &[Path], params: &OfdmParams, k: usize) -> Result<CfrWindow> {
    let symbols = params.window_indices(k)?;
    let mut cfr = CfrWindow::zeros(params, k);
    let (nf, nt) = (params.n_subcarriers, params.symbols_per_window);
    let mut freq = vec![Complex64::new(0.0, 0.0); nf];
    let mut time = vec![Complex64::new(0.0, 0.0); nt];
    for path in paths {
        for (n, f) in freq.iter_mut().enumerate() {
            *f = path.gain * cis(-2.0 * PI * n as f64 * params.subcarrier_spacing * path.delay);
        }
        for (m, s) in time.iter_mut().zip(symbols.clone()) {
            *m = cis(2.0 * PI * path.doppler * s as f64 * params.symbol_duration);
        }
        for (n, f) in freq.iter().enumerate() {
            let row = &mut cfr.data[n * nt..(n + 1) * nt];
            for (h, t) in row.iter_mut().zip(&time) {
                *h += f * t;
            }
        }
    }
    Ok(cfr)
}

/// CFR of window `k` for `scene`, including AWGN when the scene sets a noise
/// power. Output depends only on `(scene, params, k)`.
pub fn synthesize_cfr(scene: &Scene, params: &OfdmParams, k: usize) -> Result<CfrWindow> {
    let paths = paths_for_window(scene, params, k)?;
    let mut cfr = cfr_from_paths(&paths, params, k)?;
    if let Some(power) = scene.noise_power.filter(|&p| p > 0.0) {
        let sigma = math::sqrt(power / 2.0);
        let mut rng = rng::rng_from(scene.rng_seed, &[NOISE_STREAM, k as u64]);
        for h in cfr.data.iter_mut() {
            let re = standard_normal(&mut rng);
            let im = standard_normal(&mut rng);
            *h += Complex64::new(sigma * re, sigma * im);
        }
    }
    Ok(cfr)
}
