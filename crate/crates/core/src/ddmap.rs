//! Delay-Doppler map: inverse DFT over subcarriers, forward DFT over symbols.
//!
//! Normalization: the frequency-axis IDFT carries `1/N_FFT`, the time-axis DFT
//! carries none. A unit path on grid therefore peaks at `N_sym` and
//! `sum |map|^2 = N_sym / N_FFT * sum |H|^2`. The Doppler axis is circularly
//! shifted so bin `N_sym / 2` is 0 Hz.

use alloc::vec;
use alloc::vec::Vec;

use crate::channel::{CfrWindow, OfdmParams};
use crate::fft::{Direction, Fft};
use crate::{math, Complex64, Error, Result};

/// Lower clamp for the dB map, so exact zeros stay finite.
pub const POWER_FLOOR_DB: f64 = -300.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DdMap {
    pub n_delay: usize,
    pub n_doppler: usize,
    /// Row-major `n_delay x n_doppler`, Doppler already centered.
    pub complex_map: Vec<Complex64>,
    /// `20 log10 |complex_map|`, floored at [`POWER_FLOOR_DB`].
    pub power_db: Vec<f64>,
    pub delay_resolution: f64,
    pub doppler_resolution: f64,
    pub window_index: usize,
}

impl DdMap {
    #[inline]
    pub fn delay_at(&self, delay_bin: usize) -> f64 {
        delay_bin as f64 * self.delay_resolution
    }

    #[inline]
    pub fn doppler_at(&self, doppler_bin: usize) -> f64 {
        (doppler_bin as f64 - (self.n_doppler / 2) as f64) * self.doppler_resolution
    }

    pub fn delay_axis(&self) -> Vec<f64> {
        (0..self.n_delay).map(|l| self.delay_at(l)).collect()
    }

    pub fn doppler_axis(&self) -> Vec<f64> {
        (0..self.n_doppler).map(|p| self.doppler_at(p)).collect()
    }

    /// Doppler bin holding 0 Hz.
    pub fn zero_doppler_bin(&self) -> usize {
        self.n_doppler / 2
    }

    #[inline]
    pub fn power_linear(&self, delay_bin: usize, doppler_bin: usize) -> f64 {
        self.complex_map[delay_bin * self.n_doppler + doppler_bin].norm_sqr()
    }

    /// Linear power of every cell, row-major.
    pub fn linear_power(&self) -> Vec<f64> {
        self.complex_map.iter().map(|c| c.norm_sqr()).collect()
    }

    /// A map with the given linear power and zero phase, mainly for feeding
    /// synthetic power grids to the detector.
    pub fn from_linear_power(
        n_delay: usize,
        n_doppler: usize,
        power: &[f64],
        delay_resolution: f64,
        doppler_resolution: f64,
    ) -> Result<Self> {
        if power.len() != n_delay * n_doppler {
            return Err(Error::DimensionMismatch { context: "linear power grid", expected: (n_delay, n_doppler), found: (power.len(), 1) });
        }
        let complex_map: Vec<Complex64> = power.iter().map(|&p| Complex64::new(math::sqrt(p), 0.0)).collect();
        let power_db = complex_map.iter().map(|c| magnitude_db(c.norm())).collect();
        Ok(Self { n_delay, n_doppler, complex_map, power_db, delay_resolution, doppler_resolution, window_index: 0 })
    }
}

fn magnitude_db(mag: f64) -> f64 {
    if mag > 0.0 {
        (20.0 * math::log10(mag)).max(POWER_FLOOR_DB)
    } else {
        POWER_FLOOR_DB
    }
}

/// Reusable FFT plans for one grid size.
#[derive(Debug, Clone)]
pub struct DdTransform {
    freq: Fft,
    time: Fft,
}

impl DdTransform {
    pub fn new(params: &OfdmParams) -> Self {
        Self { freq: Fft::new(params.n_subcarriers), time: Fft::new(params.symbols_per_window) }
    }

    pub fn apply(&self, cfr: &CfrWindow, params: &OfdmParams) -> Result<DdMap> {
        let (nf, nt) = (params.n_subcarriers, params.symbols_per_window);
        if cfr.n_subcarriers != nf || cfr.n_symbols != nt || cfr.data.len() != nf * nt {
            return Err(Error::DimensionMismatch {
                context: "CFR window vs OFDM parameters",
                expected: (nf, nt),
                found: (cfr.n_subcarriers, cfr.n_symbols),
            });
        }
        let mut grid = cfr.data.clone();

        // IDFT down each symbol column.
        let mut column = vec![Complex64::new(0.0, 0.0); nf];
        let scale = 1.0 / nf as f64;
        for m in 0..nt {
            for n in 0..nf {
                column[n] = grid[n * nt + m];
            }
            self.freq.process(&mut column, Direction::Inverse);
            for n in 0..nf {
                grid[n * nt + m] = column[n] * scale;
            }
        }

        // DFT along each delay row, then center zero Doppler.
        let half = nt / 2;
        let mut complex_map = vec![Complex64::new(0.0, 0.0); nf * nt];
        for l in 0..nf {
            let row = &mut grid[l * nt..(l + 1) * nt];
            self.time.process(row, Direction::Forward);
            let out = &mut complex_map[l * nt..(l + 1) * nt];
            for (p, o) in out.iter_mut().enumerate() {
                *o = row[(p + nt - half) % nt];
            }
        }

        let power_db = complex_map.iter().map(|c| magnitude_db(c.norm())).collect();
        Ok(DdMap {
            n_delay: nf,
            n_doppler: nt,
            complex_map,
            power_db,
            delay_resolution: params.delay_resolution(),
            doppler_resolution: params.doppler_resolution(),
            window_index: cfr.window_index,
        })
    }
}

/// One-shot [`DdTransform`].
pub fn delay_doppler_map(cfr: &CfrWindow, params: &OfdmParams) -> Result<DdMap> {
    DdTransform::new(params).apply(cfr, params)
}
