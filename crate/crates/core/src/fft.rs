//! In-place complex DFT of arbitrary length.
//!
//! Power-of-two sizes use an iterative radix-2 Cooley-Tukey kernel; every
//! other size goes through Bluestein's chirp-z reformulation on a padded
//! power-of-two transform. Neither direction is normalized.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::math::cis;
use crate::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `X[k] = sum_n x[n] exp(-j 2 pi n k / N)`
    Forward,
    /// `x[n] = sum_k X[k] exp(+j 2 pi n k / N)` (no `1/N`)
    Inverse,
}

#[derive(Debug, Clone)]
struct Radix2 {
    n: usize,
    /// `exp(-j 2 pi i / n)` for `i < n / 2`
    twiddles: Vec<Complex64>,
}

impl Radix2 {
    fn new(n: usize) -> Self {
        debug_assert!(n.is_power_of_two());
        let twiddles = (0..n / 2).map(|i| cis(-2.0 * PI * i as f64 / n as f64)).collect();
        Self { n, twiddles }
    }

    fn forward(&self, buf: &mut [Complex64]) {
        let n = self.n;
        if n <= 1 {
            return;
        }
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for i in 0..half {
                    let w = self.twiddles[i * stride];
                    let a = buf[start + i];
                    let b = buf[start + i + half] * w;
                    buf[start + i] = a + b;
                    buf[start + i + half] = a - b;
                }
            }
            len <<= 1;
        }
    }
}

#[derive(Debug, Clone)]
enum Kernel {
    Radix2(Radix2),
    Bluestein {
        inner: Radix2,
        /// `exp(-j pi i^2 / n)`
        chirp: Vec<Complex64>,
        /// forward transform of the padded conjugate chirp
        filter: Vec<Complex64>,
    },
}

/// A reusable DFT plan for one length.
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    kernel: Kernel,
}

impl Fft {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "FFT length must be positive");
        if n.is_power_of_two() {
            return Self { n, kernel: Kernel::Radix2(Radix2::new(n)) };
        }
        let m = (2 * n - 1).next_power_of_two();
        let inner = Radix2::new(m);
        // i^2 mod 2n keeps the chirp argument small for large n.
        let chirp: Vec<Complex64> = (0..n)
            .map(|i| {
                let sq = (i as u128 * i as u128 % (2 * n as u128)) as f64;
                cis(-PI * sq / n as f64)
            })
            .collect();
        let mut filter = vec![Complex64::new(0.0, 0.0); m];
        filter[0] = chirp[0].conj();
        for i in 1..n {
            filter[i] = chirp[i].conj();
            filter[m - i] = chirp[i].conj();
        }
        inner.forward(&mut filter);
        Self { n, kernel: Kernel::Bluestein { inner, chirp, filter } }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Transform `buf` in place. `buf.len()` must equal the plan length.
    pub fn process(&self, buf: &mut [Complex64], direction: Direction) {
        assert_eq!(buf.len(), self.n, "buffer length does not match FFT plan");
        if direction == Direction::Inverse {
            buf.iter_mut().for_each(|x| *x = x.conj());
        }
        match &self.kernel {
            Kernel::Radix2(r) => r.forward(buf),
            Kernel::Bluestein { inner, chirp, filter } => {
                let m = filter.len();
                let mut work = vec![Complex64::new(0.0, 0.0); m];
                for i in 0..self.n {
                    work[i] = buf[i] * chirp[i];
                }
                inner.forward(&mut work);
                for (w, f) in work.iter_mut().zip(filter) {
                    *w = (*w * f).conj();
                }
                // conj(FFT(conj(x))) is the unnormalized inverse
                inner.forward(&mut work);
                let scale = 1.0 / m as f64;
                for i in 0..self.n {
                    buf[i] = work[i].conj() * scale * chirp[i];
                }
            }
        }
        if direction == Direction::Inverse {
            buf.iter_mut().for_each(|x| *x = x.conj());
        }
    }
}
