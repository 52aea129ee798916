//! Complex discrete Fourier transforms on power-of-two and general lengths.
//!
//! Forward transforms use the `e^{-2πi kn/N}` kernel, inverse transforms the
//! conjugate kernel; neither is normalized.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Precomputed twiddles for one transform length.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    // e^{-2πi k/n} for k in 0..n
    twiddles: Vec<Complex64>,
    bitrev: Vec<usize>,
}

impl FftPlan {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "fft length must be positive");
        let twiddles = (0..n)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / n as f64;
                Complex64::new(a.cos(), a.sin())
            })
            .collect();
        let bitrev = if n.is_power_of_two() {
            let bits = n.trailing_zeros();
            (0..n)
                .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
                .collect()
        } else {
            Vec::new()
        };
        Self { n, twiddles, bitrev }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.process(buf, false);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.process(buf, true);
    }

    fn twiddle(&self, k: usize, inverse: bool) -> Complex64 {
        let w = self.twiddles[k];
        if inverse {
            w.conj()
        } else {
            w
        }
    }

    fn process(&self, buf: &mut [Complex64], inverse: bool) {
        assert_eq!(buf.len(), self.n, "buffer length does not match plan");
        if self.n.is_power_of_two() {
            self.radix2(buf, inverse);
        } else {
            self.direct(buf, inverse);
        }
    }

    fn radix2(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.n;
        for i in 0..n {
            let j = self.bitrev[i];
            if j > i {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let w = self.twiddle(k * stride, inverse);
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }

    fn direct(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let input = buf.to_vec();
        for (k, out) in buf.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, v) in input.iter().enumerate() {
                acc += v * self.twiddle((j * k) % n, inverse);
            }
            *out = acc;
        }
    }
}

/// Separable 2D transform over a row-major `rows × cols` buffer.
#[derive(Debug, Clone)]
pub struct Fft2 {
    rows: FftPlan,
    cols: FftPlan,
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows: FftPlan::new(rows),
            cols: FftPlan::new(cols),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.process(buf, false);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.process(buf, true);
    }

    fn process(&self, buf: &mut [Complex64], inverse: bool) {
        let (nr, nc) = self.shape();
        assert_eq!(buf.len(), nr * nc);
        for row in buf.chunks_exact_mut(nc) {
            self.cols.process(row, inverse);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); nr];
        for c in 0..nc {
            for r in 0..nr {
                column[r] = buf[r * nc + c];
            }
            self.rows.process(&mut column, inverse);
            for r in 0..nr {
                buf[r * nc + c] = column[r];
            }
        }
    }
}

/// Angular frequency of DFT bin `index` for a length-`n` grid with spacing `dx`,
/// mapped to the symmetric range `[-π/dx, π/dx)`.
pub fn wavenumber(index: usize, n: usize, dx: f64) -> f64 {
    let signed = if index < n.div_ceil(2) {
        index as f64
    } else {
        index as f64 - n as f64
    };
    2.0 * PI * signed / (n as f64 * dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[Complex64], inverse: bool) -> Vec<Complex64> {
        let n = x.len();
        let sign = if inverse { 1.0 } else { -1.0 };
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let a = sign * 2.0 * PI * (j * k) as f64 / n as f64;
                        v * Complex64::new(a.cos(), a.sin())
                    })
                    .sum()
            })
            .collect()
    }

    fn signal(n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|i| Complex64::new((i as f64 * 0.37).sin() + 0.1 * i as f64, (i as f64 * 1.3).cos()))
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        for n in [1, 2, 4, 8, 16, 64, 6, 10, 12] {
            let x = signal(n);
            for inverse in [false, true] {
                let mut got = x.clone();
                FftPlan::new(n).process(&mut got, inverse);
                let want = naive(&x, inverse);
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).norm() < 1e-10 * n as f64, "n={n}");
                }
            }
        }
    }

    #[test]
    fn fft2_round_trip() {
        let (r, c) = (8, 16);
        let x: Vec<Complex64> = signal(r * c);
        let mut y = x.clone();
        let plan = Fft2::new(r, c);
        plan.forward(&mut y);
        plan.inverse(&mut y);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b / (r * c) as f64).norm() < 1e-12);
        }
    }

    #[test]
    fn wavenumber_is_symmetric() {
        assert_eq!(wavenumber(0, 8, 1.0), 0.0);
        assert!((wavenumber(1, 8, 1.0) + wavenumber(7, 8, 1.0)).abs() < 1e-15);
        assert!((wavenumber(4, 8, 1.0) + PI).abs() < 1e-15);
    }
}
