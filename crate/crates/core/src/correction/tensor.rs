//! Channel-major tensors and the dense kernels behind the convolution layers.

use alloc::vec;
use alloc::vec::Vec;

pub(crate) use crate::linalg::gemm;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Tensor {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        Self::zeros(other.c, other.h, other.w)
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Unfold `k × k` zero-padded patches into a `(c·k·k) × (h·w)` matrix.
pub(crate) fn im2col(input: &Tensor, k: usize, col: &mut Vec<f64>) {
    let (c, h, w) = (input.c, input.h, input.w);
    let pad = (k / 2) as isize;
    col.clear();
    col.resize(c * k * k * h * w, 0.0);
    for ch in 0..c {
        let plane = &input.data[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let dst = &mut col[row * h * w..(row + 1) * h * w];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let out_row = &mut dst[y * w..(y + 1) * w];
                    let x0 = (-dx).max(0) as usize;
                    let x1 = ((w as isize) - dx).min(w as isize).max(0) as usize;
                    for x in x0..x1 {
                        out_row[x] = src_row[(x as isize + dx) as usize];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: fold patches back, accumulating into `out`.
pub(crate) fn col2im(col: &[f64], k: usize, out: &mut Tensor) {
    let (c, h, w) = (out.c, out.h, out.w);
    let pad = (k / 2) as isize;
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let src = &col[row * h * w..(row + 1) * h * w];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let plane = &mut out.data[ch * h * w..(ch + 1) * h * w];
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x0 = (-dx).max(0) as usize;
                    let x1 = ((w as isize) - dx).min(w as isize).max(0) as usize;
                    for x in x0..x1 {
                        plane[sy as usize * w + (x as isize + dx) as usize] += src[y * w + x];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let mut x = Tensor::zeros(2, 5, 6);
        for (i, v) in x.data.iter_mut().enumerate() {
            *v = (i as f64 * 0.7).sin();
        }
        let mut col = Vec::new();
        im2col(&x, 3, &mut col);
        let z: Vec<f64> = (0..col.len()).map(|i| (i as f64 * 0.31).cos()).collect();
        let lhs: f64 = col.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut back = Tensor::zeros(2, 5, 6);
        col2im(&z, 3, &mut back);
        let rhs: f64 = back.data.iter().zip(&x.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
