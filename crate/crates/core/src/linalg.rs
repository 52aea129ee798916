//! Dense row-major linear algebra on top of the `matrixmultiply` kernels.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};

/// `C = A·B + beta·C` with optional transposition of the row-major operands.
///
/// `A` is logically `m × k`, `B` is `k × n`, `C` is `m × n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: strides and extents describe in-bounds views of the slices
    // (checked above), and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

const BLOCK: usize = 64;

/// Lower Cholesky factor `C` with `C·Cᵀ = a` for a symmetric positive definite
/// `n × n` matrix; the strict upper triangle of the result is zero.
pub fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    if a.len() != n * n {
        return Err(Error::Shape {
            expected: (n, n),
            got: (a.len(), 1),
        });
    }
    let mut c = a.to_vec();
    let mut k0 = 0;
    while k0 < n {
        let kb = BLOCK.min(n - k0);
        // Diagonal block, unblocked.
        for j in k0..k0 + kb {
            let mut d = c[j * n + j];
            for p in k0..j {
                d -= c[j * n + p] * c[j * n + p];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Statistics(alloc::format!(
                    "matrix is not positive definite (pivot {j} = {d:e})"
                )));
            }
            let d = d.sqrt();
            c[j * n + j] = d;
            for i in j + 1..k0 + kb {
                let mut s = c[i * n + j];
                for p in k0..j {
                    s -= c[i * n + p] * c[j * n + p];
                }
                c[i * n + j] = s / d;
            }
        }
        let rest = n - k0 - kb;
        if rest > 0 {
            // Panel rows solve X·C_kkᵀ = A_panel.
            let mut panel = vec![0.0; rest * kb];
            for (r, i) in (k0 + kb..n).enumerate() {
                for j in 0..kb {
                    let mut s = c[i * n + k0 + j];
                    for p in 0..j {
                        s -= panel[r * kb + p] * c[(k0 + j) * n + k0 + p];
                    }
                    panel[r * kb + j] = s / c[(k0 + j) * n + k0 + j];
                }
                c[i * n + k0..i * n + k0 + kb].copy_from_slice(&panel[r * kb..(r + 1) * kb]);
            }
            // Trailing update A₂₂ −= P·Pᵀ.
            let mut upd = vec![0.0; rest * rest];
            gemm(rest, kb, rest, &panel, false, &panel, true, 0.0, &mut upd);
            for r in 0..rest {
                let row = &mut c[(k0 + kb + r) * n + k0 + kb..(k0 + kb + r + 1) * n];
                for (v, u) in row.iter_mut().zip(&upd[r * rest..(r + 1) * rest]) {
                    *v -= u;
                }
            }
        }
        k0 += kb;
    }
    for i in 0..n {
        c[i * n + i + 1..(i + 1) * n].iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(c)
}

/// Inverse of a non-singular lower-triangular `n × n` matrix.
pub fn lower_inverse(c: &[f64], n: usize) -> Vec<f64> {
    if n <= BLOCK {
        let mut inv = vec![0.0; n * n];
        for j in 0..n {
            inv[j * n + j] = 1.0 / c[j * n + j];
            for i in j + 1..n {
                let mut s = 0.0;
                for p in j..i {
                    s += c[i * n + p] * inv[p * n + j];
                }
                inv[i * n + j] = -s / c[i * n + i];
            }
        }
        return inv;
    }
    // [C₁₁ 0; C₂₁ C₂₂]⁻¹ = [C₁₁⁻¹ 0; −C₂₂⁻¹C₂₁C₁₁⁻¹ C₂₂⁻¹]
    let h = n / 2;
    let m = n - h;
    let sub = |r0: usize, c0: usize, rows: usize, cols: usize| {
        let mut out = Vec::with_capacity(rows * cols);
        for r in r0..r0 + rows {
            out.extend_from_slice(&c[r * n + c0..r * n + c0 + cols]);
        }
        out
    };
    let i11 = lower_inverse(&sub(0, 0, h, h), h);
    let i22 = lower_inverse(&sub(h, h, m, m), m);
    let c21 = sub(h, 0, m, h);
    let mut t = vec![0.0; m * h];
    gemm(m, h, h, &c21, false, &i11, false, 0.0, &mut t);
    let mut i21 = vec![0.0; m * h];
    gemm(m, m, h, &i22, false, &t, false, 0.0, &mut i21);
    let mut inv = vec![0.0; n * n];
    for r in 0..h {
        inv[r * n..r * n + h].copy_from_slice(&i11[r * h..(r + 1) * h]);
    }
    for r in 0..m {
        let row = &mut inv[(h + r) * n..(h + r + 1) * n];
        for (v, s) in row[..h].iter_mut().zip(&i21[r * h..(r + 1) * h]) {
            *v = -s;
        }
        row[h..].copy_from_slice(&i22[r * m..(r + 1) * m]);
    }
    inv
}

/// `y = M·x` for a row-major `rows × cols` matrix.
pub fn matvec(m: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|i| m[i * cols..(i + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// `y = Mᵀ·x` for a row-major `rows × cols` matrix.
pub fn matvec_t(m: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; cols];
    for (i, &xi) in x.iter().enumerate().take(rows) {
        if xi != 0.0 {
            for (yj, mij) in y.iter_mut().zip(&m[i * cols..(i + 1) * cols]) {
                *yj += mij * xi;
            }
        }
    }
    y
}
