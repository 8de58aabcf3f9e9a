// Dense row-major kernels used by the MLP. Every output element is accumulated
// in ascending order of the reduced index, independent of how rows are blocked,
// so results do not depend on batch size. Products are fused.

use crate::math::fma;

/// `out (n x m) += a (n x k) * b (k x m)`.
pub(crate) fn gemm_acc(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    debug_assert_eq!(out.len(), n * m);
    const C: usize = 16;
    let full_cols = (m / C) * C;
    let mut row = 0;
    while row + 4 <= n {
        let mut col = 0;
        while col < full_cols {
            tile::<4, C>(a, b, out, row, col, k, m);
            col += C;
        }
        tail_cols(a, b, out, row, 4, full_cols, k, m);
        row += 4;
    }
    while row < n {
        let mut col = 0;
        while col < full_cols {
            tile::<1, C>(a, b, out, row, col, k, m);
            col += C;
        }
        tail_cols(a, b, out, row, 1, full_cols, k, m);
        row += 1;
    }
}

// An R x C block of `out` held in registers across the whole reduction.
#[inline(always)]
fn tile<const R: usize, const C: usize>(
    a: &[f64],
    b: &[f64],
    out: &mut [f64],
    row: usize,
    col: usize,
    k: usize,
    m: usize,
) {
    let mut acc = [[0.0; C]; R];
    for (r, acc_r) in acc.iter_mut().enumerate() {
        acc_r.copy_from_slice(&out[(row + r) * m + col..(row + r) * m + col + C]);
    }
    for i in 0..k {
        let w: &[f64; C] = b[i * m + col..i * m + col + C].try_into().unwrap();
        for (r, acc_r) in acc.iter_mut().enumerate() {
            let s = a[(row + r) * k + i];
            for c in 0..C {
                acc_r[c] = fma(s, w[c], acc_r[c]);
            }
        }
    }
    for (r, acc_r) in acc.iter().enumerate() {
        out[(row + r) * m + col..(row + r) * m + col + C].copy_from_slice(acc_r);
    }
}

#[allow(clippy::too_many_arguments)]
fn tail_cols(
    a: &[f64],
    b: &[f64],
    out: &mut [f64],
    row: usize,
    rows: usize,
    from: usize,
    k: usize,
    m: usize,
) {
    for r in row..row + rows {
        for j in from..m {
            let mut acc = out[r * m + j];
            for i in 0..k {
                acc = fma(a[r * k + i], b[i * m + j], acc);
            }
            out[r * m + j] = acc;
        }
    }
}

/// `out (k x m) += a^T * b` with `a (n x k)`, `b (n x m)`; rows reduced in order.
pub(crate) fn gemm_tn_acc(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), n * m);
    debug_assert_eq!(out.len(), k * m);
    for r in 0..n {
        let br = &b[r * m..(r + 1) * m];
        for (i, &s) in a[r * k..(r + 1) * k].iter().enumerate() {
            let o = &mut out[i * m..(i + 1) * m];
            for (oj, &bj) in o.iter_mut().zip(br) {
                *oj = fma(s, bj, *oj);
            }
        }
    }
}

/// Column sums of `a (n x m)` added into `out`, rows in order.
pub(crate) fn col_sum_acc(a: &[f64], out: &mut [f64], m: usize) {
    for row in a.chunks_exact(m) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

/// Transpose of `a (r x c)` into a fresh `c x r` buffer.
pub(crate) fn transpose(a: &[f64], r: usize, c: usize) -> alloc::vec::Vec<f64> {
    let mut t = alloc::vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            t[j * r + i] = a[i * c + j];
        }
    }
    t
}
