//! Cache-friendly inner kernels for the convolution operations.
//!
//! The 3×3 convolutions dominate training cost, so they are lowered to
//! matrix multiplications over an im2col buffer: contiguous inner loops
//! let the compiler vectorize the multiply–accumulate chains. Everything
//! here is exact re-association of the same sums the straightforward
//! nested loops would compute; the graph tests compare against the
//! nested-loop reference to lock that in.

use super::tensor::Scalar;

/// `c[M,N] += a[M,K] · b[K,N]`, all row-major.
///
/// Loop order (m, k, n) keeps the inner loop streaming over contiguous
/// rows of `b` and `c`.
pub(crate) fn matmul_acc<T: Scalar>(c: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for mi in 0..m {
        let c_row = &mut c[mi * n..(mi + 1) * n];
        for ki in 0..k {
            let av = a[mi * k + ki];
            if av == T::zero() {
                continue;
            }
            let b_row = &b[ki * n..(ki + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv = *cv + av * bv;
            }
        }
    }
}

/// Dot product with eight independent accumulator lanes. Strict float
/// semantics keep a single-accumulator reduction scalar; the explicit lanes
/// let the compiler map it onto SIMD registers.
#[inline]
fn dot_lanes<T: Scalar>(a: &[T], b: &[T]) -> T {
    const LANES: usize = 8;
    let chunks = a.len() / LANES;
    let mut acc = [T::zero(); LANES];
    for i in 0..chunks {
        let ab = &a[i * LANES..(i + 1) * LANES];
        let bb = &b[i * LANES..(i + 1) * LANES];
        for l in 0..LANES {
            acc[l] = acc[l] + ab[l] * bb[l];
        }
    }
    let mut s = T::zero();
    for l in 0..LANES {
        s = s + acc[l];
    }
    for i in chunks * LANES..a.len() {
        s = s + a[i] * b[i];
    }
    s
}

/// `c[M,K] += a[M,N] · b[K,N]ᵀ` — i.e. `c[m,k] += dot(a_row_m, b_row_k)`.
pub(crate) fn matmul_abt_acc<T: Scalar>(
    c: &mut [T],
    a: &[T],
    b: &[T],
    m: usize,
    n: usize,
    k: usize,
) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * k);
    for mi in 0..m {
        let a_row = &a[mi * n..(mi + 1) * n];
        for ki in 0..k {
            let b_row = &b[ki * n..(ki + 1) * n];
            c[mi * k + ki] = c[mi * k + ki] + dot_lanes(a_row, b_row);
        }
    }
}

/// `c[K,N] += a[M,K]ᵀ · b[M,N]`.
pub(crate) fn matmul_atb_acc<T: Scalar>(
    c: &mut [T],
    a: &[T],
    b: &[T],
    m: usize,
    k: usize,
    n: usize,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    for mi in 0..m {
        let b_row = &b[mi * n..(mi + 1) * n];
        for ki in 0..k {
            let av = a[mi * k + ki];
            if av == T::zero() {
                continue;
            }
            let c_row = &mut c[ki * n..(ki + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv = *cv + av * bv;
            }
        }
    }
}

/// Unfold one image `[Cin, H, W]` into a `[Cin·9, H·W]` patch matrix for a
/// 3×3 kernel with zero padding 1. Row `ci·9 + di·3 + dj` holds, for every
/// output position, the input value that tap `(di, dj)` of channel `ci`
/// reads (zero where the tap falls outside the image).
pub(crate) fn im2col_3x3<T: Scalar>(x: &[T], cin: usize, h: usize, w: usize, cols: &mut [T]) {
    debug_assert_eq!(x.len(), cin * h * w);
    debug_assert_eq!(cols.len(), cin * 9 * h * w);
    let hw = h * w;
    for v in cols.iter_mut() {
        *v = T::zero();
    }
    for ci in 0..cin {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for di in 0..3usize {
            for dj in 0..3usize {
                let row = &mut cols[(ci * 9 + di * 3 + dj) * hw..(ci * 9 + di * 3 + dj + 1) * hw];
                // Output row i reads input row i + di - 1; skip rows that
                // fall outside and shift columns by dj - 1 within a row.
                let (i_lo, i_hi) = row_range(h, di);
                let (j_lo, j_hi) = row_range(w, dj);
                for i in i_lo..i_hi {
                    let src = (i + di - 1) * w;
                    for j in j_lo..j_hi {
                        row[i * w + j] = plane[src + (j + dj - 1)];
                    }
                }
            }
        }
    }
}

/// Fold a `[Cin·9, H·W]` patch-gradient matrix back onto the image,
/// accumulating into `d_x` (the adjoint of [`im2col_3x3`]).
pub(crate) fn col2im_3x3_acc<T: Scalar>(cols: &[T], cin: usize, h: usize, w: usize, d_x: &mut [T]) {
    debug_assert_eq!(d_x.len(), cin * h * w);
    debug_assert_eq!(cols.len(), cin * 9 * h * w);
    let hw = h * w;
    for ci in 0..cin {
        let plane = &mut d_x[ci * hw..(ci + 1) * hw];
        for di in 0..3usize {
            for dj in 0..3usize {
                let row = &cols[(ci * 9 + di * 3 + dj) * hw..(ci * 9 + di * 3 + dj + 1) * hw];
                let (i_lo, i_hi) = row_range(h, di);
                let (j_lo, j_hi) = row_range(w, dj);
                for i in i_lo..i_hi {
                    let dst = (i + di - 1) * w;
                    for j in j_lo..j_hi {
                        plane[dst + (j + dj - 1)] = plane[dst + (j + dj - 1)] + row[i * w + j];
                    }
                }
            }
        }
    }
}

/// Range of output rows (or columns) for which tap offset `d ∈ {0,1,2}`
/// stays inside a dimension of size `n` under padding 1: the tap reads
/// index `i + d - 1`, so `i ∈ [max(0, 1-d), min(n, n+1-d))`.
fn row_range(n: usize, d: usize) -> (usize, usize) {
    let lo = 1usize.saturating_sub(d);
    let hi = (n + 1).saturating_sub(d).min(n);
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_matmul_acc_small_example() {
        // [[1,2],[3,4]] · [[5,6],[7,8]] = [[19,22],[43,50]].
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        matmul_acc(&mut c, &a, &b, 2, 2, 2);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
        // A second call accumulates on top.
        matmul_acc(&mut c, &a, &b, 2, 2, 2);
        assert_eq!(c, [38.0, 44.0, 86.0, 100.0]);
    }

    #[test]
    fn test_matmul_transposed_variants_match_plain() {
        let m = 3;
        let k = 4;
        let n = 5;
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64) * 0.3 - 1.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64) * 0.17 - 0.8).collect();
        let mut c = vec![0.0; m * n];
        matmul_acc(&mut c, &a, &b, m, k, n);

        // a·b == a·(bᵀ)ᵀ via matmul_abt_acc with b pre-transposed.
        let mut bt = vec![0.0; n * k];
        for ki in 0..k {
            for ni in 0..n {
                bt[ni * k + ki] = b[ki * n + ni];
            }
        }
        let mut c2 = vec![0.0; m * n];
        matmul_abt_acc(&mut c2, &a, &bt, m, k, n);
        for (x, y) in c.iter().zip(&c2) {
            assert!((x - y).abs() < 1e-12);
        }

        // a·b == (aᵀ)ᵀ·b via matmul_atb_acc with a pre-transposed.
        let mut at = vec![0.0; k * m];
        for mi in 0..m {
            for ki in 0..k {
                at[ki * m + mi] = a[mi * k + ki];
            }
        }
        let mut c3 = vec![0.0; m * n];
        matmul_atb_acc(&mut c3, &at, &b, k, m, n);
        for (x, y) in c.iter().zip(&c3) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn test_im2col_rows_read_shifted_pixels() {
        // 1 channel, 2×3 image: [[1,2,3],[4,5,6]].
        let x = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut cols = vec![0.0; 9 * 6];
        im2col_3x3(&x, 1, 2, 3, &mut cols);
        // Center tap (di=1, dj=1) reproduces the image.
        assert_eq!(&cols[4 * 6..5 * 6], &x);
        // Tap (di=0, dj=1) reads the pixel one row above: first output row
        // sees zeros (padding), second sees the first input row.
        assert_eq!(&cols[1 * 6..2 * 6], &[0.0, 0.0, 0.0, 1.0, 2.0, 3.0]);
        // Tap (di=1, dj=2) reads one column right; last column is padding.
        assert_eq!(&cols[5 * 6..6 * 6], &[2.0, 3.0, 0.0, 5.0, 6.0, 0.0]);
    }

    #[test]
    fn test_col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)> for arbitrary x, c — the defining
        // property the backward pass relies on.
        let (cin, h, w) = (2, 3, 4);
        let x: Vec<f64> = (0..cin * h * w).map(|i| (i as f64) * 0.21 - 1.3).collect();
        let c: Vec<f64> = (0..cin * 9 * h * w)
            .map(|i| ((i * 7919 + 13) % 101) as f64 * 0.02 - 1.0)
            .collect();
        let mut cols = vec![0.0; cin * 9 * h * w];
        im2col_3x3(&x, cin, h, w, &mut cols);
        let lhs: f64 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let mut folded = vec![0.0; cin * h * w];
        col2im_3x3_acc(&c, cin, h, w, &mut folded);
        let rhs: f64 = x.iter().zip(&folded).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9, "adjoint identity violated: {lhs} vs {rhs}");
    }
}
