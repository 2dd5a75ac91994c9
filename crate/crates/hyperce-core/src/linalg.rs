//! Dense complex linear algebra for the Wiener filter and test oracles.
//!
//! The estimator stack only ever factors small systems (at most the pilot
//! covariance of a 48 × 12 grid, i.e. 48 × 48), so this module keeps to a
//! plain dense representation with Cholesky factorization for Hermitian
//! positive-definite solves. A real symmetric-positive-definite solve is
//! included for small least-squares systems elsewhere in the crate.

use num_complex::Complex64;

use crate::{Error, Result};

/// A dense complex matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMat {
    /// Create an all-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    /// Create a matrix by evaluating `f(row, col)` for every entry.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    /// The identity matrix of size `n`.
    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| {
            if r == c {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// Number of rows.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of columns.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Entry at `(row, col)`.
    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    /// Set the entry at `(row, col)`.
    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    /// Row-major view of all entries.
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Matrix product `self * rhs`.
    ///
    /// # Panics
    ///
    /// Panics if the inner dimensions disagree.
    pub fn mul(&self, rhs: &CMat) -> CMat {
        assert_eq!(
            self.cols, rhs.rows,
            "matrix product dimension mismatch: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = CMat::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for c in 0..rhs.cols {
                    out.data[r * rhs.cols + c] += a * rhs.data[k * rhs.cols + c];
                }
            }
        }
        out
    }

    /// Matrix-vector product `self * v`.
    ///
    /// # Panics
    ///
    /// Panics if `v.len() != cols`.
    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len(), "matrix-vector dimension mismatch");
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows];
        for r in 0..self.rows {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..self.cols {
                acc += self.data[r * self.cols + c] * v[c];
            }
            out[r] = acc;
        }
        out
    }

    /// Conjugate transpose.
    pub fn hermitian_transpose(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |r, c| self.get(c, r).conj())
    }

    /// Add `ridge` to every diagonal entry in place.
    pub fn add_diagonal(&mut self, ridge: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self.data[i * self.cols + i] += Complex64::new(ridge, 0.0);
        }
    }

    /// Maximum absolute difference to another matrix of the same shape.
    ///
    /// # Panics
    ///
    /// Panics if the shapes differ.
    pub fn max_abs_diff(&self, other: &CMat) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Cholesky factor `L` (lower triangular, `A = L * L^H`) of a Hermitian
/// positive-definite matrix.
///
/// # Errors
///
/// Returns [`Error::Numerical`] if the matrix is not square or a pivot is
/// not strictly positive (the matrix is not positive definite).
pub fn cholesky(a: &CMat) -> Result<CMat> {
    if a.rows != a.cols {
        return Err(Error::Numerical(format!(
            "cholesky needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    let n = a.rows;
    let mut l = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k).conj();
            }
            if i == j {
                // The diagonal of a Hermitian matrix is real; any imaginary
                // residue here is accumulated rounding noise.
                let d = sum.re;
                if !(d > 0.0) || !d.is_finite() {
                    return Err(Error::Numerical(format!(
                        "cholesky pivot {i} is not positive: {d}"
                    )));
                }
                l.set(i, j, Complex64::new(d.sqrt(), 0.0));
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solve `A * X = B` for `X` given the Cholesky factor `L` of `A`.
///
/// Forward substitution with `L`, then back substitution with `L^H`,
/// column by column of `B`.
///
/// # Panics
///
/// Panics if the dimensions are inconsistent.
pub fn cholesky_solve(l: &CMat, b: &CMat) -> CMat {
    assert_eq!(l.rows, l.cols, "factor must be square");
    assert_eq!(l.rows, b.rows, "factor/rhs dimension mismatch");
    let n = l.rows;
    let mut x = b.clone();
    for col in 0..b.cols {
        // L y = b  (forward)
        for i in 0..n {
            let mut sum = x.get(i, col);
            for k in 0..i {
                sum -= l.get(i, k) * x.get(k, col);
            }
            x.set(i, col, sum / l.get(i, i));
        }
        // L^H x = y  (backward)
        for i in (0..n).rev() {
            let mut sum = x.get(i, col);
            for k in (i + 1)..n {
                sum -= l.get(k, i).conj() * x.get(k, col);
            }
            x.set(i, col, sum / l.get(i, i));
        }
    }
    x
}

/// Solve the Hermitian positive-definite system `A * X = B`.
///
/// # Errors
///
/// Returns [`Error::Numerical`] if `A` is not positive definite.
pub fn solve_hermitian(a: &CMat, b: &CMat) -> Result<CMat> {
    let l = cholesky(a)?;
    Ok(cholesky_solve(&l, b))
}

/// Solve the real symmetric positive-definite system `A x = b` where `A` is
/// given row-major as `n * n` entries.
///
/// # Errors
///
/// Returns [`Error::Numerical`] if a pivot is not strictly positive.
pub fn solve_spd_real(a: &[f64], n: usize, b: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(a.len(), n * n, "matrix storage mismatch");
    assert_eq!(b.len(), n, "rhs length mismatch");
    // Cholesky A = L L^T on a working copy.
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return Err(Error::Numerical(format!(
                        "real cholesky pivot {i} is not positive: {sum}"
                    )));
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    let mut x = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            x[i] -= l[i * n + k] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            x[i] -= l[k * n + i] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_cmat(rows: usize, cols: usize, rng: &mut StdRng) -> CMat {
        CMat::from_fn(rows, cols, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    /// A random Hermitian positive-definite matrix G^H G + I.
    fn random_hpd(n: usize, rng: &mut StdRng) -> CMat {
        let g = random_cmat(n, n, rng);
        let mut a = g.hermitian_transpose().mul(&g);
        a.add_diagonal(1.0);
        a
    }

    #[test]
    fn test_mul_known_values() {
        let a = CMat::from_fn(2, 2, |r, c| Complex64::new((r * 2 + c) as f64, 0.0));
        let b = CMat::identity(2);
        assert_eq!(a.mul(&b), a);

        // [[i, 0], [0, i]] * [[0, 1], [1, 0]] = [[0, i], [i, 0]]
        let i = Complex64::new(0.0, 1.0);
        let z = Complex64::new(0.0, 0.0);
        let o = Complex64::new(1.0, 0.0);
        let rot = CMat::from_fn(2, 2, |r, c| if r == c { i } else { z });
        let swap = CMat::from_fn(2, 2, |r, c| if r != c { o } else { z });
        let prod = rot.mul(&swap);
        assert_eq!(prod.get(0, 1), i);
        assert_eq!(prod.get(1, 0), i);
        assert_eq!(prod.get(0, 0), z);
    }

    #[test]
    fn test_hermitian_transpose_conjugates() {
        let a = CMat::from_fn(2, 3, |r, c| Complex64::new(r as f64, c as f64));
        let ah = a.hermitian_transpose();
        assert_eq!(ah.rows(), 3);
        assert_eq!(ah.cols(), 2);
        assert_eq!(ah.get(2, 1), Complex64::new(1.0, -2.0));
    }

    #[test]
    fn test_cholesky_reconstructs_matrix() {
        let mut rng = StdRng::seed_from_u64(1);
        for n in [1, 2, 5, 16] {
            let a = random_hpd(n, &mut rng);
            let l = cholesky(&a).unwrap();
            let back = l.mul(&l.hermitian_transpose());
            assert!(
                back.max_abs_diff(&a) < 1e-10,
                "L L^H should reconstruct A (n = {n})"
            );
        }
    }

    #[test]
    fn test_solve_hermitian_residual_small() {
        let mut rng = StdRng::seed_from_u64(2);
        for n in [1, 3, 8, 24] {
            let a = random_hpd(n, &mut rng);
            let b = random_cmat(n, 4, &mut rng);
            let x = solve_hermitian(&a, &b).unwrap();
            let residual = a.mul(&x).max_abs_diff(&b);
            assert!(residual < 1e-10, "residual {residual} too large (n = {n})");
        }
    }

    #[test]
    fn test_cholesky_rejects_indefinite() {
        // diag(1, -1) is Hermitian but not positive definite.
        let a = CMat::from_fn(2, 2, |r, c| {
            if r == c {
                Complex64::new(if r == 0 { 1.0 } else { -1.0 }, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        assert!(cholesky(&a).is_err());
    }

    #[test]
    fn test_cholesky_rejects_non_square() {
        assert!(cholesky(&CMat::zeros(2, 3)).is_err());
    }

    #[test]
    fn test_solve_spd_real_matches_direct() {
        // 2x2 system with a known solution: [[4,1],[1,3]] x = [1, 2] has
        // x = [1/11, 7/11].
        let a = [4.0, 1.0, 1.0, 3.0];
        let x = solve_spd_real(&a, 2, &[1.0, 2.0]).unwrap();
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn test_solve_spd_real_rejects_indefinite() {
        let a = [1.0, 0.0, 0.0, -1.0];
        assert!(solve_spd_real(&a, 2, &[1.0, 1.0]).is_err());
    }
}
