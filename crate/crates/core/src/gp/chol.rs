//! Growable Cholesky factor with packed row-major storage.
//!
//! Row `i` of the lower-triangular factor occupies `data[i*(i+1)/2 .. i*(i+1)/2 + i + 1]`,
//! so appending a conditioning point extends the buffer without moving
//! existing rows, and forward solves stream the packed rows in order.

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct CholeskyFactor {
    data: Vec<f64>,
    n: usize,
}

/// Dot product with a fixed eight-lane accumulation order: fast (the lanes
/// break the FP dependency chain and vectorize) and bit-stable across runs.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (xa, xb) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += xa[k] * xb[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

impl CholeskyFactor {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        let off = i * (i + 1) / 2;
        &self.data[off..off + i + 1]
    }

    /// Solves `L w = b` in place (`b` becomes `w`).
    pub fn forward_solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let row = self.row(i);
            let s = dot(&row[..i], &b[..i]);
            b[i] = (b[i] - s) / row[i];
        }
    }

    /// Appends a row given `solved = L^{-1} k` (cross-covariances already
    /// forward-solved) and the raw diagonal entry of the extended Gram
    /// matrix. Fails when the Schur complement is not positive.
    pub fn append_solved_row(&mut self, solved: &[f64], raw_diag: f64) -> Result<()> {
        debug_assert_eq!(solved.len(), self.n);
        let schur = raw_diag - dot(solved, solved);
        if !(schur > 0.0) {
            return Err(CoreError::numeric(format!(
                "degenerate rank-1 extension at size {}: schur complement {:.3e}",
                self.n + 1,
                schur
            )));
        }
        self.data.extend_from_slice(solved);
        self.data.push(schur.sqrt());
        self.n += 1;
        Ok(())
    }

    pub fn sum_log_diag(&self) -> f64 {
        (0..self.n).map(|i| self.row(i)[i].ln()).sum()
    }

    /// Reconstructs `L L^T` densely; used by validity checks and tests.
    pub fn reconstruct(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n;
        let mut out = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let len = j + 1;
                let v = dot(&self.row(i)[..len], &self.row(j)[..len]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn spd_matrix(n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3 + 1) as f64 * 0.37).sin());
        &a * a.transpose() + DMatrix::identity(n, n) * (n as f64)
    }

    fn build_incremental(m: &DMatrix<f64>) -> CholeskyFactor {
        let n = m.nrows();
        let mut f = CholeskyFactor::new();
        for i in 0..n {
            let mut cross: Vec<f64> = (0..i).map(|j| m[(i, j)]).collect();
            f.forward_solve_in_place(&mut cross);
            f.append_solved_row(&cross, m[(i, i)]).unwrap();
        }
        f
    }

    #[test]
    fn reconstructs_the_input_matrix() {
        let m = spd_matrix(12);
        let f = build_incremental(&m);
        let back = f.reconstruct();
        assert_relative_eq!(back, m, epsilon = 1e-10);
    }

    #[test]
    fn matches_reference_cholesky_forward_solve() {
        let m = spd_matrix(9);
        let f = build_incremental(&m);
        let reference = nalgebra::Cholesky::new(m.clone()).unwrap();

        let b: Vec<f64> = (0..9).map(|i| (i as f64 * 0.71).cos()).collect();
        let mut w = b.clone();
        f.forward_solve_in_place(&mut w);
        let w_ref = reference
            .l()
            .solve_lower_triangular(&nalgebra::DVector::from_vec(b))
            .unwrap();
        for (a, b) in w.iter().zip(w_ref.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn rejects_non_positive_schur_complement() {
        let mut f = CholeskyFactor::new();
        f.append_solved_row(&[], 1.0).unwrap();
        // Raw diagonal equal to the solved-row norm makes the update singular.
        let err = f.append_solved_row(&[1.0], 1.0);
        assert!(err.is_err());
    }
}
