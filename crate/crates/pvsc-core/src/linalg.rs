//! Small dense-matrix helpers for the seeded mixing transforms.
//!
//! The simulator only needs matrix-vector products with fixed seeded
//! matrices (orthonormal rotations and nonnegative pooling mixes), so this
//! stays a minimal row-major implementation rather than pulling in a linear
//! algebra crate.

use rand::Rng;
use rand_distr::StandardNormal;

/// Row-major dense matrix.
#[derive(Clone, Debug)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        DenseMatrix { rows, cols, data }
    }

    /// Identity; used by tests that want a transparent projector.
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        DenseMatrix {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `y = M x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for (i, yi) in y.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            *yi = acc;
        }
        y
    }

    /// `y = Mᵀ x`; for an orthonormal square matrix this is the inverse map.
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            let row = self.row(i);
            for (yj, a) in y.iter_mut().zip(row) {
                *yj += a * xi;
            }
        }
        y
    }
}

/// Draws a `rows x cols` matrix with orthonormal rows (`M Mᵀ = I`).
///
/// Requires `rows <= cols`. Rows are seeded Gaussian vectors passed through
/// modified Gram-Schmidt with one re-orthogonalization sweep, which keeps
/// the orthonormality defect near machine epsilon even at 128x128.
pub fn random_row_orthonormal<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    assert!(rows <= cols, "cannot orthonormalize {rows} rows in R^{cols}");
    let mut data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    for i in 0..rows {
        // Two orthogonalization passes against all previous rows.
        for _ in 0..2 {
            for p in 0..i {
                let dot: f64 = (0..cols).map(|k| data[i * cols + k] * data[p * cols + k]).sum();
                for k in 0..cols {
                    data[i * cols + k] -= dot * data[p * cols + k];
                }
            }
        }
        let norm: f64 = (0..cols)
            .map(|k| data[i * cols + k] * data[i * cols + k])
            .sum::<f64>()
            .sqrt();
        // A Gaussian row is dependent on its predecessors with probability
        // zero; resampling on underflow keeps the construction total.
        if norm < 1e-12 {
            for k in 0..cols {
                data[i * cols + k] = rng.sample::<f64, _>(StandardNormal);
            }
            let n2: f64 = (0..cols)
                .map(|k| data[i * cols + k] * data[i * cols + k])
                .sum::<f64>()
                .sqrt();
            for k in 0..cols {
                data[i * cols + k] /= n2;
            }
            continue;
        }
        for k in 0..cols {
            data[i * cols + k] /= norm;
        }
    }
    DenseMatrix::from_rows(rows, cols, data)
}

/// Square orthonormal rotation.
pub fn random_orthonormal<R: Rng>(n: usize, rng: &mut R) -> DenseMatrix {
    random_row_orthonormal(n, n, rng)
}

/// Nonnegative mixing matrix whose rows are convex-combination weights
/// (entries `|N(0,1)|`, each row normalized to sum 1). Used where mixed
/// signs would be harmful, e.g. pooling magnitudes for the hyper path.
pub fn random_convex_mix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    let mut data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal).abs())
        .collect();
    for i in 0..rows {
        let sum: f64 = data[i * cols..(i + 1) * cols].iter().sum();
        for k in 0..cols {
            data[i * cols + k] /= sum;
        }
    }
    DenseMatrix::from_rows(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, StreamTag};

    fn orthonormality_defect(m: &DenseMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..m.rows() {
            for j in 0..m.rows() {
                let dot: f64 = m.row(i).iter().zip(m.row(j)).map(|(a, b)| a * b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    #[test]
    fn rows_are_orthonormal_at_working_size() {
        let mut rng = substream(11, 0, StreamTag::Projector);
        let m = random_orthonormal(128, &mut rng);
        assert!(orthonormality_defect(&m) < 1e-12);
    }

    #[test]
    fn transpose_inverts_square_rotation() {
        let mut rng = substream(3, 1, StreamTag::Analysis);
        let m = random_orthonormal(64, &mut rng);
        let x: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin()).collect();
        let back = m.matvec_t(&m.matvec(&x));
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rectangular_rows_recover_padded_inputs() {
        let mut rng = substream(4, 2, StreamTag::Analysis);
        // 8 orthonormal rows in R^16: M Mᵀ = I so Mᵀ (M x) = x for x in the
        // row space; here we go the other way, lifting x to 16 dims.
        let m = random_row_orthonormal(8, 16, &mut rng);
        let x: Vec<f64> = (0..8).map(|i| i as f64 - 3.5).collect();
        let lifted = m.matvec_t(&x);
        let back = m.matvec(&lifted);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn convex_mix_rows_sum_to_one_and_are_nonnegative() {
        let mut rng = substream(9, 0, StreamTag::HyperMix);
        let m = random_convex_mix(5, 12, &mut rng);
        for i in 0..5 {
            assert!(m.row(i).iter().all(|&v| v >= 0.0));
            let s: f64 = m.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_matrices_are_reproducible() {
        let a = random_orthonormal(16, &mut substream(5, 0, StreamTag::Projector));
        let b = random_orthonormal(16, &mut substream(5, 0, StreamTag::Projector));
        assert_eq!(a.row(7), b.row(7));
    }
}
