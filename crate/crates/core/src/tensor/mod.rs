//! Dense 64-bit float matrix primitives.
//!
//! Everything downstream (attention maps, LSTM states, optimizer buffers)
//! is stored as a row-major [`Matrix`]. Operations return errors on shape
//! mismatch and never let NaN/Inf escape silently.

mod rng;
mod svd;

pub use rng::SeededRng;
pub use svd::{numerical_rank, singular_values};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Input("matrix needs at least one row".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("from_rows", "ragged rows"));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "from_vec",
                format!(
                    "{}x{} needs {} entries, got {}",
                    rows,
                    cols,
                    rows * cols,
                    data.len()
                ),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Row vector (1 x n).
    pub fn row_vector(data: Vec<f64>) -> Self {
        Matrix {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    /// Column vector (n x 1).
    pub fn col_vector(data: Vec<f64>) -> Self {
        Matrix {
            rows: data.len(),
            cols: 1,
            data,
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Uniform entries in `[lo, hi)` drawn from `rng`, row by row.
    pub fn random_uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut SeededRng) -> Self {
        let data = (0..rows * cols).map(|_| rng.uniform(lo, hi)).collect();
        Matrix { rows, cols, data }
    }

    /// Standard-normal entries drawn from `rng`, row by row.
    pub fn random_normal(rows: usize, cols: usize, rng: &mut SeededRng) -> Self {
        let data = (0..rows * cols).map(|_| rng.normal(0.0, 1.0)).collect();
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// First index of a non-finite entry, if any.
    pub fn find_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Standard matrix product. `self.cols` must equal `b.rows`.
    pub fn matmul(&self, b: &Matrix) -> Result<Matrix> {
        if self.cols != b.rows {
            return Err(Error::shape(
                "matmul",
                format!("{}x{} * {}x{}", self.rows, self.cols, b.rows, b.cols),
            ));
        }
        let mut out = Matrix::zeros(self.rows, b.cols);
        // ikj loop order keeps the inner traversal contiguous.
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a_ik = self.data[i * self.cols + k];
                let brow = &b.data[k * b.cols..(k + 1) * b.cols];
                let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
                for j in 0..b.cols {
                    orow[j] += a_ik * brow[j];
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, b: &Matrix) -> Result<Matrix> {
        self.zip_with("add", b, |x, y| x + y)
    }

    pub fn sub(&self, b: &Matrix) -> Result<Matrix> {
        self.zip_with("sub", b, |x, y| x - y)
    }

    /// Elementwise (Hadamard) product.
    pub fn hadamard(&self, b: &Matrix) -> Result<Matrix> {
        self.zip_with("hadamard", b, |x, y| x * y)
    }

    pub fn scale(&self, c: f64) -> Matrix {
        self.map(|x| c * x)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip_with(
        &self,
        op: &'static str,
        b: &Matrix,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        if self.shape() != b.shape() {
            return Err(Error::shape(
                op,
                format!("{}x{} vs {}x{}", self.rows, self.cols, b.rows, b.cols),
            ));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&b.data)
                .map(|(&x, &y)| f(x, y))
                .collect(),
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// Columns of `self` followed by columns of `b`.
    pub fn concat_cols(&self, b: &Matrix) -> Result<Matrix> {
        if self.rows != b.rows {
            return Err(Error::shape(
                "concat_cols",
                format!("{} rows vs {} rows", self.rows, b.rows),
            ));
        }
        let cols = self.cols + b.cols;
        let mut out = Matrix::zeros(self.rows, cols);
        for r in 0..self.rows {
            out.data[r * cols..r * cols + self.cols]
                .copy_from_slice(&self.data[r * self.cols..(r + 1) * self.cols]);
            out.data[r * cols + self.cols..(r + 1) * cols]
                .copy_from_slice(&b.data[r * b.cols..(r + 1) * b.cols]);
        }
        Ok(out)
    }

    /// Rows of every block stacked top to bottom. All blocks must share a column count.
    pub fn concat_rows(blocks: &[&Matrix]) -> Result<Matrix> {
        if blocks.is_empty() {
            return Err(Error::Input("concat_rows needs at least one block".into()));
        }
        let cols = blocks[0].cols;
        if blocks.iter().any(|b| b.cols != cols) {
            return Err(Error::shape("concat_rows", "column counts differ"));
        }
        let rows = blocks.iter().map(|b| b.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for b in blocks {
            data.extend_from_slice(&b.data);
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Matrix> {
        if start >= end || end > self.rows {
            return Err(Error::shape(
                "slice_rows",
                format!("range {}..{} of {} rows", start, end, self.rows),
            ));
        }
        Ok(Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        })
    }
}

/// Row-wise softmax with max-subtraction. Each output row sums to 1.
pub fn row_softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows {
        let row = &mut out.data[r * out.cols..(r + 1) * out.cols];
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Per-row layer normalization: center to mean 0, scale to unit population
/// variance (`eps` inside the square root), then apply `gain` and `bias`.
pub fn layer_normalize(x: &Matrix, gain: &[f64], bias: &[f64], eps: f64) -> Result<Matrix> {
    if gain.len() != x.cols || bias.len() != x.cols {
        return Err(Error::shape(
            "layer_normalize",
            format!(
                "gain/bias lengths {}/{} vs {} columns",
                gain.len(),
                bias.len(),
                x.cols
            ),
        ));
    }
    let d = x.cols as f64;
    let mut out = x.clone();
    for r in 0..x.rows {
        let row = &mut out.data[r * x.cols..(r + 1) * x.cols];
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let inv_std = 1.0 / (var + eps).sqrt();
        for (c, v) in row.iter_mut().enumerate() {
            *v = gain[c] * ((*v - mean) * inv_std) + bias[c];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: &Matrix, b: &Matrix, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= tol, "{} vs {}", x, y);
        }
    }

    #[test]
    fn matmul_identity() {
        let mut rng = SeededRng::new(1);
        let m = Matrix::random_uniform(3, 5, -1.0, 1.0, &mut rng);
        let i3 = Matrix::identity(3);
        assert_eq!(i3.matmul(&m).unwrap(), m);
    }

    #[test]
    fn matmul_hand_case() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![5.0], vec![6.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_matches_naive_triple_loop() {
        let mut rng = SeededRng::new(7);
        let a = Matrix::random_uniform(7, 5, -2.0, 2.0, &mut rng);
        let b = Matrix::random_uniform(5, 4, -2.0, 2.0, &mut rng);
        let c = a.matmul(&b).unwrap();
        // Independent naive oracle with the classical ijk order.
        let mut oracle = Matrix::zeros(7, 4);
        for i in 0..7 {
            for j in 0..4 {
                let mut acc = 0.0;
                for k in 0..5 {
                    acc += a.get(i, k) * b.get(k, j);
                }
                oracle.set(i, j, acc);
            }
        }
        assert_close(&c, &oracle, 1e-12);
    }

    #[test]
    fn matmul_shape_mismatch_is_error() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        assert!(a.matmul(&b).is_err());
    }

    #[test]
    fn row_softmax_uniform_and_analytic() {
        let z = Matrix::zeros(2, 2);
        let s = row_softmax(&z);
        assert!(s.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));

        let m = Matrix::from_rows(&[vec![0.0, 3.0f64.ln()]]).unwrap();
        let s = row_softmax(&m);
        assert!((s.get(0, 0) - 0.25).abs() < 1e-12);
        assert!((s.get(0, 1) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn row_softmax_rows_sum_to_one() {
        let mut rng = SeededRng::new(11);
        let m = Matrix::random_uniform(5, 5, -10.0, 10.0, &mut rng);
        let s = row_softmax(&m);
        for r in 0..5 {
            let sum: f64 = s.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_normalize_constant_row_is_zero() {
        let x = Matrix::filled(1, 4, 3.7);
        let out = layer_normalize(&x, &[1.0; 4], &[0.0; 4], 1e-5).unwrap();
        assert!(out.data().iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn layer_normalize_two_point_row() {
        let x = Matrix::from_rows(&[vec![1.0, 3.0]]).unwrap();
        let out = layer_normalize(&x, &[1.0, 1.0], &[0.0, 0.0], 0.0).unwrap();
        assert!((out.get(0, 0) + 1.0).abs() < 1e-12);
        assert!((out.get(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn layer_normalize_matches_two_pass_oracle() {
        let mut rng = SeededRng::new(3);
        let x = Matrix::random_uniform(1, 9, -5.0, 5.0, &mut rng);
        let gain: Vec<f64> = (0..9).map(|i| 0.5 + 0.1 * i as f64).collect();
        let bias: Vec<f64> = (0..9).map(|i| -0.2 * i as f64).collect();
        let eps = 1e-5;
        let out = layer_normalize(&x, &gain, &bias, eps).unwrap();

        // Two-pass oracle: explicit mean, then explicit variance.
        let row = x.row(0);
        let mean = row.iter().sum::<f64>() / 9.0;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9.0;
        for c in 0..9 {
            let expect = gain[c] * (row[c] - mean) / (var + eps).sqrt() + bias[c];
            assert!((out.get(0, c) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_rng_is_reproducible() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        for _ in 0..10_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    proptest! {
        #[test]
        fn matmul_associative(seed in 0u64..500) {
            let mut rng = SeededRng::new(seed);
            let a = Matrix::random_uniform(4, 3, -1.0, 1.0, &mut rng);
            let b = Matrix::random_uniform(3, 5, -1.0, 1.0, &mut rng);
            let c = Matrix::random_uniform(5, 2, -1.0, 1.0, &mut rng);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let scale = left.max_abs().max(1.0);
            for (x, y) in left.data().iter().zip(right.data()) {
                prop_assert!((x - y).abs() <= 1e-10 * scale);
            }
        }

        #[test]
        fn row_softmax_shift_invariant(seed in 0u64..500, shift in -50.0f64..50.0) {
            let mut rng = SeededRng::new(seed);
            let m = Matrix::random_uniform(3, 6, -4.0, 4.0, &mut rng);
            let shifted = m.map(|v| v + shift);
            let s0 = row_softmax(&m);
            let s1 = row_softmax(&shifted);
            for (x, y) in s0.data().iter().zip(s1.data()) {
                prop_assert!((x - y).abs() <= 1e-12);
                prop_assert!(*x > 0.0 && *x < 1.0);
            }
        }
    }
}
