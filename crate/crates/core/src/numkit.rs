//! Dense row-major linear algebra, activations, softmax and the seeded
//! random source shared by every other module.
//!
//! Everything is `f64`. Matrices are immutable values in practice; the few
//! `&mut` helpers exist for builders and in-place accumulation.

use std::fmt;

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, usage, Error, Result};

/// Dense matrix stored in row-major order.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            values: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major values, rejecting bad lengths and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        check_dim("Matrix::from_vec", rows * cols, values.len())?;
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(usage(format!("matrix entry {bad} is not finite")));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            check_dim("Matrix::from_rows", cols, row.len())?;
            values.extend_from_slice(row);
        }
        Self::from_vec(rows.len(), cols, values)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                values.push(f(r, c));
            }
        }
        Self { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on zero chunk size
        let cols = self.cols.max(1);
        self.values.chunks_exact(cols).take(self.rows)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        check_dim("Matrix::matmul", self.cols, other.rows)?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let lhs = self.row(r);
            let dst = &mut out.values[r * other.cols..(r + 1) * other.cols];
            for (k, &a) in lhs.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (d, &b) in dst.iter_mut().zip(other.row(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Row vector times matrix: `x · self`, with `x.len() == rows`.
    pub fn vecmul(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("Matrix::vecmul", self.rows, x.len())?;
        let mut out = vec![0.0; self.cols];
        self.vecmul_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked `x · self` written into `out`; callers guarantee shapes.
    #[inline]
    pub fn vecmul_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (k, &a) in x.iter().enumerate() {
            for (o, &b) in out.iter_mut().zip(self.row(k)) {
                *o += a * b;
            }
        }
    }

    /// Matrix times column vector: `self · x`, with `x.len() == cols`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("Matrix::matvec", self.cols, x.len())?;
        Ok(self.row_iter().map(|row| dot(row, x)).collect())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        check_dim("Matrix::add rows", self.rows, other.rows)?;
        check_dim("Matrix::add cols", self.cols, other.cols)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            values,
        })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Rows reordered so that row `i` of the result is row `perm[i]` of `self`.
    pub fn permute_rows(&self, perm: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols);
        for (dst, &src) in perm.iter().enumerate() {
            out.row_mut(dst).copy_from_slice(self.row(src));
        }
        out
    }

    /// Columns `start..start + len` of every row.
    pub fn column_block(&self, start: usize, len: usize) -> Matrix {
        Matrix::from_fn(self.rows, len, |r, c| self.get(r, start + c))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        let m = nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.values);
        m.singular_values().max()
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.values)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Numerically stable softmax (max-subtraction).
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(usage("softmax of an empty vector"));
    }
    if v.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(usage("softmax input must be finite (or -inf)"));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(usage("softmax input is entirely -inf"));
    }
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Raster-order flattening: `out[i * cols + j] = m[i][j]`.
pub fn flatten_raster(m: &Matrix) -> Vec<f64> {
    m.values().to_vec()
}

pub fn outer(u: &[f64], v: &[f64]) -> Matrix {
    Matrix::from_fn(u.len(), v.len(), |i, j| u[i] * v[j])
}

#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
pub fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Identifier of the generator behind [`Rng`], echoed into reports.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9), normals via rand_distr ziggurat";

/// Seeded random source. The same seed gives the same stream on every
/// platform.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream `stream` of the same seed.
    pub fn derive(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normal_vec(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.normal()).collect()
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i + 1);
            p.swap(i, j);
        }
        p
    }
}

/// `rows × cols` matrix of i.i.d. standard normals.
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(usage("gaussian_matrix needs rows, cols >= 1"));
    }
    Ok(Matrix::from_fn(rows, cols, |_, _| rng.normal()))
}

/// Random matrix rescaled so its spectral norm equals `target`.
pub fn matrix_with_spectral_norm(
    rows: usize,
    cols: usize,
    target: f64,
    rng: &mut Rng,
) -> Result<Matrix> {
    let m = gaussian_matrix(rows, cols, rng)?;
    let s = m.spectral_norm();
    if s == 0.0 {
        return Err(Error::Internal("sampled an all-zero matrix".into()));
    }
    Ok(m.scale(target / s))
}

/// `n` rows drawn uniformly from the open ball of the given radius in `R^d`.
pub fn uniform_ball_rows(n: usize, d: usize, radius: f64, rng: &mut Rng) -> Matrix {
    let mut out = Matrix::zeros(n, d);
    for r in 0..n {
        let dir = rng.normal_vec(d);
        let len = norm(&dir).max(f64::MIN_POSITIVE);
        let scale = radius * rng.uniform(0.0, 1.0).powf(1.0 / d as f64) / len;
        for (o, v) in out.row_mut(r).iter_mut().zip(&dir) {
            *o = v * scale;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(softmax(&[1000.0, 1000.0]).unwrap(), vec![0.5, 0.5]);
        let p = softmax(&[1f64.ln(), 3f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
        assert!(matches!(softmax(&[]), Err(Error::Usage(_))));
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut rng = Rng::new(3);
        for _ in 0..100 {
            let v: Vec<f64> = (0..7).map(|_| 30.0 * rng.normal()).collect();
            let p = softmax(&v).unwrap();
            assert!(p.iter().all(|&x| x >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn flatten_raster_examples() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(flatten_raster(&m), vec![1.0, 2.0, 3.0, 4.0]);
        let row = Matrix::from_rows(&[vec![5.0, 6.0, 7.0]]).unwrap();
        assert_eq!(flatten_raster(&row), vec![5.0, 6.0, 7.0]);

        let mut rng = Rng::new(11);
        let m = gaussian_matrix(3, 2, &mut rng).unwrap();
        let flat = flatten_raster(&m);
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(flat[i * 2 + j], m.get(i, j));
            }
        }
    }

    #[test]
    fn outer_examples() {
        let e1 = outer(&[1.0, 0.0], &[1.0, 0.0]);
        assert_eq!(e1.values(), &[1.0, 0.0, 0.0, 0.0]);
        assert!(outer(&[1.0, -2.0, 3.0], &[0.0, 0.0]).values().iter().all(|&v| v == 0.0));

        let mut rng = Rng::new(5);
        let u = rng.normal_vec(4);
        let v = rng.normal_vec(3);
        let o = outer(&u, &v);
        for i in 0..4 {
            for j in 0..3 {
                assert_eq!(o.get(i, j), u[i] * v[j]);
            }
        }
    }

    #[test]
    fn activation_examples() {
        assert_eq!(elu(0.0), 0.0);
        assert_eq!(elu(2.5), 2.5);
        assert_eq!(leaky_relu(-1.0, 0.2), -0.2);
        assert_eq!(leaky_relu(3.0, 0.2), 3.0);
        assert_eq!(relu(-4.0), 0.0);
        assert!((elu(-20.0) - (-1.0)).abs() < 1e-8);
        assert!((elu(-20.0) - ((-20f64).exp() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn gaussian_matrix_is_reproducible() {
        let a = gaussian_matrix(4, 5, &mut Rng::new(42)).unwrap();
        let b = gaussian_matrix(4, 5, &mut Rng::new(42)).unwrap();
        assert_eq!(a, b);
        assert!(gaussian_matrix(0, 3, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn gaussian_matrix_moments() {
        let m = gaussian_matrix(100, 1000, &mut Rng::new(2024)).unwrap();
        let n = m.values().len() as f64;
        let mean = m.values().iter().sum::<f64>() / n;
        let var = m.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((0.97..=1.03).contains(&var), "variance {var}");
    }

    #[test]
    fn derived_streams_differ() {
        let a = Rng::derive(9, 0).normal_vec(4);
        let b = Rng::derive(9, 1).normal_vec(4);
        assert_ne!(a, b);
        assert_eq!(a, Rng::derive(9, 0).normal_vec(4));
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, -4.0]]).unwrap();
        assert!((m.spectral_norm() - 4.0).abs() < 1e-12);
        let s = matrix_with_spectral_norm(3, 5, 0.7, &mut Rng::new(1)).unwrap();
        assert!((s.spectral_norm() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn ball_rows_stay_inside() {
        let x = uniform_ball_rows(200, 3, 0.5, &mut Rng::new(8));
        assert!(x.row_iter().all(|r| norm(r) < 0.5));
    }

    #[test]
    fn from_vec_rejects_nan() {
        assert!(Matrix::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::from_vec(2, 2, vec![1.0]).is_err());
    }
}

#[cfg(test)]
mod proptests {
    use super::{gaussian_matrix, softmax, Rng};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn softmax_shift_invariant(v in prop::collection::vec(-50.0f64..50.0, 1..12), c in -1e3f64..1e3) {
            // exact when the shift keeps the same relative offsets in fp
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let p = softmax(&v).unwrap();
            let q = softmax(&shifted).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn matmul_associative(seed in 0u64..10_000, a in 1usize..7, b in 1usize..7, c in 1usize..7, d in 1usize..7) {
            let mut rng = Rng::new(seed);
            let x = gaussian_matrix(a, b, &mut rng).unwrap();
            let y = gaussian_matrix(b, c, &mut rng).unwrap();
            let z = gaussian_matrix(c, d, &mut rng).unwrap();
            let left = x.matmul(&y).unwrap().matmul(&z).unwrap();
            let right = x.matmul(&y.matmul(&z).unwrap()).unwrap();
            prop_assert!(left.max_abs_diff(&right) <= 1e-10);
        }
    }
}
