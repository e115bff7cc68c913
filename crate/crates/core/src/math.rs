//! Dense numeric kernel shared by every other module: a row-major `f64`
//! matrix, the two gate activations, min-max scaling and a seeded RNG.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

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

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · v`, written into `out` (accumulating when `accumulate` is set).
    pub(crate) fn gemv_into(&self, v: &[f64], out: &mut [f64], accumulate: bool) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let dot: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
            if accumulate {
                *o += dot;
            } else {
                *o = dot;
            }
        }
    }

    /// `selfᵀ · v` accumulated into `out`.
    pub(crate) fn gemv_t_acc(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &vr) in v.iter().enumerate() {
            if vr == 0.0 {
                continue;
            }
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vr;
            }
        }
    }

    /// Rank-one update `self += a bᵀ`.
    pub(crate) fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (r, &ar) in a.iter().enumerate() {
            if ar == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (x, bc) in row.iter_mut().zip(b) {
                *x += ar * bc;
            }
        }
    }
}

/// Logistic function, evaluated on the branch that cannot overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn tanh(x: f64) -> f64 {
    x.tanh()
}

pub fn sigmoid_in_place(v: &mut [f64]) {
    for x in v {
        *x = sigmoid(*x);
    }
}

pub fn tanh_in_place(v: &mut [f64]) {
    for x in v {
        *x = x.tanh();
    }
}

/// Per-feature min-max scaler onto `[0, 1]`. A constant feature maps to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    min: Vec<f64>,
    max: Vec<f64>,
}

impl MinMaxScaler {
    /// Fits on rows of equal width.
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Argument("scaler fit needs at least one row".into()))?;
        let width = first.as_ref().len();
        let mut min = vec![f64::INFINITY; width];
        let mut max = vec![f64::NEG_INFINITY; width];
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != width {
                return Err(Error::Shape(format!(
                    "scaler fit row {i} has width {}, expected {width}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(MinMaxScaler { min, max })
    }

    pub fn from_bounds(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(Error::Shape(format!(
                "scaler bounds of width {} and {}",
                min.len(),
                max.len()
            )));
        }
        if min
            .iter()
            .zip(&max)
            .any(|(lo, hi)| hi.is_nan() || lo.is_nan() || hi < lo)
        {
            return Err(Error::Argument("scaler max must be >= min".into()));
        }
        Ok(MinMaxScaler { min, max })
    }

    pub fn width(&self) -> usize {
        self.min.len()
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.width() {
            return Err(Error::Shape(format!(
                "vector of width {} given to scaler of width {}",
                v.len(),
                self.width()
            )));
        }
        Ok(())
    }

    pub fn transform(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check(v)?;
        Ok(v.iter()
            .enumerate()
            .map(|(j, &x)| self.transform_one(j, x))
            .collect())
    }

    pub fn inverse(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check(v)?;
        Ok(v.iter()
            .enumerate()
            .map(|(j, &x)| self.inverse_one(j, x))
            .collect())
    }

    pub fn transform_one(&self, feature: usize, x: f64) -> f64 {
        let span = self.max[feature] - self.min[feature];
        if span == 0.0 {
            0.0
        } else {
            (x - self.min[feature]) / span
        }
    }

    pub fn inverse_one(&self, feature: usize, x: f64) -> f64 {
        let span = self.max[feature] - self.min[feature];
        self.min[feature] + x * span
    }
}

/// Stable 64-bit seed for a named stage, derived from a parent seed.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(b)
}

/// Caller-owned seeded generator (ChaCha8 stream). Never global.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for a named sub-stage.
    pub fn derive(&self, label: &str) -> Rng {
        Rng::new(derive_seed(self.seed, label))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw from `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Argument(format!(
                "uniform range [{lo}, {hi}) is empty or not finite"
            )));
        }
        Ok(self.inner.random_range(lo..hi))
    }

    /// Uniform index in `0..n`; `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn choice<'a, T>(&mut self, items: &'a [T]) -> Option<&'a T> {
        items.choose(&mut self.inner)
    }

    /// `k` distinct indices from `0..n`, returned in ascending order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut idx = rand::seq::index::sample(&mut self.inner, n, k.min(n)).into_vec();
        idx.sort_unstable();
        idx
    }

    pub fn normal(&mut self, mean: f64, std_dev: f64) -> Result<f64> {
        let d = Normal::new(mean, std_dev)
            .map_err(|e| Error::Argument(format!("normal({mean}, {std_dev}): {e}")))?;
        Ok(d.sample(&mut self.inner))
    }

    pub fn poisson(&mut self, lambda: f64) -> Result<u64> {
        if lambda == 0.0 {
            return Ok(0);
        }
        let d =
            Poisson::new(lambda).map_err(|e| Error::Argument(format!("poisson({lambda}): {e}")))?;
        Ok(d.sample(&mut self.inner) as u64)
    }
}
