//! Dense helpers, the hollowed Gram matrix and symmetric eigensolvers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{param, Error, Result};
use crate::model::SparseBinaryMatrix;
use crate::seed::rng_for;

/// Default cap on the number of entries of a dense Gram matrix.
pub const DEFAULT_GRAM_CAP: usize = 400_000_000;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return param(format!("{rows}x{cols} matrix needs {} entries, got {}", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return param("rows have unequal lengths");
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let m = rhs.cols;
        let mut out = Mat::zeros(self.rows, m);
        out.data.par_chunks_mut(m.max(1)).enumerate().for_each(|(i, out_row)| {
            for (a, rhs_row) in self.row(i).iter().zip(rhs.data.chunks_exact(m.max(1))) {
                if *a != 0.0 {
                    for (o, r) in out_row.iter_mut().zip(rhs_row) {
                        *o += a * r;
                    }
                }
            }
        });
        out
    }

    /// `selfᵀ · rhs`.
    pub fn t_matmul(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.rows, rhs.rows, "row counts differ");
        let (n, m) = (self.cols, rhs.cols);
        let chunk = 256;
        let partials: Vec<Vec<f64>> = (0..self.rows)
            .collect::<Vec<_>>()
            .par_chunks(chunk)
            .map(|block| {
                let mut acc = vec![0.0; n * m];
                for &i in block {
                    for (a_idx, &a) in self.row(i).iter().enumerate() {
                        if a != 0.0 {
                            let dst = &mut acc[a_idx * m..(a_idx + 1) * m];
                            for (d, r) in dst.iter_mut().zip(rhs.row(i)) {
                                *d += a * r;
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        let mut out = Mat::zeros(n, m);
        for p in partials {
            for (o, v) in out.data.iter_mut().zip(p) {
                *o += v;
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Keeps the first `k` columns.
    pub fn leading_columns(&self, k: usize) -> Mat {
        let mut out = Mat::zeros(self.rows, k);
        for i in 0..self.rows {
            out.row_mut(i).copy_from_slice(&self.row(i)[..k]);
        }
        out
    }
}

/// Symmetric `n × n` matrix, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSymmetricMatrix {
    inner: Mat,
}

impl DenseSymmetricMatrix {
    /// Checks finiteness and symmetry to `1e-12` relative to the largest entry.
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        let inner = Mat::from_vec(n, n, data)?;
        if inner.data.iter().any(|x| !x.is_finite()) {
            return param("matrix has non-finite entries");
        }
        let scale = inner.data.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..n {
            for j in (i + 1)..n {
                if (inner.get(i, j) - inner.get(j, i)).abs() > 1e-12 * scale {
                    return param(format!("matrix is not symmetric at ({i}, {j})"));
                }
            }
        }
        Ok(Self { inner })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = Mat::from_rows(rows)?;
        Self::new(m.rows, m.data)
    }

    pub(crate) fn from_mat_unchecked(inner: Mat) -> Self {
        debug_assert_eq!(inner.rows, inner.cols);
        Self { inner }
    }

    pub fn n(&self) -> usize {
        self.inner.rows
    }

    pub fn as_mat(&self) -> &Mat {
        &self.inner
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.inner.row(i)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.frobenius_norm()
    }

    /// Maximum absolute row sum, an upper bound on every |eigenvalue|.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n())
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn mul(&self, x: &Mat) -> Mat {
        self.inner.matmul(x)
    }

    /// `H(M) = M - diag(M)`.
    pub fn hollowed(&self) -> Self {
        let mut inner = self.inner.clone();
        for i in 0..self.n() {
            inner.set(i, i, 0.0);
        }
        Self { inner }
    }

    pub fn is_zero(&self) -> bool {
        self.inner.data.iter().all(|&x| x == 0.0)
    }
}

/// `B = H(AAᵀ)`: `B_ij` is the number of columns shared by rows `i` and `j`,
/// and the diagonal is zero.
pub fn hollowed_gram(a: &SparseBinaryMatrix) -> Result<DenseSymmetricMatrix> {
    hollowed_gram_with_cap(a, DEFAULT_GRAM_CAP)
}

pub fn hollowed_gram_with_cap(a: &SparseBinaryMatrix, cap: usize) -> Result<DenseSymmetricMatrix> {
    let n = a.n_rows();
    if n == 0 {
        return param("adjacency matrix has no rows");
    }
    let needed = n.checked_mul(n).unwrap_or(usize::MAX);
    if needed > cap {
        return Err(Error::Capacity { what: "hollowed Gram matrix", needed, cap });
    }
    let cols = a.transpose();
    let mut b = Mat::zeros(n, n);
    b.data.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
        for &j in a.row(i) {
            for &r in cols.row(j) {
                out[r] += 1.0;
            }
        }
        out[i] = 0.0;
    });
    Ok(DenseSymmetricMatrix { inner: b })
}

/// Cyclic Jacobi eigendecomposition of a small symmetric row-major matrix.
///
/// Returns eigenvalues in storage order together with the row-major
/// eigenvector matrix whose column `j` belongs to eigenvalue `j`.
pub fn jacobi_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let total: f64 = m.iter().map(|x| x * x).sum();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j].powi(2))
            .sum();
        if off <= f64::EPSILON.powi(2) * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[i * n + i]).collect(), v)
}

/// Eigen-decomposition sorted by descending eigenvalue.
fn sorted_eigen(a: &[f64], n: usize) -> (Vec<f64>, Mat) {
    let (vals, vecs) = jacobi_eigen(a, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| vals[y].total_cmp(&vals[x]));
    let mut sorted = Mat::zeros(n, n);
    for i in 0..n {
        for (dst, &src) in order.iter().enumerate() {
            sorted.set(i, dst, vecs[i * n + src]);
        }
    }
    (order.iter().map(|&i| vals[i]).collect(), sorted)
}

/// Orthonormalizes the columns of `x` in place (two passes of modified
/// Gram-Schmidt). Columns that collapse are replaced by fresh random
/// directions.
fn orthonormalize(x: &mut Mat, rng: &mut ChaCha8Rng) {
    let (n, m) = (x.rows, x.cols);
    let mut cols: Vec<Vec<f64>> = (0..m).map(|j| x.column(j)).collect();
    for j in 0..m {
        loop {
            let original = norm(&cols[j]);
            for _pass in 0..2 {
                for i in 0..j {
                    let proj = dot(&cols[i], &cols[j]);
                    let (head, tail) = cols.split_at_mut(j);
                    for (c, b) in tail[0].iter_mut().zip(&head[i]) {
                        *c -= proj * b;
                    }
                }
            }
            let nrm = norm(&cols[j]);
            if original > 0.0 && nrm > 1e-10 * original {
                cols[j].iter_mut().for_each(|c| *c /= nrm);
                break;
            }
            // m <= n, so a random direction is independent almost surely.
            cols[j] = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        }
    }
    for (j, c) in cols.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            x.set(i, j, *v);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Top-`k` eigenpairs by algebraic value.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    /// `n × k`, orthonormal columns.
    pub u: Mat,
    /// Descending.
    pub eigenvalues: Vec<f64>,
}

/// Diagonal shift applied before subspace iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shift {
    /// `‖B‖_∞`, valid for any symmetric matrix.
    RowSumBound,
    /// Caller-supplied bound `s >= -λ_min(B)`.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigConfig {
    /// Residual tolerance relative to `‖B‖_F`.
    pub tol: f64,
    /// `None` means `10·ln(n) + 200`.
    pub max_iter: Option<usize>,
    /// Extra block columns beyond `k`.
    pub oversample: usize,
    pub shift: Shift,
    pub seed: u64,
}

impl Default for EigConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: None, oversample: 16, shift: Shift::RowSumBound, seed: 0 }
    }
}

impl EigConfig {
    pub fn max_iter_for(&self, n: usize) -> usize {
        self.max_iter.unwrap_or_else(|| (10.0 * (n as f64).ln()).ceil() as usize + 200)
    }
}

/// Outcome of a subspace iteration run, converged or not.
#[derive(Debug, Clone)]
pub struct EigRun {
    pub basis: SpectralBasis,
    pub iterations: usize,
    /// Largest `‖B u_j - λ_j u_j‖ / ‖B‖_F` over the returned columns.
    pub residual: f64,
    pub converged: bool,
}

/// Eigenvectors of the `k` largest algebraic eigenvalues of `b`.
pub fn top_k_eigs(b: &DenseSymmetricMatrix, k: usize, cfg: &EigConfig) -> Result<SpectralBasis> {
    let run = subspace_iteration(b, k, cfg)?;
    if run.converged {
        Ok(run.basis)
    } else {
        Err(Error::Convergence { iterations: run.iterations, residual: run.residual })
    }
}

/// Block subspace iteration on `B + sI` with Rayleigh-Ritz extraction.
///
/// Returns the last iterate even when the residual target was not met.
pub fn subspace_iteration(b: &DenseSymmetricMatrix, k: usize, cfg: &EigConfig) -> Result<EigRun> {
    let n = b.n();
    if k == 0 || k > n {
        return param(format!("need 1 <= k <= n, got k={k}, n={n}"));
    }
    let shift = match cfg.shift {
        Shift::RowSumBound => b.inf_norm(),
        Shift::Fixed(s) => s,
    };
    let m = (k + cfg.oversample).min(n);
    let max_iter = cfg.max_iter_for(n);
    let fro = b.frobenius_norm();
    let target = cfg.tol * fro;

    let mut rng = rng_for(cfg.seed, &[0x5ed]);
    let mut x = Mat::from_vec(n, m, (0..n * m).map(|_| rng.random::<f64>() - 0.5).collect())
        .expect("shape");
    orthonormalize(&mut x, &mut rng);

    let mut iterations = 0;
    loop {
        let bx = b.mul(&x);
        let h = x.t_matmul(&bx);
        let mut hs = h.data.clone();
        for i in 0..m {
            for j in (i + 1)..m {
                let avg = 0.5 * (hs[i * m + j] + hs[j * m + i]);
                hs[i * m + j] = avg;
                hs[j * m + i] = avg;
            }
        }
        let (theta, s) = sorted_eigen(&hs, m);
        let v = x.matmul(&s);
        let bv = bx.matmul(&s);

        let residual = (0..k)
            .map(|j| {
                (0..n)
                    .map(|i| (bv.get(i, j) - theta[j] * v.get(i, j)).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);

        if residual <= target || iterations >= max_iter {
            let basis = SpectralBasis { u: v.leading_columns(k), eigenvalues: theta[..k].to_vec() };
            let rel = if fro > 0.0 { residual / fro } else { 0.0 };
            return Ok(EigRun { basis, iterations, residual: rel, converged: residual <= target });
        }

        let mut y = bv;
        for i in 0..n {
            for (yv, vv) in y.row_mut(i).iter_mut().zip(v.row(i)) {
                *yv += shift * vv;
            }
        }
        orthonormalize(&mut y, &mut rng);
        x = y;
        iterations += 1;
    }
}

/// A matrix that can be applied to a block of vectors from either side.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `M · x`, `x` is `ncols × m`.
    fn apply(&self, x: &Mat) -> Mat;
    /// `Mᵀ · x`, `x` is `nrows × m`.
    fn apply_t(&self, x: &Mat) -> Mat;
}

impl LinearOperator for Mat {
    fn nrows(&self) -> usize {
        self.rows
    }
    fn ncols(&self) -> usize {
        self.cols
    }
    fn apply(&self, x: &Mat) -> Mat {
        self.matmul(x)
    }
    fn apply_t(&self, x: &Mat) -> Mat {
        self.t_matmul(x)
    }
}

impl LinearOperator for DenseSymmetricMatrix {
    fn nrows(&self) -> usize {
        self.n()
    }
    fn ncols(&self) -> usize {
        self.n()
    }
    fn apply(&self, x: &Mat) -> Mat {
        self.mul(x)
    }
    fn apply_t(&self, x: &Mat) -> Mat {
        self.mul(x)
    }
}

impl LinearOperator for SparseBinaryMatrix {
    fn nrows(&self) -> usize {
        self.n_rows()
    }
    fn ncols(&self) -> usize {
        self.n_cols()
    }
    fn apply(&self, x: &Mat) -> Mat {
        let m = x.cols;
        let mut out = Mat::zeros(self.n_rows(), m);
        for i in 0..self.n_rows() {
            let dst = out.row_mut(i);
            for &j in self.row(i) {
                for (d, v) in dst.iter_mut().zip(x.row(j)) {
                    *d += v;
                }
            }
        }
        out
    }
    fn apply_t(&self, x: &Mat) -> Mat {
        let m = x.cols;
        let mut out = Mat::zeros(self.n_cols(), m);
        for i in 0..self.n_rows() {
            let src = x.row(i);
            for &j in self.row(i) {
                for (d, v) in out.row_mut(j).iter_mut().zip(src) {
                    *d += v;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormConfig {
    /// Residual tolerance on the Gram eigenproblem, relative to its top eigenvalue.
    pub tol: f64,
    pub max_iter: usize,
    pub block: usize,
    pub seed: u64,
}

impl Default for NormConfig {
    fn default() -> Self {
        Self { tol: 1e-7, max_iter: 20_000, block: 8, seed: 0 }
    }
}

/// Largest singular value, by block power iteration on the smaller of
/// `MᵀM` and `MMᵀ` with Rayleigh-Ritz extraction.
pub fn spectral_norm<M: LinearOperator + ?Sized>(m: &M, cfg: &NormConfig) -> Result<f64> {
    let (r, c) = (m.nrows(), m.ncols());
    if r == 0 || c == 0 {
        return Ok(0.0);
    }
    let use_right = c <= r;
    let dim = if use_right { c } else { r };
    let gram = |x: &Mat| if use_right { m.apply_t(&m.apply(x)) } else { m.apply(&m.apply_t(x)) };

    let bs = cfg.block.clamp(1, dim);
    let mut rng = rng_for(cfg.seed, &[0x0707]);
    let mut x = Mat::from_vec(dim, bs, (0..dim * bs).map(|_| rng.random::<f64>() - 0.5).collect())
        .expect("shape");
    orthonormalize(&mut x, &mut rng);

    let mut last_residual = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        let gx = gram(&x);
        let h = x.t_matmul(&gx);
        let mut hs = h.data.clone();
        for i in 0..bs {
            for j in (i + 1)..bs {
                let avg = 0.5 * (hs[i * bs + j] + hs[j * bs + i]);
                hs[i * bs + j] = avg;
                hs[j * bs + i] = avg;
            }
        }
        let (theta, s) = sorted_eigen(&hs, bs);
        let top = theta[0].max(0.0);
        if top == 0.0 && gx.frobenius_norm() == 0.0 {
            return Ok(0.0);
        }
        let v = x.matmul(&s);
        let gv = gx.matmul(&s);
        let residual = (0..dim).map(|i| (gv.get(i, 0) - theta[0] * v.get(i, 0)).powi(2)).sum::<f64>().sqrt();
        last_residual = residual / top;
        if residual <= cfg.tol * top {
            return Ok(top.sqrt());
        }
        x = gv;
        orthonormalize(&mut x, &mut rng);
    }
    Err(Error::Convergence { iterations: cfg.max_iter, residual: last_residual })
}
