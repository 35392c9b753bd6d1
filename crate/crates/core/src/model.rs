//! Bipartite stochastic block models: parameters, assumption checks and
//! sampling of adjacency matrices.
//!
//! Rows of the adjacency matrix are the "type I" nodes whose partition we
//! want to recover, columns are "type II" nodes. The expected adjacency
//! `P = Z1 Π Z2ᵀ` is never materialized; anything that depends on it is
//! computed from the connectivity matrix and the block sizes.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{param, Result};
use crate::linalg::jacobi_eigen;
use crate::seed::rng_for;

/// A hard assignment of `n` nodes to `k` communities.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if labels.is_empty() {
            return param("partition must contain at least one node");
        }
        if k == 0 {
            return param("partition needs at least one community");
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return param(format!("label {l} of node {i} is not below k={k}"));
        }
        Ok(Self { labels, k })
    }

    /// Builds a partition whose community count is `max(label) + 1`.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().copied().max().map_or(0, |m| m + 1);
        Self::new(labels, k)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn into_labels(self) -> Vec<usize> {
        self.labels
    }

    /// Community sizes; empty communities have size 0.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// 0/1 membership matrix, row-major `n × k`, exactly one 1 per row.
    pub fn membership_matrix(&self) -> Vec<Vec<u8>> {
        self.labels
            .iter()
            .map(|&l| {
                let mut row = vec![0u8; self.k];
                row[l] = 1;
                row
            })
            .collect()
    }

    /// Applies the label map `perm` (old label -> new label).
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.k {
            return param(format!("relabeling map has {} entries, k={}", perm.len(), self.k));
        }
        Self::new(self.labels.iter().map(|&l| perm[l]).collect(), self.k)
    }
}

/// `K × L` matrix of edge probabilities between row and column communities.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl ConnectivityMatrix {
    /// `entries` is row-major.
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return param("connectivity matrix must be at least 1x1");
        }
        if entries.len() != rows * cols {
            return param(format!(
                "connectivity matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                entries.len()
            ));
        }
        if let Some(bad) = entries.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return param(format!("connectivity entry {bad} is not a probability"));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return param("connectivity rows have unequal lengths");
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn k(&self) -> usize {
        self.rows
    }

    pub fn l(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.entries[k * self.cols + l]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.entries[k * self.cols..(k + 1) * self.cols]
    }

    pub fn p_max(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }

    /// `ΠΠᵀ`, row-major `K × K`.
    pub fn gram(&self) -> Vec<f64> {
        let k = self.rows;
        let mut g = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                g[a * k + b] = self.row(a).iter().zip(self.row(b)).map(|(x, y)| x * y).sum();
            }
        }
        g
    }
}

/// Connectivity of the symmetric model: `p` on the diagonal, `c·p` elsewhere.
pub fn sbisbm_connectivity(k: usize, p: f64, c: f64) -> Result<ConnectivityMatrix> {
    if k == 0 {
        return param("k must be at least 1");
    }
    if !(p > 0.0 && p <= 1.0) {
        return param(format!("p={p} must lie in (0, 1]"));
    }
    if !(c > 0.0 && c < 1.0) {
        return param(format!("c={c} must lie in (0, 1)"));
    }
    let q = c * p;
    let entries = (0..k * k)
        .map(|idx| if idx / k == idx % k { p } else { q })
        .collect();
    ConnectivityMatrix::new(k, k, entries)
}

/// Contiguous blocks whose sizes differ by at most one; the remainder goes
/// to the lowest labels.
pub fn balanced_partition(n: usize, k: usize) -> Result<Partition> {
    if k == 0 || n < k {
        return param(format!("need n >= k >= 1, got n={n}, k={k}"));
    }
    let sizes = balanced_sizes(n, k);
    let labels = sizes
        .iter()
        .enumerate()
        .flat_map(|(label, &s)| std::iter::repeat_n(label, s))
        .collect();
    Partition::new(labels, k)
}

pub(crate) fn balanced_sizes(n: usize, k: usize) -> Vec<usize> {
    let (base, rem) = (n / k, n % k);
    (0..k).map(|i| base + usize::from(i < rem)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiSBMParams {
    pub n1: usize,
    pub n2: usize,
    pub pi: ConnectivityMatrix,
    pub row_sizes: Vec<usize>,
    pub col_sizes: Vec<usize>,
}

impl BiSBMParams {
    pub fn new(
        pi: ConnectivityMatrix,
        row_sizes: Vec<usize>,
        col_sizes: Vec<usize>,
    ) -> Result<Self> {
        if row_sizes.len() != pi.k() || col_sizes.len() != pi.l() {
            return param(format!(
                "block sizes {}x{} do not match connectivity {}x{}",
                row_sizes.len(),
                col_sizes.len(),
                pi.k(),
                pi.l()
            ));
        }
        if row_sizes.iter().chain(&col_sizes).any(|&s| s == 0) {
            return param("every community needs at least one node");
        }
        Ok(Self {
            n1: row_sizes.iter().sum(),
            n2: col_sizes.iter().sum(),
            pi,
            row_sizes,
            col_sizes,
        })
    }

    /// Symmetric model with balanced communities on both sides.
    pub fn sbisbm(n1: usize, n2: usize, k: usize, p: f64, c: f64) -> Result<Self> {
        let pi = sbisbm_connectivity(k, p, c)?;
        if n1 < k || n2 < k {
            return param(format!("n1={n1} and n2={n2} must both be at least k={k}"));
        }
        Self::new(pi, balanced_sizes(n1, k), balanced_sizes(n2, k))
    }

    pub fn k(&self) -> usize {
        self.pi.k()
    }

    pub fn l(&self) -> usize {
        self.pi.l()
    }

    pub fn p_max(&self) -> f64 {
        self.pi.p_max()
    }

    /// Contiguous ground-truth partitions matching the block sizes.
    pub fn planted_partitions(&self) -> (Partition, Partition) {
        let blocks = |sizes: &[usize]| {
            let labels = sizes
                .iter()
                .enumerate()
                .flat_map(|(label, &s)| std::iter::repeat_n(label, s))
                .collect();
            Partition::new(labels, sizes.len()).expect("sizes are positive")
        };
        (blocks(&self.row_sizes), blocks(&self.col_sizes))
    }

    /// Expected number of edges, `Σ_ij p_ij`.
    pub fn expected_edges(&self) -> f64 {
        self.block_sum(|p| p)
    }

    /// Variance of the edge count, `Σ_ij p_ij (1 - p_ij)`.
    pub fn edge_count_variance(&self) -> f64 {
        self.block_sum(|p| p * (1.0 - p))
    }

    fn block_sum(&self, f: impl Fn(f64) -> f64) -> f64 {
        let mut total = 0.0;
        for (a, &ra) in self.row_sizes.iter().enumerate() {
            for (b, &cb) in self.col_sizes.iter().enumerate() {
                total += (ra * cb) as f64 * f(self.pi.get(a, b));
            }
        }
        total
    }

    fn check_partitions(&self, z1: &Partition, z2: &Partition) -> Result<()> {
        if z1.len() != self.n1 || z2.len() != self.n2 {
            return param(format!(
                "partitions have lengths {}x{}, model is {}x{}",
                z1.len(),
                z2.len(),
                self.n1,
                self.n2
            ));
        }
        if z1.k() != self.k() || z2.k() != self.l() {
            return param("partition community counts do not match the connectivity matrix");
        }
        if z1.sizes() != self.row_sizes || z2.sizes() != self.col_sizes {
            return param("partition block sizes do not match the model");
        }
        Ok(())
    }
}

/// How the model relates to the balance, rank and diagonal-dominance
/// hypotheses of the recovery analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub alpha: f64,
    /// Smallest eigenvalue of `ΠΠᵀ`.
    pub lambda_min: f64,
    /// Spectral norm of `ΠΠᵀ`.
    pub lambda_max: f64,
    pub beta: f64,
    /// `NaN` when `beta <= 0`.
    pub eta: f64,
    /// `[balanced, full rank, diagonally dominant]`.
    pub satisfied: [bool; 3],
}

/// Relative threshold under which `λ_K(ΠΠᵀ)/p_max²` counts as rank deficient.
const RANK_TOL: f64 = 1e-10;

pub fn check_assumptions(params: &BiSBMParams) -> AssumptionReport {
    let side_alpha = |sizes: &[usize], n: usize| {
        let k = sizes.len() as f64;
        sizes
            .iter()
            .map(|&s| {
                let r = s as f64 * k / n as f64;
                r.max(1.0 / r)
            })
            .fold(1.0, f64::max)
    };
    let alpha = side_alpha(&params.row_sizes, params.n1).max(side_alpha(&params.col_sizes, params.n2));

    let k = params.k();
    let gram = params.pi.gram();
    let (mut eigs, _) = jacobi_eigen(&gram, k);
    eigs.sort_by(|a, b| b.total_cmp(a));
    let lambda_max = eigs[0];
    let lambda_min = eigs[k - 1];

    let pmax2 = params.p_max().powi(2);
    let a2 = alpha * alpha;
    let mut beta = f64::INFINITY;
    let mut eta_num = f64::NEG_INFINITY;
    for a in 0..k {
        for b in (0..k).filter(|&b| b != a) {
            let diag = gram[a * k + a];
            let off = gram[a * k + b];
            beta = beta.min((diag - a2 * off) / pmax2);
            eta_num = eta_num.max((diag - off / a2) / pmax2);
        }
    }
    if k == 1 {
        // No competing community: both inequalities are vacuous.
        beta = f64::INFINITY;
        eta_num = f64::NAN;
    }
    let diag_dom = beta > 0.0 && pmax2 > 0.0;
    let eta = if diag_dom && beta.is_finite() {
        (eta_num / beta).max(1.0)
    } else if k == 1 {
        1.0
    } else {
        f64::NAN
    };

    AssumptionReport {
        alpha,
        lambda_min,
        lambda_max,
        beta,
        eta,
        satisfied: [
            alpha.is_finite(),
            pmax2 > 0.0 && lambda_min > RANK_TOL * pmax2,
            diag_dom,
        ],
    }
}

impl AssumptionReport {
    /// Whether a caller-chosen `(beta, eta)` pair satisfies both
    /// diagonal-dominance inequalities for `params`.
    pub fn admits(params: &BiSBMParams, alpha: f64, beta: f64, eta: f64) -> bool {
        let k = params.k();
        let gram = params.pi.gram();
        let pmax2 = params.p_max().powi(2);
        let a2 = alpha * alpha;
        let slack = 1e-12 * pmax2;
        (0..k).all(|a| {
            (0..k).filter(|&b| b != a).all(|b| {
                let diag = gram[a * k + a];
                let off = gram[a * k + b];
                diag - a2 * off >= beta * pmax2 - slack && diag - off / a2 <= eta * beta * pmax2 + slack
            })
        })
    }
}

/// Binary `n_rows × n_cols` matrix stored as sorted compressed rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseBinaryMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl SparseBinaryMatrix {
    /// Accepts coordinates in any order; duplicates and out-of-range
    /// coordinates are rejected.
    pub fn from_coords(n_rows: usize, n_cols: usize, mut coords: Vec<(usize, usize)>) -> Result<Self> {
        if let Some(&(i, j)) = coords.iter().find(|&&(i, j)| i >= n_rows || j >= n_cols) {
            return param(format!("coordinate ({i}, {j}) outside {n_rows}x{n_cols}"));
        }
        coords.sort_unstable();
        if let Some(w) = coords.windows(2).find(|w| w[0] == w[1]) {
            return param(format!("duplicate coordinate ({}, {})", w[0].0, w[0].1));
        }
        let mut row_ptr = vec![0usize; n_rows + 1];
        for &(i, _) in &coords {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = coords.into_iter().map(|(_, j)| j).collect();
        Ok(Self { n_rows, n_cols, row_ptr, col_idx })
    }

    /// Rows must each be strictly increasing.
    pub(crate) fn from_sorted_rows(n_cols: usize, rows: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let total = rows.iter().map(Vec::len).sum();
        let mut col_idx = Vec::with_capacity(total);
        for r in &rows {
            debug_assert!(r.windows(2).all(|w| w[0] < w[1]));
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        Self { n_rows: rows.len(), n_cols, row_ptr, col_idx }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, row_ptr: vec![0; n_rows + 1], col_idx: Vec::new() }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Sorted column indices of the nonzeros in row `i`.
    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn row_degrees(&self) -> Vec<usize> {
        self.row_ptr.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Row-sorted coordinate list.
    pub fn coords(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).iter().map(move |&j| (i, j)))
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.row(i).binary_search(&j).is_ok()
    }

    pub fn transpose(&self) -> Self {
        let mut cols = vec![Vec::new(); self.n_cols];
        for (i, j) in self.coords() {
            cols[j].push(i);
        }
        Self::from_sorted_rows(self.n_rows, cols)
    }
}

/// Draws `A_ij ~ Bernoulli(Π[z1(i), z2(j)])` independently.
///
/// Row `i` uses its own stream derived from `(seed, i)`, so rows are sampled
/// in parallel and the output is a pure function of the inputs.
pub fn sample_adjacency(
    params: &BiSBMParams,
    z1: &Partition,
    z2: &Partition,
    seed: u64,
) -> Result<SparseBinaryMatrix> {
    params.check_partitions(z1, z2)?;
    let rows = (0..params.n1)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, &[i as u64]);
            let probs = params.pi.row(z1.labels()[i]);
            z2.labels()
                .iter()
                .enumerate()
                .filter_map(|(j, &l)| (rng.random::<f64>() < probs[l]).then_some(j))
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(SparseBinaryMatrix::from_sorted_rows(params.n2, rows))
}
