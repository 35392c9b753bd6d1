//! Spectral initialization: top eigenvectors of the hollowed Gram matrix
//! followed by k-means on their rows.

use log::warn;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{param, Result};
use crate::linalg::{hollowed_gram_with_cap, subspace_iteration, DenseSymmetricMatrix, EigConfig, Mat, Shift,
    DEFAULT_GRAM_CAP};
use crate::model::{balanced_partition, Partition, SparseBinaryMatrix};
use crate::seed::{derive_seed, rng_for};
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignment: Partition,
    /// `k × dim`, row-major.
    pub centers: Mat,
    pub inertia: f64,
    pub restarts_used: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center, ties to the lowest index.
fn nearest(point: &[f64], centers: &Mat) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.rows() {
        let d = sq_dist(point, centers.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Sum of squared distances from each point to the center of its label.
pub fn inertia(points: &Mat, labels: &[usize], centers: &Mat) -> f64 {
    labels.iter().enumerate().map(|(i, &l)| sq_dist(points.row(i), centers.row(l))).sum()
}

fn kmeans_plus_plus(points: &Mat, k: usize, rng: &mut ChaCha8Rng) -> Mat {
    let n = points.rows();
    let mut centers = Mat::zeros(k, points.cols());
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from_slice(points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), centers.row(c)));
        }
    }
    centers
}

/// One k-means++ seeded Lloyd run. Returns labels, centers and the inertia
/// recorded after every assignment step.
pub fn lloyd_run(points: &Mat, k: usize, max_lloyd: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Mat, Vec<f64>) {
    let (n, dim) = (points.rows(), points.cols());
    let mut centers = kmeans_plus_plus(points, k, rng);
    let mut labels: Vec<usize> = (0..n).map(|i| nearest(points.row(i), &centers).0).collect();
    let mut history = vec![inertia(points, &labels, &centers)];

    for _ in 0..max_lloyd {
        let mut sums = Mat::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, x) in sums.row_mut(l).iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let cnt = counts[c] as f64;
                for (dst, s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s / cnt;
                }
            }
        }
        // An empty cluster takes over the point worst served by its center.
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = (0..n)
                .map(|i| (i, sq_dist(points.row(i), centers.row(labels[i]))))
                .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
                .0;
            let p = points.row(far).to_vec();
            centers.row_mut(c).copy_from_slice(&p);
        }
        let next: Vec<usize> = (0..n).map(|i| nearest(points.row(i), &centers).0).collect();
        history.push(inertia(points, &next, &centers));
        if next == labels {
            break;
        }
        labels = next;
    }
    // Final centers are the means of the final clusters where nonempty.
    let mut sums = Mat::zeros(k, dim);
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, x) in sums.row_mut(l).iter_mut().zip(points.row(i)) {
            *s += x;
        }
    }
    for c in (0..k).filter(|&c| counts[c] > 0) {
        let cnt = counts[c] as f64;
        for (dst, s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
            *dst = s / cnt;
        }
    }
    (labels, centers, history)
}

/// Best-inertia k-means over `restarts` independent k-means++ runs.
///
/// Restart `r` draws from the stream `(seed, r)`; ties in inertia go to the
/// lowest restart index.
pub fn kmeans(points: &Mat, k: usize, restarts: usize, max_lloyd: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.rows();
    if k == 0 || n < k {
        return param(format!("need n >= k >= 1, got n={n}, k={k}"));
    }
    let restarts = restarts.max(1);
    let runs: Vec<(Vec<usize>, Mat, f64)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_for(seed, &[r as u64]);
            let (labels, centers, _) = lloyd_run(points, k, max_lloyd, &mut rng);
            let total = inertia(points, &labels, &centers);
            (labels, centers, total)
        })
        .collect();
    let (best_idx, _) = runs
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, r)| if r.2 < best.1 { (i, r.2) } else { best });
    let (labels, centers, inertia) = runs.into_iter().nth(best_idx).expect("at least one restart");
    Ok(KMeansResult { assignment: Partition::new(labels, k)?, centers, inertia, restarts_used: restarts })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecConfig {
    pub eig: EigConfig,
    pub restarts: usize,
    pub max_lloyd: usize,
    /// Use the last iterate when the eigensolver misses its residual target.
    pub accept_unconverged: bool,
    pub gram_cap: usize,
}

impl Default for SpecConfig {
    fn default() -> Self {
        Self {
            eig: EigConfig::default(),
            restarts: 10,
            max_lloyd: 100,
            accept_unconverged: false,
            gram_cap: DEFAULT_GRAM_CAP,
        }
    }
}

/// Spectral estimate of the row partition of `a`.
///
/// The eigensolver shift is the largest row degree, which bounds
/// `-λ_min(H(AAᵀ))` because `AAᵀ` is positive semidefinite.
pub fn spec_init(a: &SparseBinaryMatrix, k: usize, cfg: &SpecConfig, seed: u64) -> Result<Partition> {
    if k == 0 || k > a.n_rows() {
        return param(format!("need 1 <= k <= n_rows, got k={k}, n_rows={}", a.n_rows()));
    }
    let b = hollowed_gram_with_cap(a, cfg.gram_cap)?;
    let max_degree = a.row_degrees().into_iter().max().unwrap_or(0) as f64;
    let mut cfg = cfg.clone();
    if cfg.eig.shift == Shift::RowSumBound {
        cfg.eig.shift = Shift::Fixed(max_degree);
    }
    spec_init_from_gram(&b, k, &cfg, seed)
}

/// [`spec_init`] on a precomputed hollowed Gram matrix.
pub fn spec_init_from_gram(b: &DenseSymmetricMatrix, k: usize, cfg: &SpecConfig, seed: u64) -> Result<Partition> {
    let n = b.n();
    if k == 0 || k > n {
        return param(format!("need 1 <= k <= n, got k={k}, n={n}"));
    }
    if k == 1 {
        return Partition::new(vec![0; n], 1);
    }
    if b.is_zero() {
        return balanced_partition(n, k);
    }
    let eig = EigConfig { seed: derive_seed(seed, &[0]), ..cfg.eig.clone() };
    let run = subspace_iteration(b, k, &eig)?;
    if !run.converged {
        if cfg.accept_unconverged {
            warn!(
                "eigensolver stopped after {} iterations with residual {:e}; using last iterate",
                run.iterations, run.residual
            );
        } else {
            return Err(Error::Convergence { iterations: run.iterations, residual: run.residual });
        }
    }
    let km = kmeans(&run.basis.u, k, cfg.restarts, cfg.max_lloyd, derive_seed(seed, &[1]))?;
    Ok(km.assignment)
}
