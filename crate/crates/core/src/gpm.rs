//! Generalized power method: repeated row-wise projection of `B W` onto
//! the vertices of the simplex, where `W` is the column-normalized
//! membership matrix of the current partition.

use crate::error::{param, Result};
use crate::linalg::{DenseSymmetricMatrix, Mat};
use crate::model::Partition;

/// `W = Z D⁻¹`: column `k` holds `1/|C_k|` on the members of community `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedMembership {
    pub w: Mat,
    /// Communities with no members; their column is not normalized.
    pub empty: Vec<bool>,
}

impl NormalizedMembership {
    pub fn has_empty(&self) -> bool {
        self.empty.iter().any(|&e| e)
    }
}

/// Empty communities get an all-zero column and are flagged.
pub fn normalize_membership(z: &Partition) -> NormalizedMembership {
    normalize_with_fallback(z, None)
}

fn normalize_with_fallback(z: &Partition, previous: Option<&NormalizedMembership>) -> NormalizedMembership {
    let (n, k) = (z.len(), z.k());
    let sizes = z.sizes();
    let mut w = Mat::zeros(n, k);
    for (i, &l) in z.labels().iter().enumerate() {
        w.set(i, l, 1.0 / sizes[l] as f64);
    }
    let empty: Vec<bool> = sizes.iter().map(|&s| s == 0).collect();
    if let Some(prev) = previous {
        for c in (0..k).filter(|&c| empty[c]) {
            for i in 0..n {
                w.set(i, c, prev.w.get(i, c));
            }
        }
    }
    NormalizedMembership { w, empty }
}

/// Row-wise argmax, ties to the lowest column index. This is the
/// Euclidean projection of each row onto the simplex vertices.
pub fn project_rows(m: &Mat) -> Result<Partition> {
    if m.cols() == 0 {
        return param("cannot project onto zero communities");
    }
    let labels = (0..m.rows())
        .map(|i| {
            m.row(i)
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, &v)| if v > best.1 { (c, v) } else { best })
                .0
        })
        .collect();
    Partition::new(labels, m.cols())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpmTrajectory {
    /// `z⁽⁰⁾, …, z⁽ᵀ⁾`; a fixpoint is not repeated.
    pub iterates: Vec<Partition>,
    /// Index `t` with `z⁽ᵗ⁺¹⁾ = z⁽ᵗ⁾`, if reached.
    pub converged_at: Option<usize>,
    pub empty_cluster_events: usize,
}

impl GpmTrajectory {
    pub fn last(&self) -> &Partition {
        self.iterates.last().expect("trajectory is never empty")
    }

    /// Number of update steps that changed the partition.
    pub fn iterations(&self) -> usize {
        self.iterates.len() - 1
    }
}

/// `⌈4 ln n⌉` update steps.
pub fn default_t_max(n1: usize) -> usize {
    (4.0 * (n1.max(1) as f64).ln()).ceil() as usize
}

/// Runs `z⁽ᵗ⁺¹⁾ = P(B W⁽ᵗ⁾)` from `z0` for at most `t_max` steps, stopping at
/// the first fixpoint.
///
/// A community that empties keeps its previous `W` column so the operator
/// stays `K`-dimensional and the community can be repopulated.
pub fn gpm_refine(b: &DenseSymmetricMatrix, z0: &Partition, t_max: usize) -> Result<GpmTrajectory> {
    if z0.len() != b.n() {
        return param(format!("partition has {} nodes, matrix is {}x{}", z0.len(), b.n(), b.n()));
    }
    let mut w = normalize_membership(z0);
    let mut events = usize::from(w.has_empty());
    let mut iterates = vec![z0.clone()];
    let mut converged_at = None;
    for t in 0..t_max {
        let scores = b.mul(&w.w);
        let next = project_rows(&scores)?;
        if &next == iterates.last().expect("nonempty") {
            converged_at = Some(t);
            break;
        }
        w = normalize_with_fallback(&next, Some(&w));
        if w.has_empty() {
            events += 1;
        }
        iterates.push(next);
    }
    Ok(GpmTrajectory { iterates, converged_at, empty_cluster_events: events })
}
