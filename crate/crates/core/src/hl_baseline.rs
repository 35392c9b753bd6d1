//! Two-community baseline: a sign power iteration on the hollowed Gram
//! matrix of the mean-centered adjacency matrix.
//!
//! This is a reconstruction of the centered sign-iteration method for the
//! `K = L = 2` symmetric model, not a port of any released code. Steps:
//! estimate the edge density `p̄`, center `Ã = A - p̄·11ᵀ`, form
//! `B̃ = H(ÃÃᵀ)`, take its top eigenvector and iterate `u ← sign(B̃u)`.

use log::debug;

use crate::error::Result;
use crate::linalg::{hollowed_gram, subspace_iteration, DenseSymmetricMatrix, EigConfig, Mat, Shift};
use crate::model::{Partition, SparseBinaryMatrix};

/// `H(ÃÃᵀ)` from `B = H(AAᵀ)` without forming `Ã`:
/// `(ÃÃᵀ)_ij = (AAᵀ)_ij - p̄(d_i + d_j) + p̄² n2`.
/// Also returns the largest diagonal entry of `ÃÃᵀ`.
pub fn centered_gram(b: &DenseSymmetricMatrix, degrees: &[usize], n2: usize) -> (DenseSymmetricMatrix, f64) {
    let n1 = b.n();
    let nnz: usize = degrees.iter().sum();
    let p_bar = nnz as f64 / (n1 as f64 * n2 as f64);
    let c = p_bar * p_bar * n2 as f64;
    let mut out = Mat::zeros(n1, n1);
    for i in 0..n1 {
        let di = degrees[i] as f64;
        let row = out.row_mut(i);
        for (j, dst) in row.iter_mut().enumerate() {
            if j != i {
                *dst = b.get(i, j) - p_bar * (di + degrees[j] as f64) + c;
            }
        }
    }
    let max_diag = degrees
        .iter()
        .map(|&d| d as f64 * (1.0 - 2.0 * p_bar) + c)
        .fold(0.0, f64::max);
    (DenseSymmetricMatrix::from_mat_unchecked(out), max_diag)
}

#[inline]
fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn labels_from_signs(u: &[f64]) -> Partition {
    Partition::new(u.iter().map(|&x| usize::from(sign(x) < 0.0)).collect(), 2).expect("two labels")
}

/// `u ← sign(B̃u)` with `sign(0) = +1`, from `u0`, until a fixpoint or
/// `t_max` steps. Nonnegative entries map to label 0.
pub fn hl_sign_iterate(b_tilde: &DenseSymmetricMatrix, u0: &[f64], t_max: usize) -> Partition {
    let n = b_tilde.n();
    let mut u = u0.to_vec();
    for t in 0..t_max {
        let x = Mat::from_vec(n, 1, u.clone()).expect("shape");
        let next: Vec<f64> = b_tilde.mul(&x).data().iter().map(|&v| sign(v)).collect();
        if next == u {
            debug!("sign iteration fixpoint after {t} steps");
            break;
        }
        u = next;
    }
    labels_from_signs(&u)
}

pub fn hl_cluster(a: &SparseBinaryMatrix, t_max: usize, seed: u64) -> Result<Partition> {
    if a.nnz() == 0 {
        return Partition::new(vec![0; a.n_rows()], 2);
    }
    let b = hollowed_gram(a)?;
    Ok(hl_cluster_from_gram(&b, &a.row_degrees(), a.n_cols(), t_max, seed))
}

/// [`hl_cluster`] on a precomputed `B = H(AAᵀ)` and row degrees.
pub fn hl_cluster_from_gram(
    b: &DenseSymmetricMatrix,
    degrees: &[usize],
    n2: usize,
    t_max: usize,
    seed: u64,
) -> Partition {
    let n1 = b.n();
    if degrees.iter().all(|&d| d == 0) {
        return Partition::new(vec![0; n1], 2).expect("nonempty");
    }
    let (b_tilde, max_diag) = centered_gram(b, degrees, n2);
    if b_tilde.is_zero() {
        return Partition::new(vec![0; n1], 2).expect("nonempty");
    }
    let cfg = EigConfig { shift: Shift::Fixed(max_diag), seed, ..EigConfig::default() };
    let run = subspace_iteration(&b_tilde, 1, &cfg).expect("k = 1 <= n");
    if !run.converged {
        debug!("leading eigenvector residual {:e} after {} iterations", run.residual, run.iterations);
    }
    hl_sign_iterate(&b_tilde, &run.basis.u.column(0), t_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edgeless_graph_falls_back_to_one_label() {
        let a = SparseBinaryMatrix::zeros(4, 6);
        assert_eq!(hl_cluster(&a, 10, 0).unwrap().labels(), &[0, 0, 0, 0]);
    }

    #[test]
    fn negated_start_flips_labels() {
        let b = DenseSymmetricMatrix::from_rows(&[
            vec![0.0, 2.0, -1.0, -1.5],
            vec![2.0, 0.0, -1.0, -1.0],
            vec![-1.0, -1.0, 0.0, 3.0],
            vec![-1.5, -1.0, 3.0, 0.0],
        ])
        .unwrap();
        let u0 = [0.4, 0.6, -0.5, -0.45];
        let neg: Vec<f64> = u0.iter().map(|x| -x).collect();
        let z = hl_sign_iterate(&b, &u0, 10);
        let zn = hl_sign_iterate(&b, &neg, 10);
        assert_eq!(z.labels(), &[0, 0, 1, 1]);
        assert!(z.labels().iter().zip(zn.labels()).all(|(a, b)| a != b));
    }

    #[test]
    fn centered_gram_matches_dense_centering() {
        let a = SparseBinaryMatrix::from_coords(3, 4, vec![(0, 0), (0, 1), (1, 1), (2, 2), (2, 3), (1, 3)]).unwrap();
        let b = hollowed_gram(&a).unwrap();
        let (bt, max_diag) = centered_gram(&b, &a.row_degrees(), 4);
        let p_bar = 6.0 / 12.0;
        let dense: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..4).map(|j| f64::from(u8::from(a.get(i, j))) - p_bar).collect())
            .collect();
        let mut diag_max = f64::MIN;
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = dense[i].iter().zip(&dense[j]).map(|(x, y)| x * y).sum();
                if i == j {
                    diag_max = diag_max.max(v);
                    assert_eq!(bt.get(i, i), 0.0);
                } else {
                    assert!((bt.get(i, j) - v).abs() < 1e-12);
                }
            }
        }
        assert!((max_diag - diag_max).abs() < 1e-12);
    }
}
