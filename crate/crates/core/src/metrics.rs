//! Partition comparison metrics and the signal/threshold quantities of the
//! recovery analysis.

use std::f64::consts::E;

use itertools::Itertools;
use log::warn;
use pathfinding::prelude::{kuhn_munkres, Matrix};

use crate::error::{param, Error, Result};
use crate::model::{AssumptionReport, BiSBMParams, ConnectivityMatrix, Partition};

/// Above this many communities the permutation search switches from
/// enumeration to an assignment solver.
pub const EXHAUSTIVE_MAX_K: usize = 6;

fn check_lengths(a: &Partition, b: &Partition) -> Result<()> {
    if a.len() != b.len() {
        return param(format!("partitions have different lengths {} and {}", a.len(), b.len()));
    }
    Ok(())
}

fn check_same_k(a: &Partition, b: &Partition) -> Result<()> {
    check_lengths(a, b)?;
    if a.k() != b.k() {
        return param(format!("partitions have different community counts {} and {}", a.k(), b.k()));
    }
    Ok(())
}

/// `counts[a][b] = #{i : zhat_i = a, z_i = b}`.
pub fn confusion_matrix(zhat: &Partition, z: &Partition) -> Vec<Vec<usize>> {
    let mut counts = vec![vec![0usize; z.k()]; zhat.k()];
    for (&a, &b) in zhat.labels().iter().zip(z.labels()) {
        counts[a][b] += 1;
    }
    counts
}

/// Number of agreements under the best relabeling, and the relabeling
/// (`perm[zhat label] = z label`), by enumerating all `K!` permutations.
pub fn best_agreement_exhaustive(zhat: &Partition, z: &Partition) -> Result<(usize, Vec<usize>)> {
    check_same_k(zhat, z)?;
    let k = z.k();
    let counts = confusion_matrix(zhat, z);
    let mut best = (0, (0..k).collect::<Vec<_>>());
    for perm in (0..k).permutations(k) {
        let agree: usize = (0..k).map(|a| counts[a][perm[a]]).sum();
        if agree > best.0 {
            best = (agree, perm);
        }
    }
    Ok(best)
}

/// Same as [`best_agreement_exhaustive`] via maximum-weight matching on the
/// confusion matrix.
pub fn best_agreement_assignment(zhat: &Partition, z: &Partition) -> Result<(usize, Vec<usize>)> {
    check_same_k(zhat, z)?;
    let counts = confusion_matrix(zhat, z);
    let weights = Matrix::from_rows(counts.iter().map(|r| r.iter().map(|&c| c as i64)))
        .map_err(|e| Error::Parameter(format!("confusion matrix: {e:?}")))?;
    let (total, perm) = kuhn_munkres(&weights);
    Ok((total as usize, perm))
}

fn best_agreement(zhat: &Partition, z: &Partition) -> Result<(usize, Vec<usize>)> {
    if z.k() <= EXHAUSTIVE_MAX_K {
        best_agreement_exhaustive(zhat, z)
    } else {
        best_agreement_assignment(zhat, z)
    }
}

/// Relabeling of `zhat` that maximizes agreement with `z`.
pub fn best_permutation(zhat: &Partition, z: &Partition) -> Result<Vec<usize>> {
    best_agreement(zhat, z).map(|(_, perm)| perm)
}

/// Fraction of misassigned nodes, minimized over relabelings of the
/// communities.
pub fn misclustering_rate(zhat: &Partition, z: &Partition) -> Result<f64> {
    let (agree, _) = best_agreement(zhat, z)?;
    Ok(1.0 - agree as f64 / z.len() as f64)
}

pub fn misclustering_rate_exhaustive(zhat: &Partition, z: &Partition) -> Result<f64> {
    let (agree, _) = best_agreement_exhaustive(zhat, z)?;
    Ok(1.0 - agree as f64 / z.len() as f64)
}

pub fn misclustering_rate_assignment(zhat: &Partition, z: &Partition) -> Result<f64> {
    let (agree, _) = best_agreement_assignment(zhat, z)?;
    Ok(1.0 - agree as f64 / z.len() as f64)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information, `I / sqrt(H(zhat) H(z))`, natural logs.
///
/// When both partitions are constant the value is 1; when exactly one is
/// constant it is 0.
pub fn nmi(zhat: &Partition, z: &Partition) -> Result<f64> {
    check_lengths(zhat, z)?;
    let n = z.len() as f64;
    let counts = confusion_matrix(zhat, z);
    let row: Vec<usize> = counts.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<usize> = (0..z.k()).map(|b| counts.iter().map(|r| r[b]).sum()).collect();
    let h_hat = entropy(row.iter().copied(), n);
    let h = entropy(col.iter().copied(), n);
    if h_hat == 0.0 && h == 0.0 {
        return Ok(1.0);
    }
    if h_hat == 0.0 || h == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (a, r) in counts.iter().enumerate() {
        for (b, &c) in r.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (row[a] as f64 * col[b] as f64)).ln();
            }
        }
    }
    Ok((mi / (h_hat * h).sqrt()).clamp(0.0, 1.0))
}

/// Positions where the two label vectors differ, without relabeling.
pub fn hamming(z: &Partition, zp: &Partition) -> Result<usize> {
    check_lengths(z, zp)?;
    Ok(z.labels().iter().zip(zp.labels()).filter(|(a, b)| a != b).count())
}

/// Pairwise community separations `Δ²(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    k: usize,
    delta_sq: Vec<f64>,
    pub delta_min_sq: f64,
    /// Some raw entry was negative and clamped to zero, which happens only
    /// outside the diagonal-dominance regime.
    pub clamped: bool,
}

impl SignalMatrix {
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.delta_sq[a * self.k + b]
    }

    pub fn from_params(params: &BiSBMParams) -> Result<Self> {
        signal_matrix(&params.pi, &params.col_sizes, &params.row_sizes, params.n1)
    }
}

/// `Δ²(a,b) = (1 - K/n1) Q_aa - Q_ab` with `Q = Π diag(col_sizes) Πᵀ`.
pub fn signal_matrix(
    pi: &ConnectivityMatrix,
    col_sizes: &[usize],
    row_sizes: &[usize],
    n1: usize,
) -> Result<SignalMatrix> {
    let (k, l) = (pi.k(), pi.l());
    if col_sizes.len() != l || row_sizes.len() != k {
        return param("block sizes do not match the connectivity matrix");
    }
    if row_sizes.iter().sum::<usize>() != n1 {
        return param("row block sizes do not sum to n1");
    }
    let q = |a: usize, b: usize| -> f64 {
        (0..l).map(|m| pi.get(a, m) * col_sizes[m] as f64 * pi.get(b, m)).sum()
    };
    let shrink = 1.0 - k as f64 / n1 as f64;
    let mut delta_sq = vec![0.0; k * k];
    let mut clamped = false;
    let mut delta_min_sq = f64::INFINITY;
    for a in 0..k {
        let qaa = q(a, a);
        for b in (0..k).filter(|&b| b != a) {
            let raw = shrink * qaa - q(a, b);
            if raw < 0.0 {
                clamped = true;
            }
            let v = raw.max(0.0);
            delta_sq[a * k + b] = v;
            delta_min_sq = delta_min_sq.min(v);
        }
    }
    if clamped {
        warn!("negative community separation clamped to zero; model violates diagonal dominance");
    }
    Ok(SignalMatrix { k, delta_sq, delta_min_sq, clamped })
}

/// `l(z, z') = Σ_i Δ²(z_i, z'_i) 1{z_i ≠ z'_i}`.
pub fn loss_l(z: &Partition, zp: &Partition, sig: &SignalMatrix) -> Result<f64> {
    check_lengths(z, zp)?;
    if z.k() > sig.k() || zp.k() > sig.k() {
        return param("partition has more communities than the signal matrix");
    }
    Ok(z.labels()
        .iter()
        .zip(zp.labels())
        .filter(|(a, b)| a != b)
        .map(|(&a, &b)| sig.get(a, b))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdConfig {
    /// Contraction parameter; `None` means `1 / (4ηα)`.
    pub delta: Option<f64>,
    pub eps_prime: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self { delta: None, eps_prime: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    /// Approximate signal-to-noise ratio.
    pub snr_tilde_sq: f64,
    /// Loss budget allowed for the initial estimate.
    pub tau0: f64,
    pub delta: f64,
    /// `snr_tilde_sq > ln n1`.
    pub exact_recovery_predicted: bool,
}

pub fn threshold_report(
    params: &BiSBMParams,
    report: &AssumptionReport,
    sig: &SignalMatrix,
    cfg: &ThresholdConfig,
) -> Result<ThresholdReport> {
    let beta = report.beta;
    if !(beta > 0.0) {
        return Err(Error::Model(format!("beta={beta} is not positive, the SNR is undefined")));
    }
    let (k, l) = (params.k() as f64, params.l() as f64);
    let (n1, n2) = (params.n1 as f64, params.n2 as f64);
    let alpha = report.alpha;
    let pmax = params.p_max();
    let snr_tilde_sq = beta * beta / (12.0 * E * l * alpha.powi(3)) * n1 * n2 * pmax * pmax / (k * l);
    let delta = cfg.delta.unwrap_or(1.0 / (4.0 * report.eta * alpha));
    let tau0 = if sig.delta_min_sq.is_finite() {
        cfg.eps_prime * delta * beta.powi(2).min(1.0) * n1 * sig.delta_min_sq / k
    } else {
        f64::INFINITY
    };
    Ok(ThresholdReport {
        snr_tilde_sq,
        tau0,
        delta,
        exact_recovery_predicted: snr_tilde_sq > n1.ln(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{check_assumptions, sbisbm_connectivity};

    fn part(labels: &[usize], k: usize) -> Partition {
        Partition::new(labels.to_vec(), k).unwrap()
    }

    #[test]
    fn rate_examples() {
        let z = part(&[0, 0, 1, 1], 2);
        assert_eq!(misclustering_rate(&z, &z).unwrap(), 0.0);
        assert_eq!(misclustering_rate(&part(&[1, 1, 0, 0], 2), &z).unwrap(), 0.0);
        assert_eq!(misclustering_rate(&part(&[0, 1, 1, 1], 2), &z).unwrap(), 0.25);
        assert!(misclustering_rate(&part(&[0, 1, 1], 2), &z).is_err());
    }

    #[test]
    fn nmi_examples() {
        let z = part(&[0, 0, 1, 1], 2);
        assert!((nmi(&z, &z).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(nmi(&part(&[0, 0, 0, 0], 2), &z).unwrap(), 0.0);
        assert_eq!(nmi(&part(&[1, 1, 1, 1], 2), &part(&[0, 0, 0, 0], 2)).unwrap(), 1.0);
        let a = part(&[0, 1, 2, 2, 1, 0, 0], 3);
        let b = part(&[1, 1, 0, 0, 2, 2, 2], 3);
        let swapped = a.relabel(&[2, 0, 1]).unwrap();
        assert!((nmi(&a, &b).unwrap() - nmi(&swapped, &b).unwrap()).abs() < 1e-12);
        assert!(nmi(&a, &part(&[0, 1], 2)).is_err());
    }

    #[test]
    fn hamming_examples() {
        let z = part(&[0, 1, 0], 2);
        assert_eq!(hamming(&z, &z).unwrap(), 0);
        assert_eq!(hamming(&z, &part(&[1, 0, 1], 2)).unwrap(), 3);
        assert_eq!(hamming(&z, &part(&[0, 0, 0], 2)).unwrap(), 1);
        assert!(hamming(&z, &part(&[0, 0], 2)).is_err());
    }

    #[test]
    fn signal_matrix_two_blocks() {
        // Q_aa = (n2/2)(p² + q²) = 6.25, Q_ab = n2·p·q = 5.
        let pi = sbisbm_connectivity(2, 0.1, 0.5).unwrap();
        let n1 = 1_000_000;
        let sig = signal_matrix(&pi, &[500, 500], &[n1 / 2, n1 / 2], n1).unwrap();
        let expected = (1.0 - 2.0 / n1 as f64) * 6.25 - 5.0;
        assert!((sig.get(0, 1) - expected).abs() < 1e-12);
        assert!((sig.get(0, 1) - 1.2499875).abs() < 1e-12);
        assert_eq!(sig.get(0, 0), 0.0);
        assert_eq!(sig.delta_min_sq, sig.get(0, 1));
        assert!(!sig.clamped);
    }

    #[test]
    fn signal_matrix_single_community() {
        let pi = sbisbm_connectivity(1, 0.1, 0.5).unwrap();
        let sig = signal_matrix(&pi, &[10], &[5], 5).unwrap();
        assert_eq!(sig.delta_min_sq, f64::INFINITY);
    }

    #[test]
    fn signal_matrix_clamps_outside_dominance() {
        let pi = ConnectivityMatrix::from_rows(&[vec![0.1, 0.1], vec![0.1, 0.5]]).unwrap();
        let sig = signal_matrix(&pi, &[10, 10], &[5, 5], 10).unwrap();
        assert!(sig.clamped);
        assert_eq!(sig.get(0, 1), 0.0);
    }

    #[test]
    fn signal_bounds_hold() {
        let params = BiSBMParams::sbisbm(100_000, 4000, 2, 0.08, 0.4).unwrap();
        let r = check_assumptions(&params);
        let sig = SignalMatrix::from_params(&params).unwrap();
        let (n2, l, pmax2) = (4000.0, 2.0, 0.08f64.powi(2));
        let lo = r.beta * n2 * pmax2 / (r.alpha * l);
        let hi = r.eta * r.beta * r.alpha * n2 * pmax2 / l;
        for a in 0..2 {
            for b in (0..2).filter(|&b| b != a) {
                // Finite-n1 shrink factor is (1 - 2/1e5); allow it.
                assert!(sig.get(a, b) >= lo * (1.0 - 1e-3) && sig.get(a, b) <= hi);
            }
        }
    }

    #[test]
    fn loss_single_disagreement() {
        let pi = sbisbm_connectivity(3, 0.2, 0.3).unwrap();
        let sig = signal_matrix(&pi, &[10, 10, 10], &[4, 4, 4], 12).unwrap();
        let z = part(&[0, 1, 2, 0], 3);
        assert_eq!(loss_l(&z, &z, &sig).unwrap(), 0.0);
        let zp = part(&[0, 1, 1, 0], 3);
        assert_eq!(loss_l(&z, &zp, &sig).unwrap(), sig.get(2, 1));
    }

    #[test]
    fn threshold_arithmetic() {
        // n1*n2*p² = 1e4 with p = 0.1: n1 = 100, n2 = 10000.
        let params = BiSBMParams::sbisbm(100, 10_000, 2, 0.1, 0.5).unwrap();
        let r = check_assumptions(&params);
        let sig = SignalMatrix::from_params(&params).unwrap();
        let t = threshold_report(&params, &r, &sig, &ThresholdConfig::default()).unwrap();
        let expected = 0.0625 / (24.0 * E) * (1e4 / 4.0);
        assert!((t.snr_tilde_sq - expected).abs() < 1e-9);
        assert!((t.snr_tilde_sq - 2.395).abs() < 1e-3);
        assert!(!t.exact_recovery_predicted);
    }

    #[test]
    fn threshold_rejects_nonpositive_beta() {
        let params = BiSBMParams::sbisbm(100, 100, 2, 0.1, 0.5).unwrap();
        let sig = SignalMatrix::from_params(&params).unwrap();
        let mut r = check_assumptions(&params);
        r.beta = 0.0;
        assert!(matches!(
            threshold_report(&params, &r, &sig, &ThresholdConfig::default()),
            Err(Error::Model(_))
        ));
    }

    #[test]
    fn recovery_prediction_flips_once_along_p() {
        let mut flips = 0;
        let mut prev = None;
        for step in 1..=40 {
            let p = step as f64 * 0.005;
            let params = BiSBMParams::sbisbm(500, 9322, 2, p, 0.5).unwrap();
            let r = check_assumptions(&params);
            let sig = SignalMatrix::from_params(&params).unwrap();
            let t = threshold_report(&params, &r, &sig, &ThresholdConfig::default()).unwrap();
            if let Some(p) = prev {
                if p != t.exact_recovery_predicted {
                    flips += 1;
                    assert!(t.exact_recovery_predicted);
                }
            }
            prev = Some(t.exact_recovery_predicted);
        }
        assert_eq!(flips, 1);
    }
}
