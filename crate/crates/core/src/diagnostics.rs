//! Empirical checks of the noise concentration rates and of the error
//! contraction of the power method on sampled instances.

use std::io::Write;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{param, Error, Result};
use crate::gpm::{default_t_max, gpm_refine, GpmTrajectory};
use crate::io::format_metric;
use crate::linalg::{hollowed_gram, hollowed_gram_with_cap, spectral_norm, DenseSymmetricMatrix, Mat, NormConfig};
use crate::metrics::{best_permutation, hamming, loss_l, misclustering_rate, SignalMatrix};
use crate::model::{sample_adjacency, BiSBMParams, Partition, SparseBinaryMatrix};
use crate::seed::{derive_seed, rng_for};

/// Default cap on `n1 · n2` for forming the dense noise matrix.
pub const DEFAULT_DENSE_CAP: usize = 20_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseNormReport {
    /// `‖E‖`
    pub norm_e: f64,
    /// `‖EEᵀ - E[EEᵀ]‖`
    pub norm_eet_centered: f64,
    /// `‖H(EEᵀ)‖`
    pub norm_h_eet: f64,
    /// `‖E Z₂‖`
    pub norm_ez2: f64,
    /// `sqrt(n2 p_max)`
    pub predicted_e: f64,
    /// `max(ln n1, sqrt(n1 n2) p_max)`
    pub predicted_eet: f64,
    /// `sqrt(n1 n2 p_max / L)`
    pub predicted_ez2: f64,
}

impl NoiseNormReport {
    fn ratio(x: f64, pred: f64) -> f64 {
        if pred > 0.0 {
            x / pred
        } else {
            f64::NAN
        }
    }

    pub fn ratio_e(&self) -> f64 {
        Self::ratio(self.norm_e, self.predicted_e)
    }

    pub fn ratio_eet_centered(&self) -> f64 {
        Self::ratio(self.norm_eet_centered, self.predicted_eet)
    }

    pub fn ratio_h_eet(&self) -> f64 {
        Self::ratio(self.norm_h_eet, self.predicted_eet)
    }

    pub fn ratio_ez2(&self) -> f64 {
        Self::ratio(self.norm_ez2, self.predicted_ez2)
    }
}

/// Dense `E = A - P`.
pub fn noise_matrix(a: &SparseBinaryMatrix, params: &BiSBMParams, z1: &Partition, z2: &Partition) -> Result<Mat> {
    if a.n_rows() != params.n1 || a.n_cols() != params.n2 || z1.len() != params.n1 || z2.len() != params.n2 {
        return param("adjacency, partitions and model dimensions disagree");
    }
    let mut e = Mat::zeros(params.n1, params.n2);
    for i in 0..params.n1 {
        let probs = params.pi.row(z1.labels()[i]);
        let row = e.row_mut(i);
        for (dst, &l) in row.iter_mut().zip(z2.labels()) {
            *dst = -probs[l];
        }
        for &j in a.row(i) {
            row[j] += 1.0;
        }
    }
    Ok(e)
}

/// `EEᵀ` and `EZ₂` from the sparse Gram matrix and per-row edge counts in
/// each column block, using `E = A - Z₁ΠZ₂ᵀ`.
pub fn noise_products(
    a: &SparseBinaryMatrix,
    params: &BiSBMParams,
    z1: &Partition,
    z2: &Partition,
) -> Result<(Mat, Mat)> {
    if a.n_rows() != params.n1 || a.n_cols() != params.n2 || z1.len() != params.n1 || z2.len() != params.n2 {
        return param("adjacency, partitions and model dimensions disagree");
    }
    let (n1, k, l) = (params.n1, params.k(), params.l());
    let pi = &params.pi;
    let sizes: Vec<f64> = z2.sizes().iter().map(|&s| s as f64).collect();
    let mut counts = Mat::zeros(n1, l);
    for i in 0..n1 {
        for &j in a.row(i) {
            let b = z2.labels()[j];
            counts.set(i, b, counts.get(i, b) + 1.0);
        }
    }
    // r[i][c] = Σ_l counts[i][l] Π[c][l]  and  g[c][d] = Σ_l |col block l| Π[c][l] Π[d][l].
    let r = Mat::from_vec(
        n1,
        k,
        (0..n1).flat_map(|i| (0..k).map(move |c| (c, i))).map(|(c, i)| (0..l).map(|m| counts.get(i, m) * pi.get(c, m)).sum()).collect(),
    )?;
    let g: Vec<f64> = (0..k)
        .flat_map(|c| (0..k).map(move |d| (c, d)))
        .map(|(c, d)| (0..l).map(|m| sizes[m] * pi.get(c, m) * pi.get(d, m)).sum())
        .collect();

    let b = hollowed_gram_with_cap(a, usize::MAX)?;
    let degrees = a.row_degrees();
    let zl = z1.labels();
    let mut eet = Mat::zeros(n1, n1);
    for i in 0..n1 {
        let row = eet.row_mut(i);
        for (j, dst) in row.iter_mut().enumerate() {
            let aat = if i == j { degrees[i] as f64 } else { b.get(i, j) };
            *dst = aat - r.get(i, zl[j]) - r.get(j, zl[i]) + g[zl[i] * k + zl[j]];
        }
    }
    let mut ez2 = Mat::zeros(n1, l);
    for i in 0..n1 {
        for m in 0..l {
            ez2.set(i, m, counts.get(i, m) - sizes[m] * pi.get(zl[i], m));
        }
    }
    Ok((eet, ez2))
}

pub fn noise_norms(
    a: &SparseBinaryMatrix,
    params: &BiSBMParams,
    z1: &Partition,
    z2: &Partition,
) -> Result<NoiseNormReport> {
    noise_norms_with(a, params, z1, z2, DEFAULT_DENSE_CAP, &NormConfig::default())
}

/// Exact norms of the noise quantities, computed on the dense `E`.
pub fn noise_norms_with(
    a: &SparseBinaryMatrix,
    params: &BiSBMParams,
    z1: &Partition,
    z2: &Partition,
    cap: usize,
    norm_cfg: &NormConfig,
) -> Result<NoiseNormReport> {
    let needed = params.n1.saturating_mul(params.n2);
    if needed > cap {
        return Err(Error::Capacity { what: "dense noise matrix", needed, cap });
    }
    let (eet, ez2) = noise_products(a, params, z1, z2)?;
    let n1 = params.n1;
    let l = params.l();
    let eet = DenseSymmetricMatrix::from_mat_unchecked(eet);
    // EEᵀ is positive semidefinite, so its norm is ‖E‖².
    let norm_e = spectral_norm(&eet, norm_cfg)?.sqrt();

    let mut centered = eet.as_mat().clone();
    for i in 0..n1 {
        let probs = params.pi.row(z1.labels()[i]);
        let var: f64 = params.col_sizes.iter().zip(probs).map(|(&s, &p)| s as f64 * p * (1.0 - p)).sum();
        centered.set(i, i, centered.get(i, i) - var);
    }
    let centered = DenseSymmetricMatrix::from_mat_unchecked(centered);
    let norm_eet_centered = spectral_norm(&centered, norm_cfg)?;
    let norm_h_eet = spectral_norm(&centered.hollowed(), norm_cfg)?;
    let norm_ez2 = spectral_norm(&ez2, norm_cfg)?;

    let (n1f, n2f, pmax) = (n1 as f64, params.n2 as f64, params.p_max());
    Ok(NoiseNormReport {
        norm_e,
        norm_eet_centered,
        norm_h_eet,
        norm_ez2,
        predicted_e: (n2f * pmax).sqrt(),
        predicted_eet: n1f.ln().max((n1f * n2f).sqrt() * pmax),
        predicted_ez2: (n1f * n2f * pmax / l as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionRow {
    pub t: usize,
    pub hamming: usize,
    pub loss: f64,
    pub rate: f64,
}

/// Per-iterate distance to the truth. Iterates are first aligned to the
/// truth by the relabeling that best matches `z⁽⁰⁾`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionTrace {
    pub rows: Vec<ContractionRow>,
}

impl ContractionTrace {
    pub fn loss_non_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].loss <= w[0].loss * (1.0 + 1e-12))
    }

    /// First iteration at which the loss is exactly zero.
    pub fn first_zero_loss(&self) -> Option<usize> {
        self.rows.iter().find(|r| r.loss == 0.0).map(|r| r.t)
    }
}

pub fn contraction_trace(traj: &GpmTrajectory, z: &Partition, sig: &SignalMatrix) -> Result<ContractionTrace> {
    let first = traj.iterates.first().ok_or_else(|| Error::Parameter("empty trajectory".into()))?;
    if traj.iterates.iter().any(|it| it.len() != z.len() || it.k() != z.k()) || sig.k() != z.k() {
        return param("trajectory, truth and signal matrix dimensions disagree");
    }
    let perm = best_permutation(first, z)?;
    let rows = traj
        .iterates
        .iter()
        .enumerate()
        .map(|(t, it)| {
            let aligned = it.relabel(&perm)?;
            Ok(ContractionRow {
                t,
                hamming: hamming(&aligned, z)?,
                loss: loss_l(z, &aligned, sig)?,
                rate: misclustering_rate(it, z)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ContractionTrace { rows })
}

/// Reassigns exactly `⌊fraction·n⌋` uniformly chosen nodes to a different,
/// uniformly chosen label.
pub fn corrupt_partition(z: &Partition, fraction: f64, rng: &mut ChaCha8Rng) -> Partition {
    let n = z.len();
    let k = z.k();
    let mut labels = z.labels().to_vec();
    if k < 2 {
        return z.clone();
    }
    let count = ((fraction * n as f64).floor() as usize).min(n);
    for i in sample(rng, n, count).into_iter() {
        let shift = rng.random_range(1..k);
        labels[i] = (labels[i] + shift) % k;
    }
    Partition::new(labels, k).expect("labels stay below k")
}

/// SBiSBM grid for the concentration study: every `(n1, p)` pair with
/// `n2 = n2_ratio · n1`, `trials` instances each.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseGrid {
    pub n1_values: Vec<usize>,
    pub n2_ratio: usize,
    pub p_values: Vec<f64>,
    pub c: f64,
    pub k: usize,
    pub trials: usize,
    pub seed: u64,
    pub cap: usize,
}

impl Default for NoiseGrid {
    fn default() -> Self {
        Self {
            n1_values: vec![100, 200, 400],
            n2_ratio: 20,
            p_values: vec![0.02, 0.05],
            c: 0.5,
            k: 2,
            trials: 10,
            seed: 1,
            cap: DEFAULT_DENSE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRecord {
    pub n1: usize,
    pub n2: usize,
    pub p: f64,
    pub trial: usize,
    pub seed: u64,
    pub report: NoiseNormReport,
}

pub fn run_noise_grid(grid: &NoiseGrid) -> Result<Vec<NoiseRecord>> {
    let mut jobs = Vec::new();
    for (ni, &n1) in grid.n1_values.iter().enumerate() {
        for (pi, &p) in grid.p_values.iter().enumerate() {
            for trial in 0..grid.trials {
                jobs.push((ni, n1, pi, p, trial));
            }
        }
    }
    jobs.into_par_iter()
        .map(|(ni, n1, pi, p, trial)| {
            let n2 = grid.n2_ratio * n1;
            let params = BiSBMParams::sbisbm(n1, n2, grid.k, p, grid.c)?;
            let (z1, z2) = params.planted_partitions();
            let seed = derive_seed(grid.seed, &[ni as u64, pi as u64, trial as u64]);
            let a = sample_adjacency(&params, &z1, &z2, seed)?;
            let report = noise_norms_with(&a, &params, &z1, &z2, grid.cap, &NormConfig::default())?;
            Ok(NoiseRecord { n1, n2, p, trial, seed, report })
        })
        .collect()
}

pub fn write_noise_csv<W: Write>(records: &[NoiseRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "n1",
        "n2",
        "p",
        "trial",
        "seed",
        "norm_e",
        "norm_eet_centered",
        "norm_h_eet",
        "norm_ez2",
        "predicted_e",
        "predicted_eet",
        "predicted_ez2",
        "ratio_e",
        "ratio_eet_centered",
        "ratio_h_eet",
        "ratio_ez2",
    ])?;
    for r in records {
        let m = &r.report;
        w.write_record([
            r.n1.to_string(),
            r.n2.to_string(),
            format_metric(r.p),
            r.trial.to_string(),
            r.seed.to_string(),
            format_metric(m.norm_e),
            format_metric(m.norm_eet_centered),
            format_metric(m.norm_h_eet),
            format_metric(m.norm_ez2),
            format_metric(m.predicted_e),
            format_metric(m.predicted_eet),
            format_metric(m.predicted_ez2),
            format_metric(m.ratio_e()),
            format_metric(m.ratio_eet_centered()),
            format_metric(m.ratio_h_eet()),
            format_metric(m.ratio_ez2()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Power-method runs from a corrupted truth on one SBiSBM family.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionStudy {
    pub n1: usize,
    pub n2: usize,
    pub k: usize,
    pub p: f64,
    pub c: f64,
    pub corruption: f64,
    pub runs: usize,
    pub t_max: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionRun {
    pub run: usize,
    pub seed: u64,
    pub trace: ContractionTrace,
}

pub fn run_contraction_study(study: &ContractionStudy) -> Result<Vec<ContractionRun>> {
    let params = BiSBMParams::sbisbm(study.n1, study.n2, study.k, study.p, study.c)?;
    let (z1, z2) = params.planted_partitions();
    let sig = SignalMatrix::from_params(&params)?;
    let t_max = study.t_max.unwrap_or_else(|| default_t_max(study.n1));
    (0..study.runs)
        .into_par_iter()
        .map(|run| {
            let seed = derive_seed(study.seed, &[run as u64]);
            let a = sample_adjacency(&params, &z1, &z2, seed)?;
            let b = hollowed_gram(&a)?;
            let mut rng = rng_for(seed, &[0xC0]);
            let z0 = corrupt_partition(&z1, study.corruption, &mut rng);
            let traj = gpm_refine(&b, &z0, t_max)?;
            Ok(ContractionRun { run, seed, trace: contraction_trace(&traj, &z1, &sig)? })
        })
        .collect()
}

pub fn write_contraction_csv<W: Write>(runs: &[ContractionRun], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run", "seed", "t", "hamming", "loss", "rate"])?;
    for r in runs {
        for row in &r.trace.rows {
            w.write_record([
                r.run.to_string(),
                r.seed.to_string(),
                row.t.to_string(),
                row.hamming.to_string(),
                format_metric(row.loss),
                format_metric(row.rate),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
