//! Monte-Carlo sweeps over one SBiSBM parameter, scoring each clustering
//! method against the planted row partition.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::config::ConfigFile;
use crate::error::{Error, Result};
use crate::gpm::{default_t_max, gpm_refine};
use crate::hl_baseline::hl_cluster_from_gram;
use crate::io::format_metric;
use crate::linalg::{hollowed_gram_with_cap, Shift};
use crate::metrics::{misclustering_rate, nmi};
use crate::model::{sample_adjacency, BiSBMParams, Partition};
use crate::seed::derive_seed;
use crate::spec_init::{spec_init_from_gram, SpecConfig};

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Spec,
    Gpm,
    Hl,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Spec => "spec",
            Method::Gpm => "gpm",
            Method::Hl => "hl",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spec" => Ok(Method::Spec),
            "gpm" => Ok(Method::Gpm),
            "hl" => Ok(Method::Hl),
            other => Err(config_err(format!("unknown method '{other}', expected spec, gpm or hl"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    C,
    P,
    /// Column scale `C` in `n2 = ⌈C·n1·ln n1⌉`.
    Scale,
    K,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::C => "c",
            SweepVariable::P => "p",
            SweepVariable::Scale => "C",
            SweepVariable::K => "K",
        }
    }
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c" => Ok(SweepVariable::C),
            "p" => Ok(SweepVariable::P),
            "C" => Ok(SweepVariable::Scale),
            "K" => Ok(SweepVariable::K),
            other => Err(config_err(format!("unknown sweep variable '{other}', expected c, p, C or K"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColumnCount {
    Fixed(usize),
    Scale(f64),
}

/// `⌈C·n1·ln n1⌉`.
pub fn n2_from_scale(scale: f64, n1: usize) -> usize {
    (scale * n1 as f64 * (n1 as f64).ln()).ceil() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n1: usize,
    pub n2: ColumnCount,
    pub p: f64,
    pub c: f64,
    pub k: usize,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub seed: u64,
    pub t_max: Option<usize>,
    pub spec: SpecConfig,
    pub sweep_variable: SweepVariable,
    pub sweep_values: Vec<f64>,
    pub allow_empty: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n1: 500,
            n2: ColumnCount::Scale(10.0),
            p: 0.05,
            c: 0.5,
            k: 2,
            methods: vec![Method::Spec, Method::Gpm],
            trials: 20,
            seed: 0,
            t_max: None,
            spec: SpecConfig { accept_unconverged: true, ..SpecConfig::default() },
            sweep_variable: SweepVariable::P,
            sweep_values: Vec::new(),
            allow_empty: false,
        }
    }
}

/// Parameters of one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointParams {
    pub n1: usize,
    pub n2: usize,
    pub k: usize,
    pub p: f64,
    pub c: f64,
}

impl PointParams {
    pub fn model(&self) -> Result<BiSBMParams> {
        BiSBMParams::sbisbm(self.n1, self.n2, self.k, self.p, self.c)
    }
}

impl ExperimentConfig {
    /// Reads the global model keys and the `[sweep]` section.
    ///
    /// Global keys: `n1`, `n2` or `C`, `p`, `c`, `K`, `methods`, `trials`,
    /// `seed`, `t_max`, `restarts`, `max_lloyd`, `eig_tol`, `eig_max_iter`,
    /// `accept_unconverged`, `gram_cap`. Sweep keys: `variable`, `values`,
    /// `allow_empty`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut file = ConfigFile::parse(text)?;
        let mut cfg = ExperimentConfig::default();
        let g = &mut file.global;
        cfg.n1 = g.take_or("n1", cfg.n1)?;
        match (g.take::<usize>("n2")?, g.take::<f64>("C")?) {
            (Some(_), Some(_)) => return Err(config_err("set either n2 or C, not both")),
            (Some(n2), None) => cfg.n2 = ColumnCount::Fixed(n2),
            (None, Some(s)) => cfg.n2 = ColumnCount::Scale(s),
            (None, None) => {}
        }
        cfg.p = g.take_or("p", cfg.p)?;
        cfg.c = g.take_or("c", cfg.c)?;
        cfg.k = g.take_or("K", cfg.k)?;
        if let Some(l) = g.take::<usize>("L")? {
            if l != cfg.k {
                return Err(config_err("the symmetric model requires L = K"));
            }
        }
        if let Some(ms) = g.take_list::<String>("methods")? {
            cfg.methods = ms.iter().map(|m| m.parse()).collect::<Result<_>>()?;
        }
        cfg.trials = g.take_or("trials", cfg.trials)?;
        cfg.seed = g.take_or("seed", cfg.seed)?;
        cfg.t_max = g.take("t_max")?;
        cfg.spec.restarts = g.take_or("restarts", cfg.spec.restarts)?;
        cfg.spec.max_lloyd = g.take_or("max_lloyd", cfg.spec.max_lloyd)?;
        cfg.spec.eig.tol = g.take_or("eig_tol", cfg.spec.eig.tol)?;
        cfg.spec.eig.max_iter = g.take("eig_max_iter")?.or(cfg.spec.eig.max_iter);
        cfg.spec.accept_unconverged = g.take_or("accept_unconverged", cfg.spec.accept_unconverged)?;
        cfg.spec.gram_cap = g.take_or("gram_cap", cfg.spec.gram_cap)?;

        match file.take_section("sweep") {
            Some(mut s) => {
                cfg.sweep_variable = s
                    .take::<String>("variable")?
                    .ok_or_else(|| config_err("[sweep] needs 'variable'"))?
                    .parse()?;
                cfg.sweep_values = s.take_list("values")?.unwrap_or_default();
                cfg.allow_empty = s.take_or("allow_empty", false)?;
                s.finish()?;
            }
            None => return Err(config_err("missing [sweep] section")),
        }
        file.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(config_err("trials must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(config_err("no methods selected"));
        }
        if self.sweep_values.is_empty() && !self.allow_empty {
            return Err(config_err("sweep grid is empty; set allow_empty = true to permit it"));
        }
        if self.spec.gram_cap == 0 {
            return Err(config_err("gram_cap must be positive"));
        }
        for i in 0..self.sweep_values.len() {
            let pt = self.point(i)?;
            if self.methods.contains(&Method::Hl) && pt.k != 2 {
                return Err(config_err(format!("hl requires K = L = 2, grid point {i} has K = {}", pt.k)));
            }
            pt.model().map_err(|e| config_err(format!("grid point {i}: {e}")))?;
        }
        if self.sweep_values.is_empty() && self.methods.contains(&Method::Hl) && self.k != 2 {
            return Err(config_err(format!("hl requires K = L = 2, got K = {}", self.k)));
        }
        Ok(())
    }

    pub fn point(&self, index: usize) -> Result<PointParams> {
        let v = *self
            .sweep_values
            .get(index)
            .ok_or_else(|| config_err(format!("grid point {index} out of range")))?;
        let mut pt = PointParams { n1: self.n1, n2: 0, k: self.k, p: self.p, c: self.c };
        let mut n2 = self.n2;
        match self.sweep_variable {
            SweepVariable::C => pt.c = v,
            SweepVariable::P => pt.p = v,
            SweepVariable::Scale => n2 = ColumnCount::Scale(v),
            SweepVariable::K => {
                if v.fract() != 0.0 || v < 1.0 {
                    return Err(config_err(format!("K must be a positive integer, got {v}")));
                }
                pt.k = v as usize;
            }
        }
        pt.n2 = match n2 {
            ColumnCount::Fixed(n) => n,
            ColumnCount::Scale(s) => n2_from_scale(s, pt.n1),
        };
        Ok(pt)
    }

    pub fn trial_seed(&self, point: usize, trial: usize) -> u64 {
        derive_seed(self.seed, &[point as u64, trial as u64])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub point: usize,
    pub sweep_value: f64,
    pub method: Method,
    pub trial: usize,
    pub seed: u64,
    pub nmi: f64,
    pub rate: f64,
    /// Power-method update steps; zero for the other methods.
    pub gpm_iterations: usize,
    pub empty_cluster_events: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub point: usize,
    pub sweep_value: f64,
    pub method: Method,
    pub mean_nmi: f64,
    pub sd_nmi: f64,
    pub mean_rate: f64,
    pub sd_rate: f64,
    pub mean_gpm_iterations: f64,
    pub sd_gpm_iterations: f64,
    pub mean_empty_events: f64,
    pub sd_empty_events: f64,
    pub mean_wall_ms: f64,
    pub sd_wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub variable: SweepVariable,
    pub records: Vec<ExperimentRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl SweepOutput {
    pub fn aggregate(&self, point: usize, method: Method) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.point == point && a.method == method)
    }
}

/// Sample mean and standard deviation (`n - 1` denominator; zero for a
/// single value).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every method of `cfg` on one sampled instance.
pub fn run_trial(cfg: &ExperimentConfig, point: usize, trial: usize) -> Result<Vec<ExperimentRecord>> {
    let pt = cfg.point(point)?;
    let params = pt.model()?;
    let seed = cfg.trial_seed(point, trial);
    let (z1, z2) = params.planted_partitions();
    let a = sample_adjacency(&params, &z1, &z2, derive_seed(seed, &[0]))?;

    let gram_start = Instant::now();
    let b = hollowed_gram_with_cap(&a, cfg.spec.gram_cap)?;
    let degrees = a.row_degrees();
    let gram_ms = gram_start.elapsed().as_secs_f64() * 1e3;

    let mut spec_cfg = cfg.spec.clone();
    if spec_cfg.eig.shift == Shift::RowSumBound {
        spec_cfg.eig.shift = Shift::Fixed(degrees.iter().copied().max().unwrap_or(0) as f64);
    }
    let t_max = cfg.t_max.unwrap_or_else(|| default_t_max(pt.n1));

    let mut spec_out: Option<(Partition, f64)> = None;
    let mut records = Vec::with_capacity(cfg.methods.len());
    let score = |method: Method, z: &Partition, iters: usize, events: usize, ms: f64| -> Result<ExperimentRecord> {
        Ok(ExperimentRecord {
            point,
            sweep_value: cfg.sweep_values[point],
            method,
            trial,
            seed,
            nmi: nmi(z, &z1)?,
            rate: misclustering_rate(z, &z1)?,
            gpm_iterations: iters,
            empty_cluster_events: events,
            wall_ms: ms,
        })
    };
    let spec_once = |spec_out: &mut Option<(Partition, f64)>| -> Result<(Partition, f64)> {
        if spec_out.is_none() {
            let start = Instant::now();
            let z = spec_init_from_gram(&b, pt.k, &spec_cfg, derive_seed(seed, &[1]))?;
            *spec_out = Some((z, gram_ms + start.elapsed().as_secs_f64() * 1e3));
        }
        Ok(spec_out.clone().expect("set above"))
    };

    for &method in &cfg.methods {
        let rec = match method {
            Method::Spec => {
                let (z, ms) = spec_once(&mut spec_out)?;
                score(method, &z, 0, 0, ms)?
            }
            Method::Gpm => {
                let (z0, spec_ms) = spec_once(&mut spec_out)?;
                let start = Instant::now();
                let traj = gpm_refine(&b, &z0, t_max)?;
                let ms = spec_ms + start.elapsed().as_secs_f64() * 1e3;
                score(method, traj.last(), traj.iterations(), traj.empty_cluster_events, ms)?
            }
            Method::Hl => {
                let start = Instant::now();
                let z = hl_cluster_from_gram(&b, &degrees, pt.n2, t_max, derive_seed(seed, &[2]));
                score(method, &z, 0, 0, gram_ms + start.elapsed().as_secs_f64() * 1e3)?
            }
        };
        records.push(rec);
    }
    Ok(records)
}

/// All grid points × trials, in parallel. Records are ordered by point,
/// then method (config order), then trial.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.sweep_values.len())
        .flat_map(|p| (0..cfg.trials).map(move |t| (p, t)))
        .collect();
    let per_trial: Vec<Vec<ExperimentRecord>> =
        jobs.into_par_iter().map(|(p, t)| run_trial(cfg, p, t)).collect::<Result<_>>()?;

    let mut records = Vec::with_capacity(per_trial.len() * cfg.methods.len());
    let mut aggregates = Vec::new();
    for point in 0..cfg.sweep_values.len() {
        let trials = &per_trial[point * cfg.trials..(point + 1) * cfg.trials];
        for (mi, &method) in cfg.methods.iter().enumerate() {
            let rows: Vec<&ExperimentRecord> = trials.iter().map(|t| &t[mi]).collect();
            records.extend(rows.iter().map(|r| (*r).clone()));
            let col = |f: &dyn Fn(&ExperimentRecord) -> f64| mean_sd(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (mean_nmi, sd_nmi) = col(&|r| r.nmi);
            let (mean_rate, sd_rate) = col(&|r| r.rate);
            let (mean_gpm_iterations, sd_gpm_iterations) = col(&|r| r.gpm_iterations as f64);
            let (mean_empty_events, sd_empty_events) = col(&|r| r.empty_cluster_events as f64);
            let (mean_wall_ms, sd_wall_ms) = col(&|r| r.wall_ms);
            aggregates.push(Aggregate {
                point,
                sweep_value: cfg.sweep_values[point],
                method,
                mean_nmi,
                sd_nmi,
                mean_rate,
                sd_rate,
                mean_gpm_iterations,
                sd_gpm_iterations,
                mean_empty_events,
                sd_empty_events,
                mean_wall_ms,
                sd_wall_ms,
            });
        }
    }
    Ok(SweepOutput { variable: cfg.sweep_variable, records, aggregates })
}

pub const CSV_COLUMNS: [&str; 10] = [
    "row_type",
    "sweep_variable",
    "sweep_value",
    "method",
    "trial",
    "seed",
    "nmi",
    "rate",
    "gpm_iterations",
    "empty_cluster_events",
];

/// Data rows, then one `mean` and one `sd` row per point and method.
/// Wall-clock time is only written with `timing`, so default output is
/// reproducible byte for byte.
pub fn write_sweep_csv<W: Write>(out: &SweepOutput, writer: W, timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = CSV_COLUMNS.to_vec();
    if timing {
        header.push("wall_ms");
    }
    w.write_record(&header)?;
    let var = out.variable.name();
    for r in &out.records {
        let mut row = vec![
            "data".to_string(),
            var.to_string(),
            format_metric(r.sweep_value),
            r.method.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            format_metric(r.nmi),
            format_metric(r.rate),
            r.gpm_iterations.to_string(),
            r.empty_cluster_events.to_string(),
        ];
        if timing {
            row.push(format_metric(r.wall_ms));
        }
        w.write_record(&row)?;
    }
    for a in &out.aggregates {
        let stats = [
            ("mean", a.mean_nmi, a.mean_rate, a.mean_gpm_iterations, a.mean_empty_events, a.mean_wall_ms),
            ("sd", a.sd_nmi, a.sd_rate, a.sd_gpm_iterations, a.sd_empty_events, a.sd_wall_ms),
        ];
        for (kind, nmi, rate, iters, events, ms) in stats {
            let mut row = vec![
                kind.to_string(),
                var.to_string(),
                format_metric(a.sweep_value),
                a.method.to_string(),
                String::new(),
                String::new(),
                format_metric(nmi),
                format_metric(rate),
                format_metric(iters),
                format_metric(events),
            ];
            if timing {
                row.push(format_metric(ms));
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
