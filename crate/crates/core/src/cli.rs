//! Command-line front end.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use crate::config::{ConfigFile, Section};
use crate::diagnostics::{
    run_contraction_study, run_noise_grid, write_contraction_csv, write_noise_csv, ContractionStudy, NoiseGrid,
};
use crate::error::{Error, Result};
use crate::gpm::{default_t_max, gpm_refine};
use crate::harness::{n2_from_scale, run_sweep, write_sweep_csv, ExperimentConfig, Method};
use crate::hl_baseline::hl_cluster;
use crate::io::{load_matrix_market, load_partition, save_matrix_market, save_partition, write_partition};
use crate::linalg::hollowed_gram_with_cap;
use crate::metrics::{misclustering_rate, nmi};
use crate::model::{sample_adjacency, BiSBMParams};
use crate::spec_init::{spec_init, SpecConfig};

#[derive(Debug, Parser)]
#[command(name = "bisbm", version, about = "Row-community recovery in bipartite stochastic block models")]
struct Cli {
    /// Configuration file (flat key = value).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file, or output directory for `generate`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Spec,
    Gpm,
    Hl,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Spec => Method::Spec,
            MethodArg::Gpm => Method::Gpm,
            MethodArg::Hl => Method::Hl,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DiagnoseKind {
    Noise,
    Contraction,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample an SBiSBM instance; writes adjacency.mtx, rows.txt and cols.txt.
    Generate {
        #[arg(long)]
        n1: Option<usize>,
        #[arg(long)]
        n2: Option<usize>,
        /// Column scale: n2 = ceil(C n1 ln n1).
        #[arg(long = "scale")]
        scale: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        c: Option<f64>,
    },
    /// Cluster the rows of a Matrix Market adjacency file.
    Cluster {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "gpm")]
        method: MethodArg,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Compare an estimated partition with a reference partition.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        estimate: PathBuf,
    },
    /// Run a Monte-Carlo sweep and write CSV.
    Sweep {
        /// Add a wall-clock column.
        #[arg(long)]
        timing: bool,
    },
    /// Noise-norm grid or power-method contraction study, as CSV.
    Diagnose {
        #[arg(value_enum)]
        kind: DiagnoseKind,
    },
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit status: 0 on success, 2 for usage and configuration
/// errors, 1 otherwise.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::from_default_env().filter_level(level).try_init();

    let result = match cli.threads {
        Some(0) => Err(Error::Config("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
            .and_then(|pool| pool.install(|| dispatch(&cli))),
        None => dispatch(&cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 2,
                _ => 1,
            }
        }
    }
}

fn read_config(path: Option<&Path>) -> Result<Option<String>> {
    path.map(|p| fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display()))))
        .transpose()
}

fn config_file(path: Option<&Path>) -> Result<ConfigFile> {
    Ok(read_config(path)?.map(|t| ConfigFile::parse(&t)).transpose()?.unwrap_or_default())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

/// Model and solver keys shared by `generate` and `cluster`. Other keys,
/// such as the sweep section of a sweep config, are ignored.
#[derive(Debug, Default)]
struct ModelKeys {
    n1: Option<usize>,
    n2: Option<usize>,
    scale: Option<f64>,
    k: Option<usize>,
    p: Option<f64>,
    c: Option<f64>,
    seed: Option<u64>,
    t_max: Option<usize>,
    spec: SpecConfig,
}

impl ModelKeys {
    fn read(g: &mut Section) -> Result<Self> {
        let mut spec = SpecConfig { accept_unconverged: true, ..SpecConfig::default() };
        spec.restarts = g.take_or("restarts", spec.restarts)?;
        spec.max_lloyd = g.take_or("max_lloyd", spec.max_lloyd)?;
        spec.eig.tol = g.take_or("eig_tol", spec.eig.tol)?;
        spec.eig.max_iter = g.take("eig_max_iter")?;
        spec.accept_unconverged = g.take_or("accept_unconverged", spec.accept_unconverged)?;
        spec.gram_cap = g.take_or("gram_cap", spec.gram_cap)?;
        Ok(Self {
            n1: g.take("n1")?,
            n2: g.take("n2")?,
            scale: g.take("C")?,
            k: g.take("K")?,
            p: g.take("p")?,
            c: g.take("c")?,
            seed: g.take("seed")?,
            t_max: g.take("t_max")?,
            spec,
        })
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate { n1, n2, scale, k, p, c } => {
            let mut file = config_file(cli.config.as_deref())?;
            let keys = ModelKeys::read(&mut file.global)?;
            let missing = |name: &str| Error::Config(format!("missing '{name}' (flag or config key)"));
            let n1 = n1.or(keys.n1).ok_or_else(|| missing("n1"))?;
            let n2 = match (n2.or(keys.n2), scale.or(keys.scale)) {
                (Some(_), Some(_)) => return Err(Error::Config("set either n2 or C, not both".into())),
                (Some(n2), None) => n2,
                (None, Some(s)) => n2_from_scale(s, n1),
                (None, None) => return Err(missing("n2")),
            };
            let k = k.or(keys.k).unwrap_or(2);
            let p = p.or(keys.p).ok_or_else(|| missing("p"))?;
            let c = c.or(keys.c).ok_or_else(|| missing("c"))?;
            let seed = cli.seed.or(keys.seed).unwrap_or(0);
            let params = BiSBMParams::sbisbm(n1, n2, k, p, c).map_err(|e| Error::Config(e.to_string()))?;
            let (z1, z2) = params.planted_partitions();
            let a = sample_adjacency(&params, &z1, &z2, seed)?;
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&dir)?;
            save_matrix_market(&a, &dir.join("adjacency.mtx"))?;
            save_partition(&z1, &dir.join("rows.txt"))?;
            save_partition(&z2, &dir.join("cols.txt"))?;
            info!("wrote {n1}x{n2} instance with {} edges to {}", a.nnz(), dir.display());
            Ok(())
        }
        Command::Cluster { input, method, k } => {
            let mut file = config_file(cli.config.as_deref())?;
            let keys = ModelKeys::read(&mut file.global)?;
            let k = k
                .or(keys.k)
                .ok_or_else(|| Error::Config("missing community count (--k or config key K)".into()))?;
            let method = Method::from(*method);
            if method == Method::Hl && k != 2 {
                return Err(Error::Config(format!("hl requires K = 2, got K = {k}")));
            }
            let a = load_matrix_market(input)?;
            if k == 0 || k > a.n_rows() {
                return Err(Error::Config(format!("K = {k} is not in 1..={}", a.n_rows())));
            }
            let seed = cli.seed.or(keys.seed).unwrap_or(0);
            let t_max = keys.t_max.unwrap_or_else(|| default_t_max(a.n_rows()));
            let z = match method {
                Method::Spec => spec_init(&a, k, &keys.spec, seed)?,
                Method::Gpm => {
                    let z0 = spec_init(&a, k, &keys.spec, seed)?;
                    let b = hollowed_gram_with_cap(&a, keys.spec.gram_cap)?;
                    let traj = gpm_refine(&b, &z0, t_max)?;
                    info!("power method: {} updates, converged at {:?}", traj.iterations(), traj.converged_at);
                    traj.last().clone()
                }
                Method::Hl => hl_cluster(&a, t_max, seed)?,
            };
            write_partition(&z, output(cli.out.as_deref())?)
        }
        Command::Eval { truth, estimate } => {
            let z = load_partition(truth, None)?;
            let zhat = load_partition(estimate, None)?;
            let k = z.k().max(zhat.k());
            let (z, zhat) = (
                crate::model::Partition::new(z.into_labels(), k)?,
                crate::model::Partition::new(zhat.into_labels(), k)?,
            );
            let line = format!("nmi={:.6}, rate={:.6}\n", nmi(&zhat, &z)?, misclustering_rate(&zhat, &z)?);
            print!("{line}");
            if let Some(p) = &cli.out {
                fs::write(p, &line)?;
            }
            Ok(())
        }
        Command::Sweep { timing } => {
            let text = read_config(cli.config.as_deref())?
                .ok_or_else(|| Error::Config("sweep needs --config".into()))?;
            let mut cfg = ExperimentConfig::parse(&text)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let out = run_sweep(&cfg)?;
            write_sweep_csv(&out, output(cli.out.as_deref())?, *timing)
        }
        Command::Diagnose { kind } => {
            let mut file = config_file(cli.config.as_deref())?;
            match kind {
                DiagnoseKind::Noise => {
                    let grid = noise_grid(&mut file, cli.seed)?;
                    file.finish()?;
                    let records = run_noise_grid(&grid)?;
                    write_noise_csv(&records, output(cli.out.as_deref())?)
                }
                DiagnoseKind::Contraction => {
                    let study = contraction_study(&mut file, cli.seed)?;
                    file.finish()?;
                    let runs = run_contraction_study(&study)?;
                    let monotone = runs.iter().filter(|r| r.trace.loss_non_increasing()).count();
                    info!("loss non-increasing in {monotone} of {} runs", runs.len());
                    write_contraction_csv(&runs, output(cli.out.as_deref())?)
                }
            }
        }
    }
}

/// `--seed` wins over the config key, which is still consumed.
fn override_seed(g: &mut Section, flag: Option<u64>, default: u64) -> Result<u64> {
    let from_file = g.take_or("seed", default)?;
    Ok(flag.unwrap_or(from_file))
}

fn noise_grid(file: &mut ConfigFile, seed: Option<u64>) -> Result<NoiseGrid> {
    let g = &mut file.global;
    let d = NoiseGrid::default();
    let grid = NoiseGrid {
        n1_values: g.take_list("n1_values")?.unwrap_or(d.n1_values),
        n2_ratio: g.take_or("n2_ratio", d.n2_ratio)?,
        p_values: g.take_list("p_values")?.unwrap_or(d.p_values),
        c: g.take_or("c", d.c)?,
        k: g.take_or("K", d.k)?,
        trials: g.take_or("trials", d.trials)?,
        seed: override_seed(g, seed, d.seed)?,
        cap: g.take_or("cap", d.cap)?,
    };
    for &n1 in &grid.n1_values {
        for &p in &grid.p_values {
            BiSBMParams::sbisbm(n1, grid.n2_ratio * n1, grid.k, p, grid.c).map_err(|e| Error::Config(e.to_string()))?;
        }
    }
    Ok(grid)
}

fn contraction_study(file: &mut ConfigFile, seed: Option<u64>) -> Result<ContractionStudy> {
    let g = &mut file.global;
    let n1 = g.take_or("n1", 500)?;
    let n2 = match (g.take::<usize>("n2")?, g.take::<f64>("C")?) {
        (Some(_), Some(_)) => return Err(Error::Config("set either n2 or C, not both".into())),
        (Some(n2), None) => n2,
        (None, Some(s)) => n2_from_scale(s, n1),
        (None, None) => n2_from_scale(10.0, n1),
    };
    let study = ContractionStudy {
        n1,
        n2,
        k: g.take_or("K", 2)?,
        p: g.take_or("p", 0.05)?,
        c: g.take_or("c", 0.3)?,
        corruption: g.take_or("corruption", 0.1)?,
        runs: g.take_or("runs", 100)?,
        t_max: g.take("t_max")?,
        seed: override_seed(g, seed, 0)?,
    };
    if !(0.0..=1.0).contains(&study.corruption) {
        return Err(Error::Config("corruption must lie in [0, 1]".into()));
    }
    BiSBMParams::sbisbm(study.n1, study.n2, study.k, study.p, study.c).map_err(|e| Error::Config(e.to_string()))?;
    Ok(study)
}
