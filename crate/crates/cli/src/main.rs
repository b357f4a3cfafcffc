use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rs_sfm_core::bench::{self, run_experiment, BenchError};
use rs_sfm_core::io::{
    self, curves_from_file, read_json, simulate, write_json, CurvesFile, IoError, Metadata, ObservationsFile,
    RansacFile, SceneFile, SolutionsFile,
};
use rs_sfm_core::solvers::{catalog, lookup, solve_lines_with, solve_points_linear, Measurement};
use rs_sfm_core::{ransac, BenchConfig, LineStrategy, RansacConfig, RobustError, SolverError, TrackerConfig};

#[derive(Parser, Debug)]
#[command(name = "rs-sfm", version, about = "Rolling-shutter single-view structure from motion")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Strategy {
    Parameter,
    MultiHomogeneous,
}

impl From<Strategy> for LineStrategy {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::Parameter => LineStrategy::Parameter,
            Strategy::MultiHomogeneous => LineStrategy::MultiHomogeneous,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Project a scene file into observations plus a ground-truth sidecar.
    Simulate {
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth path (default: `<out>.truth.json`).
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Solve a minimal problem from an observations file.
    Solve {
        observations: PathBuf,
        /// Problem label; defaults to the one stored in the file.
        #[arg(long)]
        spec: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Strategy::Parameter)]
        strategy: Strategy,
    },
    /// Noiseless stability experiment.
    Stability {
        #[arg(long)]
        spec: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Per-sample CSV; histogram and recall tables go next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Experiment with Gaussian pixel noise.
    Noise {
        #[arg(long)]
        spec: String,
        /// Noise standard deviation in pixels.
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Fixed norm of the motion coefficients.
        #[arg(long)]
        motion_norm: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// RANSAC over a curves file.
    Ransac {
        curves: PathBuf,
        #[arg(long)]
        spec: String,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the problem catalog.
    Catalog {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure with its exit code: 2 input, 3 unsupported problem, 4 solver.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl ToString) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        let code = match &e {
            SolverError::UnknownLabel(_) | SolverError::BadObservations(_) => 2,
            SolverError::Unimplemented { .. } | SolverError::NotBalanced(_) => 3,
            _ => 4,
        };
        let mut message = e.to_string();
        if let SolverError::Unimplemented { label, degree } = &e {
            message = format!("{message}\ncatalog entry: {label}, degree {degree}, no solver");
        }
        Self { code, message }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Solver(s) => s.into(),
            other => Failure::input(other),
        }
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Solver(s) => s.into(),
            BenchError::Unimplemented(label) => Self {
                code: 3,
                message: format!("no solver for '{label}'"),
            },
            BenchError::SamplingExhausted(_) | BenchError::EmptyRecords => Self {
                code: 4,
                message: e.to_string(),
            },
            other => Failure::input(other),
        }
    }
}

impl From<RobustError> for Failure {
    fn from(e: RobustError) -> Self {
        match e {
            RobustError::Solver(s) => s.into(),
            RobustError::Unsupported(_) => Self {
                code: 3,
                message: e.to_string(),
            },
            RobustError::NoValidModel => Self {
                code: 4,
                message: e.to_string(),
            },
            other => Failure::input(other),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// `dir/name.csv` → `dir/name.<tag>.csv`.
fn sibling(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    path.with_file_name(format!("{stem}.{tag}.{ext}"))
}

fn experiment(cfg: &BenchConfig, out: &Path) -> Result<(), Failure> {
    let spec = lookup(&cfg.spec)?;
    if !spec.implemented {
        return Err(SolverError::Unimplemented {
            label: spec.label,
            degree: spec.degree,
        }
        .into());
    }
    let results = run_experiment(cfg)?;
    bench::write_samples_csv(create(out)?, cfg, &results)?;
    bench::write_histogram_csv(create(&sibling(out, "hist"))?, cfg, &results)?;
    bench::write_recall_csv(create(&sibling(out, "recall"))?, cfg, &results)?;
    let ok = results.iter().filter(|r| r.record.worst() < 1e-3).count();
    log::info!("{}: {ok}/{} samples with all errors below 1e-3", spec.label, results.len());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Failure::input(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate { scene, out, truth } => {
            let scene: SceneFile = read_json(&scene)?;
            let (obs, gt) = simulate(&scene, cli.seed)?;
            write_json(&out, &obs)?;
            let truth = truth.unwrap_or_else(|| out.with_extension("truth.json"));
            write_json(&truth, &gt)?;
        }
        Command::Solve {
            observations,
            spec,
            out,
            strategy,
        } => {
            let file: ObservationsFile = read_json(&observations)?;
            let label = spec
                .or(file.spec.clone())
                .ok_or_else(|| Failure::input("no problem label given or stored in the observations"))?;
            let spec = lookup(&label)?;
            let tracker = TrackerConfig {
                rng_seed: cli.seed,
                ..TrackerConfig::default()
            };
            let solutions = if !spec.implemented {
                return Err(SolverError::Unimplemented {
                    label: spec.label,
                    degree: spec.degree,
                }
                .into());
            } else if matches!(spec.measurement, Measurement::WorldPoints { .. }) {
                solve_points_linear(&file.observations, spec.d)?
            } else {
                solve_lines_with(&spec, &file.observations, &tracker, strategy.into())?
            };
            let config = serde_json::json!({ "command": "solve", "spec": spec.label, "strategy": format!("{strategy:?}"), "tracker": tracker });
            write_json(
                &out,
                &SolutionsFile {
                    metadata: Metadata::new(cli.seed, config),
                    solutions,
                },
            )?;
        }
        Command::Stability { spec, samples, out } => {
            let cfg = BenchConfig {
                spec,
                samples,
                rng_seed: cli.seed,
                ..BenchConfig::default()
            };
            experiment(&cfg, &out)?;
        }
        Command::Noise {
            spec,
            sigma,
            samples,
            motion_norm,
            out,
        } => {
            if !(sigma >= 0.0) {
                return Err(Failure::input("sigma must be non-negative"));
            }
            let cfg = BenchConfig {
                spec,
                samples,
                noise_sigma: sigma,
                motion_norm,
                rng_seed: cli.seed,
                ..BenchConfig::default()
            };
            experiment(&cfg, &out)?;
        }
        Command::Ransac {
            curves,
            spec,
            iterations,
            out,
        } => {
            if iterations == 0 {
                return Err(Failure::input("iterations must be at least 1"));
            }
            let spec = lookup(&spec)?;
            let curves: CurvesFile = read_json(&curves)?;
            let cfg = RansacConfig {
                iterations,
                rng_seed: cli.seed,
                ..RansacConfig::default()
            };
            let result = ransac(&curves_from_file(&curves), &spec, &cfg)?;
            write_json(
                &out,
                &RansacFile {
                    metadata: Metadata::new(cli.seed, serde_json::to_value(&cfg).expect("serializable config")),
                    result,
                },
            )?;
        }
        Command::Catalog { out } => {
            let entries = catalog();
            match out {
                Some(path) => write_json(&path, &entries)?,
                None => {
                    for s in entries {
                        println!(
                            "{:<16} degree {:>5}  {}",
                            s.label,
                            s.degree,
                            if s.implemented { "solver" } else { "-" }
                        );
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RS_SFM_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    log::debug!("toolkit {}", io::VERSION);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
