//! `gopac` command-line front end.
//!
//! Exit codes: 0 success, 1 bad input, 2 search stopped by the time budget
//! before certification, 3 oracle grid above the cell cap.

mod bench;
mod report;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use gopac::bounds::{objective, BoundMode};
use gopac::estimators::ransac_baseline;
use gopac::io::{instance_to_json, parse_instance};
use gopac::oracle::{grid_search_capped, DEFAULT_CELL_CAP};
use gopac::solver::gopac_solve;
use gopac::synth::{generate, GroundTruth, SynthConfig};
use gopac::{Error, ProblemInstanced, SolverConfigd};
use serde::{Deserialize, Serialize};

use report::{OracleReport, Reference, RunReport, SuccessFlags};

#[derive(Parser)]
#[command(
    name = "gopac",
    version,
    about = "Globally-optimal camera pose and correspondence search"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Bound {
    Weak,
    Tight,
    Gamma,
}

impl From<Bound> for BoundMode {
    fn from(b: Bound) -> Self {
        match b {
            Bound::Weak => BoundMode::WeakSphere,
            Bound::Tight => BoundMode::TightCuboid,
            Bound::Gamma => BoundMode::Gamma,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Gopac,
    Ransac,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance file and print a JSON report.
    Solve {
        instance: PathBuf,
        /// Inlier threshold in degrees; overrides the instance file.
        #[arg(long)]
        theta_deg: Option<f64>,
        #[arg(long, value_enum, default_value = "gamma")]
        bound: Bound,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long)]
        guess_verify: bool,
        /// Seconds before the search stops uncertified.
        #[arg(long)]
        time_budget: Option<f64>,
        /// Seed for the RANSAC baseline.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the bound trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Minimum camera-to-point distance; overrides the instance file.
        #[arg(long)]
        zeta: Option<f64>,
        #[arg(long, value_enum, default_value = "gopac")]
        solver: Solver,
        #[arg(long, default_value_t = 100_000)]
        ransac_iterations: usize,
        /// Ground-truth file from `synth`, for success flags.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Write the report here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Generate a synthetic instance and its ground truth.
    Synth {
        /// JSON generator settings; omitted fields take their defaults.
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Run a parameter sweep of synthetic trials and write CSV.
    Bench {
        sweep: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Brute-force grid search over rotations and translations.
    Oracle {
        instance: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        rot_step: f64,
        #[arg(long, default_value_t = 0.1)]
        trans_step: f64,
        #[arg(long, default_value_t = DEFAULT_CELL_CAP)]
        cap: u128,
        #[arg(long)]
        theta_deg: Option<f64>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TruthFile {
    config: SynthConfig,
    ground_truth: GroundTruth,
    /// Inlier count at the ground-truth pose.
    nu: usize,
}

struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure { code: 1, err: e.into() }
    }
}

type Outcome = std::result::Result<u8, Failure>;

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn emit(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, format!("{text}\n")).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            writeln!(out, "{text}")?;
            Ok(())
        }
    }
}

fn load_instance(path: &Path, theta_deg: Option<f64>) -> anyhow::Result<ProblemInstanced> {
    let (inst, _) = parse_instance(&read(path)?).with_context(|| format!("malformed instance {}", path.display()))?;
    match theta_deg {
        None => Ok(inst),
        Some(d) => {
            if !(d > 0.0 && d < 180.0) {
                return Err(anyhow!("--theta-deg must lie in (0, 180), got {d}"));
            }
            Ok(ProblemInstanced::new(
                inst.bearings,
                inst.points,
                d.to_radians(),
                inst.domain,
            )?)
        }
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Solve {
            instance,
            theta_deg,
            bound,
            threads,
            guess_verify,
            time_budget,
            seed,
            trace,
            zeta,
            solver,
            ransac_iterations,
            truth,
            output,
        } => {
            let inst = load_instance(&instance, theta_deg)?;
            let gt = match &truth {
                Some(p) => Some(
                    serde_json::from_str::<TruthFile>(&read(p)?)
                        .with_context(|| format!("malformed truth file {}", p.display()))?,
                ),
                None => None,
            };
            let cfg = SolverConfigd {
                bound_mode: bound.into(),
                zeta,
                threads,
                guess_verify,
                time_budget,
                ..Default::default()
            };
            let start = Instant::now();
            let (sol, name) = match solver {
                Solver::Gopac => (gopac_solve(&inst, &cfg)?, "gopac"),
                Solver::Ransac => (ransac_baseline(&inst, ransac_iterations, seed)?, "ransac"),
            };
            let wall_time = start.elapsed().as_secs_f64();
            if let Some(p) = &trace {
                let f = fs::File::create(p).with_context(|| format!("cannot write {}", p.display()))?;
                report::write_trace(io::BufWriter::new(f), &sol.trace)?;
            }
            let rep = RunReport {
                instance: stem(&instance),
                solver: name.into(),
                nu_star: sol.nu_star,
                pose: sol.pose,
                optimal: sol.optimal,
                wall_time,
                success: gt
                    .as_ref()
                    .map(|g| SuccessFlags::evaluate(sol.nu_star, &sol.pose, &inst, &g.ground_truth)),
                reference: gt.as_ref().map(|g| Reference {
                    pose: g.ground_truth.pose,
                    nu: objective(&g.ground_truth.pose, &inst),
                }),
                correspondences: sol.correspondences.clone(),
                stats: matches!(solver, Solver::Gopac).then(|| sol.stats.clone()),
            };
            emit(output.as_deref(), &serde_json::to_string_pretty(&rep)?)?;
            let uncertified = matches!(solver, Solver::Gopac) && !sol.optimal;
            Ok(if uncertified { 2 } else { 0 })
        }
        Command::Synth {
            config,
            seed,
            out,
            truth,
        } => {
            let mut cfg: SynthConfig = match &config {
                Some(p) => {
                    serde_json::from_str(&read(p)?).with_context(|| format!("malformed config {}", p.display()))?
                }
                None => SynthConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let (inst, gt) = generate(&cfg)?;
            let nu = objective(&gt.pose, &inst);
            fs::write(&out, instance_to_json(&inst) + "\n")
                .with_context(|| format!("cannot write {}", out.display()))?;
            let tf = TruthFile {
                config: cfg,
                ground_truth: gt,
                nu,
            };
            fs::write(&truth, serde_json::to_string_pretty(&tf)? + "\n")
                .with_context(|| format!("cannot write {}", truth.display()))?;
            Ok(0)
        }
        Command::Bench { sweep, output } => {
            let sw: bench::Sweep =
                serde_json::from_str(&read(&sweep)?).with_context(|| format!("malformed sweep {}", sweep.display()))?;
            match output {
                Some(p) => {
                    let f = fs::File::create(&p).with_context(|| format!("cannot write {}", p.display()))?;
                    bench::run(&sw, f)?;
                }
                None => {
                    bench::run(&sw, io::stdout().lock())?;
                }
            }
            Ok(0)
        }
        Command::Oracle {
            instance,
            rot_step,
            trans_step,
            cap,
            theta_deg,
            output,
        } => {
            let inst = load_instance(&instance, theta_deg)?;
            let start = Instant::now();
            let g = match grid_search_capped(&inst, rot_step, trans_step, cap) {
                Ok(g) => g,
                Err(e @ Error::GridTooLarge { .. }) => return Err(Failure { code: 3, err: e.into() }),
                Err(e) => return Err(e.into()),
            };
            let rep = OracleReport {
                instance: stem(&instance),
                nu: g.nu,
                pose: g.pose,
                cells: g.cells,
                rot_step,
                trans_step,
                wall_time: start.elapsed().as_secs_f64(),
            };
            emit(output.as_deref(), &serde_json::to_string_pretty(&rep)?)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
