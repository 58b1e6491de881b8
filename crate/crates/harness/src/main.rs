use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use divbo_core::{DivBoConfig, Method};
use divbo_harness::experiment::{run_cell, run_experiment, surrogate_eval, SurrogateEvalConfig};
use divbo_harness::openml::{fetch_openml, FetchOutcome};
use divbo_harness::{ExperimentReport, HarnessError, ProblemSpec, Result};

#[derive(Parser)]
#[command(name = "divbo", version, about = "Diversity-aware Bayesian optimization for ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one optimizer on one dataset and write its run directory.
    Run(RunArgs),
    /// Run every dataset x method x seed cell and write a report.
    Bench(BenchArgs),
    /// Kendall tau of both surrogates against held-out ground truth.
    SurrogateEval(SurrogateArgs),
    /// Download an OpenML dataset as CSV.
    FetchOpenml(FetchArgs),
    /// Recompute a report from its stored rows.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    /// Full-size surrogates.
    Paper,
    /// Smaller diversity surrogate for single-core machines.
    Desk,
}

#[derive(Args)]
struct DataArgs {
    /// `synthetic`, `synthetic:<seed>`, or a CSV path.
    #[arg(long, default_value = "synthetic")]
    dataset: String,
    /// Target column of a CSV dataset.
    #[arg(long)]
    target_col: Option<String>,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// TOML search-space file replacing the built-in space.
    #[arg(long)]
    space: Option<PathBuf>,
}

impl DataArgs {
    fn spec(&self, dataset: &str) -> Result<ProblemSpec> {
        let spec = ProblemSpec::parse(dataset, self.target_col.as_deref(), self.split_seed)?;
        Ok(match &self.space {
            Some(file) => spec.with_space(file),
            None => spec,
        })
    }
}

#[derive(Args)]
struct OptimizerArgs {
    #[arg(long, value_enum, default_value = "paper")]
    profile: Profile,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    init_random: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    ensemble_size: Option<usize>,
    /// Wall-clock limit per run in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
}

impl OptimizerArgs {
    fn config(&self, seed: u64) -> Result<DivBoConfig> {
        let mut cfg = match self.profile {
            Profile::Paper => DivBoConfig::default(),
            Profile::Desk => DivBoConfig::desk(),
        };
        cfg.seed = seed;
        if let Some(v) = self.budget {
            cfg.budget = v;
        }
        if let Some(v) = self.init_random {
            cfg.init_random = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.tau {
            cfg.tau = v;
        }
        if let Some(v) = self.ensemble_size {
            cfg.ensemble_size = v;
        }
        if self.time_limit.is_some() {
            cfg.time_limit = self.time_limit;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    #[arg(long, default_value = "DivBO")]
    method: Method,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    /// Comma-separated datasets; overrides --dataset.
    #[arg(long, value_delimiter = ',')]
    datasets: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "RS,BO,DivBO-,RS-ES,BO-ES,DivBO")]
    method: Vec<Method>,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds.
    #[arg(long, default_value_t = 10)]
    n_seeds: u64,
    /// Method the others are compared against with the signed-rank test.
    #[arg(long)]
    baseline: Option<Method>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SurrogateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    n_configs: usize,
    #[arg(long, default_value_t = 50)]
    n_test: usize,
    #[arg(long, value_delimiter = ',', default_value = "50,100,150,200,250")]
    checkpoints: Vec<usize>,
    /// Cap on diversity training pairs; 0 means no cap.
    #[arg(long, default_value_t = 5000)]
    max_pairs: usize,
    /// Write the curve as JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FetchArgs {
    #[arg(long)]
    id: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// A `report.json` or the directory holding it.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    baseline: Option<Method>,
    /// Output directory; defaults to the input's directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let spec = args.data.spec(&args.data.dataset)?;
    let cfg = args.optimizer.config(args.seed)?;
    let problem = spec.build()?;
    let (_, row) = run_cell(problem.as_ref(), spec.name(), args.method, &cfg, Some(&args.out))?;
    print_json(&serde_json::json!({
        "dataset": row.dataset,
        "method": row.method,
        "seed": row.seed,
        "status": row.status,
        "val_error": row.final_val_error,
        "test_error": row.final_test_error,
        "out": args.out,
    }))
}

fn bench(args: BenchArgs) -> Result<()> {
    let names = if args.datasets.is_empty() {
        vec![args.data.dataset.clone()]
    } else {
        args.datasets.clone()
    };
    let specs = names.iter().map(|d| args.data.spec(d)).collect::<Result<Vec<_>>>()?;
    let cfg = args.optimizer.config(args.seed)?;
    let seeds: Vec<u64> = (args.seed..args.seed + args.n_seeds).collect();
    let report = run_experiment(&specs, &args.method, &seeds, &cfg, Some(&args.out), args.jobs)?;
    let report = ExperimentReport::from_rows(report.rows, args.baseline);
    report.write(&args.out)?;
    print_json(&report.summary.cells)
}

fn surrogate(args: SurrogateArgs) -> Result<()> {
    let problem = args.data.spec(&args.data.dataset)?.build()?;
    let cfg = SurrogateEvalConfig {
        n_configs: args.n_configs,
        n_test: args.n_test,
        checkpoints: args.checkpoints,
        max_pairs: (args.max_pairs > 0).then_some(args.max_pairs),
        seed: args.seed,
        ..SurrogateEvalConfig::default()
    };
    let curve = surrogate_eval(problem.as_ref(), &cfg)?;
    match args.out {
        Some(path) => Ok(std::fs::write(path, serde_json::to_vec_pretty(&curve)?)?),
        None => print_json(&curve),
    }
}

fn fetch(args: FetchArgs) -> Result<()> {
    match fetch_openml(args.id, &args.out)? {
        FetchOutcome::Cached => log::info!("{} is up to date", args.out.display()),
        FetchOutcome::Downloaded(info) => {
            log::info!("downloaded {} ({}) to {}", info.name, info.id, args.out.display());
            print_json(&info)?;
        }
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let file = if args.input.is_dir() {
        args.input.join("report.json")
    } else {
        args.input.clone()
    };
    if !file.exists() {
        return Err(HarnessError::MissingFile(file));
    }
    let stored = ExperimentReport::load(&file)?;
    let baseline = args.baseline.or(stored.summary.baseline);
    let report = ExperimentReport::from_rows(stored.rows, baseline);
    let dir = args
        .out
        .unwrap_or_else(|| file.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf));
    report.write(&dir)?;
    print_json(&report.summary.tallies)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Bench(a) => bench(a),
        Command::SurrogateEval(a) => surrogate(a),
        Command::FetchOpenml(a) => fetch(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
