use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

use premarshal::cutting_plane::{run_cutting_plane_with_master, write_iteration_log, CutParams};
use premarshal::experiment::{run_experiment, write_outputs, ExperimentConfig, Method};
use premarshal::formulation::{
    build_direct_model, evaluate_layout_cvar, solve_built, CvarProblem, SizeGuard, SolvedLayout,
};
use premarshal::milp::{backend_from_env, write_lp, MipBackend, SolveParams};
use premarshal::oracle::brute_force_optimum;
use premarshal::sampling::{sample_scenarios, DistributionSpec, RngSeed};
use premarshal::{loss_distribution, BayConfig, Layout, ScenarioSet};

/// Container pre-marshalling under uncertain ship arrival orders.
#[derive(Debug, Parser)]
#[command(name = "premarshal", version)]
struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file, or directory for `experiment`; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Solver time limit in seconds.
    #[arg(long, global = true, default_value_t = 3600.0)]
    time_limit: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a random arrival-time distribution (mu, Sigma).
    GenDist {
        /// Number of ships R.
        #[arg(long = "R", visible_alias = "ships", value_name = "R")]
        ships: usize,
    },
    /// Sample arrival orders from a distribution and aggregate them.
    GenScenarios {
        #[arg(long)]
        dist: PathBuf,
        /// Number of arrival-time draws.
        #[arg(long, visible_alias = "samples")]
        count: usize,
        /// RNG stream, so train and test sets can differ under one seed.
        #[arg(long, default_value_t = 1)]
        stream: u64,
    },
    /// Optimize a layout.
    Solve(SolveArgs),
    /// CV@R and quantiles of a layout over scenarios.
    Evaluate {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long, default_value_t = 0.75)]
        alpha: f64,
    },
    /// Exhaustive search on a tiny bay.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long, default_value_t = 0.75)]
        alpha: f64,
    },
    /// Train/test experiment over random distributions.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    config: PathBuf,
    /// Scenario set; not needed for deterministic-scheduled.
    #[arg(long)]
    scenarios: Option<PathBuf>,
    #[arg(long, default_value = "cutting-plane")]
    method: Method,
    #[arg(long, default_value_t = 0.75)]
    alpha: f64,
    /// Relative gap of the cutting-plane method.
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    /// Iteration cap of the cutting-plane method (default 10 per scenario).
    #[arg(long)]
    max_iter: Option<usize>,
    /// Write the model (final master for cutting-plane) in LP format.
    #[arg(long)]
    dump_lp: Option<PathBuf>,
    /// Write the cutting-plane iteration log as CSV.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Build the direct model even beyond the size guard.
    #[arg(long)]
    no_size_guard: bool,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// `4x4`, `8x8`, or a bay configuration JSON file.
    #[arg(long, default_value = "4x4")]
    bay: String,
    #[arg(long, value_delimiter = ',', default_value = "0.75")]
    alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "10000")]
    train_sizes: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    test_size: usize,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, value_delimiter = ',', default_value = "cutting-plane,deterministic-scheduled")]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
}

fn read_json<T>(path: &Path, parse: impl FnOnce(&str) -> premarshal::Result<T>) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = io::stdout().lock();
            writeln!(stdout, "{text}")?;
            Ok(())
        }
    }
}

fn backend() -> Result<Box<dyn MipBackend>> {
    backend_from_env().context("selecting the MIP backend")
}

fn dump_model(path: &Path, model: &premarshal::milp::Model) -> Result<()> {
    let mut file = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_lp(model, &mut file)?;
    file.flush()?;
    Ok(())
}

fn solve(cli: &Cli, args: &SolveArgs) -> Result<()> {
    let config = read_json(&args.config, BayConfig::from_json)?;
    let scenarios = match (&args.scenarios, args.method) {
        (Some(path), _) => read_json(path, ScenarioSet::from_json)?,
        (None, Method::DeterministicScheduled) => ScenarioSet::scheduled(config.num_classes()),
        (None, _) => bail!("--scenarios is required for method {}", args.method),
    };
    let problem = CvarProblem::new(config, scenarios, args.alpha)?;
    let params = SolveParams::default().with_time_limit(cli.time_limit);
    let guard = if args.no_size_guard {
        SizeGuard::unlimited()
    } else {
        SizeGuard::default()
    };
    let mut backend = backend()?;

    let solved: SolvedLayout = match args.method {
        Method::Direct | Method::DeterministicScheduled => {
            let problem = if args.method == Method::Direct {
                problem
            } else {
                CvarProblem::deterministic(problem.config().clone())
            };
            let start = Instant::now();
            let direct = build_direct_model(&problem, &guard)?;
            if let Some(path) = &args.dump_lp {
                dump_model(path, &direct.model)?;
            }
            solve_built(&problem, &direct, backend.as_mut(), &params, start)?
        }
        Method::CuttingPlane => {
            let cut = CutParams {
                epsilon: args.epsilon,
                max_iterations: args.max_iter,
                time_limit_seconds: cli.time_limit,
                ..CutParams::default()
            };
            let (solved, state, master) = run_cutting_plane_with_master(&problem, backend.as_mut(), &cut)?;
            if let Some(path) = &args.dump_lp {
                dump_model(path, &master.model)?;
            }
            if let Some(path) = &args.log {
                let mut file = BufWriter::new(File::create(path)?);
                write_iteration_log(&state.log, &mut file)?;
                file.flush()?;
            }
            info!(
                "cutting plane: {} iterations, LB {} UB {}",
                state.log.len(),
                state.lower_bound,
                state.upper_bound
            );
            solved
        }
    };
    emit(cli.out.as_deref(), &solved.to_json()?)
}

fn bay_from_arg(arg: &str) -> Result<BayConfig> {
    Ok(match arg {
        "4x4" => BayConfig::bay_4x4(),
        "8x8" => BayConfig::bay_8x8(),
        path => read_json(Path::new(path), BayConfig::from_json)?,
    })
}

fn experiment(cli: &Cli, args: &ExperimentArgs) -> Result<ExitCode> {
    let bay = bay_from_arg(&args.bay)?;
    let dataset = match args.bay.as_str() {
        "4x4" | "8x8" => args.bay.clone(),
        path => Path::new(path)
            .file_stem()
            .map_or_else(|| "custom".into(), |s| s.to_string_lossy().into_owned()),
    };
    let config = ExperimentConfig {
        dataset,
        bay,
        alphas: args.alphas.clone(),
        train_sizes: args.train_sizes.clone(),
        test_size: args.test_size,
        trials: args.trials,
        methods: args.methods.clone(),
        seed: cli.seed,
        time_limit_seconds: cli.time_limit,
        epsilon: args.epsilon,
    };
    let results = run_experiment(&config, backend()?.as_mut())?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    write_outputs(&dir, &results)?;
    println!("{}", fs::read_to_string(dir.join("aggregate.md"))?);
    if results.all_failed() {
        eprintln!("every trial failed");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::GenDist { ships } => {
            let spec = DistributionSpec::random(*ships, &mut RngSeed::new(cli.seed, 0).rng())?;
            emit(cli.out.as_deref(), &serde_json::to_string_pretty(&spec)?)?;
        }
        Command::GenScenarios { dist, count, stream } => {
            let spec = read_json(dist, DistributionSpec::from_json)?;
            let set = sample_scenarios(&spec, *count, &mut RngSeed::new(cli.seed, *stream).rng())?;
            emit(cli.out.as_deref(), &serde_json::to_string_pretty(&set)?)?;
        }
        Command::Solve(args) => solve(cli, args)?,
        Command::Evaluate {
            layout,
            scenarios,
            alpha,
        } => {
            let layout = read_json(layout, Layout::from_json)?;
            let scenarios = read_json(scenarios, ScenarioSet::from_json)?;
            let cvar = evaluate_layout_cvar(&layout, &scenarios, *alpha)?;
            let losses = loss_distribution(&layout, &scenarios)?;
            let report = json!({
                "alpha": alpha,
                "var": cvar.var_gamma,
                "cvar": cvar.cvar,
                "mean": losses.expected(),
                "q75": losses.quantile(0.75)?,
                "q90": losses.quantile(0.90)?,
                "q99": losses.quantile(0.99)?,
                "max": losses.max_loss(),
            });
            emit(cli.out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
        }
        Command::Oracle {
            config,
            scenarios,
            alpha,
        } => {
            let config = read_json(config, BayConfig::from_json)?;
            let scenarios = read_json(scenarios, ScenarioSet::from_json)?;
            let best = brute_force_optimum(&config, &scenarios, *alpha)?;
            let mut value = serde_json::to_value(&best.layout)?;
            value["objective"] = json!(best.objective);
            value["layouts_evaluated"] = json!(best.layouts_evaluated);
            emit(cli.out.as_deref(), &serde_json::to_string_pretty(&value)?)?;
        }
        Command::Experiment(args) => return experiment(cli, args),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
