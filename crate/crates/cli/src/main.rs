use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use npchoice::experiment::{self, files, Algo, ExperimentConfig, FitSpec, GeneratedInstance};
use npchoice::sim::Batch;
use npchoice::{io, oracle, Distance, Error, Result};
use serde::Serialize;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Sparse non-parametric choice model estimation experiments.
#[derive(Parser, Debug)]
#[command(name = "npchoice", version)]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file or directory, depending on the command.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// JSON experiment config; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write ground truth, train/test instances and exact vectors.
    Generate(GenArgs),
    /// Fit on the exact training vector of an instance directory.
    #[command(alias = "fit")]
    FitStatic {
        #[arg(long, value_name = "DIR")]
        instance_dir: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Fit on a simulated observation stream.
    FitDynamic {
        #[arg(long, value_name = "DIR")]
        instance_dir: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Observations added per iteration, or `inf` for exact data.
        #[arg(long, default_value = "inf")]
        kappa: String,
        /// Observations behind the first snapshot.
        #[arg(long)]
        initial_observations: Option<usize>,
    },
    /// Test-set MAE and sparsity of a model file.
    Evaluate {
        #[arg(long, value_name = "DIR")]
        instance_dir: PathBuf,
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// Append the metrics row to this CSV.
        #[arg(long, value_name = "FILE")]
        results: Option<PathBuf>,
    },
    /// Generate, fit and evaluate over a grid; writes sweep.csv and runs.csv.
    Sweep {
        #[command(flatten)]
        gen: GenArgs,
        #[arg(long)]
        algo: Option<Algo>,
        /// Comma-separated distances.
        #[arg(long, value_delimiter = ',')]
        distances: Vec<String>,
        /// Comma-separated training prefixes.
        #[arg(long, value_delimiter = ',')]
        train_m: Vec<usize>,
        /// Comma-separated batch sizes (`inf` for exact data).
        #[arg(long, value_delimiter = ',')]
        kappas: Vec<String>,
        #[arg(long = "T", alias = "max-iter")]
        max_iter: Option<usize>,
        #[arg(long)]
        stop_mae: Option<f64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Curvature ratios of a distance at the training vector.
    Probe {
        #[arg(long, value_name = "DIR")]
        instance_dir: PathBuf,
        #[arg(long, default_value = "l1")]
        distance: String,
        /// Comma-separated step sizes in (0, 1].
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
    },
    /// Solve min over rankings of the cost of the chosen items.
    Oracle {
        #[arg(long, value_name = "FILE")]
        instance: PathBuf,
        #[arg(long, value_name = "FILE")]
        cost: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Bnb)]
        method: Method,
        /// Also write the integer program in LP format.
        #[arg(long, value_name = "FILE")]
        export_ip: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Products, excluding the no-choice option.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k_mix: Option<usize>,
    /// Intensity of the boosted utilities.
    #[arg(long = "L", alias = "intensity")]
    intensity: Option<f64>,
    #[arg(long)]
    m_train: Option<usize>,
    #[arg(long)]
    m_test: Option<usize>,
    #[arg(long)]
    n_instances: Option<usize>,
}

#[derive(Args, Debug)]
struct SolverArgs {
    #[arg(long)]
    algo: Option<Algo>,
    #[arg(long)]
    distance: Option<String>,
    /// Iteration budget.
    #[arg(long = "T", alias = "max-iter")]
    max_iter: Option<usize>,
    /// Training-MAE stopping threshold.
    #[arg(long)]
    stop_mae: Option<f64>,
    /// Run the whole budget without the stopping rule.
    #[arg(long, conflicts_with = "stop_mae")]
    no_stop: bool,
    /// Fit on the first M training assortments only.
    #[arg(long)]
    train_m: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Enum,
    Bnb,
}

fn base_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn apply_gen(cfg: &mut ExperimentConfig, g: &GenArgs) {
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = g.$field { cfg.$field = v; })* };
    }
    set!(n, k_mix, intensity, m_train, m_test, n_instances);
}

fn fit_spec(cfg: &ExperimentConfig, s: &SolverArgs) -> Result<FitSpec> {
    let mut cfg = cfg.clone();
    if let Some(a) = s.algo {
        cfg.algo = a;
    }
    if let Some(t) = s.max_iter {
        cfg.max_iter = t;
    }
    if s.no_stop {
        cfg.stop_train_mae = None;
    } else if let Some(v) = s.stop_mae {
        cfg.stop_train_mae = Some(v);
    }
    let distance: Distance = match &s.distance {
        Some(d) => d.parse()?,
        None => cfg.distance_grid()?.remove(0),
    };
    cfg.fit_spec(distance)
}

fn print_rows<T: Serialize>(rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(std::io::stdout());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Config(format!("writing output: {e}")))?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<stdout>".into(),
        source: e,
    })
}

fn emit<T: Serialize>(out: Option<&Path>, rows: &[T]) -> Result<()> {
    match out {
        Some(path) => io::write_rows(path, rows),
        None => print_rows(rows),
    }
}

fn fit_dir(instance_dir: &Path, stem: &str, spec: &FitSpec) -> PathBuf {
    instance_dir.join(format!("{stem}_{}_{}", spec.algo, spec.distance.name()))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = base_config(&cli)?;
    match &cli.command {
        Command::Generate(g) => {
            let mut cfg = cfg;
            apply_gen(&mut cfg, g);
            let out = cli.out.clone().unwrap_or_else(|| "instances".into());
            for dir in experiment::generate(&cfg, &out)? {
                println!("{}", dir.display());
            }
        }
        Command::FitStatic { instance_dir, solver } => {
            let spec = fit_spec(&cfg, solver)?;
            let inst = GeneratedInstance::load(instance_dir)?;
            let (out, summary) = experiment::fit_static(&inst, &spec, solver.train_m)?;
            let dir = cli.out.clone().unwrap_or_else(|| fit_dir(instance_dir, "fit_static", &spec));
            experiment::save_fit(&dir, &spec, &out, &summary)?;
            log::info!("wrote {}", dir.display());
            print_rows(&[summary])?;
        }
        Command::FitDynamic {
            instance_dir,
            solver,
            kappa,
            initial_observations,
        } => {
            let spec = fit_spec(&cfg, solver)?;
            let batch: Batch = kappa.parse()?;
            let mut inst = GeneratedInstance::load(instance_dir)?;
            if let Some(seed) = cli.seed {
                inst.stream_seed = seed;
            }
            let initial = initial_observations.unwrap_or(cfg.initial_observations);
            let (out, summary, log) = experiment::fit_dynamic(&inst, &spec, batch, initial, solver.train_m)?;
            let dir = cli
                .out
                .clone()
                .unwrap_or_else(|| fit_dir(instance_dir, &format!("fit_dynamic_k{batch}"), &spec));
            experiment::save_fit(&dir, &spec, &out, &summary)?;
            if !log.is_empty() {
                io::write_observations(&dir.join(files::OBSERVATIONS), &log)?;
            }
            log::info!("wrote {}", dir.display());
            print_rows(&[summary])?;
        }
        Command::Evaluate {
            instance_dir,
            model,
            results,
        } => {
            let inst = GeneratedInstance::load(instance_dir)?;
            let row = experiment::evaluate(&inst, &io::read_model(model)?)?;
            if let Some(path) = results {
                io::append_rows(path, std::slice::from_ref(&row))?;
            }
            emit(cli.out.as_deref(), &[row])?;
        }
        Command::Sweep {
            gen,
            algo,
            distances,
            train_m,
            kappas,
            max_iter,
            stop_mae,
            threads,
        } => {
            let mut cfg = cfg;
            apply_gen(&mut cfg, gen);
            if let Some(a) = algo {
                cfg.algo = *a;
            }
            if !distances.is_empty() {
                cfg.distances = distances.clone();
            }
            if !train_m.is_empty() {
                cfg.train_m = train_m.clone();
                cfg.m_train = cfg.m_train.max(*train_m.iter().max().unwrap());
            }
            if !kappas.is_empty() {
                cfg.kappas = kappas.clone();
            }
            if let Some(t) = max_iter {
                cfg.max_iter = *t;
            }
            if let Some(v) = stop_mae {
                cfg.stop_train_mae = Some(*v);
            }
            if let Some(t) = threads {
                cfg.threads = *t;
            }
            let result = experiment::sweep(&cfg)?;
            let out = cli.out.clone().unwrap_or_else(|| "sweep".into());
            io::write_rows(&out.join("sweep.csv"), &result.cells)?;
            io::write_rows(&out.join("runs.csv"), &result.runs)?;
            io::write_json(&out.join("config.json"), &cfg)?;
            print_rows(&result.cells)?;
        }
        Command::Probe {
            instance_dir,
            distance,
            alphas,
        } => {
            let distance: Distance = distance.parse()?;
            let alphas = if alphas.is_empty() {
                experiment::DEFAULT_ALPHAS.to_vec()
            } else {
                alphas.clone()
            };
            let inst = GeneratedInstance::load(instance_dir)?;
            let ratios = experiment::probe(&inst, &distance, &alphas, cfg.seed)?;
            match &cli.out {
                Some(path) => io::write_probe(path, &alphas, &ratios)?,
                None => {
                    #[derive(Serialize)]
                    struct Row {
                        alpha: f64,
                        ratio: f64,
                    }
                    let rows: Vec<Row> = alphas.iter().zip(&ratios).map(|(&alpha, &ratio)| Row { alpha, ratio }).collect();
                    print_rows(&rows)?;
                }
            }
        }
        Command::Oracle {
            instance,
            cost,
            method,
            export_ip,
        } => {
            let inst = io::read_instance(instance)?;
            let c = io::read_costs(cost, &inst)?;
            if let Some(path) = export_ip {
                oracle::export_ip(&inst, &c, path)?;
            }
            let res = match method {
                Method::Enum => oracle::solve_enum(&inst, &c)?,
                Method::Bnb => oracle::solve_bnb(&inst, &c)?,
            };
            #[derive(Serialize)]
            struct Row {
                ranking: String,
                value: f64,
                nodes_explored: u64,
            }
            let row = Row {
                ranking: res.ranking.to_string(),
                value: res.value,
                nodes_explored: res.nodes_explored,
            };
            emit(cli.out.as_deref(), &[row])?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
    }
}
