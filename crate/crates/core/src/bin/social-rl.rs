use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use social_rl::config::{Overrides, OptimizeOverrides, RunConfig, OUTPUT_DIR_ENV};
use social_rl::experiments::io::{read_dataset, write_dataset};
use social_rl::experiments::{run_experiments, Dataset, Phase};
use social_rl::gridworld::load_layouts;
use social_rl::metrics::{compute_metrics, MetricsConfig, Summary};
use social_rl::optimizer::fit_all_models;
use social_rl::registry::ParamRegistry;
use social_rl::{Error, Result};

/// Grid-world foraging simulations with asocial and social learners.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run experiments and write per-simulation CSV tables.
    Run(RunArgs),
    /// Fit hyperparameters by differential evolution and write params.csv.
    Optimize(OptimizeArgs),
    /// Compute summary statistics from the tables of a previous run.
    Metrics(MetricsArgs),
    /// Check a quadrant layout file.
    ValidateLayout {
        path: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML file with any of the settings below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Simulations per condition [default: 200].
    #[arg(long)]
    n_sims: Option<usize>,
    /// Use 1000 simulations per condition.
    #[arg(long)]
    paper_scale: bool,
    /// Base seed shared by every experiment and model [default: 1].
    #[arg(long)]
    seed: Option<u64>,
    /// Training episodes with the expert [default: 10].
    #[arg(long)]
    train_episodes: Option<usize>,
    /// Asocial test episodes [default: 10].
    #[arg(long)]
    test_episodes: Option<usize>,
    /// Expert pre-training episodes [default: 120].
    #[arg(long)]
    pretrain_episodes: Option<usize>,
    /// Step cap per episode [default: 40].
    #[arg(long)]
    max_steps: Option<usize>,
    /// Let the expert keep learning while it demonstrates.
    #[arg(long)]
    expert_learns: bool,
    /// Quadrant layout file [default: built-in quadrants].
    #[arg(long)]
    layouts: Option<PathBuf>,
    /// Parameter registry [default: built-in params.csv].
    #[arg(long)]
    params: Option<PathBuf>,
    /// Output directory [default: results].
    #[arg(long, env = OUTPUT_DIR_ENV)]
    output_dir: Option<PathBuf>,
    /// Worker threads [default: all cores]; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            n_sims: self.n_sims,
            paper_scale: self.paper_scale.then_some(true),
            base_seed: self.seed,
            train_episodes: self.train_episodes,
            test_episodes: self.test_episodes,
            pretrain_episodes: self.pretrain_episodes,
            max_steps: self.max_steps,
            expert_learns: self.expert_learns.then_some(true),
            layouts: self.layouts.clone(),
            params: self.params.clone(),
            output_dir: self.output_dir.clone(),
            workers: self.workers,
            ..Default::default()
        }
    }

    fn resolve(&self, extra: impl FnOnce(&mut Overrides)) -> Result<RunConfig> {
        let mut flags = self.overrides();
        extra(&mut flags);
        // clap already folded the environment variable into `output_dir`.
        let config = RunConfig::resolve(self.config.as_deref(), None, &flags)?;
        if let Some(n) = config.workers {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not size the worker pool: {e}");
            }
        }
        Ok(config)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Experiments to run, comma separated [default: exp1,exp2,exp3].
    #[arg(long, value_delimiter = ',')]
    experiments: Option<Vec<String>>,
    /// Models to run, comma separated [default: all six].
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Also write per-step traces (steps.csv).
    #[arg(long)]
    record_steps: bool,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    common: Common,
    /// Agents to fit, comma separated [default: expert and all six models].
    #[arg(long, value_delimiter = ',')]
    targets: Option<Vec<String>>,
    /// Simulations per objective evaluation [default: 20].
    #[arg(long)]
    fit_sims: Option<usize>,
    /// Seed of the search and of its simulations [default: 1].
    #[arg(long)]
    fit_seed: Option<u64>,
    /// Population size [default: 10 x search dimension].
    #[arg(long)]
    population: Option<usize>,
    /// Generations [default: 50].
    #[arg(long)]
    generations: Option<usize>,
    /// Mutation factor F [default: 0.8].
    #[arg(long)]
    mutation: Option<f64>,
    /// Crossover rate CR [default: 0.9].
    #[arg(long)]
    crossover: Option<f64>,
    /// Registry to write [default: <output-dir>/params.csv].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[command(flatten)]
    common: Common,
    /// Largest distance reported on its own [default: 8].
    #[arg(long)]
    max_bucket: Option<u32>,
    /// Quantile bins of the belief-stability inset [default: 5].
    #[arg(long)]
    inset_bins: Option<usize>,
}

fn print_summary(dataset: &Dataset) {
    println!("{:<5} {:<6} {:>18} {:>18}", "exp", "model", "train", "test");
    for experiment in dataset.experiments() {
        for model in dataset.models(experiment) {
            let cell = |phase: Phase| {
                let s = Summary::of_values(
                    &dataset
                        .select(experiment, model)
                        .map(|r| {
                            let v: Vec<f64> = r
                                .episodes
                                .iter()
                                .filter(|e| e.phase == phase)
                                .map(|e| f64::from(e.cum_reward))
                                .collect();
                            v.iter().sum::<f64>() / v.len().max(1) as f64
                        })
                        .collect::<Vec<_>>(),
                );
                format!("{:8.2} ± {:6.2}", s.mean, s.sem)
            };
            println!(
                "{:<5} {:<6} {:>18} {:>18}",
                experiment.name(),
                model.name(),
                cell(Phase::Train),
                cell(Phase::Test)
            );
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let config = args.common.resolve(|o| {
        o.experiments = args.experiments.clone();
        o.models = args.models.clone();
        o.record_steps = args.record_steps.then_some(true);
    })?;
    let layouts = config.layouts()?;
    let registry = config.registry()?;
    log::info!(
        "running {} simulation(s) of {} experiment(s) x {} model(s)",
        config.n_sims,
        config.experiments.len(),
        config.models.len()
    );
    let dataset = run_experiments(&layouts, &registry, &config.plan())?;
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| Error::Input {
            path: config.output_dir.clone(),
            message: format!("cannot create output directory: {e}"),
        })?;
    write_dataset(&dataset, &config.output_dir)?;
    print_summary(&dataset);
    Ok(())
}

fn cmd_optimize(args: OptimizeArgs) -> Result<()> {
    let config = args.common.resolve(|o| {
        o.optimize = Some(OptimizeOverrides {
            targets: args.targets.clone(),
            n_sims: args.fit_sims,
            seed: args.fit_seed,
            population: args.population,
            generations: args.generations,
            mutation: args.mutation,
            crossover: args.crossover,
        });
    })?;
    let layouts = config.layouts()?;
    // Earlier stages may come from an existing registry.
    let start = match &config.params {
        Some(path) => ParamRegistry::load(path)?,
        None => ParamRegistry::default(),
    };
    let out = args.out.unwrap_or_else(|| config.output_dir.join("params.csv"));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let fit = config.fit_config();
    let registry = fit_all_models(&layouts, start, &config.optimize.targets, &fit, |target, registry, result| {
        eprintln!(
            "{}: objective {:.3} ({} evaluations)",
            target.key(),
            result.best_value,
            result.evaluations
        );
        registry.save(&out)
    })?;
    registry.save(&out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_metrics(args: MetricsArgs) -> Result<()> {
    let config = args.common.resolve(|_| {})?;
    let layouts = config.layouts()?;
    let dataset = read_dataset(&config.output_dir)?;
    let defaults = MetricsConfig::default();
    let metrics_config = MetricsConfig {
        max_bucket: args.max_bucket.unwrap_or(defaults.max_bucket),
        inset_bins: args.inset_bins.unwrap_or(defaults.inset_bins),
    };
    let table = compute_metrics(&dataset, &layouts, &metrics_config)?;
    let path = config.output_dir.join("metrics.csv");
    table.save(&path)?;
    println!("wrote {} ({} rows)", path.display(), table.rows.len());
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<()> {
    let layouts = load_layouts(path)?;
    for (i, l) in layouts.iter().enumerate() {
        let (r, c) = l.reward_cell();
        println!("quadrant {}: reward at ({r}, {c}), {} wall(s)", i + 1, l.walls().len());
    }
    println!("{}: ok", path.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::ValidateLayout { path } => cmd_validate(&path),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_invalid_input() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
