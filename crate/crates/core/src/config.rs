//! Run configuration: built-in defaults, overridden by a TOML file, then by
//! the environment, then by command-line flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::experiments::{Experiment, ExperimentPlan, Protocol};
use crate::gridworld::{default_layouts, load_layouts, QuadrantLayout};
use crate::optimizer::{DEConfig, FitConfig, Target};
use crate::registry::ParamRegistry;
use crate::rl::ModelKind;

pub const DESK_SIMS: usize = 200;
pub const FULL_SCALE_SIMS: usize = 1000;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_FIT_SIMS: usize = 20;
pub const OUTPUT_DIR_ENV: &str = "SOCIAL_RL_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "results";

/// Every overridable setting; unset fields leave the lower layer alone.
/// Used both for the config file and for command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub experiments: Option<Vec<String>>,
    pub models: Option<Vec<String>>,
    pub n_sims: Option<usize>,
    pub paper_scale: Option<bool>,
    pub base_seed: Option<u64>,
    pub train_episodes: Option<usize>,
    pub test_episodes: Option<usize>,
    pub pretrain_episodes: Option<usize>,
    pub max_steps: Option<usize>,
    pub expert_learns: Option<bool>,
    pub layouts: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub record_steps: Option<bool>,
    pub optimize: Option<OptimizeOverrides>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeOverrides {
    pub targets: Option<Vec<String>>,
    pub n_sims: Option<usize>,
    pub seed: Option<u64>,
    pub population: Option<usize>,
    pub generations: Option<usize>,
    pub mutation: Option<f64>,
    pub crossover: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeConfig {
    pub targets: Vec<Target>,
    pub n_sims: usize,
    pub seed: u64,
    pub de: DEConfig,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            targets: Target::STAGED.to_vec(),
            n_sims: DEFAULT_FIT_SIMS,
            seed: DEFAULT_SEED,
            de: DEConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiments: Vec<Experiment>,
    pub models: Vec<ModelKind>,
    pub n_sims: usize,
    pub base_seed: u64,
    pub protocol: Protocol,
    /// `None` uses the built-in quadrants.
    pub layouts: Option<PathBuf>,
    /// `None` uses the built-in registry.
    pub params: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// `None` leaves the thread count to the runtime.
    pub workers: Option<usize>,
    pub record_steps: bool,
    pub optimize: OptimizeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiments: Experiment::ALL.to_vec(),
            models: ModelKind::ALL.to_vec(),
            n_sims: DESK_SIMS,
            base_seed: DEFAULT_SEED,
            protocol: Protocol::default(),
            layouts: None,
            params: None,
            output_dir: PathBuf::from(DEFAULT_OUTPUT_DIR),
            workers: None,
            record_steps: false,
            optimize: OptimizeConfig::default(),
        }
    }
}

fn parse_list<T: std::str::FromStr>(items: &[String], what: &str, origin: &Path) -> Result<Vec<T>> {
    items
        .iter()
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::input(origin, format!("unknown {what} `{s}`")))
        })
        .collect()
}

impl Overrides {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::input(path, format!("cannot read config: {e}")))?;
        toml::from_str(&text).map_err(|e| Error::input(path, e.to_string()))
    }
}

impl RunConfig {
    /// Applies one layer of overrides. `origin` names the layer in errors.
    pub fn apply(&mut self, o: &Overrides, origin: &Path) -> Result<()> {
        if let Some(v) = &o.experiments {
            self.experiments = parse_list(v, "experiment", origin)?;
        }
        if let Some(v) = &o.models {
            self.models = parse_list(v, "model", origin)?;
        }
        if o.paper_scale == Some(true) {
            self.n_sims = FULL_SCALE_SIMS;
        }
        if let Some(v) = o.n_sims {
            self.n_sims = v;
        }
        if let Some(v) = o.base_seed {
            self.base_seed = v;
        }
        let p = &mut self.protocol;
        p.train_episodes = o.train_episodes.unwrap_or(p.train_episodes);
        p.test_episodes = o.test_episodes.unwrap_or(p.test_episodes);
        p.pretrain_episodes = o.pretrain_episodes.unwrap_or(p.pretrain_episodes);
        p.max_steps = o.max_steps.unwrap_or(p.max_steps);
        p.expert_learns = o.expert_learns.unwrap_or(p.expert_learns);
        if o.layouts.is_some() {
            self.layouts.clone_from(&o.layouts);
        }
        if o.params.is_some() {
            self.params.clone_from(&o.params);
        }
        if let Some(v) = &o.output_dir {
            self.output_dir.clone_from(v);
        }
        if o.workers.is_some() {
            self.workers = o.workers;
        }
        self.record_steps = o.record_steps.unwrap_or(self.record_steps);
        if let Some(opt) = &o.optimize {
            let c = &mut self.optimize;
            if let Some(v) = &opt.targets {
                c.targets = parse_list(v, "agent", origin)?;
            }
            c.n_sims = opt.n_sims.unwrap_or(c.n_sims);
            c.seed = opt.seed.unwrap_or(c.seed);
            if opt.population.is_some() {
                c.de.population = opt.population;
            }
            c.de.generations = opt.generations.unwrap_or(c.de.generations);
            c.de.mutation = opt.mutation.unwrap_or(c.de.mutation);
            c.de.crossover = opt.crossover.unwrap_or(c.de.crossover);
            c.de.seed = c.seed;
        }
        Ok(())
    }

    /// Defaults, then the optional file, then the output-directory
    /// environment variable, then `flags`.
    pub fn resolve(file: Option<&Path>, env_output_dir: Option<PathBuf>, flags: &Overrides) -> Result<Self> {
        let mut config = RunConfig::default();
        if let Some(path) = file {
            config.apply(&Overrides::load(path)?, path)?;
        }
        if let Some(dir) = env_output_dir {
            config.output_dir = dir;
        }
        config.apply(flags, Path::new("<command line>"))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, value: usize, reason| {
            Err(Error::InvalidParam {
                name,
                value: value as f64,
                reason,
            })
        };
        if self.protocol.max_steps == 0 {
            return bad("max_steps", 0, "must be positive");
        }
        if self.workers == Some(0) {
            return bad("workers", 0, "must be positive");
        }
        if self.experiments.is_empty() || self.models.is_empty() {
            return Err(Error::input("<config>", "no experiments or models selected"));
        }
        self.optimize.de.validate()
    }

    pub fn layouts(&self) -> Result<[QuadrantLayout; 4]> {
        match &self.layouts {
            Some(path) => load_layouts(path),
            None => Ok(default_layouts()),
        }
    }

    pub fn registry(&self) -> Result<ParamRegistry> {
        match &self.params {
            Some(path) => ParamRegistry::load(path),
            None => Ok(ParamRegistry::builtin()),
        }
    }

    pub fn plan(&self) -> ExperimentPlan {
        ExperimentPlan {
            experiments: self.experiments.clone(),
            models: self.models.clone(),
            n_sims: self.n_sims,
            base_seed: self.base_seed,
            protocol: self.protocol,
            record_steps: self.record_steps,
        }
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            n_sims: self.optimize.n_sims,
            seed: self.optimize.seed,
            de: DEConfig {
                seed: self.optimize.seed,
                ..self.optimize.de
            },
            protocol: self.protocol,
        }
    }
}
