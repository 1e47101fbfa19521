//! Differential-evolution search over agent hyperparameters in an
//! unbounded transformed space, plus the staged fitting of every agent.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::experiments::{simulation_seed, Experiment, Protocol, SharedSetup};
use crate::gridworld::{sample_world, QuadrantLayout, WorldConfig};
use crate::registry::{ParamRegistry, RegistryEntry, EXPERT_KEY};
use crate::rl::{AgentParams, ModelKind, ParamName};
use crate::rng::{stream, Purpose};
use crate::social::pretrain_expert;

/// Largest discount factor a candidate may decode to.
pub const GAMMA_MAX: f64 = 1.0 - 1e-6;
/// Largest planning rate a candidate may decode to; planning cost grows
/// linearly with it.
pub const LAMBDA_MAX: f64 = 100.0;

fn logit(v: f64) -> f64 {
    (v / (1.0 - v)).ln()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Maps a parameter value into the unbounded search space.
pub fn to_unbounded(name: ParamName, v: f64) -> f64 {
    if name.is_unit_interval() {
        logit(v)
    } else {
        v.ln()
    }
}

/// Inverse of [`to_unbounded`]; the discount factor and the planning rate
/// are clamped.
pub fn from_unbounded(name: ParamName, x: f64) -> f64 {
    match name {
        ParamName::Gamma => sigmoid(x).min(GAMMA_MAX),
        ParamName::Lambda => x.exp().min(LAMBDA_MAX),
        n if n.is_unit_interval() => sigmoid(x),
        _ => x.exp(),
    }
}

/// Range the initial population is drawn from, in natural units.
fn init_range(name: ParamName) -> (f64, f64) {
    match name {
        ParamName::Gamma => (0.5, 0.99),
        ParamName::Beta => (0.05, 5.0),
        ParamName::Lambda | ParamName::Kappa => (0.5, 50.0),
        _ => (0.05, 0.95),
    }
}

/// Free parameters of one model plus the frozen values.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub model: ModelKind,
    pub free: Vec<ParamName>,
    pub frozen: BTreeSet<ParamName>,
    /// Supplies the frozen values.
    pub base: AgentParams,
}

impl SearchSpace {
    pub fn new(model: ModelKind, frozen_values: &[(ParamName, f64)]) -> Result<Self> {
        let names = model.parameter_names();
        let mut base = AgentParams::default();
        let mut frozen = BTreeSet::new();
        for &(name, v) in frozen_values {
            if !names.contains(&name) {
                return Err(Error::InvalidParam {
                    name: name.as_str(),
                    value: v,
                    reason: "not used by this model",
                });
            }
            crate::rl::check_range(name, v)?;
            base.set(name, v);
            frozen.insert(name);
        }
        let free = names.into_iter().filter(|n| !frozen.contains(n)).collect();
        Ok(SearchSpace {
            model,
            free,
            frozen,
            base,
        })
    }

    pub fn dim(&self) -> usize {
        self.free.len()
    }

    pub fn decode(&self, x: &[f64]) -> AgentParams {
        let mut p = self.base;
        for (name, v) in self.free.iter().zip(x) {
            p.set(*name, from_unbounded(*name, *v));
        }
        p
    }

    pub fn encode(&self, p: &AgentParams) -> Vec<f64> {
        self.free
            .iter()
            .map(|n| to_unbounded(*n, p.get(*n).unwrap_or(f64::NAN)))
            .collect()
    }

    pub fn init_bounds(&self) -> Vec<(f64, f64)> {
        self.free
            .iter()
            .map(|n| {
                let (lo, hi) = init_range(*n);
                (to_unbounded(*n, lo), to_unbounded(*n, hi))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DEConfig {
    /// `None` means ten times the search dimension.
    pub population: Option<usize>,
    pub mutation: f64,
    pub crossover: f64,
    pub generations: usize,
    pub seed: u64,
}

impl Default for DEConfig {
    fn default() -> Self {
        DEConfig {
            population: None,
            mutation: 0.8,
            crossover: 0.9,
            generations: 50,
            seed: 0,
        }
    }
}

impl DEConfig {
    pub fn population_for(&self, dim: usize) -> usize {
        self.population.unwrap_or(10 * dim).max(4)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, value, reason| Err(Error::InvalidParam { name, value, reason });
        if self.population.is_some_and(|p| p < 4) {
            return bad("population", self.population.unwrap_or(0) as f64, "must be at least 4");
        }
        if !(self.mutation > 0.0 && self.mutation <= 2.0) {
            return bad("mutation", self.mutation, "outside (0, 2]");
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return bad("crossover", self.crossover, "outside [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub generation: usize,
    pub best_so_far: f64,
    pub best: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DEResult {
    pub best: Vec<f64>,
    pub best_value: f64,
    pub history: Vec<Generation>,
    pub evaluations: usize,
}

fn score(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

fn evaluate<F>(xs: &[Vec<f64>], f: &F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    xs.par_iter().map(|x| f(x).map(score)).collect()
}

fn record(generation: usize, pop: &[Vec<f64>], fit: &[f64]) -> Generation {
    let (i, best) = fit
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    Generation {
        generation,
        best_so_far: best,
        best: pop[i].clone(),
        mean: fit.iter().sum::<f64>() / fit.len() as f64,
    }
}

/// DE/rand/1/bin maximising `f`. The initial population is uniform inside
/// `init_bounds`; later candidates are unconstrained. Candidates of a
/// generation are evaluated in parallel and selected serially.
pub fn differential_evolution<F>(init_bounds: &[(f64, f64)], config: &DEConfig, f: F) -> Result<DEResult>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    config.validate()?;
    let dim = init_bounds.len();
    let np = config.population_for(dim);
    let mut rng = stream(config.seed, Purpose::Optimizer);

    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|_| {
            init_bounds
                .iter()
                .map(|&(lo, hi)| if lo < hi { rng.random_range(lo..hi) } else { lo })
                .collect()
        })
        .collect();
    let mut fit = evaluate(&pop, &f)?;
    let mut evaluations = np;
    let mut history = vec![record(0, &pop, &fit)];

    for g in 1..=config.generations {
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let mut pick = |taken: &[usize]| loop {
                    let k = rng.random_range(0..np);
                    if k != i && !taken.contains(&k) {
                        break k;
                    }
                };
                let a = pick(&[]);
                let b = pick(&[a]);
                let c = pick(&[a, b]);
                let forced = if dim > 0 { rng.random_range(0..dim) } else { 0 };
                (0..dim)
                    .map(|j| {
                        if j == forced || rng.random::<f64>() < config.crossover {
                            pop[a][j] + config.mutation * (pop[b][j] - pop[c][j])
                        } else {
                            pop[i][j]
                        }
                    })
                    .collect()
            })
            .collect();
        let trial_fit = evaluate(&trials, &f)?;
        evaluations += np;
        for (i, (t, v)) in trials.into_iter().zip(trial_fit).enumerate() {
            if v >= fit[i] {
                pop[i] = t;
                fit[i] = v;
            }
        }
        let rec = record(g, &pop, &fit);
        log::debug!("generation {g}: best {:.4}, mean {:.4}", rec.best_so_far, rec.mean);
        history.push(rec);
    }

    let last = history.last().expect("history is never empty");
    Ok(DEResult {
        best: last.best.clone(),
        best_value: last.best_so_far,
        evaluations,
        history,
    })
}

/// Searches `space` for the parameters maximising `objective`.
pub fn de_optimize<F>(space: &SearchSpace, config: &DEConfig, objective: F) -> Result<(AgentParams, DEResult)>
where
    F: Fn(&AgentParams) -> Result<f64> + Sync,
{
    // Candidates that decode outside the parameter domain are rejected.
    let result = differential_evolution(&space.init_bounds(), config, |x| {
        let p = space.decode(x);
        match p.validate(space.model) {
            Ok(()) => objective(&p),
            Err(_) => Ok(f64::NEG_INFINITY),
        }
    })?;
    Ok((space.decode(&result.best), result))
}

/// What is being fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Target {
    Expert,
    Learner(ModelKind),
}

impl Target {
    /// Fitting order: the expert, then the asocial learners, then the
    /// social ones.
    pub const STAGED: [Target; 7] = [
        Target::Expert,
        Target::Learner(ModelKind::AS_MF),
        Target::Learner(ModelKind::AS_MB),
        Target::Learner(ModelKind::DB_MF),
        Target::Learner(ModelKind::DB_MB),
        Target::Learner(ModelKind::VS_MF),
        Target::Learner(ModelKind::VS_MB),
    ];

    pub fn key(self) -> &'static str {
        match self {
            Target::Expert => EXPERT_KEY,
            Target::Learner(m) => m.name(),
        }
    }

    pub fn model(self) -> ModelKind {
        match self {
            Target::Expert => ModelKind::AS_MB,
            Target::Learner(m) => m,
        }
    }

    pub fn window(self) -> Window {
        match self {
            Target::Expert => Window::Pretraining,
            Target::Learner(m) if m.is_social() => Window::Training,
            Target::Learner(_) => Window::AllEpisodes,
        }
    }

    fn stage(self) -> usize {
        match self {
            Target::Expert => 0,
            Target::Learner(m) if m.is_social() => 2,
            Target::Learner(_) => 1,
        }
    }
}

impl std::str::FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == EXPERT_KEY {
            Ok(Target::Expert)
        } else {
            s.parse()
                .map(Target::Learner)
                .map_err(|_| format!("unknown agent `{s}`"))
        }
    }
}

/// Episodes whose rewards count towards the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    /// The expert's own pre-training episodes.
    Pretraining,
    Training,
    AllEpisodes,
}

enum Cached {
    Worlds(Vec<(u64, WorldConfig)>),
    Setups(Vec<SharedSetup>),
}

/// Mean summed reward over a fixed set of simulations. Worlds, experts and
/// demonstrations are built once, so every candidate faces the same
/// environments.
pub struct Objective {
    target: Target,
    protocol: Protocol,
    cached: Cached,
}

impl Objective {
    /// `expert_params` is required for learners and ignored for the expert.
    pub fn new(
        layouts: &[QuadrantLayout; 4],
        target: Target,
        expert_params: Option<AgentParams>,
        n_sims: usize,
        seed: u64,
        protocol: Protocol,
    ) -> Result<Self> {
        let seeds: Vec<u64> = (0..n_sims).map(|i| simulation_seed(seed, i)).collect();
        let cached = match target {
            Target::Expert => Cached::Worlds(
                seeds
                    .iter()
                    .map(|&s| (s, sample_world(layouts, &mut stream(s, Purpose::World))))
                    .collect(),
            ),
            Target::Learner(_) => {
                let expert = expert_params.ok_or_else(|| Error::MissingParams(EXPERT_KEY.into()))?;
                Cached::Setups(
                    seeds
                        .par_iter()
                        .map(|&s| SharedSetup::new(layouts, s, expert, &protocol))
                        .collect::<Result<_>>()?,
                )
            }
        };
        Ok(Objective {
            target,
            protocol,
            cached,
        })
    }

    pub fn evaluate(&self, params: &AgentParams) -> Result<f64> {
        params.validate(self.target.model())?;
        let totals: Vec<f64> = match &self.cached {
            Cached::Worlds(worlds) => worlds
                .iter()
                .map(|(s, w)| {
                    let e = pretrain_expert(w, *s, *params, self.protocol.pretrain_episodes, self.protocol.max_steps)?;
                    Ok(e.episode_rewards.iter().map(|r| f64::from(*r)).sum())
                })
                .collect::<Result<_>>()?,
            Cached::Setups(setups) => {
                let model = self.target.model();
                let window = match self.target.window() {
                    Window::Training => self.protocol.train_episodes,
                    _ => self.protocol.total_episodes(),
                };
                setups
                    .iter()
                    .enumerate()
                    .map(|(i, setup)| {
                        let rec = setup.run(Experiment::Exp1, model, *params, &self.protocol, i, false)?;
                        Ok(rec.episodes[..window].iter().map(|e| f64::from(e.cum_reward)).sum())
                    })
                    .collect::<Result<_>>()?
            }
        };
        if totals.is_empty() {
            return Ok(0.0);
        }
        Ok(totals.iter().sum::<f64>() / totals.len() as f64)
    }
}

/// Mean summed reward of `params` within the target's window.
pub fn objective(
    layouts: &[QuadrantLayout; 4],
    target: Target,
    expert_params: Option<AgentParams>,
    params: &AgentParams,
    n_sims: usize,
    seed: u64,
    protocol: Protocol,
) -> Result<f64> {
    Objective::new(layouts, target, expert_params, n_sims, seed, protocol)?.evaluate(params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    /// Simulations per objective evaluation.
    pub n_sims: usize,
    /// Seed of the simulations shared by every candidate.
    pub seed: u64,
    pub de: DEConfig,
    pub protocol: Protocol,
}

/// Search space of a target given what has already been fitted: social
/// learners inherit α (and η) from their asocial counterpart.
pub fn space_for(target: Target, registry: &ParamRegistry) -> Result<SearchSpace> {
    match target {
        Target::Learner(m) if m.is_social() => {
            let base = registry.learner(m.asocial_counterpart())?;
            let mut frozen = vec![(ParamName::Alpha, base.alpha)];
            if m.is_model_based() {
                frozen.push((ParamName::Eta, base.eta()));
            }
            SearchSpace::new(m, &frozen)
        }
        t => SearchSpace::new(t.model(), &[]),
    }
}

/// Fits one target. Learners need the expert in `registry`; social learners
/// also need their asocial counterpart.
pub fn fit_target(
    layouts: &[QuadrantLayout; 4],
    registry: &ParamRegistry,
    target: Target,
    config: &FitConfig,
) -> Result<(RegistryEntry, DEResult)> {
    let space = space_for(target, registry)?;
    let expert = match target {
        Target::Expert => None,
        Target::Learner(_) => Some(registry.expert()?),
    };
    let obj = Objective::new(layouts, target, expert, config.n_sims, config.seed, config.protocol)?;
    let (params, result) = de_optimize(&space, &config.de, |p| obj.evaluate(p))?;
    let entry = RegistryEntry {
        params,
        frozen: space.frozen.clone(),
        objective: result.best_value,
        seed: config.de.seed,
    };
    Ok((entry, result))
}

/// Fits `targets` in stage order into `registry`, calling `on_stage` after
/// each one (for checkpointing).
pub fn fit_all_models(
    layouts: &[QuadrantLayout; 4],
    mut registry: ParamRegistry,
    targets: &[Target],
    config: &FitConfig,
    mut on_stage: impl FnMut(Target, &ParamRegistry, &DEResult) -> Result<()>,
) -> Result<ParamRegistry> {
    let mut ordered = targets.to_vec();
    ordered.sort_by_key(|t| (t.stage(), *t));
    ordered.dedup();
    for target in ordered {
        log::info!("fitting {} over {} simulations", target.key(), config.n_sims);
        let (entry, result) = fit_target(layouts, &registry, target, config)?;
        log::info!(
            "{}: objective {:.3} after {} evaluations",
            target.key(),
            entry.objective,
            result.evaluations
        );
        registry.insert(target.key(), entry);
        on_stage(target, &registry, &result)?;
    }
    Ok(registry)
}
