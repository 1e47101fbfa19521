//! Whole simulations: world draw, expert pre-training, the social training
//! phase, the experiment-specific manipulation and the asocial test phase.

pub mod io;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

pub use io::{read_dataset, write_dataset, OutputFiles};

use crate::error::{Error, Result};
use crate::gridworld::{sample_world, Action, QuadrantLayout, WorldConfig, WorldDescriptor};
use crate::registry::ParamRegistry;
use crate::rl::{sample_index, Agent, AgentParams, BeliefModel, ModelKind, QTable, SocialMode};
use crate::rng::{split, stream, substream, Purpose, Stream};
use crate::social::{
    belief_distance_map, db_policy, generate_expert_trace, pretrain_expert, social_policy,
    vs_bonus, ExpertObservation, ExpertTrace, SocialDistance, DISTANCE_CAP, DISTANCE_MAX_ITER,
    DISTANCE_TOL, EXPERT_PRETRAIN_EPISODES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Experiment {
    /// Test phase identical to training.
    Exp1,
    /// Two reward values swapped at the start of the test phase.
    Exp2,
    /// Start states shifted toward the corners at the start of the test phase.
    Exp3,
}

impl Experiment {
    pub const ALL: [Experiment; 3] = [Experiment::Exp1, Experiment::Exp2, Experiment::Exp3];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Exp1 => "exp1",
            Experiment::Exp2 => "exp2",
            Experiment::Exp3 => "exp3",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}` (expected exp1, exp2 or exp3)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Train,
    Test,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Test => "test",
        }
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Phase::Train),
            "test" => Ok(Phase::Test),
            _ => Err(format!("unknown phase `{s}`")),
        }
    }
}

/// Episode counts and caps of the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Protocol {
    pub train_episodes: usize,
    pub test_episodes: usize,
    pub max_steps: usize,
    pub pretrain_episodes: usize,
    /// Let the expert keep learning while it demonstrates.
    pub expert_learns: bool,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            train_episodes: 10,
            test_episodes: 10,
            max_steps: 40,
            pretrain_episodes: EXPERT_PRETRAIN_EPISODES,
            expert_learns: false,
        }
    }
}

impl Protocol {
    pub fn total_episodes(&self) -> usize {
        self.train_episodes + self.test_episodes
    }
}

pub struct EpisodeRngs<'a> {
    pub actions: &'a mut Stream,
    pub planning: &'a mut Stream,
    pub noise: &'a mut Stream,
}

/// Which policy component drove a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyComponent {
    Asocial,
    DecisionBiased,
    ValueShaped,
}

impl PolicyComponent {
    pub fn name(self) -> &'static str {
        match self {
            PolicyComponent::Asocial => "asocial",
            PolicyComponent::DecisionBiased => "decision_biased",
            PolicyComponent::ValueShaped => "value_shaped",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub state: usize,
    pub action: Action,
    pub reward: i32,
    pub expert_state: Option<usize>,
    pub component: PolicyComponent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub cum_reward: i32,
    pub steps: usize,
    pub terminated_by_reward: bool,
    /// Every state occupied during the episode, start included.
    pub visited: Vec<usize>,
    /// Filled only when step recording is requested.
    pub step_records: Vec<StepRecord>,
}

/// Runs one episode, learning online. `trace` is the expert's episode when
/// the expert is present; asocial agents ignore it.
pub fn run_episode(
    agent: &mut Agent,
    world: &WorldConfig,
    start: usize,
    trace: Option<&ExpertTrace>,
    max_steps: usize,
    rngs: &mut EpisodeRngs<'_>,
    record_steps: bool,
) -> Result<EpisodeLog> {
    let mode = agent.kind().social;
    let mut state = start;
    let mut log = EpisodeLog {
        cum_reward: 0,
        steps: 0,
        terminated_by_reward: false,
        visited: vec![start],
        step_records: Vec::new(),
    };
    for t in 0..max_steps {
        let observation = trace.map(|tr| tr.observation(t));
        let mut component = PolicyComponent::Asocial;

        if let (SocialMode::ValueShaping, Some(ExpertObservation::Live { state: es, action: ea, .. })) =
            (mode, observation)
        {
            let kappa = agent.params().kappa();
            vs_bonus(&mut agent.q, es, ea, kappa);
            component = PolicyComponent::ValueShaped;
        }

        let mut policy = agent.asocial_policy(state);
        if let (SocialMode::DecisionBiasing, Some(obs)) = (mode, observation) {
            let target = obs.position();
            let social = match agent.beliefs() {
                None => social_policy(state, target, &SocialDistance::Manhattan),
                Some(beliefs) => {
                    let map = belief_distance_map(beliefs, target, DISTANCE_CAP, DISTANCE_TOL, DISTANCE_MAX_ITER);
                    social_policy(
                        state,
                        target,
                        &SocialDistance::Beliefs {
                            beliefs,
                            distances: &map.values,
                        },
                    )
                }
            };
            policy = db_policy(&policy, &social, agent.params().omega());
            component = PolicyComponent::DecisionBiased;
        }

        let a = sample_index(&policy, rngs.actions);
        let action = Action::from_index(a);
        let next = world.step_dynamics(state, action);
        let outcome = world.observe_reward(next, rngs.noise);
        agent.learn(state, a, &outcome, rngs.planning)?;

        if record_steps {
            log.step_records.push(StepRecord {
                state,
                action,
                reward: outcome.reward,
                expert_state: observation.map(|o| o.position()),
                component,
            });
        }
        log.cum_reward += outcome.reward;
        log.steps += 1;
        log.visited.push(next);
        state = next;
        if outcome.terminal {
            log.terminated_by_reward = true;
            break;
        }
    }
    Ok(log)
}

/// Exchanges the values of two distinct, uniformly chosen reward cells.
pub fn apply_reward_swap<R: Rng + ?Sized>(world: &WorldConfig, rng: &mut R) -> WorldConfig {
    let a = rng.random_range(0..4);
    let b = (a + rng.random_range(1..4)) % 4;
    world.with_swapped_rewards(a, b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub experiment: Experiment,
    pub model: ModelKind,
    pub seed: u64,
    pub params: AgentParams,
    pub expert_params: AgentParams,
    pub protocol: Protocol,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRow {
    /// 1-based.
    pub episode: usize,
    pub phase: Phase,
    pub cum_reward: i32,
    pub steps: usize,
    pub terminated_by_reward: bool,
}

/// What the expert looked like during a simulation; shared by every model
/// run on the same simulation index.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertSnapshot {
    pub q: QTable,
    pub beliefs: BeliefModel,
    /// Performance over the demonstrated (training) episodes.
    pub episodes: Vec<EpisodeRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord {
    pub experiment: Experiment,
    pub model: ModelKind,
    pub sim: usize,
    pub episodes: Vec<EpisodeRow>,
    pub learner_q: QTable,
    pub learner_beliefs: Option<BeliefModel>,
    pub visited: BTreeSet<usize>,
    pub expert: Arc<ExpertSnapshot>,
    pub train_world: WorldDescriptor,
    pub test_world: WorldDescriptor,
    pub step_records: Vec<Vec<StepRecord>>,
}

/// Per-simulation state shared by all models: the world, the expert, the
/// demonstrations and the per-episode start draws.
pub struct SharedSetup {
    pub seed: u64,
    pub train_world: WorldConfig,
    pub test_worlds: [WorldConfig; 3],
    pub expert: Arc<ExpertSnapshot>,
    pub traces: Vec<ExpertTrace>,
    pub start_slots: Vec<usize>,
}

impl SharedSetup {
    pub fn new(
        layouts: &[QuadrantLayout; 4],
        seed: u64,
        expert_params: AgentParams,
        protocol: &Protocol,
    ) -> Result<Self> {
        let train_world = sample_world(layouts, &mut stream(seed, Purpose::World));
        let pretrained = pretrain_expert(
            &train_world,
            seed,
            expert_params,
            protocol.pretrain_episodes,
            protocol.max_steps,
        )?;
        let mut expert = pretrained.agent;

        let mut slots = stream(seed, Purpose::StartStates);
        let start_slots: Vec<usize> = (0..protocol.total_episodes())
            .map(|_| slots.random_range(0..4))
            .collect();

        let mut traces = Vec::with_capacity(protocol.train_episodes);
        for (e, slot) in start_slots.iter().take(protocol.train_episodes).enumerate() {
            let start = train_world.start_states()[*slot].index();
            let mut rng = substream(seed, Purpose::ExpertTrace, e as u64);
            traces.push(generate_expert_trace(
                &mut expert,
                &train_world,
                start,
                &mut rng,
                protocol.max_steps,
                protocol.expert_learns,
            )?);
        }

        let test_worlds = [
            train_world.clone(),
            apply_reward_swap(&train_world, &mut stream(seed, Purpose::RewardSwap)),
            train_world.shift_start_states(),
        ];
        let expert_episodes = traces
            .iter()
            .enumerate()
            .map(|(e, tr)| EpisodeRow {
                episode: e + 1,
                phase: Phase::Train,
                cum_reward: tr.cum_reward,
                steps: tr.len(),
                terminated_by_reward: tr.terminated_early,
            })
            .collect();
        let snapshot = ExpertSnapshot {
            q: expert.q.clone(),
            beliefs: expert.beliefs().expect("expert is model-based").clone(),
            episodes: expert_episodes,
        };
        Ok(SharedSetup {
            seed,
            train_world,
            test_worlds,
            expert: Arc::new(snapshot),
            traces,
            start_slots,
        })
    }

    pub fn test_world(&self, experiment: Experiment) -> &WorldConfig {
        &self.test_worlds[experiment as usize]
    }

    /// Runs one learner through the training and test phases.
    pub fn run(
        &self,
        experiment: Experiment,
        model: ModelKind,
        params: AgentParams,
        protocol: &Protocol,
        sim: usize,
        record_steps: bool,
    ) -> Result<SimRecord> {
        let mut agent = Agent::new(model, params)?;
        let mut actions = stream(self.seed, Purpose::LearnerActions);
        let mut planning = stream(self.seed, Purpose::LearnerPlanning);
        let mut noise = stream(self.seed, Purpose::LearnerNoise);
        let mut rngs = EpisodeRngs {
            actions: &mut actions,
            planning: &mut planning,
            noise: &mut noise,
        };
        let test_world = self.test_world(experiment);
        let mut episodes = Vec::with_capacity(protocol.total_episodes());
        let mut visited = BTreeSet::new();
        let mut step_records = Vec::new();
        for (e, slot) in self.start_slots.iter().enumerate() {
            let (phase, world, trace) = if e < protocol.train_episodes {
                (Phase::Train, &self.train_world, Some(&self.traces[e]))
            } else {
                (Phase::Test, test_world, None)
            };
            let start = world.start_states()[*slot].index();
            let log = run_episode(&mut agent, world, start, trace, protocol.max_steps, &mut rngs, record_steps)?;
            visited.extend(log.visited.iter().copied());
            episodes.push(EpisodeRow {
                episode: e + 1,
                phase,
                cum_reward: log.cum_reward,
                steps: log.steps,
                terminated_by_reward: log.terminated_by_reward,
            });
            if record_steps {
                step_records.push(log.step_records);
            }
        }
        let learner_beliefs = agent.beliefs().cloned();
        Ok(SimRecord {
            experiment,
            model,
            sim,
            episodes,
            learner_q: agent.q,
            learner_beliefs,
            visited,
            expert: Arc::clone(&self.expert),
            train_world: self.train_world.descriptor().clone(),
            test_world: test_world.descriptor().clone(),
            step_records,
        })
    }
}

/// One complete simulation from its spec.
pub fn run_simulation(layouts: &[QuadrantLayout; 4], spec: &SimulationSpec, sim: usize) -> Result<SimRecord> {
    let setup = SharedSetup::new(layouts, spec.seed, spec.expert_params, &spec.protocol)?;
    setup.run(spec.experiment, spec.model, spec.params, &spec.protocol, sim, false)
}

/// Seed of simulation `index`; identical across experiments and models.
pub fn simulation_seed(base_seed: u64, index: usize) -> u64 {
    split(base_seed, index as u64)
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub experiments: Vec<Experiment>,
    pub models: Vec<ModelKind>,
    pub n_sims: usize,
    pub base_seed: u64,
    pub protocol: Protocol,
    pub record_steps: bool,
}

/// All simulations of a plan. Records are ordered by experiment, model and
/// simulation index regardless of scheduling.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: Vec<SimRecord>,
}

impl Dataset {
    pub fn experiments(&self) -> BTreeSet<Experiment> {
        self.records.iter().map(|r| r.experiment).collect()
    }

    pub fn models(&self, experiment: Experiment) -> BTreeSet<ModelKind> {
        self.records
            .iter()
            .filter(|r| r.experiment == experiment)
            .map(|r| r.model)
            .collect()
    }

    pub fn select(&self, experiment: Experiment, model: ModelKind) -> impl Iterator<Item = &SimRecord> {
        self.records
            .iter()
            .filter(move |r| r.experiment == experiment && r.model == model)
    }

    fn sort(&mut self) {
        self.records
            .sort_by(|a, b| (a.experiment, a.model, a.sim).cmp(&(b.experiment, b.model, b.sim)));
    }
}

/// Runs every (experiment, model, simulation) of the plan. Each simulation
/// index draws its world and expert once and reuses them across experiments
/// and models.
pub fn run_experiments(
    layouts: &[QuadrantLayout; 4],
    registry: &ParamRegistry,
    plan: &ExperimentPlan,
) -> Result<Dataset> {
    let expert_params = registry.expert()?;
    let model_params: Vec<(ModelKind, AgentParams)> = plan
        .models
        .iter()
        .map(|m| registry.learner(*m).map(|p| (*m, p)))
        .collect::<Result<_>>()?;
    let per_sim: Vec<Vec<SimRecord>> = (0..plan.n_sims)
        .into_par_iter()
        .map(|i| {
            let setup = SharedSetup::new(
                layouts,
                simulation_seed(plan.base_seed, i),
                expert_params,
                &plan.protocol,
            )?;
            let mut out = Vec::with_capacity(plan.experiments.len() * model_params.len());
            for &experiment in &plan.experiments {
                for &(model, params) in &model_params {
                    out.push(setup.run(experiment, model, params, &plan.protocol, i, plan.record_steps)?);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut dataset = Dataset {
        records: per_sim.into_iter().flatten().collect(),
    };
    dataset.sort();
    Ok(dataset)
}

/// Single-experiment convenience wrapper.
pub fn run_experiment(
    layouts: &[QuadrantLayout; 4],
    registry: &ParamRegistry,
    experiment: Experiment,
    models: &[ModelKind],
    n_sims: usize,
    base_seed: u64,
    protocol: Protocol,
) -> Result<Dataset> {
    run_experiments(
        layouts,
        registry,
        &ExperimentPlan {
            experiments: vec![experiment],
            models: models.to_vec(),
            n_sims,
            base_seed,
            protocol,
            record_steps: false,
        },
    )
}

/// Fails unless every simulation index in `a` has the same training world
/// in `b`.
pub fn check_paired(a: &[&SimRecord], b: &[&SimRecord]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Unpaired(format!(
            "{} simulations versus {}",
            a.len(),
            b.len()
        )));
    }
    for (x, y) in a.iter().zip(b) {
        if x.sim != y.sim || x.train_world != y.train_world {
            return Err(Error::Unpaired(format!(
                "simulation {} of {} does not match simulation {} of {}",
                x.sim, x.experiment, y.sim, y.experiment
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{assemble_world, default_layouts, Cell, Rotation, CENTRAL_STARTS};

    fn params_mf() -> AgentParams {
        AgentParams {
            alpha: 0.3,
            gamma: 0.9,
            beta: 0.5,
            ..Default::default()
        }
    }

    fn world() -> WorldConfig {
        assemble_world(&default_layouts(), [0, 1, 2, 3], [Rotation::R0; 4], [0, 25, 50, 75], CENTRAL_STARTS)
            .unwrap()
    }

    #[test]
    fn episode_respects_cap_and_is_deterministic() {
        let w = world();
        let run = || {
            let mut agent = Agent::new(ModelKind::AS_MF, params_mf()).unwrap();
            let mut a = stream(1, Purpose::LearnerActions);
            let mut p = stream(1, Purpose::LearnerPlanning);
            let mut n = stream(1, Purpose::LearnerNoise);
            let mut rngs = EpisodeRngs { actions: &mut a, planning: &mut p, noise: &mut n };
            (0..30)
                .map(|_| run_episode(&mut agent, &w, CENTRAL_STARTS[0].index(), None, 40, &mut rngs, true).unwrap())
                .collect::<Vec<_>>()
        };
        let logs = run();
        assert_eq!(logs, run());
        for log in &logs {
            assert!(log.steps <= 40);
            assert!(log.cum_reward >= -40);
            assert_eq!(log.visited.len(), log.steps + 1);
            if !log.terminated_by_reward {
                assert_eq!(log.cum_reward, -(log.steps as i32));
            }
        }
    }

    #[test]
    fn reward_accounting() {
        // Terminal episode of n steps: (n - 1) step costs plus the payout.
        let w = world();
        let mut agent = Agent::new(ModelKind::AS_MF, params_mf()).unwrap();
        let mut a = stream(2, Purpose::LearnerActions);
        let mut p = stream(2, Purpose::LearnerPlanning);
        let mut n = stream(2, Purpose::LearnerNoise);
        let mut rngs = EpisodeRngs { actions: &mut a, planning: &mut p, noise: &mut n };
        let mut checked = 0;
        for _ in 0..200 {
            let log = run_episode(&mut agent, &w, CENTRAL_STARTS[1].index(), None, 40, &mut rngs, true).unwrap();
            if log.terminated_by_reward {
                let last = log.step_records.last().unwrap();
                assert_eq!(log.cum_reward, -(log.steps as i32 - 1) + last.reward);
                let cell = *log.visited.last().unwrap();
                assert!(w.is_terminal(cell));
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn swap_changes_exactly_two_cells() {
        let w = world();
        for seed in 0..50 {
            let s = apply_reward_swap(&w, &mut stream(seed, Purpose::RewardSwap));
            let changed = (0..4).filter(|&p| s.reward_values()[p] != w.reward_values()[p]).count();
            assert_eq!(changed, 2);
            let mut v = s.reward_values();
            v.sort_unstable();
            assert_eq!(v, [0, 25, 50, 75]);
            assert_eq!(s, apply_reward_swap(&w, &mut stream(seed, Purpose::RewardSwap)));
        }
    }

    #[test]
    fn experiment_names() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!("exp4".parse::<Experiment>().is_err());
        assert_eq!(Cell::new(4, 4).index(), 44);
    }
}
