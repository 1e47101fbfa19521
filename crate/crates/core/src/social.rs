//! Non-mentalizing social learning: decision biasing toward the expert's
//! location, value shaping from the expert's actions, and the expert
//! demonstrator itself.

use rand::Rng;

use crate::error::Result;
use crate::experiments::{run_episode, EpisodeRngs};
use crate::gridworld::{manhattan_distance, Action, Cell, WorldConfig, N_ACTIONS};
use crate::rl::{sample_index, Agent, AgentParams, BeliefModel, ModelKind, QTable};
use crate::rng::{stream, Purpose, Stream};

pub const EXPERT_PRETRAIN_EPISODES: usize = 120;

/// Convergence tolerance of the belief-based distance map.
pub const DISTANCE_TOL: f64 = 1e-3;
/// Sweep limit of the belief-based distance map.
pub const DISTANCE_MAX_ITER: usize = 500;
/// Expected-step ceiling of the belief-based distance map.
pub const DISTANCE_CAP: f64 = 1000.0;

/// Relative slack within which two social scores count as tied.
const TIE_EPS: f64 = 1e-9;

/// One expert episode, revealed to the learner one step at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertTrace {
    pub steps: Vec<(usize, Action)>,
    pub final_state: usize,
    /// The episode ended by collecting a positive reward before the cap.
    pub terminated_early: bool,
    pub cum_reward: i32,
}

/// What the learner sees of the expert at its own step `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpertObservation {
    /// The expert acted from `state` with `action` and now stands at `position`.
    Live {
        state: usize,
        action: Action,
        position: usize,
    },
    /// The expert's episode is over; it stays frozen at `position`.
    Frozen { position: usize },
}

impl ExpertObservation {
    /// The expert's most recently visited location.
    pub fn position(&self) -> usize {
        match *self {
            ExpertObservation::Live { position, .. } | ExpertObservation::Frozen { position } => {
                position
            }
        }
    }
}

impl ExpertTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Lockstep view at learner step `t` (0-based).
    pub fn observation(&self, t: usize) -> ExpertObservation {
        match self.steps.get(t) {
            Some(&(state, action)) => ExpertObservation::Live {
                state,
                action,
                position: self
                    .steps
                    .get(t + 1)
                    .map_or(self.final_state, |&(next, _)| next),
            },
            None => ExpertObservation::Frozen {
                position: self.final_state,
            },
        }
    }
}

/// A pre-trained expert and its pre-training record.
#[derive(Debug, Clone)]
pub struct PretrainedExpert {
    pub agent: Agent,
    pub episode_rewards: Vec<i32>,
    pub episode_steps: Vec<usize>,
}

/// Trains an asocial model-based agent alone in `world` for `episodes`
/// episodes, with start states drawn uniformly per episode.
pub fn pretrain_expert(
    world: &WorldConfig,
    seed: u64,
    params: AgentParams,
    episodes: usize,
    max_steps: usize,
) -> Result<PretrainedExpert> {
    let mut agent = Agent::new(ModelKind::AS_MB, params)?;
    let mut actions = stream(seed, Purpose::ExpertTraining);
    let mut planning = stream(seed, Purpose::ExpertPlanning);
    let mut noise = stream(seed, Purpose::ExpertNoise);
    let mut episode_rewards = Vec::with_capacity(episodes);
    let mut episode_steps = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let starts = world.start_states();
        let start = starts[actions.random_range(0..starts.len())];
        let mut rngs = EpisodeRngs {
            actions: &mut actions,
            planning: &mut planning,
            noise: &mut noise,
        };
        let log = run_episode(&mut agent, world, start.index(), None, max_steps, &mut rngs, false)?;
        episode_rewards.push(log.cum_reward);
        episode_steps.push(log.steps);
    }
    Ok(PretrainedExpert {
        agent,
        episode_rewards,
        episode_steps,
    })
}

/// Rolls out one expert episode under its softmax policy. With `learn`
/// unset the expert's tables are left untouched.
pub fn generate_expert_trace(
    expert: &mut Agent,
    world: &WorldConfig,
    start: usize,
    rng: &mut Stream,
    max_steps: usize,
    learn: bool,
) -> Result<ExpertTrace> {
    let mut steps = Vec::with_capacity(max_steps);
    let mut state = start;
    let mut cum_reward = 0;
    let mut terminated_early = false;
    for _ in 0..max_steps {
        let a = sample_index(&expert.asocial_policy(state), rng);
        let next = world.step_dynamics(state, Action::from_index(a));
        let outcome = world.observe_reward(next, rng);
        if learn {
            expert.learn(state, a, &outcome, rng)?;
        }
        steps.push((state, Action::from_index(a)));
        cum_reward += outcome.reward;
        state = next;
        if outcome.terminal {
            terminated_early = true;
            break;
        }
    }
    Ok(ExpertTrace {
        steps,
        final_state: state,
        terminated_early,
        cum_reward,
    })
}

/// Result of the expected-steps value iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Expected number of actions to reach `target` under the agent's beliefs:
/// the fixed point of `D(s) = min_a Σ_{s'} B(s'|s,a)(1 + D(s'))` with
/// `D(target) = 0`, every value clamped to `cap`.
pub fn belief_distance_map(
    beliefs: &BeliefModel,
    target: usize,
    cap: f64,
    tol: f64,
    max_iter: usize,
) -> DistanceMap {
    let n = beliefs.n_states();
    let mut d = vec![0.0; n];
    // Sweep outward from the target, alternating direction; each action's
    // self-transition is solved in closed form.
    let goal = Cell::from_index(target);
    let mut order: Vec<usize> = (0..n).filter(|&s| s != target).collect();
    order.sort_by_key(|&s| (Cell::from_index(s).manhattan(goal), s));
    // Per state and action: self-transition mass and the other successors.
    let rows: Vec<[(f64, Vec<(usize, f64)>); N_ACTIONS]> = (0..n)
        .map(|s| {
            std::array::from_fn(|a| {
                let mut stay = 0.0;
                let mut moves = Vec::with_capacity(4);
                for (&next, &p) in beliefs.support(s).iter().zip(beliefs.probs(s, a)) {
                    if next == s {
                        stay += p;
                    } else if p > 0.0 {
                        moves.push((next, p));
                    }
                }
                (stay, moves)
            })
        })
        .collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut delta: f64 = 0.0;
        let forward = iterations % 2 == 1;
        for k in 0..order.len() {
            let s = if forward { order[k] } else { order[order.len() - 1 - k] };
            let mut best = cap;
            for (stay, moves) in &rows[s] {
                if *stay < 1.0 {
                    let rest: f64 = moves.iter().map(|&(next, p)| p * d[next]).sum();
                    best = best.min((1.0 + rest) / (1.0 - stay));
                }
            }
            delta = delta.max((best - d[s]).abs());
            d[s] = best;
        }
        if delta < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::debug!("belief distance map to {target} hit the {max_iter}-sweep limit");
    }
    DistanceMap {
        values: d,
        iterations,
        converged,
    }
}

/// How the social policy scores an action.
pub enum SocialDistance<'a> {
    /// Manhattan distance from the board-clipped intended cell, walls ignored.
    Manhattan,
    /// Expected belief distance of the successor.
    Beliefs {
        beliefs: &'a BeliefModel,
        distances: &'a [f64],
    },
}

/// Puts all mass, split evenly, on the actions that bring the learner
/// closest to the expert's position.
pub fn social_policy(state: usize, expert_position: usize, oracle: &SocialDistance<'_>) -> [f64; N_ACTIONS] {
    let scores: [f64; N_ACTIONS] = std::array::from_fn(|a| match oracle {
        SocialDistance::Manhattan => {
            let intended = Cell::from_index(state).clipped(Action::from_index(a));
            manhattan_distance(intended, Cell::from_index(expert_position)) as f64
        }
        SocialDistance::Beliefs { beliefs, distances } => beliefs.expect(state, a, distances),
    });
    argmin_uniform(&scores)
}

fn argmin_uniform(scores: &[f64; N_ACTIONS]) -> [f64; N_ACTIONS] {
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = TIE_EPS * min.abs().max(1.0);
    let ties = scores.map(|x| x <= min + slack);
    let count = ties.iter().filter(|t| **t).count() as f64;
    ties.map(|t| if t { 1.0 / count } else { 0.0 })
}

/// `(1 − ω) π_asocial + ω π_social`.
pub fn db_policy(asocial: &[f64; N_ACTIONS], social: &[f64; N_ACTIONS], omega: f64) -> [f64; N_ACTIONS] {
    std::array::from_fn(|a| (1.0 - omega) * asocial[a] + omega * social[a])
}

/// Adds the shaping bonus to the expert's observed state-action pair.
pub fn vs_bonus(q: &mut QTable, expert_state: usize, expert_action: Action, kappa: f64) {
    q.add(expert_state, expert_action.index(), kappa);
}
