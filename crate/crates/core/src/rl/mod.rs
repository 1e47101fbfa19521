//! Tabular Q-learning and Dyna-Q machinery shared by every agent.

mod agent;
mod belief;
mod params;

pub use agent::{Agent, WorldModel};
pub use belief::{dyna_planning, BeliefModel, RewardModel};
pub use params::{check_range, AgentParams, Learning, ModelKind, ParamName, SocialMode};

use rand::Rng;

use crate::gridworld::N_ACTIONS;

/// Value every Q entry starts from.
pub const Q_INIT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: Vec<[f64; N_ACTIONS]>,
}

impl QTable {
    pub fn new(n_states: usize) -> Self {
        QTable {
            values: vec![[Q_INIT; N_ACTIONS]; n_states],
        }
    }

    pub fn n_states(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, s: usize) -> &[f64; N_ACTIONS] {
        &self.values[s]
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s][a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s][a] = v;
    }

    pub fn add(&mut self, s: usize, a: usize, delta: f64) {
        self.values[s][a] += delta;
    }

    pub fn max(&self, s: usize) -> f64 {
        self.values[s].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn rows(&self) -> &[[f64; N_ACTIONS]] {
        &self.values
    }

    /// `(state, action, value)` rows in state-major order.
    pub fn snapshot(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .flat_map(|(s, row)| row.iter().enumerate().map(move |(a, v)| (s, a, *v)))
    }

    pub fn from_rows(values: Vec<[f64; N_ACTIONS]>) -> Self {
        QTable { values }
    }
}

/// Boltzmann policy over one row of Q values.
pub fn softmax_policy(q_row: &[f64; N_ACTIONS], beta: f64) -> [f64; N_ACTIONS] {
    let max = q_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = q_row.map(|q| (beta * (q - max)).exp());
    let z: f64 = p.iter().sum();
    for x in &mut p {
        *x /= z;
    }
    p
}

/// One-step Q-learning update. Terminal transitions do not bootstrap.
#[allow(clippy::too_many_arguments)]
pub fn td_update(
    q: &mut QTable,
    s: usize,
    a: usize,
    r: f64,
    s_next: usize,
    terminal: bool,
    alpha: f64,
    gamma: f64,
) {
    let target = if terminal { r } else { r + gamma * q.max(s_next) };
    let old = q.get(s, a);
    q.set(s, a, old + alpha * (target - old));
}

/// Draws an index from a discrete distribution with a single uniform.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}
