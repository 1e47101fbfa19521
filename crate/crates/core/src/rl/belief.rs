use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::{sample_index, td_update, QTable};
use crate::error::{Error, Result};
use crate::gridworld::{Action, Cell, N_ACTIONS, N_STATES};

/// Learned transition beliefs `B(s' | s, a)`.
///
/// Every state has a fixed successor support shared by its four actions;
/// each `(s, a)` row is a categorical distribution over that support.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefModel {
    supports: Vec<Vec<usize>>,
    probs: Vec<Vec<f64>>,
}

impl BeliefModel {
    /// Uniform beliefs over arbitrary per-state supports.
    pub fn with_supports(supports: Vec<Vec<usize>>) -> Self {
        let probs = supports
            .iter()
            .flat_map(|sup| {
                let p = 1.0 / sup.len() as f64;
                std::iter::repeat_n(vec![p; sup.len()], N_ACTIONS)
            })
            .collect();
        BeliefModel { supports, probs }
    }

    /// Uniform beliefs over each cell and its board-clipped neighbours.
    /// Walls are unknown to the agent, so they do not shape the support.
    pub fn grid() -> Self {
        let supports = (0..N_STATES)
            .map(|s| {
                let cell = Cell::from_index(s);
                let mut sup = vec![s];
                for a in Action::ALL {
                    let n = cell.clipped(a).index();
                    if !sup.contains(&n) {
                        sup.push(n);
                    }
                }
                sup
            })
            .collect();
        Self::with_supports(supports)
    }

    pub fn n_states(&self) -> usize {
        self.supports.len()
    }

    pub fn support(&self, s: usize) -> &[usize] {
        &self.supports[s]
    }

    pub fn probs(&self, s: usize, a: usize) -> &[f64] {
        &self.probs[s * N_ACTIONS + a]
    }

    pub fn prob(&self, s: usize, a: usize, successor: usize) -> f64 {
        self.support(s)
            .iter()
            .position(|&x| x == successor)
            .map_or(0.0, |i| self.probs(s, a)[i])
    }

    /// `Σ_{s'} B(s'|s,a) f(s')`.
    pub fn expect(&self, s: usize, a: usize, f: &[f64]) -> f64 {
        self.support(s)
            .iter()
            .zip(self.probs(s, a))
            .map(|(&n, p)| p * f[n])
            .sum()
    }

    /// Delta-rule update toward the realised successor, applied to the
    /// whole support at once. Total mass stays 1.
    pub fn update(&mut self, s: usize, a: usize, realized: usize, eta: f64) -> Result<()> {
        let idx = self.supports[s]
            .iter()
            .position(|&x| x == realized)
            .ok_or(Error::SupportMismatch {
                state: s,
                successor: realized,
            })?;
        for (i, p) in self.probs[s * N_ACTIONS + a].iter_mut().enumerate() {
            let target = if i == idx { 1.0 } else { 0.0 };
            *p += eta * (target - *p);
        }
        Ok(())
    }

    pub fn sample_successor<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        self.supports[s][sample_index(self.probs(s, a), rng)]
    }

    /// `(state, action, successor, probability)` rows.
    pub fn snapshot(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        (0..self.n_states()).flat_map(move |s| {
            (0..N_ACTIONS).flat_map(move |a| {
                self.support(s)
                    .iter()
                    .zip(self.probs(s, a))
                    .map(move |(&n, &p)| (s, a, n, p))
            })
        })
    }

    /// Overwrites one probability; used when loading snapshots.
    pub fn set_prob(&mut self, s: usize, a: usize, successor: usize, p: f64) -> Result<()> {
        let idx = self.supports[s]
            .iter()
            .position(|&x| x == successor)
            .ok_or(Error::SupportMismatch {
                state: s,
                successor,
            })?;
        self.probs[s * N_ACTIONS + a][idx] = p;
        Ok(())
    }
}

/// Last observed reward per experienced `(s, a)`, plus which successors were
/// seen to end an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    last_reward: Vec<Option<f64>>,
    observed: Vec<(usize, usize)>,
    terminal_cells: Vec<bool>,
}

impl RewardModel {
    pub fn new(n_states: usize) -> Self {
        RewardModel {
            last_reward: vec![None; n_states * N_ACTIONS],
            observed: Vec::new(),
            terminal_cells: vec![false; n_states],
        }
    }

    /// Records one real transition.
    pub fn record_experience(&mut self, s: usize, a: usize, r: f64, s_next: usize, terminal: bool) {
        let slot = &mut self.last_reward[s * N_ACTIONS + a];
        if slot.is_none() {
            self.observed.push((s, a));
        }
        *slot = Some(r);
        if terminal {
            self.terminal_cells[s_next] = true;
        }
    }

    pub fn last_reward(&self, s: usize, a: usize) -> Option<f64> {
        self.last_reward[s * N_ACTIONS + a]
    }

    /// Experienced pairs in first-visit order.
    pub fn observed(&self) -> &[(usize, usize)] {
        &self.observed
    }

    pub fn is_known_terminal(&self, s: usize) -> bool {
        self.terminal_cells[s]
    }
}

/// Dyna-Q planning after one real step: `k ~ Poisson(λ)` simulated
/// Q-learning updates from remembered pairs. Returns `k` actually applied.
#[allow(clippy::too_many_arguments)]
pub fn dyna_planning<R: Rng + ?Sized>(
    q: &mut QTable,
    beliefs: &BeliefModel,
    rewards: &RewardModel,
    lambda: f64,
    alpha: f64,
    gamma: f64,
    rng: &mut R,
) -> usize {
    if lambda <= 0.0 || rewards.observed().is_empty() {
        return 0;
    }
    let k = Poisson::new(lambda)
        .expect("positive finite planning rate")
        .sample(rng) as usize;
    let memory = rewards.observed();
    for _ in 0..k {
        let (s, a) = memory[rng.random_range(0..memory.len())];
        let s_next = beliefs.sample_successor(s, a, rng);
        let r = rewards.last_reward(s, a).expect("observed pairs have a reward");
        let terminal = r > 0.0 && rewards.is_known_terminal(s_next);
        td_update(q, s, a, r, s_next, terminal, alpha, gamma);
    }
    k
}
