//! Exact dynamic programming over deterministic tabular tasks. Used as the
//! reference for value accuracy; independent of every learner.

use crate::gridworld::{Action, WorldConfig, N_ACTIONS, N_STATES, STEP_COST};
use crate::rl::QTable;

pub const OPTIMAL_GAMMA: f64 = 0.99;
pub const OPTIMAL_TOL: f64 = 1e-6;
pub const MAX_SWEEPS: usize = 100_000;

/// Deterministic transition with its expected reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub next: usize,
    pub reward: f64,
    /// No bootstrapping past this transition.
    pub terminal: bool,
}

/// A deterministic MDP; `absorbing` states have value 0 for every action.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub transitions: Vec<[Transition; N_ACTIONS]>,
    pub absorbing: Vec<bool>,
}

impl TabularMdp {
    /// Noise-free task model of a world: entering a positive reward cell pays
    /// its base value and ends the episode, everything else costs one point.
    pub fn from_world(world: &WorldConfig) -> Self {
        let transitions = (0..N_STATES)
            .map(|s| {
                Action::ALL.map(|a| {
                    let next = world.step_dynamics(s, a);
                    match world.reward_value_at(next) {
                        Some(v) if v > 0 => Transition {
                            next,
                            reward: f64::from(v),
                            terminal: true,
                        },
                        _ => Transition {
                            next,
                            reward: f64::from(STEP_COST),
                            terminal: false,
                        },
                    }
                })
            })
            .collect();
        let absorbing = (0..N_STATES).map(|s| world.is_terminal(s)).collect();
        TabularMdp {
            transitions,
            absorbing,
        }
    }

    pub fn n_states(&self) -> usize {
        self.transitions.len()
    }

    /// One synchronous Bellman optimality backup.
    pub fn backup(&self, q: &QTable, gamma: f64) -> QTable {
        let rows = (0..self.n_states())
            .map(|s| {
                if self.absorbing[s] {
                    return [0.0; N_ACTIONS];
                }
                self.transitions[s].map(|t| {
                    if t.terminal {
                        t.reward
                    } else {
                        t.reward + gamma * q.max(t.next)
                    }
                })
            })
            .collect();
        QTable::from_rows(rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalQ {
    pub values: QTable,
    pub gamma: f64,
    pub converged: bool,
    /// Max-norm change of the final sweep.
    pub residual: f64,
    pub sweeps: usize,
}

pub fn max_abs_diff(a: &QTable, b: &QTable) -> f64 {
    a.snapshot()
        .zip(b.snapshot())
        .map(|((_, _, x), (_, _, y))| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Synchronous value iteration from `init` until the sweep-to-sweep change
/// drops below `tol`.
pub fn value_iteration(mdp: &TabularMdp, gamma: f64, tol: f64, max_sweeps: usize, init: QTable) -> OptimalQ {
    let mut q = init;
    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        let next = mdp.backup(&q, gamma);
        residual = max_abs_diff(&next, &q);
        q = next;
        sweeps += 1;
        if residual < tol {
            break;
        }
    }
    let converged = residual < tol;
    if !converged {
        log::warn!("value iteration stopped after {sweeps} sweeps with residual {residual}");
    }
    OptimalQ {
        values: q,
        gamma,
        converged,
        residual,
        sweeps,
    }
}

/// Bellman-optimal action values of a world under noise-free rewards.
pub fn optimal_q(world: &WorldConfig, gamma: f64, tol: f64) -> OptimalQ {
    let mdp = TabularMdp::from_world(world);
    let init = QTable::from_rows(vec![[0.0; N_ACTIONS]; mdp.n_states()]);
    value_iteration(&mdp, gamma, tol, MAX_SWEEPS, init)
}
