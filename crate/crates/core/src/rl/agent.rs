use rand::Rng;

use super::{dyna_planning, softmax_policy, td_update, AgentParams, BeliefModel, ModelKind, QTable, RewardModel};
use crate::error::Result;
use crate::gridworld::{StepOutcome, N_ACTIONS, N_STATES};

/// A learner's complete mutable state. Model-based agents additionally own
/// transition beliefs and a reward memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    kind: ModelKind,
    params: AgentParams,
    pub q: QTable,
    pub model: Option<WorldModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel {
    pub beliefs: BeliefModel,
    pub rewards: RewardModel,
}

impl Agent {
    pub fn new(kind: ModelKind, params: AgentParams) -> Result<Self> {
        params.validate(kind)?;
        let model = kind.is_model_based().then(|| WorldModel {
            beliefs: BeliefModel::grid(),
            rewards: RewardModel::new(N_STATES),
        });
        Ok(Agent {
            kind,
            params,
            q: QTable::new(N_STATES),
            model,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn params(&self) -> &AgentParams {
        &self.params
    }

    pub fn beliefs(&self) -> Option<&BeliefModel> {
        self.model.as_ref().map(|m| &m.beliefs)
    }

    pub fn asocial_policy(&self, state: usize) -> [f64; N_ACTIONS] {
        softmax_policy(self.q.row(state), self.params.beta)
    }

    /// Learns from one real transition: TD update, then for model-based
    /// agents the belief update, reward memory and a burst of planning.
    pub fn learn<R: Rng + ?Sized>(
        &mut self,
        state: usize,
        action: usize,
        outcome: &StepOutcome,
        planning_rng: &mut R,
    ) -> Result<()> {
        let p = self.params;
        let r = f64::from(outcome.reward);
        td_update(
            &mut self.q,
            state,
            action,
            r,
            outcome.next_state,
            outcome.terminal,
            p.alpha,
            p.gamma,
        );
        if let Some(model) = &mut self.model {
            model.beliefs.update(state, action, outcome.next_state, p.eta())?;
            model
                .rewards
                .record_experience(state, action, r, outcome.next_state, outcome.terminal);
            dyna_planning(
                &mut self.q,
                &model.beliefs,
                &model.rewards,
                p.lambda(),
                p.alpha,
                p.gamma,
                planning_rng,
            );
        }
        Ok(())
    }
}
