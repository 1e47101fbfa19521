use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Learning {
    ModelFree,
    ModelBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SocialMode {
    Asocial,
    DecisionBiasing,
    ValueShaping,
}

/// One cell of the 2×3 design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelKind {
    pub social: SocialMode,
    pub learning: Learning,
}

impl ModelKind {
    pub const AS_MF: ModelKind = ModelKind::new(SocialMode::Asocial, Learning::ModelFree);
    pub const AS_MB: ModelKind = ModelKind::new(SocialMode::Asocial, Learning::ModelBased);
    pub const DB_MF: ModelKind = ModelKind::new(SocialMode::DecisionBiasing, Learning::ModelFree);
    pub const DB_MB: ModelKind = ModelKind::new(SocialMode::DecisionBiasing, Learning::ModelBased);
    pub const VS_MF: ModelKind = ModelKind::new(SocialMode::ValueShaping, Learning::ModelFree);
    pub const VS_MB: ModelKind = ModelKind::new(SocialMode::ValueShaping, Learning::ModelBased);

    pub const ALL: [ModelKind; 6] = [
        Self::AS_MF,
        Self::AS_MB,
        Self::DB_MF,
        Self::DB_MB,
        Self::VS_MF,
        Self::VS_MB,
    ];

    pub const fn new(social: SocialMode, learning: Learning) -> Self {
        ModelKind { social, learning }
    }

    pub fn is_model_based(self) -> bool {
        self.learning == Learning::ModelBased
    }

    pub fn is_social(self) -> bool {
        self.social != SocialMode::Asocial
    }

    /// The asocial learner with the same learning system.
    pub fn asocial_counterpart(self) -> ModelKind {
        ModelKind::new(SocialMode::Asocial, self.learning)
    }

    pub fn name(self) -> &'static str {
        match (self.social, self.learning) {
            (SocialMode::Asocial, Learning::ModelFree) => "AS-MF",
            (SocialMode::Asocial, Learning::ModelBased) => "AS-MB",
            (SocialMode::DecisionBiasing, Learning::ModelFree) => "DB-MF",
            (SocialMode::DecisionBiasing, Learning::ModelBased) => "DB-MB",
            (SocialMode::ValueShaping, Learning::ModelFree) => "VS-MF",
            (SocialMode::ValueShaping, Learning::ModelBased) => "VS-MB",
        }
    }

    /// Parameters searched or fixed for this model.
    pub fn parameter_names(self) -> Vec<ParamName> {
        let mut names = vec![ParamName::Alpha, ParamName::Gamma, ParamName::Beta];
        if self.is_model_based() {
            names.extend([ParamName::Eta, ParamName::Lambda]);
        }
        match self.social {
            SocialMode::Asocial => {}
            SocialMode::DecisionBiasing => names.push(ParamName::Omega),
            SocialMode::ValueShaping => names.push(ParamName::Kappa),
        }
        names
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::MissingParams(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamName {
    Alpha,
    Gamma,
    Beta,
    Eta,
    Lambda,
    Omega,
    Kappa,
}

impl ParamName {
    pub const ALL: [ParamName; 7] = [
        ParamName::Alpha,
        ParamName::Gamma,
        ParamName::Beta,
        ParamName::Eta,
        ParamName::Lambda,
        ParamName::Omega,
        ParamName::Kappa,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::Alpha => "alpha",
            ParamName::Gamma => "gamma",
            ParamName::Beta => "beta",
            ParamName::Eta => "eta",
            ParamName::Lambda => "lambda",
            ParamName::Omega => "omega",
            ParamName::Kappa => "kappa",
        }
    }

    /// Unit-interval parameters; the rest live on `[0, ∞)`.
    pub fn is_unit_interval(self) -> bool {
        matches!(
            self,
            ParamName::Alpha | ParamName::Gamma | ParamName::Eta | ParamName::Omega
        )
    }
}

impl FromStr for ParamName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ParamName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown parameter `{s}`"))
    }
}

/// Hyperparameters of one agent. Parameters a model does not use are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AgentParams {
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
    pub eta: Option<f64>,
    pub lambda: Option<f64>,
    pub omega: Option<f64>,
    pub kappa: Option<f64>,
}

impl AgentParams {
    pub fn get(&self, name: ParamName) -> Option<f64> {
        match name {
            ParamName::Alpha => Some(self.alpha),
            ParamName::Gamma => Some(self.gamma),
            ParamName::Beta => Some(self.beta),
            ParamName::Eta => self.eta,
            ParamName::Lambda => self.lambda,
            ParamName::Omega => self.omega,
            ParamName::Kappa => self.kappa,
        }
    }

    pub fn set(&mut self, name: ParamName, value: f64) {
        match name {
            ParamName::Alpha => self.alpha = value,
            ParamName::Gamma => self.gamma = value,
            ParamName::Beta => self.beta = value,
            ParamName::Eta => self.eta = Some(value),
            ParamName::Lambda => self.lambda = Some(value),
            ParamName::Omega => self.omega = Some(value),
            ParamName::Kappa => self.kappa = Some(value),
        }
    }

    /// Checks ranges and that exactly the parameters `kind` uses are present.
    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        let used = kind.parameter_names();
        for name in ParamName::ALL {
            let value = self.get(name);
            match (used.contains(&name), value) {
                (true, None) => {
                    return Err(Error::InvalidParam {
                        name: name.as_str(),
                        value: f64::NAN,
                        reason: "required by this model but missing",
                    })
                }
                (false, Some(v)) => {
                    return Err(Error::InvalidParam {
                        name: name.as_str(),
                        value: v,
                        reason: "not used by this model",
                    })
                }
                (true, Some(v)) => check_range(name, v)?,
                (false, None) => {}
            }
        }
        Ok(())
    }

    /// Drops parameters `kind` does not use.
    pub fn restricted_to(&self, kind: ModelKind) -> AgentParams {
        let mut out = AgentParams::default();
        for name in kind.parameter_names() {
            if let Some(v) = self.get(name) {
                out.set(name, v);
            }
        }
        out
    }

    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or(0.0)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or(0.0)
    }

    pub fn omega(&self) -> f64 {
        self.omega.unwrap_or(0.0)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa.unwrap_or(0.0)
    }
}

pub fn check_range(name: ParamName, v: f64) -> Result<()> {
    let ok = if name.is_unit_interval() {
        (0.0..=1.0).contains(&v)
    } else {
        v >= 0.0 && v.is_finite()
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParam {
            name: name.as_str(),
            value: v,
            reason: if name.is_unit_interval() {
                "outside [0, 1]"
            } else {
                "outside [0, inf)"
            },
        })
    }
}
