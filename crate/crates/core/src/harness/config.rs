use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{Method, Strategy};
use crate::feedback::NoiseKind;
use crate::kernel::{KernelSpec, DEFAULT_RANK};
use crate::neighbors::IndexStructure;
use crate::{Error, Result, UserId};

/// Any recommender the harness can replay: a DQD variant or a baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Recommender {
    Dqd(Method),
    Mmr,
    Xquad,
}

impl Recommender {
    pub fn name(self) -> &'static str {
        match self {
            Recommender::Dqd(m) => m.name(),
            Recommender::Mmr => "mmr",
            Recommender::Xquad => "xquad",
        }
    }

    pub fn uses_alpha(self) -> bool {
        matches!(self, Recommender::Dqd(Method::BDivrec) | Recommender::Xquad)
    }
}

impl fmt::Display for Recommender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Recommender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mmr" => Ok(Recommender::Mmr),
            "xquad" => Ok(Recommender::Xquad),
            other => other
                .parse::<Method>()
                .map(Recommender::Dqd)
                .map_err(|_| Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

impl TryFrom<String> for Recommender {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Recommender> for String {
    fn from(r: Recommender) -> String {
        r.name().to_string()
    }
}

/// One benchmark cell's configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: Recommender,
    pub strategy: Strategy,
    pub lambda: f64,
    /// Only meaningful for `b_divrec` and `xquad`; defaults to 0.
    pub alpha: Option<f64>,
    /// Only meaningful for `eps_greedy`; defaults to 0.9.
    pub epsilon: Option<f64>,
    pub batch_size: usize,
    pub threshold: f64,
    pub seeds: usize,
    /// Base seed from which every random stream is derived.
    pub seed: u64,
    pub adaptive: bool,
    pub noise: NoiseKind,
    /// Nyström rank `d′`, capped at the item count.
    pub rank: usize,
    pub kernel: KernelSpec,
    pub index: IndexStructure,
    /// Users to replay; all users when absent.
    pub users: Option<Vec<UserId>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Recommender::Dqd(Method::BDivrec),
            strategy: Strategy::Maximization,
            lambda: 0.5,
            alpha: None,
            epsilon: None,
            batch_size: 3,
            threshold: 0.5,
            seeds: 10,
            seed: 0,
            adaptive: false,
            noise: NoiseKind::None,
            rank: DEFAULT_RANK,
            kernel: KernelSpec::default(),
            index: IndexStructure::Brute,
            users: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg = Self::parse_toml(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without range checks, for callers that layer overrides first.
    pub fn parse_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(0.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(0.9)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if let Some(a) = self.alpha {
            if !self.method.uses_alpha() {
                return bad(format!("alpha is not a parameter of {}", self.method));
            }
            if !(0.0..=2.0).contains(&a) {
                return bad(format!("alpha {a} outside [0, 2]"));
            }
        }
        if let Some(e) = self.epsilon {
            if self.method != Recommender::Dqd(Method::EpsGreedy) {
                return bad(format!("epsilon is not a parameter of {}", self.method));
            }
            if !(0.0..=1.0).contains(&e) {
                return bad(format!("epsilon {e} outside [0, 1]"));
            }
        }
        if !matches!(self.method, Recommender::Dqd(_)) {
            if self.adaptive {
                return bad(format!("{} has no DQD weight to tune adaptively", self.method));
            }
            if self.strategy == Strategy::Sampling {
                return bad(format!("{} is deterministic; use the maximization strategy", self.method));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda {} outside [0, 1]", self.lambda));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.seeds == 0 {
            return bad("at least one seed is required".into());
        }
        if self.rank == 0 {
            return bad("nyström rank must be at least 1".into());
        }
        if !self.threshold.is_finite() {
            return bad("threshold must be finite".into());
        }
        self.kernel.validate().map_err(|e| Error::Config(e.to_string()))
    }
}
