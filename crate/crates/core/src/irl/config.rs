use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward::RewardKind;
use crate::soft::SolverOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    Adversarial,
    MlIrl,
    Trro,
    Piro,
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algo::Adversarial => "adversarial",
            Algo::MlIrl => "ml-irl",
            Algo::Trro => "trro",
            Algo::Piro => "piro",
        })
    }
}

/// Penalty coefficient for TRRO, or the clamp range of the adaptive PIRO coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CMode {
    /// The worst-case constant for `|r| <= r_bound`.
    Theoretical { r_bound: f64 },
    Manual { value: f64 },
    AdaptiveBounds { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyMode {
    /// Full soft value iteration every outer step.
    Exact,
    /// `k` rounds of soft policy iteration from the carried policy.
    KRounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OccupancyMode {
    /// Exact occupancies and the full state-action space for the penalty.
    Full,
    /// Demo minibatches and on-policy rollouts.
    Sampled,
}

/// How the reward-change penalty enters each PIRO reward step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyStep {
    /// Ascent on the likelihood part, then the exact proximal map of the
    /// penalty (tabular rewards only).
    Proximal,
    /// Plain ascent on `grad l - mu * grad eps_bar`.
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LineSearch {
    pub t0: f64,
    pub beta: f64,
    pub max_halvings: usize,
    /// Also require the exact likelihood not to drop before accepting a step.
    pub require_ascent: bool,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            t0: 1.0,
            beta: 0.5,
            max_halvings: 30,
            require_ascent: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IrlConfig {
    pub algo: Algo,
    pub k: usize,
    pub n: usize,
    pub m: usize,
    pub reward_lr: f64,
    pub lr_decay_sigma: f64,
    pub eps_target: f64,
    pub x_scale: f64,
    pub y_scale: f64,
    pub c_mode: CMode,
    pub policy_mode: PolicyMode,
    pub occupancy_mode: OccupancyMode,
    pub penalty_step: PenaltyStep,
    pub reward_kind: RewardKind,
    pub seed: u64,
    pub solver: SolverOptions,
    pub mu_init: f64,
    pub demo_batch: usize,
    pub rollout_len: usize,
    pub adversarial_steps: usize,
    pub line_search: LineSearch,
    /// Likelihood drops larger than this count as monotonicity violations.
    pub violation_tol: f64,
}

impl Default for IrlConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Piro,
            k: 1,
            n: 1,
            m: 100,
            reward_lr: 0.05,
            lr_decay_sigma: 0.0,
            eps_target: 0.05,
            x_scale: 1.5,
            y_scale: 2.0,
            c_mode: CMode::AdaptiveBounds { lo: 1e-3, hi: 1e3 },
            policy_mode: PolicyMode::Exact,
            occupancy_mode: OccupancyMode::Full,
            penalty_step: PenaltyStep::Proximal,
            reward_kind: RewardKind::TabularS,
            seed: 0,
            solver: SolverOptions::default(),
            mu_init: 1.0,
            demo_batch: 64,
            rollout_len: 100,
            adversarial_steps: 10,
            line_search: LineSearch::default(),
            violation_tol: 1e-8,
        }
    }
}

impl IrlConfig {
    pub fn for_algo(algo: Algo) -> Self {
        let mut c = Self {
            algo,
            ..Self::default()
        };
        if algo == Algo::Trro {
            c.c_mode = CMode::Manual { value: 10.0 };
        }
        c
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.k < 1 {
            return bad("k must be >= 1".into());
        }
        if self.n < 1 {
            return bad("n must be >= 1".into());
        }
        if !(self.x_scale > 1.0) {
            return bad(format!("x_scale must be > 1, got {}", self.x_scale));
        }
        if !(self.y_scale > 1.0) {
            return bad(format!("y_scale must be > 1, got {}", self.y_scale));
        }
        if !(self.eps_target > 0.0) {
            return bad(format!("eps_target must be > 0, got {}", self.eps_target));
        }
        if !(self.reward_lr > 0.0 && self.reward_lr.is_finite()) {
            return bad(format!("reward_lr must be positive, got {}", self.reward_lr));
        }
        if !(self.lr_decay_sigma >= 0.0) {
            return bad("lr_decay_sigma must be >= 0".into());
        }
        if !(self.mu_init >= 0.0 && self.mu_init.is_finite()) {
            return bad(format!("mu_init must be finite and >= 0, got {}", self.mu_init));
        }
        if self.reward_kind == RewardKind::LinearFeatures {
            return bad("linear-features rewards need an initial reward file".into());
        }
        if self.demo_batch == 0 || self.rollout_len == 0 {
            return bad("demo_batch and rollout_len must be >= 1".into());
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return bad("solver tolerance and iteration budget must be positive".into());
        }
        let ls = &self.line_search;
        if !(ls.t0 > 0.0) || !(ls.beta > 0.0 && ls.beta < 1.0) {
            return bad("line search needs t0 > 0 and 0 < beta < 1".into());
        }
        match self.c_mode {
            CMode::Theoretical { r_bound } if !(r_bound >= 0.0) => bad("r_bound must be >= 0".into()),
            CMode::Manual { value } if !(value >= 0.0 && value.is_finite()) => {
                bad("manual C must be finite and >= 0".into())
            }
            CMode::AdaptiveBounds { lo, hi } if !(lo > 0.0 && lo <= hi && hi.is_finite()) => {
                bad(format!("adaptive bounds need 0 < lo <= hi, got [{lo}, {hi}]"))
            }
            CMode::AdaptiveBounds { .. } if self.algo == Algo::Trro => {
                bad("trro needs a theoretical or manual C".into())
            }
            _ => Ok(()),
        }
    }

    /// Clamp range for the adaptive coefficient.
    pub fn mu_bounds(&self) -> (f64, f64) {
        match self.c_mode {
            CMode::AdaptiveBounds { lo, hi } => (lo, hi),
            _ => (1e-3, 1e3),
        }
    }

    /// Step size of outer iteration `i` (1-based): `reward_lr / i^sigma`.
    pub fn step_size(&self, i: usize) -> f64 {
        if self.lr_decay_sigma == 0.0 {
            self.reward_lr
        } else {
            self.reward_lr / (i as f64).powf(self.lr_decay_sigma)
        }
    }
}
