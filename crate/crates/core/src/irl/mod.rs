//! Likelihood objective, surrogate, and the four reward-learning trainers.

mod adversarial;
mod config;
mod ml_irl;
mod objective;
mod piro;
mod run;
mod trro;
mod unified;

pub use adversarial::adversarial_irl_train;
pub use config::{Algo, CMode, IrlConfig, LineSearch, OccupancyMode, PenaltyStep, PolicyMode};
pub use ml_irl::{ml_irl_step, ml_irl_train};
pub use objective::{
    likelihood, likelihood_eval, likelihood_gradient, likelihood_log_form, surrogate, surrogate_by_evaluation,
    theoretical_c, LikelihoodEval, Surrogate,
};
pub use piro::{adapt_mu, piro_train};
pub use run::{IrlRunState, IterationRecord, METRICS_HEADER};
pub use trro::{resolve_c, trro_step, trro_train, TrroStep};
pub use unified::{firl_state_gradient, implicit_likelihood, implicit_reward_transform, state_marginal_kl};

use ndarray::Array1;

use crate::demos::DemoSet;
use crate::error::Result;
use crate::mdp::TabularMdp;
use crate::reward::RewardParam;
use crate::soft::OccupancyMeasure;

/// `theta + alpha * g`.
pub(crate) fn ascend(theta: &RewardParam, g: &Array1<f64>, alpha: f64) -> RewardParam {
    theta.with_theta(theta.theta() + &(g * alpha))
}

/// Initial reward: zeros of the configured kind.
pub fn initial_reward(config: &IrlConfig, mdp: &TabularMdp) -> RewardParam {
    match config.reward_kind {
        crate::reward::RewardKind::TabularS => RewardParam::tabular_s(mdp.n_states()),
        _ => RewardParam::tabular_sa(mdp.n_states(), mdp.n_actions()),
    }
}

/// Dispatch on `config.algo`. `demos` is only needed by sampled PIRO.
pub fn train(
    config: &IrlConfig,
    mdp: &TabularMdp,
    rho_e: &OccupancyMeasure,
    demos: Option<&DemoSet>,
    init: Option<RewardParam>,
) -> Result<IrlRunState> {
    config.validate()?;
    let init = init.unwrap_or_else(|| initial_reward(config, mdp));
    match config.algo {
        Algo::Adversarial => adversarial_irl_train(config, mdp, rho_e, init),
        Algo::MlIrl => ml_irl_train(config, mdp, rho_e, init),
        Algo::Trro => trro_train(config, mdp, rho_e, init),
        Algo::Piro => piro_train(config, mdp, rho_e, demos, init),
    }
}
