use super::ascend;
use super::config::{CMode, IrlConfig, LineSearch, PolicyMode};
use super::objective::{likelihood, likelihood_eval, theoretical_c, Surrogate};
use super::run::{j_gap, true_return, IrlRunState, IterationRecord, Stopwatch};
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::reward::{eps_max, RewardParam};
use crate::soft::{soft_policy_iteration, OccupancyMeasure, SolverOptions};

#[derive(Debug, Clone)]
pub struct TrroStep {
    pub theta: RewardParam,
    pub stalled: bool,
    /// Accepted step length, 0 when stalled.
    pub step: f64,
    pub surrogate: f64,
    /// `surrogate - c * eps_max` at the returned reward.
    pub penalized: f64,
    pub eps: f64,
}

/// The penalty coefficient for a TRRO run.
pub fn resolve_c(c_mode: CMode, mdp: &TabularMdp) -> Result<f64> {
    match c_mode {
        CMode::Theoretical { r_bound } => theoretical_c(mdp.n_actions(), r_bound, mdp.gamma()),
        CMode::Manual { value } => Ok(value),
        CMode::AdaptiveBounds { .. } => Err(Error::Config("trro needs a theoretical or manual C".into())),
    }
}

/// Ascent along the surrogate gradient with backtracking `t0 * beta^j`;
/// accepts the first step whose penalized surrogate strictly improves on
/// the value at `theta_old` (and, with `require_ascent`, whose exact
/// likelihood does not drop below `l_old`).
pub fn trro_step(
    state: &IrlRunState,
    mdp: &TabularMdp,
    rho_e: &OccupancyMeasure,
    c: f64,
    search: &LineSearch,
    opts: &SolverOptions,
) -> Result<TrroStep> {
    let sur = Surrogate::new(&state.pi_old, mdp, rho_e)?;
    let old = &state.theta_old;
    let g_old = sur.value(old, mdp)?;
    let stall = TrroStep {
        theta: old.clone(),
        stalled: true,
        step: 0.0,
        surrogate: g_old,
        penalized: g_old,
        eps: 0.0,
    };
    let d = sur.gradient(old)?;
    if d.iter().all(|&x| x == 0.0) {
        return Ok(stall);
    }
    let l_old = state.final_likelihood();
    let mut t = search.t0;
    for _ in 0..=search.max_halvings {
        let cand = ascend(old, &d, t);
        let value = sur.value(&cand, mdp)?;
        let eps = eps_max(old, &cand, mdp)?;
        let penalized = value - c * eps;
        if penalized > g_old && (!search.require_ascent || likelihood(&cand, mdp, rho_e, opts)? >= l_old) {
            return Ok(TrroStep {
                theta: cand,
                stalled: false,
                step: t,
                surrogate: value,
                penalized,
                eps,
            });
        }
        t *= search.beta;
    }
    Ok(stall)
}

pub fn trro_train(
    config: &IrlConfig,
    mdp: &TabularMdp,
    rho_e: &OccupancyMeasure,
    init: RewardParam,
) -> Result<IrlRunState> {
    let c = resolve_c(config.c_mode, mdp)?;
    let mut eval = likelihood_eval(&init, mdp, rho_e, &config.solver)?;
    let mut state = IrlRunState::new(init, eval.policy().clone(), c, &eval, mdp);
    for i in 1..=config.m {
        let watch = Stopwatch::start();
        state.pi_old = match config.policy_mode {
            PolicyMode::Exact => eval.policy().clone(),
            PolicyMode::KRounds => {
                let r = eval.reward.clone();
                soft_policy_iteration(&state.pi_old, &r, mdp, config.k, &config.solver)?
            }
        };
        let step = trro_step(&state, mdp, rho_e, c, &config.line_search, &config.solver)?;
        if !step.stalled {
            eval = likelihood_eval(&step.theta, mdp, rho_e, &config.solver)?;
        }
        state.push(IterationRecord {
            iteration: i,
            likelihood: eval.value,
            surrogate: step.surrogate,
            eps: step.eps,
            mu: c,
            j_gap: j_gap(&eval, rho_e, mdp),
            true_return: true_return(&eval, mdp),
            stalled: step.stalled,
            wall_ms: watch.ms(),
        });
        state.theta_old = step.theta;
    }
    Ok(state)
}
