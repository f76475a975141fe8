use super::config::IrlConfig;
use super::objective::{likelihood_eval, LikelihoodEval, Surrogate};
use super::run::{j_gap, true_return, IrlRunState, IterationRecord, Stopwatch};
use super::ascend;
use crate::error::Result;
use crate::mdp::TabularMdp;
use crate::reward::{eps_max, RewardParam};
use crate::soft::{occupancy, soft_policy_iteration, uniform_policy, OccupancyMeasure};

/// One outer iteration: a single soft policy improvement round from the
/// carried policy, then one gradient step with the new policy's occupancy.
pub fn ml_irl_step(
    state: &mut IrlRunState,
    config: &IrlConfig,
    mdp: &TabularMdp,
    rho_e: &OccupancyMeasure,
) -> Result<LikelihoodEval> {
    let watch = Stopwatch::start();
    let i = state.iteration + 1;
    let r_old = state.theta_old.table(mdp.n_states(), mdp.n_actions())?;
    let pi = soft_policy_iteration(&state.pi_old, &r_old, mdp, 1, &config.solver)?;
    let occ = occupancy(&pi, mdp)?;
    let g = state.theta_old.jacobian_contraction(&(&rho_e.rho - &occ.rho))?;
    let theta = ascend(&state.theta_old, &g, config.step_size(i));

    let eval = likelihood_eval(&theta, mdp, rho_e, &config.solver)?;
    let sur = Surrogate::new(&pi, mdp, rho_e)?.value(&theta, mdp)?;
    state.push(IterationRecord {
        iteration: i,
        likelihood: eval.value,
        surrogate: sur,
        eps: eps_max(&state.theta_old, &theta, mdp)?,
        mu: 0.0,
        j_gap: j_gap(&eval, rho_e, mdp),
        true_return: true_return(&eval, mdp),
        stalled: false,
        wall_ms: watch.ms(),
    });
    state.theta_old = theta;
    state.pi_old = pi;
    Ok(eval)
}

pub fn ml_irl_train(
    config: &IrlConfig,
    mdp: &TabularMdp,
    rho_e: &OccupancyMeasure,
    init: RewardParam,
) -> Result<IrlRunState> {
    let initial = likelihood_eval(&init, mdp, rho_e, &config.solver)?;
    let pi0 = uniform_policy(mdp.n_states(), mdp.n_actions());
    let mut state = IrlRunState::new(init, pi0, 0.0, &initial, mdp);
    for _ in 0..config.m {
        ml_irl_step(&mut state, config, mdp, rho_e)?;
    }
    Ok(state)
}
