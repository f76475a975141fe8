use super::ascend;
use super::config::IrlConfig;
use super::objective::{likelihood_eval, Surrogate};
use super::run::{j_gap, true_return, IrlRunState, IterationRecord, Stopwatch};
use crate::error::Result;
use crate::mdp::TabularMdp;
use crate::reward::{eps_max, RewardParam};
use crate::soft::OccupancyMeasure;

/// Alternate a full soft RL solve with `adversarial_steps` gradient steps on
/// the imitation gap against the frozen policy.
pub fn adversarial_irl_train(
    config: &IrlConfig,
    mdp: &TabularMdp,
    rho_e: &OccupancyMeasure,
    init: RewardParam,
) -> Result<IrlRunState> {
    let mut eval = likelihood_eval(&init, mdp, rho_e, &config.solver)?;
    let mut state = IrlRunState::new(init, eval.policy().clone(), 0.0, &eval, mdp);
    for i in 1..=config.m {
        let watch = Stopwatch::start();
        // the record of the previous step already solved for pi* of theta_old
        let pi = eval.policy().clone();
        let gap = &rho_e.rho - &eval.occupancy.rho;
        let alpha = config.step_size(i);
        let mut theta = state.theta_old.clone();
        for _ in 0..config.adversarial_steps {
            let g = theta.jacobian_contraction(&gap)?;
            theta = ascend(&theta, &g, alpha);
        }
        eval = likelihood_eval(&theta, mdp, rho_e, &config.solver)?;
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
    }
    Ok(state)
}
