use ndarray::{Array1, Array2};

use super::objective::likelihood_eval;
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::reward::RewardParam;
use crate::soft::{check_table, soft_max_value, OccupancyMeasure, SolverOptions};

/// `r_Q(s,a) = Q(s,a) - gamma E_{s'}[logsumexp_a' Q(s',a')]`.
pub fn implicit_reward_transform(q: &Array2<f64>, mdp: &TabularMdp) -> Result<Array2<f64>> {
    check_table(q, mdp, "Q")?;
    if q.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("Q is not finite".into()));
    }
    let mut next = mdp.expect_next(&soft_max_value(q));
    next.mapv_inplace(|x| mdp.gamma() * x);
    Ok(q - &next)
}

/// Likelihood written in terms of `Q`: `E_rhoE[r_Q] - eta . V_Q`.
pub fn implicit_likelihood(q: &Array2<f64>, mdp: &TabularMdp, rho_e: &OccupancyMeasure) -> Result<f64> {
    let r = implicit_reward_transform(q, mdp)?;
    Ok(rho_e.expect(&r) - mdp.initial_dist().dot(&soft_max_value(q)))
}

fn state_gradients(theta: &RewardParam, n_states: usize, n_actions: usize) -> Result<Vec<Array1<f64>>> {
    (0..n_states)
        .map(|s| {
            let mut w = Array2::zeros((n_states, n_actions));
            w[[s, 0]] = 1.0;
            theta.jacobian_contraction(&w)
        })
        .collect()
}

/// `-gamma Cov(rho_E(s)/rho_theta(s), grad r_theta(s))` with the covariance
/// weighted by the unnormalized state occupancy of `pi_theta`:
/// `sum d f g - (sum d f / sum d)(sum d g)`.
pub fn firl_state_gradient(
    theta: &RewardParam,
    mdp: &TabularMdp,
    rho_e: &OccupancyMeasure,
    opts: &SolverOptions,
) -> Result<Array1<f64>> {
    if !theta.is_state_only() {
        return Err(Error::RewardKind("the state-marginal gradient needs a state-only reward".into()));
    }
    let eval = likelihood_eval(theta, mdp, rho_e, opts)?;
    let d = &eval.occupancy.state_marginal;
    if let Some(s) = d.iter().position(|&x| x <= 0.0) {
        return Err(Error::ZeroMarginal(s));
    }
    let ratio = &rho_e.state_marginal / d;
    let grads = state_gradients(theta, mdp.n_states(), mdp.n_actions())?;
    let total: f64 = d.sum();
    let mean_ratio = d.dot(&ratio) / total;
    let mut cov = Array1::zeros(theta.dim());
    for (s, g) in grads.iter().enumerate() {
        cov.scaled_add(d[s] * (ratio[s] - mean_ratio), g);
    }
    Ok(cov * -mdp.gamma())
}

/// `KL(p_E || p_theta)` between the normalized state marginals.
pub fn state_marginal_kl(
    theta: &RewardParam,
    mdp: &TabularMdp,
    rho_e: &OccupancyMeasure,
    opts: &SolverOptions,
) -> Result<f64> {
    let eval = likelihood_eval(theta, mdp, rho_e, opts)?;
    let d = &eval.occupancy.state_marginal;
    let (ze, zt) = (rho_e.state_marginal.sum(), d.sum());
    let mut kl = 0.0;
    for (s, (&pe, &pt)) in rho_e.state_marginal.iter().zip(d.iter()).enumerate() {
        if pe == 0.0 {
            continue;
        }
        if pt <= 0.0 {
            return Err(Error::ZeroMarginal(s));
        }
        let (pe, pt) = (pe / ze, pt / zt);
        kl += pe * (pe / pt).ln();
    }
    Ok(kl)
}
