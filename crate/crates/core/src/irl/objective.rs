use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::reward::{eval_reward, RewardParam};
use crate::soft::{
    causal_entropy, log_policy, occupancy, soft_policy_evaluation, soft_value_iteration, OccupancyMeasure,
    SoftSolution, SolverOptions,
};

/// Everything computed along the way to `l(theta)`.
#[derive(Debug, Clone)]
pub struct LikelihoodEval {
    pub value: f64,
    pub reward: Array2<f64>,
    pub solution: SoftSolution,
    pub occupancy: OccupancyMeasure,
}

impl LikelihoodEval {
    pub fn policy(&self) -> &Array2<f64> {
        &self.solution.policy
    }
}

fn check_rho(rho_e: &OccupancyMeasure, mdp: &TabularMdp) -> Result<()> {
    if rho_e.rho.dim() != (mdp.n_states(), mdp.n_actions()) {
        return Err(Error::Shape(format!(
            "expert occupancy is {:?}, MDP is {}x{}",
            rho_e.rho.dim(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    Ok(())
}

/// `E_rhoE[r] - eta . V*_r` with `pi_theta` from soft value iteration.
pub fn likelihood_eval(
    theta: &RewardParam,
    mdp: &TabularMdp,
    rho_e: &OccupancyMeasure,
    opts: &SolverOptions,
) -> Result<LikelihoodEval> {
    check_rho(rho_e, mdp)?;
    let reward = eval_reward(theta, mdp)?;
    let solution = soft_value_iteration(&reward, mdp, opts)?;
    let value = rho_e.expect(&reward) - mdp.initial_dist().dot(&solution.v);
    let occupancy = occupancy(&solution.policy, mdp)?;
    Ok(LikelihoodEval {
        value,
        reward,
        solution,
        occupancy,
    })
}

pub fn likelihood(theta: &RewardParam, mdp: &TabularMdp, rho_e: &OccupancyMeasure, opts: &SolverOptions) -> Result<f64> {
    check_rho(rho_e, mdp)?;
    let reward = eval_reward(theta, mdp)?;
    let solution = soft_value_iteration(&reward, mdp, opts)?;
    Ok(rho_e.expect(&reward) - mdp.initial_dist().dot(&solution.v))
}

/// `E_rhoE[log pi_theta(a|s)]`; equals [`likelihood`] when `rho_e` satisfies flow balance.
pub fn likelihood_log_form(
    theta: &RewardParam,
    mdp: &TabularMdp,
    rho_e: &OccupancyMeasure,
    opts: &SolverOptions,
) -> Result<f64> {
    check_rho(rho_e, mdp)?;
    let reward = eval_reward(theta, mdp)?;
    let solution = soft_value_iteration(&reward, mdp, opts)?;
    let logp = log_policy(&solution.policy);
    // pairs the expert never visits contribute nothing, even where log pi = -inf
    Ok(rho_e
        .rho
        .iter()
        .zip(logp.iter())
        .filter(|(&w, _)| w != 0.0)
        .map(|(w, l)| w * l)
        .sum())
}

/// `grad l = contraction(rho_E - rho_theta)`.
pub fn likelihood_gradient(
    theta: &RewardParam,
    mdp: &TabularMdp,
    rho_e: &OccupancyMeasure,
    opts: &SolverOptions,
) -> Result<Array1<f64>> {
    let eval = likelihood_eval(theta, mdp, rho_e, opts)?;
    theta.jacobian_contraction(&(&rho_e.rho - &eval.occupancy.rho))
}

/// The local approximation around a frozen policy `pi_old`:
/// `E_rhoE[r] - J(pi_old, r) = (rho_E - rho_old) . r - H(pi_old)`.
#[derive(Debug, Clone)]
pub struct Surrogate {
    gap: Array2<f64>,
    entropy: f64,
}

impl Surrogate {
    pub fn new(pi_old: &Array2<f64>, mdp: &TabularMdp, rho_e: &OccupancyMeasure) -> Result<Self> {
        check_rho(rho_e, mdp)?;
        let occ = occupancy(pi_old, mdp)?;
        let entropy = causal_entropy(pi_old, mdp)?;
        Ok(Self {
            gap: &rho_e.rho - &occ.rho,
            entropy,
        })
    }

    /// `rho_E - rho_old`.
    pub fn gap(&self) -> &Array2<f64> {
        &self.gap
    }

    pub fn value(&self, theta: &RewardParam, mdp: &TabularMdp) -> Result<f64> {
        let r = eval_reward(theta, mdp)?;
        Ok((&self.gap * &r).sum() - self.entropy)
    }

    pub fn gradient(&self, theta: &RewardParam) -> Result<Array1<f64>> {
        theta.jacobian_contraction(&self.gap)
    }
}

pub fn surrogate(
    theta: &RewardParam,
    pi_old: &Array2<f64>,
    mdp: &TabularMdp,
    rho_e: &OccupancyMeasure,
) -> Result<f64> {
    Surrogate::new(pi_old, mdp, rho_e)?.value(theta, mdp)
}

/// The surrogate computed by iterating the soft Bellman operator of the
/// frozen policy: `E_rhoE[r] - eta . V^{pi_old}_r`.
pub fn surrogate_by_evaluation(
    theta: &RewardParam,
    pi_old: &Array2<f64>,
    mdp: &TabularMdp,
    rho_e: &OccupancyMeasure,
    opts: &SolverOptions,
) -> Result<f64> {
    check_rho(rho_e, mdp)?;
    let r = eval_reward(theta, mdp)?;
    let eval = soft_policy_evaluation(pi_old, &r, mdp, opts)?;
    Ok(rho_e.expect(&r) - mdp.initial_dist().dot(&eval.v))
}

/// `C = 2|A|/(1-g)^2 + ((5-g)|A|R + (g - g^2 + 2)|A| ln|A|) / (1-g)^4`.
pub fn theoretical_c(n_actions: usize, r_bound: f64, gamma: f64) -> Result<f64> {
    if n_actions < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 actions, got {n_actions}")));
    }
    if !(r_bound >= 0.0 && r_bound.is_finite()) {
        return Err(Error::InvalidArgument(format!("R must be finite and >= 0, got {r_bound}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let a = n_actions as f64;
    let h = 1.0 - gamma;
    Ok(2.0 * a / h.powi(2)
        + ((5.0 - gamma) * a * r_bound + (gamma - gamma * gamma + 2.0) * a * a.ln()) / h.powi(4))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::random_mdp;
    use crate::reward::RewardKind;
    use crate::soft::{policy_improve, soft_policy_evaluation_direct, uniform_policy};
    use ndarray::array;

    fn tight() -> SolverOptions {
        SolverOptions::with_tol(1e-12)
    }

    fn expert_rho(mdp: &TabularMdp) -> OccupancyMeasure {
        let sol = soft_value_iteration(mdp.true_reward().unwrap(), mdp, &tight()).unwrap();
        occupancy(&sol.policy, mdp).unwrap()
    }

    #[test]
    fn theoretical_c_values() {
        assert!((theoretical_c(2, 1.0, 0.9).unwrap() - 111_373.55).abs() < 0.01);
        let hand = 16.0 + (2.25 * 2.0 * 2f64.ln()) / 0.0625;
        assert!((theoretical_c(2, 0.0, 0.5).unwrap() - hand).abs() < 1e-10);
        assert!(theoretical_c(1, 1.0, 0.9).is_err());
        assert!(theoretical_c(2, 1.0, 1.0).is_err());
        assert!(theoretical_c(2, 1.0, 0.0).is_err());
        let mut last = 0.0;
        for i in 1..99 {
            let c = theoretical_c(3, 0.5, i as f64 / 100.0).unwrap();
            assert!(c > last);
            last = c;
        }
    }

    #[test]
    fn dual_forms_agree() {
        for seed in 0..5 {
            let mdp = random_mdp(5, 3, 0.9, seed, 0.6).unwrap();
            let rho_e = expert_rho(&mdp);
            let theta = RewardParam::from_table(&mdp.true_reward().unwrap().mapv(|x| 0.5 * x + 0.1));
            let a = likelihood(&theta, &mdp, &rho_e, &tight()).unwrap();
            let b = likelihood_log_form(&theta, &mdp, &rho_e, &tight()).unwrap();
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            assert!(b <= 0.0);
        }
    }

    #[test]
    fn self_expert_gives_minus_entropy_and_zero_gradient() {
        let mdp = random_mdp(4, 2, 0.8, 3, 1.0).unwrap();
        let theta = RewardParam::from_table(&array![[0.2, -0.3], [1.0, 0.0], [0.0, 0.5], [-1.0, 0.4]]);
        let eval = likelihood_eval(&theta, &mdp, &expert_rho(&mdp), &tight()).unwrap();
        let rho_e = eval.occupancy.clone();
        let l = likelihood(&theta, &mdp, &rho_e, &tight()).unwrap();
        let h = causal_entropy(eval.policy(), &mdp).unwrap();
        assert!((l + h).abs() < 1e-6);
        let g = likelihood_gradient(&theta, &mdp, &rho_e, &tight()).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-9));
    }

    #[test]
    fn tabular_gradient_is_visitation_difference() {
        let mdp = random_mdp(4, 2, 0.9, 1, 1.0).unwrap();
        let rho_e = expert_rho(&mdp);
        let theta = RewardParam::tabular_sa(4, 2);
        let g = likelihood_gradient(&theta, &mdp, &rho_e, &tight()).unwrap();
        let eval = likelihood_eval(&theta, &mdp, &rho_e, &tight()).unwrap();
        let diff = &rho_e.rho - &eval.occupancy.rho;
        assert_eq!(g, Array1::from_iter(diff.iter().copied()));
    }

    #[test]
    fn surrogate_touches_likelihood() {
        let mdp = random_mdp(5, 3, 0.9, 11, 0.5).unwrap();
        let rho_e = expert_rho(&mdp);
        let theta = RewardParam::new(RewardKind::TabularS, array![0.3, -0.2, 0.0, 0.9, -1.0], None, None).unwrap();
        let eval = likelihood_eval(&theta, &mdp, &rho_e, &tight()).unwrap();
        let s = surrogate(&theta, eval.policy(), &mdp, &rho_e).unwrap();
        assert!((s - eval.value).abs() < 1e-6);
        let by_eval = surrogate_by_evaluation(&theta, eval.policy(), &mdp, &rho_e, &tight()).unwrap();
        assert!((s - by_eval).abs() < 1e-8);
    }

    #[test]
    fn surrogate_uniform_constant_reward_closed_form() {
        let mdp = random_mdp(4, 3, 0.75, 2, 1.0).unwrap();
        let rho_e = expert_rho(&mdp);
        let c = 0.7;
        let theta = RewardParam::from_table(&Array2::from_elem((4, 3), c));
        let pi = uniform_policy(4, 3);
        let s = surrogate(&theta, &pi, &mdp, &rho_e).unwrap();
        // V = (c + ln 3)/(1 - gamma) everywhere and E_rhoE[c] = c/(1 - gamma)
        let closed = c / 0.25 - (c + 3f64.ln()) / 0.25;
        assert!((s - closed).abs() < 1e-9);
        let direct = soft_policy_evaluation_direct(&pi, &eval_reward(&theta, &mdp).unwrap(), &mdp).unwrap();
        assert!((s - (rho_e.expect(&eval_reward(&theta, &mdp).unwrap()) - mdp.initial_dist().dot(&direct.v))).abs() < 1e-9);
    }

    #[test]
    fn surrogate_dominates_likelihood() {
        let mdp = random_mdp(5, 2, 0.9, 4, 0.8).unwrap();
        let rho_e = expert_rho(&mdp);
        let old = RewardParam::tabular_sa(5, 2);
        let pi_old = policy_improve(&Array2::zeros((5, 2)));
        let new = old.with_theta(Array1::from_iter((0..10).map(|i| (i as f64 * 0.37).sin())));
        let s = surrogate(&new, &pi_old, &mdp, &rho_e).unwrap();
        let l = likelihood(&new, &mdp, &rho_e, &tight()).unwrap();
        assert!(s >= l - 1e-9);
    }
}
