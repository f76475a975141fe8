use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_policy, check_table, state_entropy, xlogx};
use crate::error::Result;
use crate::linalg::solve_discounted;
use crate::mdp::TabularMdp;

/// Unnormalized discounted state-action visitation; sums to `1/(1-gamma)`
/// when computed exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMeasure {
    pub rho: Array2<f64>,
    pub state_marginal: Array1<f64>,
}

impl OccupancyMeasure {
    pub fn from_rho(rho: Array2<f64>) -> Self {
        let state_marginal = rho.sum_axis(Axis(1));
        Self {
            rho,
            state_marginal,
        }
    }

    pub fn total(&self) -> f64 {
        self.rho.sum()
    }

    /// `E_rho[f] = sum_{s,a} rho(s,a) f(s,a)`.
    pub fn expect(&self, f: &Array2<f64>) -> f64 {
        (&self.rho * f).sum()
    }

    /// Largest violation of `rho(s') = eta(s') + gamma sum rho(s,a) P(s'|s,a)`.
    pub fn flow_residual(&self, mdp: &TabularMdp) -> f64 {
        let mut inflow = mdp.initial_dist().clone();
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let w = mdp.gamma() * self.rho[[s, a]];
                for &(j, p) in mdp.successors(s, a) {
                    inflow[j] += w * p;
                }
            }
        }
        (&inflow - &self.state_marginal)
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Total variation between the normalized state-action distributions.
    pub fn tv_distance(&self, other: &OccupancyMeasure) -> f64 {
        let (za, zb) = (self.total(), other.total());
        0.5 * self
            .rho
            .iter()
            .zip(other.rho.iter())
            .map(|(a, b)| (a / za - b / zb).abs())
            .sum::<f64>()
    }
}

/// Exact occupancy of `policy`: solves `d = eta + gamma P_pi^T d` densely,
/// then `rho(s,a) = d(s) pi(a|s)`.
pub fn occupancy(policy: &Array2<f64>, mdp: &TabularMdp) -> Result<OccupancyMeasure> {
    check_policy(policy, mdp)?;
    let kernel_t = mdp.policy_kernel(policy).reversed_axes();
    let d = solve_discounted(&kernel_t, mdp.gamma(), mdp.initial_dist(), "occupancy")?;
    // clamp round-off below zero
    let d = d.mapv(|x| x.max(0.0));
    let rho = policy * &d.clone().insert_axis(Axis(1));
    Ok(OccupancyMeasure {
        rho,
        state_marginal: d,
    })
}

/// Discounted causal entropy `H(pi) = E_rho[-log pi(a|s)]`.
pub fn causal_entropy(policy: &Array2<f64>, mdp: &TabularMdp) -> Result<f64> {
    let occ = occupancy(policy, mdp)?;
    Ok(occ.state_marginal.dot(&state_entropy(policy)))
}

/// Entropy-augmented return `J(pi, r) = E_rho[r] + H(pi)`.
pub fn entropy_return(policy: &Array2<f64>, reward: &Array2<f64>, mdp: &TabularMdp) -> Result<f64> {
    check_table(reward, mdp, "reward")?;
    let occ = occupancy(policy, mdp)?;
    let ent: f64 = occ
        .state_marginal
        .iter()
        .zip(policy.outer_iter())
        .map(|(d, row)| -d * row.iter().map(|&p| xlogx(p)).sum::<f64>())
        .sum();
    Ok(occ.expect(reward) + ent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::random_mdp;
    use crate::soft::{policy_improve, soft_policy_evaluation, uniform_policy, SolverOptions};
    use ndarray::array;

    #[test]
    fn occupancy_mass_and_flow() {
        let mdp = random_mdp(7, 3, 0.95, 9, 0.4).unwrap();
        let pi = policy_improve(mdp.true_reward().unwrap());
        let occ = occupancy(&pi, &mdp).unwrap();
        assert!((occ.total() - 20.0).abs() < 1e-8);
        assert!(occ.flow_residual(&mdp) < 1e-8);
        assert!(occ.rho.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn small_discount_concentrates_on_start() {
        let mdp = random_mdp(4, 2, 0.9, 1, 1.0)
            .unwrap()
            .with_initial_dist(array![0.0, 1.0, 0.0, 0.0])
            .unwrap()
            .with_gamma(1e-6)
            .unwrap();
        let pi = array![[0.5, 0.5], [0.2, 0.8], [1.0, 0.0], [0.3, 0.7]];
        let occ = occupancy(&pi, &mdp).unwrap();
        assert!((occ.rho[[1, 0]] - 0.2).abs() < 1e-5);
        assert!((occ.rho[[1, 1]] - 0.8).abs() < 1e-5);
    }

    #[test]
    fn entropy_extremes() {
        let mdp = random_mdp(5, 3, 0.9, 2, 1.0).unwrap();
        let uniform = uniform_policy(5, 3);
        assert!((causal_entropy(&uniform, &mdp).unwrap() - 3f64.ln() / 0.1).abs() < 1e-8);
        let mut det = Array2::zeros((5, 3));
        det.column_mut(1).fill(1.0);
        assert_eq!(causal_entropy(&det, &mdp).unwrap(), 0.0);
    }

    #[test]
    fn entropy_return_matches_value_identity() {
        let mdp = random_mdp(6, 3, 0.9, 8, 0.7).unwrap();
        let r = mdp.true_reward().unwrap().clone();
        let pi = policy_improve(&(&r * 2.0));
        let j = entropy_return(&pi, &r, &mdp).unwrap();
        let sol = soft_policy_evaluation(&pi, &r, &mdp, &SolverOptions::with_tol(1e-12)).unwrap();
        assert!((j - mdp.initial_dist().dot(&sol.v)).abs() < 1e-6);
        let zero = Array2::zeros((6, 3));
        assert!((entropy_return(&pi, &zero, &mdp).unwrap() - causal_entropy(&pi, &mdp).unwrap()).abs() < 1e-12);
    }
}
