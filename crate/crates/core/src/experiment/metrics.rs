use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irl::IrlRunState;
use crate::linalg::solve_discounted;
use crate::mdp::TabularMdp;
use crate::soft::{check_policy, check_table, log_policy, OccupancyMeasure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub likelihood_curve: Vec<f64>,
    pub return_curve: Vec<f64>,
    pub kl_expert_learner: f64,
    pub reward_correlation: f64,
    pub monotonicity_violations: usize,
}

impl MetricBundle {
    pub fn from_run(
        state: &IrlRunState,
        pi_expert: &Array2<f64>,
        pi_learner: &Array2<f64>,
        rho_e: &OccupancyMeasure,
        reward_correlation: f64,
        violation_tol: f64,
    ) -> Self {
        Self {
            likelihood_curve: state.likelihood_curve(),
            return_curve: state.return_curve(),
            kl_expert_learner: kl_expert_learner(pi_expert, pi_learner, rho_e),
            reward_correlation,
            monotonicity_violations: state.monotonicity_violations(violation_tol),
        }
    }

    pub fn final_likelihood(&self) -> f64 {
        self.likelihood_curve.last().copied().unwrap_or(f64::NAN)
    }

    pub fn final_return(&self) -> f64 {
        self.return_curve.last().copied().unwrap_or(f64::NAN)
    }
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        // tied block gets the mean of its 1-based positions
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman rank correlation with average ranks for ties; 0 when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidArgument("spearman needs two equal-length samples of size >= 2".into()));
    }
    Ok(pearson(&ranks(a), &ranks(b)))
}

/// `E_rhoE[log pi_E - log pi]` over the pairs the expert visits.
pub fn kl_expert_learner(pi_expert: &Array2<f64>, pi: &Array2<f64>, rho_e: &OccupancyMeasure) -> f64 {
    let (le, l) = (log_policy(pi_expert), log_policy(pi));
    let mut kl = 0.0;
    for ((&w, &a), &b) in rho_e.rho.iter().zip(le.iter()).zip(l.iter()) {
        if w > 0.0 && a.is_finite() {
            kl += w * (a - b);
        }
    }
    kl
}

/// Undiscounted expected cumulative reward until absorption, from `s0 ~ eta`.
/// Terminal states contribute nothing; fails if some non-terminal state
/// cannot reach a terminal one.
pub fn episodic_return(policy: &Array2<f64>, reward: &Array2<f64>, mdp: &TabularMdp) -> Result<f64> {
    check_policy(policy, mdp)?;
    check_table(reward, mdp, "reward")?;
    let transient: Vec<usize> = (0..mdp.n_states()).filter(|&s| !mdp.is_terminal(s)).collect();
    if transient.len() == mdp.n_states() {
        return Err(Error::InvalidMdp("episodic return needs terminal states".into()));
    }
    let k = mdp.policy_kernel(policy);
    let sub = Array2::from_shape_fn((transient.len(), transient.len()), |(i, j)| k[[transient[i], transient[j]]]);
    let r_pi = Array1::from_iter(transient.iter().map(|&s| policy.row(s).dot(&reward.row(s))));
    let v = solve_discounted(&sub, 1.0, &r_pi, "episodic return")?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Singular("episodic return"));
    }
    Ok(transient.iter().zip(v.iter()).map(|(&s, &x)| mdp.initial_dist()[s] * x).sum())
}
