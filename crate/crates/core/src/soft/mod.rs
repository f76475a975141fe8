//! Exact maximum-entropy RL on tabular MDPs (temperature fixed at 1).

mod occupancy;

pub use occupancy::{causal_entropy, entropy_return, occupancy, OccupancyMeasure};

use ndarray::{Array1, Array2, ArrayView1, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_discounted;
use crate::mdp::TabularMdp;

const POLICY_ROW_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// Soft Q, soft V and the associated softmax (or evaluated) policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SoftSolution {
    pub q: Array2<f64>,
    pub v: Array1<f64>,
    pub policy: Array2<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// `log sum exp` with a max shift.
pub fn logsumexp(row: ArrayView1<f64>) -> f64 {
    let m = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Row-wise `log sum exp`.
pub fn soft_max_value(q: &Array2<f64>) -> Array1<f64> {
    q.outer_iter().map(logsumexp).collect()
}

/// Row-softmax of `q`: the energy-based policy `pi(a|s) ∝ exp Q(s,a)`.
pub fn policy_improve(q: &Array2<f64>) -> Array2<f64> {
    let mut pi = q.clone();
    for mut row in pi.outer_iter_mut() {
        let m = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - m).exp());
        let z = row.sum();
        row.mapv_inplace(|x| x / z);
    }
    pi
}

/// `x log x` with the `0 log 0 = 0` convention.
pub(crate) fn xlogx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Per-state entropy `-sum_a pi(a|s) log pi(a|s)`.
pub fn state_entropy(policy: &Array2<f64>) -> Array1<f64> {
    policy
        .outer_iter()
        .map(|row| -row.iter().map(|&p| xlogx(p)).sum::<f64>())
        .collect()
}

/// Elementwise `log pi` with `log 0 = -inf`.
pub fn log_policy(policy: &Array2<f64>) -> Array2<f64> {
    policy.mapv(f64::ln)
}

pub(crate) fn check_policy(policy: &Array2<f64>, mdp: &TabularMdp) -> Result<()> {
    if policy.dim() != (mdp.n_states(), mdp.n_actions()) {
        return Err(Error::Shape(format!(
            "policy is {:?}, MDP is {}x{}",
            policy.dim(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    for (s, row) in policy.outer_iter().enumerate() {
        let sum = row.sum();
        if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > POLICY_ROW_TOL {
            return Err(Error::NonStochasticPolicy { state: s, sum });
        }
    }
    Ok(())
}

pub(crate) fn check_table(table: &Array2<f64>, mdp: &TabularMdp, what: &str) -> Result<()> {
    if table.dim() != (mdp.n_states(), mdp.n_actions()) {
        return Err(Error::Shape(format!(
            "{what} is {:?}, MDP is {}x{}",
            table.dim(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    Ok(())
}

/// `V(s) = E_{a~pi}[Q(s,a) - log pi(a|s)]`.
fn policy_value(q: &Array2<f64>, policy: &Array2<f64>) -> Array1<f64> {
    let mut v = Array1::zeros(q.nrows());
    Zip::from(&mut v)
        .and(q.rows())
        .and(policy.rows())
        .for_each(|v, q, pi| {
            *v = q
                .iter()
                .zip(pi.iter())
                .filter(|(_, &p)| p > 0.0)
                .map(|(&q, &p)| p * (q - p.ln()))
                .sum();
        });
    v
}

fn sup_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a)
        .and(b)
        .fold(0.0f64, |m, &x, &y| m.max((x - y).abs()))
}

/// One application of the soft Bellman operator `B^pi_r`.
pub fn soft_bellman_apply(
    q: &Array2<f64>,
    policy: &Array2<f64>,
    reward: &Array2<f64>,
    mdp: &TabularMdp,
) -> Result<Array2<f64>> {
    check_table(q, mdp, "Q")?;
    check_table(reward, mdp, "reward")?;
    check_policy(policy, mdp)?;
    Ok(bellman(q, policy, reward, mdp))
}

fn bellman(q: &Array2<f64>, policy: &Array2<f64>, reward: &Array2<f64>, mdp: &TabularMdp) -> Array2<f64> {
    let v = policy_value(q, policy);
    let mut out = mdp.expect_next(&v);
    out.mapv_inplace(|x| mdp.gamma() * x);
    out += reward;
    out
}

/// Iterate `B^pi_r` from `Q = 0` until the sup-norm step drops below `tol`.
pub fn soft_policy_evaluation(
    policy: &Array2<f64>,
    reward: &Array2<f64>,
    mdp: &TabularMdp,
    opts: &SolverOptions,
) -> Result<SoftSolution> {
    check_table(reward, mdp, "reward")?;
    check_policy(policy, mdp)?;
    let mut q = Array2::zeros(reward.dim());
    for it in 1..=opts.max_iter {
        let next = bellman(&q, policy, reward, mdp);
        let residual = sup_diff(&next, &q);
        q = next;
        if residual <= opts.tol {
            return Ok(SoftSolution {
                v: policy_value(&q, policy),
                q,
                policy: policy.clone(),
                iterations: it,
                residual,
            });
        }
    }
    let residual = sup_diff(&bellman(&q, policy, reward, mdp), &q);
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        residual,
    })
}

/// Policy evaluation by a direct linear solve of
/// `(I - gamma P_pi) V = r_pi + H_pi`, then `Q = r + gamma P V`.
pub fn soft_policy_evaluation_direct(
    policy: &Array2<f64>,
    reward: &Array2<f64>,
    mdp: &TabularMdp,
) -> Result<SoftSolution> {
    check_table(reward, mdp, "reward")?;
    check_policy(policy, mdp)?;
    let kernel = mdp.policy_kernel(policy);
    let h = state_entropy(policy);
    let rhs: Array1<f64> = (policy * reward).sum_axis(ndarray::Axis(1)) + &h;
    let v = solve_discounted(&kernel, mdp.gamma(), &rhs, "policy evaluation")?;
    let mut q = mdp.expect_next(&v);
    q.mapv_inplace(|x| mdp.gamma() * x);
    q += reward;
    let residual = sup_diff(&bellman(&q, policy, reward, mdp), &q);
    Ok(SoftSolution {
        q,
        v,
        policy: policy.clone(),
        iterations: 0,
        residual,
    })
}

/// Optimal soft Q by iterating `Q <- r + gamma P logsumexp(Q)`.
pub fn soft_value_iteration(
    reward: &Array2<f64>,
    mdp: &TabularMdp,
    opts: &SolverOptions,
) -> Result<SoftSolution> {
    check_table(reward, mdp, "reward")?;
    let mut q = Array2::zeros(reward.dim());
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let v = soft_max_value(&q);
        let mut next = mdp.expect_next(&v);
        next.mapv_inplace(|x| mdp.gamma() * x);
        next += reward;
        residual = sup_diff(&next, &q);
        q = next;
        if residual <= opts.tol {
            return Ok(SoftSolution {
                v: soft_max_value(&q),
                policy: policy_improve(&q),
                q,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        residual,
    })
}

/// `rounds` steps of soft policy iteration from `policy`: evaluate, then
/// take the softmax of the evaluated Q.
pub fn soft_policy_iteration(
    policy: &Array2<f64>,
    reward: &Array2<f64>,
    mdp: &TabularMdp,
    rounds: usize,
    opts: &SolverOptions,
) -> Result<Array2<f64>> {
    let mut pi = policy.clone();
    for _ in 0..rounds {
        let eval = soft_policy_evaluation(&pi, reward, mdp, opts)?;
        pi = policy_improve(&eval.q);
    }
    Ok(pi)
}

pub fn uniform_policy(n_states: usize, n_actions: usize) -> Array2<f64> {
    Array2::from_elem((n_states, n_actions), 1.0 / n_actions as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::random_mdp;
    use ndarray::{array, Array3};

    fn chain(gamma: f64) -> TabularMdp {
        // two states; action 0 stays, action 1 switches
        let mut p = Array3::zeros((2, 2, 2));
        p[[0, 0, 0]] = 1.0;
        p[[0, 1, 1]] = 1.0;
        p[[1, 0, 1]] = 1.0;
        p[[1, 1, 0]] = 1.0;
        TabularMdp::new(p, array![1.0, 0.0], gamma, None, None).unwrap()
    }

    #[test]
    fn logsumexp_is_shift_stable() {
        let big = array![1000.0, 1000.0];
        assert!((logsumexp(big.view()) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(logsumexp(array![f64::NEG_INFINITY].view()), f64::NEG_INFINITY);
    }

    #[test]
    fn policy_improve_examples() {
        let pi = policy_improve(&array![[2.0, 2.0], [0.0, 3f64.ln()]]);
        assert!((pi[[0, 0]] - 0.5).abs() < 1e-15);
        assert!((pi[[1, 0]] - 0.25).abs() < 1e-15);
        assert!((pi[[1, 1]] - 0.75).abs() < 1e-15);
        let q = array![[0.3, -1.2, 4.0], [2.0, 2.5, 1.0]];
        let shifted = &q + &array![[7.5], [-3.25]];
        let diff = sup_diff(&policy_improve(&q), &policy_improve(&shifted));
        assert!(diff < 1e-14);
    }

    #[test]
    fn bellman_zero_discount_returns_reward() {
        let mdp = chain(0.0);
        let r = array![[0.5, -1.0], [2.0, 0.25]];
        let q = array![[10.0, 3.0], [-4.0, 8.0]];
        let out = soft_bellman_apply(&q, &uniform_policy(2, 2), &r, &mdp).unwrap();
        assert_eq!(out, r);
    }

    #[test]
    fn bellman_uniform_half_discount() {
        let mdp = chain(0.5);
        let r = Array2::ones((2, 2));
        let out = soft_bellman_apply(&Array2::zeros((2, 2)), &uniform_policy(2, 2), &r, &mdp).unwrap();
        let expect = 1.0 + 0.5 * 2f64.ln();
        for x in out.iter() {
            assert!((x - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn bellman_rejects_bad_policy() {
        let mdp = chain(0.5);
        let bad = array![[0.6, 0.6], [0.5, 0.5]];
        let err = soft_bellman_apply(&Array2::zeros((2, 2)), &bad, &Array2::zeros((2, 2)), &mdp);
        assert!(matches!(err, Err(Error::NonStochasticPolicy { state: 0, .. })));
    }

    #[test]
    fn bellman_double_application_is_deterministic() {
        let mdp = random_mdp(6, 3, 0.9, 3, 1.0).unwrap();
        let r = mdp.true_reward().unwrap().clone();
        let pi = policy_improve(&r);
        let q0 = Array2::from_elem((6, 3), 0.7);
        let twice = bellman(&bellman(&q0, &pi, &r, &mdp), &pi, &r, &mdp);
        let again = bellman(&bellman(&q0, &pi, &r, &mdp), &pi, &r, &mdp);
        assert!(sup_diff(&twice, &again) <= 1e-14);
    }

    #[test]
    fn evaluation_matches_linear_solve() {
        let mdp = random_mdp(5, 3, 0.9, 11, 0.6).unwrap();
        let r = Array2::from_elem((5, 3), 0.4);
        let pi = policy_improve(&array![[0.0, 1.0, 2.0], [1.0, 1.0, 0.0], [0.5, 0.0, 0.0], [3.0, 0.0, 1.0], [0.0, 0.0, 0.0]]);
        let iter = soft_policy_evaluation(&pi, &r, &mdp, &SolverOptions::with_tol(1e-12)).unwrap();
        let direct = soft_policy_evaluation_direct(&pi, &r, &mdp).unwrap();
        assert!(sup_diff(&iter.q, &direct.q) < 1e-10);
        assert!(direct.residual < 1e-12);
        let again = soft_bellman_apply(&iter.q, &pi, &r, &mdp).unwrap();
        assert!(sup_diff(&again, &iter.q) <= 1e-12);
    }

    #[test]
    fn constant_reward_uniform_policy_closed_form() {
        // V = (c + log|A|) / (1 - gamma) for uniform pi and constant c
        let mdp = random_mdp(4, 3, 0.8, 2, 1.0).unwrap();
        let c = -0.3;
        let r = Array2::from_elem((4, 3), c);
        let sol = soft_policy_evaluation(&uniform_policy(4, 3), &r, &mdp, &SolverOptions::default()).unwrap();
        let v = (c + 3f64.ln()) / 0.2;
        let q = c + 0.8 * v;
        for s in 0..4 {
            assert!((sol.v[s] - v).abs() < 1e-8);
            assert!((sol.q[[s, 1]] - q).abs() < 1e-8);
        }
    }

    #[test]
    fn evaluation_zero_discount_single_sweep() {
        let mdp = chain(0.0);
        let r = array![[1.0, 2.0], [3.0, 4.0]];
        let sol = soft_policy_evaluation(&uniform_policy(2, 2), &r, &mdp, &SolverOptions::default()).unwrap();
        assert_eq!(sol.q, r);
        assert!(sol.iterations <= 2);
    }

    #[test]
    fn evaluation_reports_non_convergence() {
        let mdp = random_mdp(4, 2, 0.99, 5, 1.0).unwrap();
        let r = mdp.true_reward().unwrap().clone();
        let opts = SolverOptions { tol: 1e-12, max_iter: 5 };
        assert!(matches!(
            soft_policy_evaluation(&uniform_policy(4, 2), &r, &mdp, &opts),
            Err(Error::NotConverged { iterations: 5, .. })
        ));
        assert!(soft_value_iteration(&r, &mdp, &opts).is_err());
    }

    #[test]
    fn single_state_single_action_geometric() {
        let p = Array3::ones((1, 1, 1));
        let mdp = TabularMdp::new(p, array![1.0], 0.9, None, None).unwrap();
        let sol = soft_value_iteration(&array![[2.0]], &mdp, &SolverOptions::default()).unwrap();
        assert!((sol.q[[0, 0]] - 20.0).abs() < 1e-8);
    }

    #[test]
    fn value_iteration_matches_long_sweep_oracle() {
        let mdp = chain(0.9);
        let r = array![[1.0, 0.0], [-0.5, 0.3]];
        let sol = soft_value_iteration(&r, &mdp, &SolverOptions::with_tol(1e-13)).unwrap();
        let mut q: Array2<f64> = Array2::zeros((2, 2));
        for _ in 0..10_000 {
            let v: Array1<f64> = q.outer_iter().map(|row| row.iter().map(|x| x.exp()).sum::<f64>().ln()).collect();
            q = Array2::from_shape_fn((2, 2), |(s, a)| {
                let next = if a == 0 { s } else { 1 - s };
                r[[s, a]] + 0.9 * v[next]
            });
        }
        assert!(sup_diff(&sol.q, &q) < 1e-9);
        for s in 0..2 {
            assert!((sol.v[s] - logsumexp(sol.q.row(s))).abs() < 1e-12);
            assert!((sol.policy.row(s).sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn policy_iteration_converges_to_value_iteration() {
        let mdp = random_mdp(6, 3, 0.9, 4, 0.5).unwrap();
        let r = mdp.true_reward().unwrap().clone();
        let opts = SolverOptions::with_tol(1e-12);
        let vi = soft_value_iteration(&r, &mdp, &opts).unwrap();
        let pi = soft_policy_iteration(&uniform_policy(6, 3), &r, &mdp, 30, &opts).unwrap();
        assert!(sup_diff(&pi, &vi.policy) < 1e-9);
    }
}
