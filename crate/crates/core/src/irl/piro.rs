use ndarray::Array2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ascend;
use super::config::{IrlConfig, OccupancyMode, PenaltyStep};
use super::objective::{likelihood_eval, Surrogate};
use super::run::{j_gap, true_return, IrlRunState, IterationRecord, Stopwatch};
use crate::demos::{rollout, DemoSet};
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::reward::{eps_l2, eps_l2_gradient, eps_l2_prox, full_sample, RewardParam};
use crate::soft::{occupancy, soft_policy_iteration, uniform_policy, OccupancyMeasure};

/// Dead-band update of the penalty coefficient. A zero coefficient stays
/// zero so the penalty can be switched off entirely.
pub fn adapt_mu(mu: f64, eps_bar: f64, target: f64, x: f64, y: f64, bounds: (f64, f64)) -> f64 {
    if mu == 0.0 {
        return 0.0;
    }
    let next = if eps_bar > target * x {
        mu * y
    } else if eps_bar < target / x {
        mu / y
    } else {
        mu
    };
    next.clamp(bounds.0, bounds.1)
}

struct Batch {
    rho_e: Array2<f64>,
    rho_s: Array2<f64>,
    pairs: Vec<(usize, usize)>,
}

/// Demo minibatch (uniform without replacement, rescaled so its discounted
/// counts estimate the expert occupancy) and one fresh rollout of `pi`.
fn sampled_batch(
    demos: &DemoSet,
    all: &[(usize, usize, usize)],
    pi: &Array2<f64>,
    mdp: &TabularMdp,
    config: &IrlConfig,
    rng: &mut ChaCha8Rng,
) -> Batch {
    let dims = (mdp.n_states(), mdp.n_actions());
    let b = config.demo_batch.min(all.len());
    let scale = all.len() as f64 / (b as f64 * demos.n_traj() as f64);
    let mut rho_e = Array2::zeros(dims);
    let mut pairs = Vec::with_capacity(b + config.rollout_len);
    for k in sample(rng, all.len(), b) {
        let (s, a, t) = all[k];
        rho_e[[s, a]] += mdp.gamma().powi(t as i32) * scale;
        pairs.push((s, a));
    }
    let mut rho_s = Array2::zeros(dims);
    let mut disc = 1.0;
    for (s, a) in rollout(mdp, pi, config.rollout_len, rng) {
        rho_s[[s, a]] += disc;
        disc *= mdp.gamma();
        pairs.push((s, a));
    }
    Batch { rho_e, rho_s, pairs }
}

/// Proximal inverse reward optimization: `k` soft policy iteration rounds,
/// `n` ascent steps on `l_old(theta) - mu * eps_bar(theta)`, then the
/// dead-band update of `mu`.
pub fn piro_train(
    config: &IrlConfig,
    mdp: &TabularMdp,
    rho_e: &OccupancyMeasure,
    demos: Option<&DemoSet>,
    init: RewardParam,
) -> Result<IrlRunState> {
    let sampled = config.occupancy_mode == OccupancyMode::Sampled;
    let demos = match (sampled, demos) {
        (true, None) => return Err(Error::Config("sampled occupancy mode needs demonstrations".into())),
        (true, Some(d)) => Some(d),
        (false, _) => None,
    };
    let all_pairs = demos.map(DemoSet::pairs).unwrap_or_default();
    if sampled && all_pairs.is_empty() {
        return Err(Error::Config("demonstrations are empty".into()));
    }
    let full = full_sample(mdp);
    let bounds = config.mu_bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let initial = likelihood_eval(&init, mdp, rho_e, &config.solver)?;
    let pi0 = uniform_policy(mdp.n_states(), mdp.n_actions());
    let mut state = IrlRunState::new(init, pi0, config.mu_init, &initial, mdp);
    for i in 1..=config.m {
        let watch = Stopwatch::start();
        let r_old = state.theta_old.table(mdp.n_states(), mdp.n_actions())?;
        let pi = soft_policy_iteration(&state.pi_old, &r_old, mdp, config.k, &config.solver)?;
        let exact_gap = if sampled {
            None
        } else {
            Some(&rho_e.rho - &occupancy(&pi, mdp)?.rho)
        };

        let mut theta = state.theta_old.clone();
        let mut last_sample = full.clone();
        for _ in 0..config.n {
            let c = match (&exact_gap, demos) {
                (Some(gap), _) => theta.jacobian_contraction(gap)?,
                (None, Some(d)) => {
                    let batch = sampled_batch(d, &all_pairs, &pi, mdp, config, &mut rng);
                    last_sample = batch.pairs;
                    theta.jacobian_contraction(&(&batch.rho_e - &batch.rho_s))?
                }
                (None, None) => unreachable!("checked above"),
            };
            theta = match config.penalty_step {
                PenaltyStep::Gradient => {
                    let e = eps_l2_gradient(&state.theta_old, &theta, mdp, &last_sample)?;
                    let g = &c - &(&e * state.mu);
                    ascend(&theta, &g, config.reward_lr)
                }
                PenaltyStep::Proximal => {
                    let half = ascend(&theta, &c, config.reward_lr);
                    if state.mu == 0.0 {
                        half
                    } else {
                        eps_l2_prox(&state.theta_old, &half, mdp, &last_sample, config.reward_lr * state.mu)?
                    }
                }
            };
        }

        let eps_bar = eps_l2(&state.theta_old, &theta, mdp, &last_sample)?;
        state.mu = adapt_mu(state.mu, eps_bar, config.eps_target, config.x_scale, config.y_scale, bounds);

        let eval = likelihood_eval(&theta, mdp, rho_e, &config.solver)?;
        let sur = Surrogate::new(&pi, mdp, rho_e)?.value(&theta, mdp)?;
        state.push(IterationRecord {
            iteration: i,
            likelihood: eval.value,
            surrogate: sur,
            eps: eps_bar,
            mu: state.mu,
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
