use ndarray::{Array1, Array2, Array3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TabularMdp;
use crate::error::{Error, Result};

/// Random MDP for property tests: each transition row has support on
/// `round(sparsity * n_states)` successors with uniform random weights,
/// `eta` is uniform and the true reward is uniform in `[-1, 1]`.
pub fn random_mdp(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    seed: u64,
    sparsity: f64,
) -> Result<TabularMdp> {
    if n_states < 2 || n_actions < 2 {
        return Err(Error::InvalidArgument("random MDPs need >= 2 states and actions".into()));
    }
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(Error::InvalidArgument(format!("sparsity {sparsity} not in (0,1]")));
    }
    let support = (sparsity * n_states as f64).round() as usize;
    if support == 0 {
        return Err(Error::InvalidArgument(format!(
            "sparsity {sparsity} leaves empty rows for {n_states} states"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Array3::<f64>::zeros((n_states, n_actions, n_states));
    for s in 0..n_states {
        for a in 0..n_actions {
            let idx = sample(&mut rng, n_states, support);
            let weights: Vec<f64> = (0..support).map(|_| 1.0 - rng.random::<f64>()).collect();
            let total: f64 = weights.iter().sum();
            for (j, w) in idx.into_iter().zip(weights) {
                p[[s, a, j]] = w / total;
            }
        }
    }
    let eta = Array1::from_elem(n_states, 1.0 / n_states as f64);
    let reward = Array2::from_shape_fn((n_states, n_actions), |_| rng.random_range(-1.0..=1.0));
    TabularMdp::new(p, eta, gamma, Some(reward), None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_instance_valid_and_deterministic() {
        let a = random_mdp(4, 2, 0.9, 1, 1.0).unwrap();
        let b = random_mdp(4, 2, 0.9, 1, 1.0).unwrap();
        assert_eq!(a, b);
        assert!(a.true_reward().unwrap().iter().all(|r| (-1.0..=1.0).contains(r)));
    }

    #[test]
    fn sparse_rows_sum_to_one() {
        let mdp = random_mdp(50, 5, 0.99, 7, 0.3).unwrap();
        for s in 0..50 {
            for a in 0..5 {
                let row = mdp.transition().slice(ndarray::s![s, a, ..]);
                assert!((row.sum() - 1.0).abs() < 1e-12);
                assert_eq!(row.iter().filter(|&&p| p > 0.0).count(), 15);
            }
        }
    }

    #[test]
    fn rejects_degenerate_arguments() {
        assert!(random_mdp(1, 2, 0.9, 0, 1.0).is_err());
        assert!(random_mdp(4, 1, 0.9, 0, 1.0).is_err());
        assert!(random_mdp(4, 2, 0.9, 0, 0.0).is_err());
        assert!(random_mdp(4, 2, 0.9, 0, 0.1).is_err());
        assert!(random_mdp(4, 2, 1.0, 0, 1.0).is_err());
    }
}
