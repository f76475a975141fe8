//! Monte-Carlo aggregation of the classic cart-pole system onto a state grid.

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{normalize_rows, TabularMdp};
use crate::error::{Error, Result};

/// Largest admissible number of grid cells.
pub const CARTPOLE_STATE_CAP: usize = 20_000;

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
const HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * HALF_LENGTH;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;
const X_LIMIT: f64 = 2.4;
const THETA_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
const INIT_SPREAD: f64 = 0.05;
const INIT_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinnedCartPoleSpec {
    /// Bin counts for (x, x_dot, theta, theta_dot).
    pub bins: [usize; 4],
    #[serde(default = "two")]
    pub n_actions: usize,
    #[serde(default = "one")]
    pub reward_scale: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Binning ranges per dimension. Velocities outside their range fall
    /// into the edge bins; positions outside are failures.
    #[serde(default = "default_bounds")]
    pub bounds: [(f64, f64); 4],
}

fn two() -> usize {
    2
}
fn one() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    0.9
}
fn default_bounds() -> [(f64, f64); 4] {
    [(-X_LIMIT, X_LIMIT), (-3.0, 3.0), (-THETA_LIMIT, THETA_LIMIT), (-3.5, 3.5)]
}

impl BinnedCartPoleSpec {
    pub fn new(bins: [usize; 4]) -> Self {
        Self {
            bins,
            n_actions: 2,
            reward_scale: 1.0,
            gamma: default_gamma(),
            bounds: default_bounds(),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.bins.iter().product()
    }

    fn validate(&self) -> Result<()> {
        if self.n_actions != 2 {
            return Err(Error::InvalidSpec("cart-pole has exactly 2 actions".into()));
        }
        if self.bins.iter().any(|&b| b == 0) {
            return Err(Error::InvalidSpec("bin counts must be positive".into()));
        }
        let cells = self
            .bins
            .iter()
            .try_fold(1usize, |acc, &b| acc.checked_mul(b))
            .unwrap_or(usize::MAX);
        if cells > CARTPOLE_STATE_CAP {
            return Err(Error::InvalidSpec(format!(
                "{cells} cells exceeds the cap of {CARTPOLE_STATE_CAP}"
            )));
        }
        for (lo, hi) in self.bounds {
            if !(lo < hi) {
                return Err(Error::InvalidSpec("empty bin range".into()));
            }
        }
        Ok(())
    }

    fn bin_of(&self, state: &[f64; 4]) -> usize {
        let mut idx = 0;
        for d in 0..4 {
            let (lo, hi) = self.bounds[d];
            let n = self.bins[d];
            let frac = (state[d] - lo) / (hi - lo);
            let b = ((frac * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize;
            idx = idx * n + b;
        }
        idx
    }

    fn cell_box(&self, mut cell: usize) -> [(f64, f64); 4] {
        let mut out = [(0.0, 0.0); 4];
        for d in (0..4).rev() {
            let n = self.bins[d];
            let b = cell % n;
            cell /= n;
            let (lo, hi) = self.bounds[d];
            let w = (hi - lo) / n as f64;
            out[d] = (lo + w * b as f64, lo + w * (b + 1) as f64);
        }
        out
    }
}

fn failed(state: &[f64; 4]) -> bool {
    state[0].abs() > X_LIMIT || state[2].abs() > THETA_LIMIT
}

/// One Euler step of the pole-on-cart equations of motion.
pub(crate) fn cartpole_step(state: [f64; 4], action: usize) -> [f64; 4] {
    let [x, x_dot, theta, theta_dot] = state;
    let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
    let (sin, cos) = theta.sin_cos();
    let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
    let theta_acc = (GRAVITY * sin - cos * temp)
        / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
    let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
    [
        x + TAU * x_dot,
        x_dot + TAU * x_acc,
        theta + TAU * theta_dot,
        theta_dot + TAU * theta_acc,
    ]
}

/// Estimate a tabular MDP from the cart-pole dynamics. The last state is an
/// absorbing zero-reward failure state.
pub fn build_binned_cartpole(
    spec: &BinnedCartPoleSpec,
    samples_per_cell: usize,
    seed: u64,
) -> Result<TabularMdp> {
    spec.validate()?;
    if samples_per_cell == 0 {
        return Err(Error::InvalidArgument("samples_per_cell must be >= 1".into()));
    }
    let cells = spec.n_cells();
    let ns = cells + 1;
    let fail = cells;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut p = Array3::<f64>::zeros((ns, 2, ns));
    for cell in 0..cells {
        let bx = spec.cell_box(cell);
        for _ in 0..samples_per_cell {
            let mut state = [0.0; 4];
            for d in 0..4 {
                state[d] = rng.random_range(bx[d].0..bx[d].1);
            }
            for a in 0..2 {
                let next = cartpole_step(state, a);
                let to = if failed(&next) { fail } else { spec.bin_of(&next) };
                p[[cell, a, to]] += 1.0;
            }
        }
    }
    for a in 0..2 {
        p[[fail, a, fail]] = 1.0;
    }
    normalize_rows(&mut p);

    let mut eta = Array1::<f64>::zeros(ns);
    for _ in 0..INIT_SAMPLES {
        let mut state = [0.0; 4];
        for v in state.iter_mut() {
            *v = rng.random_range(-INIT_SPREAD..INIT_SPREAD);
        }
        eta[spec.bin_of(&state)] += 1.0;
    }
    eta /= INIT_SAMPLES as f64;

    let mut reward = Array2::from_elem((ns, 2), spec.reward_scale);
    reward.row_mut(fail).fill(0.0);
    let mut terminal = vec![false; ns];
    terminal[fail] = true;
    TabularMdp::new(p, eta, spec.gamma, Some(reward), Some(terminal))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grid_is_stochastic() {
        let mdp = build_binned_cartpole(&BinnedCartPoleSpec::new([3, 3, 3, 3]), 10, 0).unwrap();
        assert_eq!(mdp.n_states(), 82);
        assert_eq!(mdp.n_actions(), 2);
        for s in 0..82 {
            for a in 0..2 {
                let sum: f64 = mdp.transition().slice(ndarray::s![s, a, ..]).sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
        assert!(mdp.is_terminal(81));
        assert_eq!(mdp.true_reward().unwrap()[[81, 0]], 0.0);
        assert_eq!(mdp.true_reward().unwrap()[[0, 1]], 1.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = BinnedCartPoleSpec::new([3, 3, 3, 3]);
        let a = build_binned_cartpole(&spec, 5, 42).unwrap();
        let b = build_binned_cartpole(&spec, 5, 42).unwrap();
        assert_eq!(a, b);
        let c = build_binned_cartpole(&spec, 5, 43).unwrap();
        assert_ne!(a.transition(), c.transition());
    }

    #[test]
    fn rejects_bad_inputs() {
        let spec = BinnedCartPoleSpec::new([3, 3, 3, 3]);
        assert!(build_binned_cartpole(&spec, 0, 0).is_err());
        assert!(build_binned_cartpole(&BinnedCartPoleSpec::new([20, 20, 10, 6]), 1, 0).is_err());
        let mut three = spec.clone();
        three.n_actions = 3;
        assert!(build_binned_cartpole(&three, 1, 0).is_err());
    }

    #[test]
    fn binning_round_trips_cell_centres() {
        let spec = BinnedCartPoleSpec::new([3, 4, 5, 2]);
        for cell in 0..spec.n_cells() {
            let bx = spec.cell_box(cell);
            let centre = [
                0.5 * (bx[0].0 + bx[0].1),
                0.5 * (bx[1].0 + bx[1].1),
                0.5 * (bx[2].0 + bx[2].1),
                0.5 * (bx[3].0 + bx[3].1),
            ];
            assert_eq!(spec.bin_of(&centre), cell);
        }
    }

    #[test]
    fn pushing_right_accelerates_cart_right() {
        let next = cartpole_step([0.0; 4], 1);
        assert!(next[1] > 0.0);
        assert!(next[3] < 0.0);
    }
}
