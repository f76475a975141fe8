//! Expert demonstrations and discounted empirical occupancies.

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{sample_index, TabularMdp};
use crate::soft::{check_policy, soft_value_iteration, OccupancyMeasure, SolverOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoSource {
    pub env_hash: String,
    pub expert: String,
    pub seed: u64,
    pub n_traj: usize,
    pub max_len: usize,
}

/// Trajectories of `(state, action)`; the step index is the position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoSet {
    pub trajectories: Vec<Vec<(usize, usize)>>,
    pub empirical_occupancy: OccupancyMeasure,
    pub source: DemoSource,
}

impl DemoSet {
    /// Build from trajectories, accumulating `gamma^t / n_traj` per visited pair.
    pub fn from_trajectories(trajectories: Vec<Vec<(usize, usize)>>, mdp: &TabularMdp, source: DemoSource) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::InvalidArgument("no trajectories".into()));
        }
        let (ns, na) = (mdp.n_states(), mdp.n_actions());
        let mut rho = Array2::zeros((ns, na));
        let w = 1.0 / trajectories.len() as f64;
        for traj in &trajectories {
            let mut disc = 1.0;
            for &(s, a) in traj {
                if s >= ns || a >= na {
                    return Err(Error::Shape(format!("pair ({s},{a}) outside a {ns}x{na} MDP")));
                }
                rho[[s, a]] += disc * w;
                disc *= mdp.gamma();
            }
        }
        Ok(Self {
            trajectories,
            empirical_occupancy: OccupancyMeasure::from_rho(rho),
            source,
        })
    }

    pub fn n_traj(&self) -> usize {
        self.trajectories.len()
    }

    /// Every demo step as `(state, action, t)`.
    pub fn pairs(&self) -> Vec<(usize, usize, usize)> {
        self.trajectories
            .iter()
            .flat_map(|tr| tr.iter().enumerate().map(|(t, &(s, a))| (s, a, t)))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// The soft-optimal policy for the MDP's true reward.
pub fn expert_policy(mdp: &TabularMdp, opts: &SolverOptions) -> Result<Array2<f64>> {
    let r = mdp
        .true_reward()
        .ok_or_else(|| Error::InvalidMdp("expert derivation needs a true reward".into()))?;
    Ok(soft_value_iteration(r, mdp, opts)?.policy)
}

fn draw(probs: ArrayView1<f64>, rng: &mut ChaCha8Rng) -> usize {
    sample_index(probs, rng.random::<f64>())
}

/// One trajectory of exactly `len` steps from `s0 ~ eta`. Absorbing states
/// keep being recorded so the discounted counts match the occupancy.
pub fn rollout(mdp: &TabularMdp, policy: &Array2<f64>, len: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut s = draw(mdp.initial_dist().view(), rng);
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let a = draw(policy.row(s), rng);
        out.push((s, a));
        s = mdp.sample_next(s, a, rng.random::<f64>());
    }
    out
}

pub fn generate_demos(
    mdp: &TabularMdp,
    expert: &Array2<f64>,
    n_traj: usize,
    max_len: usize,
    seed: u64,
) -> Result<DemoSet> {
    if n_traj == 0 || max_len == 0 {
        return Err(Error::InvalidArgument("n_traj and max_len must be >= 1".into()));
    }
    check_policy(expert, mdp)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trajectories = (0..n_traj).map(|_| rollout(mdp, expert, max_len, &mut rng)).collect();
    let source = DemoSource {
        env_hash: mdp.content_hash(),
        expert: "soft-optimal".into(),
        seed,
        n_traj,
        max_len,
    };
    DemoSet::from_trajectories(trajectories, mdp, source)
}
