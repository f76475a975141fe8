//! Finite MDPs with dense transition tensors, plus the benchmark builders.

mod cartpole;
mod env;
mod gridworld;
mod random;

pub use cartpole::{build_binned_cartpole, BinnedCartPoleSpec, CARTPOLE_STATE_CAP};
pub use env::{CartpoleEnv, EnvSpec};
pub use gridworld::{build_gridworld, ActionSet, GridworldSpec, Move, Wind};
pub use random::random_mdp;

use ndarray::{Array1, Array2, Array3, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;

/// A finite MDP `(S, A, P, eta, gamma)` with an optional ground-truth reward.
///
/// Terminal states are absorbing: every action self-loops. They carry no
/// special treatment in the solvers, which keeps occupancy measures a pure
/// linear solve.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    transition: Array3<f64>,
    initial_dist: Array1<f64>,
    gamma: f64,
    true_reward: Option<Array2<f64>>,
    terminal: Option<Vec<bool>>,
    /// Non-zero entries of each `P[s][a][.]`, indexed by `s * n_actions + a`.
    successors: Vec<Vec<(usize, f64)>>,
}

impl TabularMdp {
    pub fn new(
        transition: Array3<f64>,
        initial_dist: Array1<f64>,
        gamma: f64,
        true_reward: Option<Array2<f64>>,
        terminal: Option<Vec<bool>>,
    ) -> Result<Self> {
        let mut mdp = Self {
            transition,
            initial_dist,
            gamma,
            true_reward,
            terminal,
            successors: Vec::new(),
        };
        mdp.validate()?;
        mdp.successors = mdp
            .transition
            .outer_iter()
            .flat_map(|sa| {
                sa.outer_iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|(_, &p)| p != 0.0)
                            .map(|(j, &p)| (j, p))
                            .collect::<Vec<_>>()
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        Ok(mdp)
    }

    fn validate(&self) -> Result<()> {
        let (ns, na, ns2) = self.transition.dim();
        if ns == 0 || na == 0 {
            return Err(Error::InvalidMdp("empty state or action set".into()));
        }
        if ns != ns2 {
            return Err(Error::InvalidMdp(format!(
                "transition tensor has shape {ns}x{na}x{ns2}"
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidMdp(format!("gamma {} not in [0,1)", self.gamma)));
        }
        for s in 0..ns {
            for a in 0..na {
                let row = self.transition.slice(ndarray::s![s, a, ..]);
                check_distribution(row, &format!("P[{s}][{a}]"))?;
            }
        }
        if self.initial_dist.len() != ns {
            return Err(Error::InvalidMdp("initial distribution length".into()));
        }
        check_distribution(self.initial_dist.view(), "eta")?;
        if let Some(r) = &self.true_reward {
            if r.dim() != (ns, na) {
                return Err(Error::InvalidMdp("true reward shape".into()));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidMdp("true reward is not finite".into()));
            }
        }
        if let Some(term) = &self.terminal {
            if term.len() != ns {
                return Err(Error::InvalidMdp("terminal mask length".into()));
            }
            for (s, _) in term.iter().enumerate().filter(|(_, t)| **t) {
                for a in 0..na {
                    if self.transition[[s, a, s]] != 1.0 {
                        return Err(Error::InvalidMdp(format!(
                            "terminal state {s} does not self-loop under action {a}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.transition.dim().0
    }

    pub fn n_actions(&self) -> usize {
        self.transition.dim().1
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn transition(&self) -> &Array3<f64> {
        &self.transition
    }

    pub fn initial_dist(&self) -> &Array1<f64> {
        &self.initial_dist
    }

    pub fn true_reward(&self) -> Option<&Array2<f64>> {
        self.true_reward.as_ref()
    }

    pub fn terminal(&self) -> Option<&[bool]> {
        self.terminal.as_deref()
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal.as_ref().is_some_and(|t| t[s])
    }

    /// Same dynamics with a different discount.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let mut out = self.clone();
        out.gamma = gamma;
        out.validate()?;
        Ok(out)
    }

    /// Non-zero successors of `(s, a)` as `(s', P[s][a][s'])` pairs.
    pub fn successors(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.successors[s * self.n_actions() + a]
    }

    /// Same dynamics with a different ground-truth reward.
    pub fn with_true_reward(&self, reward: Array2<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.true_reward = Some(reward);
        out.validate()?;
        Ok(out)
    }

    pub fn with_initial_dist(&self, eta: Array1<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.initial_dist = eta;
        out.validate()?;
        Ok(out)
    }

    /// `E_{s'~P(.|s,a)}[v(s')]` for every `(s, a)`.
    pub fn expect_next(&self, v: &Array1<f64>) -> Array2<f64> {
        let (ns, na, _) = self.transition.dim();
        Array2::from_shape_fn((ns, na), |(s, a)| {
            self.successors(s, a).iter().map(|&(j, p)| p * v[j]).sum()
        })
    }

    /// State-to-state kernel `P_pi[s][s'] = sum_a pi(a|s) P[s][a][s']`.
    pub fn policy_kernel(&self, policy: &Array2<f64>) -> Array2<f64> {
        let (ns, na, _) = self.transition.dim();
        let mut k = Array2::zeros((ns, ns));
        for s in 0..ns {
            for a in 0..na {
                let w = policy[[s, a]];
                if w != 0.0 {
                    for &(j, p) in self.successors(s, a) {
                        k[[s, j]] += w * p;
                    }
                }
            }
        }
        k
    }

    /// Draw a successor state given a uniform variate `u` in `[0, 1)`.
    pub fn sample_next(&self, s: usize, a: usize, u: f64) -> usize {
        sample_index(self.transition.slice(ndarray::s![s, a, ..]), u)
    }

    pub fn to_document(&self) -> MdpDocument {
        MdpDocument {
            n_states: self.n_states(),
            n_actions: self.n_actions(),
            gamma: self.gamma,
            transition: self
                .transition
                .outer_iter()
                .map(|sa| sa.outer_iter().map(|row| row.to_vec()).collect())
                .collect(),
            initial_dist: self.initial_dist.to_vec(),
            true_reward: self
                .true_reward
                .as_ref()
                .map(|r| r.outer_iter().map(|row| row.to_vec()).collect()),
            terminal: self.terminal.clone(),
        }
    }

    pub fn from_document(doc: MdpDocument) -> Result<Self> {
        let (ns, na) = (doc.n_states, doc.n_actions);
        if doc.transition.len() != ns {
            return Err(Error::InvalidMdp("transition outer length".into()));
        }
        let mut flat = Vec::with_capacity(ns * na * ns);
        for rows in &doc.transition {
            if rows.len() != na {
                return Err(Error::InvalidMdp("transition action length".into()));
            }
            for row in rows {
                if row.len() != ns {
                    return Err(Error::InvalidMdp("transition row length".into()));
                }
                flat.extend_from_slice(row);
            }
        }
        let transition = Array3::from_shape_vec((ns, na, ns), flat)
            .map_err(|e| Error::InvalidMdp(e.to_string()))?;
        let true_reward = match doc.true_reward {
            Some(rows) => {
                if rows.len() != ns || rows.iter().any(|r| r.len() != na) {
                    return Err(Error::InvalidMdp("true reward shape".into()));
                }
                let flat: Vec<f64> = rows.into_iter().flatten().collect();
                Some(Array2::from_shape_vec((ns, na), flat).expect("checked shape"))
            }
            None => None,
        };
        Self::new(
            transition,
            Array1::from(doc.initial_dist),
            doc.gamma,
            true_reward,
            doc.terminal,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(s)?)
    }

    /// Hex SHA-256 of the canonical JSON encoding; used as a provenance tag.
    pub fn content_hash(&self) -> String {
        let json = self.to_json().expect("MDP serialization is infallible");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// JSON wire form of a [`TabularMdp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpDocument {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub initial_dist: Vec<f64>,
    #[serde(default)]
    pub true_reward: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub terminal: Option<Vec<bool>>,
}

fn check_distribution(row: ArrayView1<f64>, what: &str) -> Result<()> {
    if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidMdp(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = row.sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidMdp(format!("{what} sums to {sum}")));
    }
    Ok(())
}

/// Inverse-CDF draw from a probability vector.
pub(crate) fn sample_index(probs: ArrayView1<f64>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Renormalize every `P[s][a][.]` row so it sums to one.
pub(crate) fn normalize_rows(transition: &mut Array3<f64>) {
    for mut sa in transition.outer_iter_mut() {
        for mut row in sa.axis_iter_mut(Axis(0)) {
            let sum = row.sum();
            row.mapv_inplace(|p| p / sum);
        }
    }
}
