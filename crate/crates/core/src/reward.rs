//! Differentiable reward parameterizations `r_theta` and reward-change measures.

use ndarray::{Array1, Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardKind {
    /// One parameter per `(s, a)`, row-major.
    TabularSa,
    /// One parameter per state, broadcast over actions.
    TabularS,
    /// `r(s,a) = phi(s,a) . theta`.
    LinearFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RewardDocument", into = "RewardDocument")]
pub struct RewardParam {
    kind: RewardKind,
    theta: Array1<f64>,
    features: Option<Array3<f64>>,
    clip: Option<f64>,
}

impl RewardParam {
    pub fn new(kind: RewardKind, theta: Array1<f64>, features: Option<Array3<f64>>, clip: Option<f64>) -> Result<Self> {
        match (kind, &features) {
            (RewardKind::LinearFeatures, None) => {
                return Err(Error::RewardKind("linear-features needs a feature tensor".into()))
            }
            (RewardKind::LinearFeatures, Some(phi)) if phi.dim().2 != theta.len() => {
                return Err(Error::RewardKind(format!(
                    "feature dimension {} but theta has {} entries",
                    phi.dim().2,
                    theta.len()
                )))
            }
            (RewardKind::TabularSa | RewardKind::TabularS, Some(_)) => {
                return Err(Error::RewardKind("tabular kinds take no features".into()))
            }
            _ => {}
        }
        if let Some(r) = clip {
            if !(r >= 0.0) {
                return Err(Error::RewardKind(format!("clip bound {r} must be >= 0")));
            }
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::RewardKind("theta is not finite".into()));
        }
        Ok(Self {
            kind,
            theta,
            features,
            clip,
        })
    }

    pub fn tabular_sa(n_states: usize, n_actions: usize) -> Self {
        Self::new(RewardKind::TabularSa, Array1::zeros(n_states * n_actions), None, None).expect("valid")
    }

    pub fn tabular_s(n_states: usize) -> Self {
        Self::new(RewardKind::TabularS, Array1::zeros(n_states), None, None).expect("valid")
    }

    pub fn linear(features: Array3<f64>) -> Self {
        let d = features.dim().2;
        Self::new(RewardKind::LinearFeatures, Array1::zeros(d), Some(features), None).expect("valid")
    }

    /// Tabular state-action reward equal to `table`.
    pub fn from_table(table: &Array2<f64>) -> Self {
        let theta = Array1::from_iter(table.iter().copied());
        Self::new(RewardKind::TabularSa, theta, None, None).expect("finite table")
    }

    pub fn from_state_values(values: &Array1<f64>) -> Self {
        Self::new(RewardKind::TabularS, values.clone(), None, None).expect("finite values")
    }

    /// A zero-initialized parameter of the same kind, features and clip.
    pub fn zeros_like(&self) -> Self {
        self.with_theta(Array1::zeros(self.theta.len()))
    }

    pub fn with_theta(&self, theta: Array1<f64>) -> Self {
        assert_eq!(theta.len(), self.theta.len(), "theta dimension");
        Self {
            theta,
            ..self.clone()
        }
    }

    pub fn with_clip(&self, clip: Option<f64>) -> Self {
        Self {
            clip,
            ..self.clone()
        }
    }

    pub fn kind(&self) -> RewardKind {
        self.kind
    }

    pub fn theta(&self) -> &Array1<f64> {
        &self.theta
    }

    pub fn features(&self) -> Option<&Array3<f64>> {
        self.features.as_ref()
    }

    pub fn clip(&self) -> Option<f64> {
        self.clip
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// True when the reward cannot depend on the action.
    pub fn is_state_only(&self) -> bool {
        match self.kind {
            RewardKind::TabularS => true,
            RewardKind::TabularSa => false,
            RewardKind::LinearFeatures => {
                let phi = self.features.as_ref().expect("linear has features");
                phi.outer_iter().all(|sa| {
                    let first = sa.row(0);
                    sa.outer_iter().all(|row| row == first)
                })
            }
        }
    }

    fn check_shape(&self, n_states: usize, n_actions: usize) -> Result<()> {
        let ok = match self.kind {
            RewardKind::TabularSa => self.theta.len() == n_states * n_actions,
            RewardKind::TabularS => self.theta.len() == n_states,
            RewardKind::LinearFeatures => {
                let (s, a, _) = self.features.as_ref().expect("linear has features").dim();
                s == n_states && a == n_actions
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{:?} reward with {} parameters does not fit a {}x{} MDP",
                self.kind,
                self.theta.len(),
                n_states,
                n_actions
            )))
        }
    }

    /// Reward table before clipping.
    pub fn raw_table(&self, n_states: usize, n_actions: usize) -> Result<Array2<f64>> {
        self.check_shape(n_states, n_actions)?;
        Ok(match self.kind {
            RewardKind::TabularSa => self
                .theta
                .clone()
                .into_shape_with_order((n_states, n_actions))
                .expect("checked shape"),
            RewardKind::TabularS => {
                Array2::from_shape_fn((n_states, n_actions), |(s, _)| self.theta[s])
            }
            RewardKind::LinearFeatures => {
                let phi = self.features.as_ref().expect("linear has features");
                Array2::from_shape_fn((n_states, n_actions), |(s, a)| {
                    phi.slice(ndarray::s![s, a, ..]).dot(&self.theta)
                })
            }
        })
    }

    pub fn table(&self, n_states: usize, n_actions: usize) -> Result<Array2<f64>> {
        let mut r = self.raw_table(n_states, n_actions)?;
        if let Some(bound) = self.clip {
            r.mapv_inplace(|x| x.clamp(-bound, bound));
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::RewardKind("reward table is not finite".into()));
        }
        Ok(r)
    }

    /// `sum_{s,a} w(s,a) grad_theta r_theta(s,a)`. Clamped entries carry no gradient.
    pub fn jacobian_contraction(&self, weights: &Array2<f64>) -> Result<Array1<f64>> {
        let (ns, na) = weights.dim();
        self.check_shape(ns, na)?;
        let mut w = weights.clone();
        if let Some(bound) = self.clip {
            let raw = self.raw_table(ns, na)?;
            ndarray::Zip::from(&mut w).and(&raw).for_each(|w, &r| {
                if r.abs() > bound {
                    *w = 0.0;
                }
            });
        }
        Ok(match self.kind {
            RewardKind::TabularSa => Array1::from_iter(w.iter().copied()),
            RewardKind::TabularS => w.sum_axis(Axis(1)),
            RewardKind::LinearFeatures => {
                let phi = self.features.as_ref().expect("linear has features");
                let mut g = Array1::zeros(self.theta.len());
                for s in 0..ns {
                    for a in 0..na {
                        if w[[s, a]] != 0.0 {
                            g.scaled_add(w[[s, a]], &phi.slice(ndarray::s![s, a, ..]));
                        }
                    }
                }
                g
            }
        })
    }

    fn same_family(&self, other: &Self) -> Result<()> {
        if self.kind != other.kind || self.theta.len() != other.theta.len() {
            return Err(Error::RewardKind(format!(
                "cannot compare {:?}[{}] with {:?}[{}]",
                self.kind,
                self.theta.len(),
                other.kind,
                other.theta.len()
            )));
        }
        Ok(())
    }
}

/// Materialize `r_theta` for an MDP.
pub fn eval_reward(param: &RewardParam, mdp: &TabularMdp) -> Result<Array2<f64>> {
    param.table(mdp.n_states(), mdp.n_actions())
}

pub fn reward_jacobian_contraction(param: &RewardParam, weights: &Array2<f64>) -> Result<Array1<f64>> {
    param.jacobian_contraction(weights)
}

/// `max_{s,a} |r_2(s,a) - r_1(s,a)|`.
pub fn eps_max(p1: &RewardParam, p2: &RewardParam, mdp: &TabularMdp) -> Result<f64> {
    p1.same_family(p2)?;
    let (r1, r2) = (eval_reward(p1, mdp)?, eval_reward(p2, mdp)?);
    Ok(r1
        .iter()
        .zip(r2.iter())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
}

fn check_sample(sample: &[(usize, usize)], mdp: &TabularMdp) -> Result<()> {
    if sample.is_empty() {
        return Err(Error::InvalidArgument("eps_l2 needs a non-empty sample".into()));
    }
    if let Some(&(s, a)) = sample
        .iter()
        .find(|&&(s, a)| s >= mdp.n_states() || a >= mdp.n_actions())
    {
        return Err(Error::Shape(format!("sample pair ({s},{a}) outside the MDP")));
    }
    Ok(())
}

/// `sqrt(sum_{(s,a) in sample} (r_old(s,a) - r(s,a))^2)`; repeated pairs count repeatedly.
pub fn eps_l2(p_old: &RewardParam, p: &RewardParam, mdp: &TabularMdp, sample: &[(usize, usize)]) -> Result<f64> {
    p_old.same_family(p)?;
    check_sample(sample, mdp)?;
    let (r0, r1) = (eval_reward(p_old, mdp)?, eval_reward(p, mdp)?);
    Ok(sample
        .iter()
        .map(|&(s, a)| (r1[[s, a]] - r0[[s, a]]).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Gradient of [`eps_l2`] with respect to the parameters of `p`; the zero
/// vector where the distance is zero.
pub fn eps_l2_gradient(
    p_old: &RewardParam,
    p: &RewardParam,
    mdp: &TabularMdp,
    sample: &[(usize, usize)],
) -> Result<Array1<f64>> {
    let dist = eps_l2(p_old, p, mdp, sample)?;
    if dist == 0.0 {
        return Ok(Array1::zeros(p.dim()));
    }
    let (r0, r1) = (eval_reward(p_old, mdp)?, eval_reward(p, mdp)?);
    let mut w = Array2::zeros(r0.dim());
    for &(s, a) in sample {
        w[[s, a]] += (r1[[s, a]] - r0[[s, a]]) / dist;
    }
    p.jacobian_contraction(&w)
}

/// Per-parameter multiplicity of `sample` for tabular kinds, so that
/// `eps_l2 = sqrt(sum_k w_k (theta_k - theta_old_k)^2)`.
fn sample_weights(p: &RewardParam, mdp: &TabularMdp, sample: &[(usize, usize)]) -> Result<Array1<f64>> {
    let mut w = Array1::zeros(p.dim());
    for &(s, a) in sample {
        match p.kind {
            RewardKind::TabularSa => w[s * mdp.n_actions() + a] += 1.0,
            RewardKind::TabularS => w[s] += 1.0,
            RewardKind::LinearFeatures => {
                return Err(Error::RewardKind("the closed-form prox needs a tabular reward".into()))
            }
        }
    }
    Ok(w)
}

/// Proximal map of `lambda * eps_l2(p_old, .)` at `p`: the minimizer of
/// `lambda * eps_l2(p_old, q) + |theta_q - theta_p|^2 / 2`. Tabular kinds
/// without clipping only.
pub fn eps_l2_prox(
    p_old: &RewardParam,
    p: &RewardParam,
    mdp: &TabularMdp,
    sample: &[(usize, usize)],
    lambda: f64,
) -> Result<RewardParam> {
    p_old.same_family(p)?;
    check_sample(sample, mdp)?;
    p.check_shape(mdp.n_states(), mdp.n_actions())?;
    if p.clip.is_some() {
        return Err(Error::RewardKind("the closed-form prox needs an unclipped reward".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("prox weight {lambda} must be >= 0")));
    }
    let w = sample_weights(p, mdp, sample)?;
    let v = &p.theta - &p_old.theta;
    if lambda == 0.0 {
        return Ok(p.clone());
    }
    let penalized = || w.iter().zip(v.iter()).filter(|(&wk, _)| wk > 0.0);
    let dual: f64 = penalized().map(|(wk, vk)| vk * vk / wk).sum();
    let mut x = v.clone();
    if dual <= lambda * lambda {
        x.iter_mut().zip(w.iter()).filter(|(_, &wk)| wk > 0.0).for_each(|(xk, _)| *xk = 0.0);
    } else {
        // t = |D x| solves sum_k w_k v_k^2 / (t + lambda w_k)^2 = 1
        let h = |t: f64| penalized().map(|(wk, vk)| wk * vk * vk / (t + lambda * wk).powi(2)).sum::<f64>();
        let (mut lo, mut hi) = (0.0, penalized().map(|(wk, vk)| wk * vk * vk).sum::<f64>().sqrt());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if h(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        x.iter_mut()
            .zip(w.iter())
            .filter(|(_, &wk)| wk > 0.0)
            .for_each(|(xk, &wk)| *xk *= t / (t + lambda * wk));
    }
    Ok(p.with_theta(&p_old.theta + &x))
}

/// Every `(s, a)` pair of the MDP, row-major.
pub fn full_sample(mdp: &TabularMdp) -> Vec<(usize, usize)> {
    (0..mdp.n_states())
        .flat_map(|s| (0..mdp.n_actions()).map(move |a| (s, a)))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RewardDocument {
    kind: RewardKind,
    theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clip: Option<f64>,
}

impl TryFrom<RewardDocument> for RewardParam {
    type Error = Error;

    fn try_from(doc: RewardDocument) -> Result<Self> {
        let features = match doc.features {
            Some(rows) => {
                let ns = rows.len();
                let na = rows.first().map_or(0, Vec::len);
                let d = rows.first().and_then(|r| r.first()).map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != na || r.iter().any(|f| f.len() != d)) {
                    return Err(Error::Shape("ragged feature tensor".into()));
                }
                let flat: Vec<f64> = rows.into_iter().flatten().flatten().collect();
                Some(Array3::from_shape_vec((ns, na, d), flat).expect("checked shape"))
            }
            None => None,
        };
        RewardParam::new(doc.kind, Array1::from(doc.theta), features, doc.clip)
    }
}

impl From<RewardParam> for RewardDocument {
    fn from(p: RewardParam) -> Self {
        RewardDocument {
            kind: p.kind,
            theta: p.theta.to_vec(),
            features: p.features.map(|phi| {
                phi.outer_iter()
                    .map(|sa| sa.outer_iter().map(|f| f.to_vec()).collect())
                    .collect()
            }),
            clip: p.clip,
        }
    }
}
