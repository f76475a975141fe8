//! Numerical checks of the bounds behind the monotonic-improvement guarantee.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irl::{likelihood, surrogate, theoretical_c};
use crate::mdp::{random_mdp, TabularMdp};
use crate::reward::{eps_max, RewardParam};
use crate::soft::{causal_entropy, log_policy, occupancy, soft_value_iteration, OccupancyMeasure, SoftSolution, SolverOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; negative means the bound is violated.
    pub slack: f64,
    pub instance: String,
    pub r_bound: f64,
    /// A tighter variant of the bound, reported but not enforced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub informational_rhs: Option<f64>,
}

impl BoundReport {
    fn new(name: &str, lhs: f64, rhs: f64, instance: &str, r_bound: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            slack: rhs - lhs,
            instance: instance.into(),
            r_bound,
            informational_rhs: None,
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.slack >= -tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyOptions {
    pub solver: SolverOptions,
    /// Horizon of the forward marginal recursion.
    pub horizon: usize,
    /// Multiplies every bound; 1 in normal use.
    pub rhs_scale: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::with_tol(1e-12),
            horizon: 50,
            rhs_scale: 1.0,
        }
    }
}

/// A pair of rewards on a shared MDP, both clamped to `[-r_bound, r_bound]`.
#[derive(Debug, Clone)]
pub struct BoundInstance {
    pub mdp: TabularMdp,
    pub r1: Array2<f64>,
    pub r2: Array2<f64>,
    pub r_bound: f64,
    pub label: String,
}

struct Solved {
    eps: f64,
    s1: SoftSolution,
    s2: SoftSolution,
}

fn clamp(r: &Array2<f64>, bound: f64) -> Array2<f64> {
    r.mapv(|x| x.clamp(-bound, bound))
}

fn sup(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn sup1(a: &Array1<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn tv(p: ndarray::ArrayView1<f64>, q: ndarray::ArrayView1<f64>) -> f64 {
    0.5 * p.iter().zip(q.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

impl BoundInstance {
    pub fn new(mdp: TabularMdp, r1: &Array2<f64>, r2: &Array2<f64>, r_bound: f64, label: impl Into<String>) -> Result<Self> {
        let dims = (mdp.n_states(), mdp.n_actions());
        if r1.dim() != dims || r2.dim() != dims {
            return Err(Error::Shape("reward tables do not match the MDP".into()));
        }
        if !(r_bound >= 0.0) {
            return Err(Error::InvalidArgument(format!("R must be >= 0, got {r_bound}")));
        }
        Ok(Self {
            r1: clamp(r1, r_bound),
            r2: clamp(r2, r_bound),
            mdp,
            r_bound,
            label: label.into(),
        })
    }

    fn solve(&self, opts: &VerifyOptions) -> Result<Solved> {
        Ok(Solved {
            eps: sup(&(&self.r1 - &self.r2)),
            s1: soft_value_iteration(&self.r1, &self.mdp, &opts.solver)?,
            s2: soft_value_iteration(&self.r2, &self.mdp, &opts.solver)?,
        })
    }

    fn horizon(&self) -> f64 {
        1.0 - self.mdp.gamma()
    }

    fn n_actions(&self) -> f64 {
        self.mdp.n_actions() as f64
    }
}

/// Policy total variation: `max_s TV(pi1(.|s), pi2(.|s)) <= |A| eps / (1-gamma)`;
/// the half-size variant is reported as informational.
pub fn check_lemma1(inst: &BoundInstance, opts: &VerifyOptions) -> Result<BoundReport> {
    let sol = inst.solve(opts)?;
    Ok(lemma1(inst, &sol, opts))
}

fn lemma1(inst: &BoundInstance, sol: &Solved, opts: &VerifyOptions) -> BoundReport {
    let lhs = sol
        .s1
        .policy
        .outer_iter()
        .zip(sol.s2.policy.outer_iter())
        .map(|(p, q)| tv(p, q))
        .fold(0.0, f64::max);
    let rhs = inst.n_actions() * sol.eps / inst.horizon();
    let mut rep = BoundReport::new("lemma1-tv", lhs, rhs * opts.rhs_scale, &inst.label, inst.r_bound);
    rep.informational_rhs = Some(0.5 * rhs * opts.rhs_scale);
    rep
}

/// State marginals: `max_{t <= T} TV(d_t^1, d_t^2) / max(t, 1) <= eps / (1-gamma)`.
pub fn check_lemma2(inst: &BoundInstance, opts: &VerifyOptions) -> Result<BoundReport> {
    let sol = inst.solve(opts)?;
    Ok(lemma2(inst, &sol, opts))
}

fn lemma2(inst: &BoundInstance, sol: &Solved, opts: &VerifyOptions) -> BoundReport {
    let k1 = inst.mdp.policy_kernel(&sol.s1.policy).reversed_axes();
    let k2 = inst.mdp.policy_kernel(&sol.s2.policy).reversed_axes();
    let mut d1 = inst.mdp.initial_dist().clone();
    let mut d2 = d1.clone();
    let mut lhs = 0.0f64;
    for t in 0..=opts.horizon {
        lhs = lhs.max(tv(d1.view(), d2.view()) / t.max(1) as f64);
        d1 = k1.dot(&d1);
        d2 = k2.dot(&d2);
    }
    let rhs = sol.eps / inst.horizon();
    BoundReport::new("lemma2-marginal", lhs, rhs * opts.rhs_scale, &inst.label, inst.r_bound)
}

/// Log-policy difference, Q/V magnitudes and log-policy magnitude.
pub fn check_lemma3_4_5(inst: &BoundInstance, opts: &VerifyOptions) -> Result<Vec<BoundReport>> {
    let sol = inst.solve(opts)?;
    Ok(lemma3_4_5(inst, &sol, opts))
}

fn lemma3_4_5(inst: &BoundInstance, sol: &Solved, opts: &VerifyOptions) -> Vec<BoundReport> {
    let (g, h, ln_a, r) = (inst.mdp.gamma(), inst.horizon(), inst.n_actions().ln(), inst.r_bound);
    let (l1, l2) = (log_policy(&sol.s1.policy), log_policy(&sol.s2.policy));
    let scale = opts.rhs_scale;
    let rep = |name: &str, lhs: f64, rhs: f64| BoundReport::new(name, lhs, rhs * scale, &inst.label, r);
    vec![
        rep("lemma3-logpi", sup(&(&l1 - &l2)), 2.0 * sol.eps / h),
        rep("lemma4-q", sup(&sol.s1.q).max(sup(&sol.s2.q)), (r + g * ln_a) / h),
        rep("lemma4-v", sup1(&sol.s1.v).max(sup1(&sol.s2.v)), (r + ln_a) / h),
        rep("lemma5-logpi-abs", sup(&l1).max(sup(&l2)), (2.0 * r + (1.0 + g) * ln_a) / h),
    ]
}

/// Right-hand side of the discounted entropy difference bound.
pub fn lemma6_rhs(n_actions: usize, r_bound: f64, gamma: f64, eps: f64) -> f64 {
    let a = n_actions as f64;
    let h = 1.0 - gamma;
    let k = 2.0 * r_bound + (1.0 + gamma) * a.ln();
    2.0 * a * eps / h.powi(2) + k * a * eps / h.powi(3) + k * a * gamma * eps / h.powi(4)
}

/// `|H(pi2) - H(pi1)|` against the three-term bound.
pub fn check_lemma6(inst: &BoundInstance, opts: &VerifyOptions) -> Result<BoundReport> {
    let sol = inst.solve(opts)?;
    lemma6(inst, &sol, opts)
}

fn lemma6(inst: &BoundInstance, sol: &Solved, opts: &VerifyOptions) -> Result<BoundReport> {
    let h1 = causal_entropy(&sol.s1.policy, &inst.mdp)?;
    let h2 = causal_entropy(&sol.s2.policy, &inst.mdp)?;
    let rhs = lemma6_rhs(inst.mdp.n_actions(), inst.r_bound, inst.mdp.gamma(), sol.eps);
    Ok(BoundReport::new("lemma6-entropy", (h2 - h1).abs(), rhs * opts.rhs_scale, &inst.label, inst.r_bound))
}

/// Every lemma report for one instance, sharing the two solves.
pub fn check_lemmas(inst: &BoundInstance, opts: &VerifyOptions) -> Result<Vec<BoundReport>> {
    let sol = inst.solve(opts)?;
    let mut out = vec![lemma1(inst, &sol, opts), lemma2(inst, &sol, opts)];
    out.extend(lemma3_4_5(inst, &sol, opts));
    out.push(lemma6(inst, &sol, opts)?);
    Ok(out)
}

/// `surrogate(theta_new) - l(theta_new) <= C eps` with `pi_old` soft-optimal
/// for `theta_old` and both rewards clamped to `r_bound`.
pub fn check_theorem1(
    mdp: &TabularMdp,
    rho_e: &OccupancyMeasure,
    theta_old: &RewardParam,
    theta_new: &RewardParam,
    r_bound: f64,
    label: &str,
    opts: &VerifyOptions,
) -> Result<BoundReport> {
    let old = theta_old.with_clip(Some(r_bound));
    let new = theta_new.with_clip(Some(r_bound));
    let c = theoretical_c(mdp.n_actions(), r_bound, mdp.gamma())?;
    let pi_old = soft_value_iteration(&old.table(mdp.n_states(), mdp.n_actions())?, mdp, &opts.solver)?.policy;
    let s_new = surrogate(&new, &pi_old, mdp, rho_e)?;
    let l_new = likelihood(&new, mdp, rho_e, &opts.solver)?;
    let eps = eps_max(&old, &new, mdp)?;
    Ok(BoundReport::new("theorem1", s_new - l_new, c * eps * opts.rhs_scale, label, r_bound))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    All,
    Lemmas,
    Lemma1,
    Lemma2,
    Lemma345,
    Lemma6,
    Theorem1,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| Error::InvalidArgument(format!("unknown suite {s:?}")))
    }
}

/// Shape of the random instances in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFamily {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub r_bound: f64,
}

impl Default for InstanceFamily {
    fn default() -> Self {
        Self {
            n_states: 5,
            n_actions: 3,
            gamma: 0.9,
            r_bound: 1.0,
        }
    }
}

/// Seeded reward pair: `r1` uniform in `[-2R, 2R]` (so clamping is
/// exercised), `r2 = r1 + delta * U[-1, 1]` with a log-uniform `delta`.
pub fn random_instance(family: &InstanceFamily, seed: u64) -> Result<BoundInstance> {
    let mdp = random_mdp(family.n_states, family.n_actions, family.gamma, seed, 0.6)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_b0u64);
    let dims = (family.n_states, family.n_actions);
    let r = family.r_bound;
    let r1 = Array2::from_shape_fn(dims, |_| rng.random_range(-2.0 * r..=2.0 * r));
    let delta = 10f64.powf(rng.random_range(-3.0..=0.5));
    let r2 = &r1 + &Array2::from_shape_fn(dims, |_| delta * rng.random_range(-1.0..=1.0));
    BoundInstance::new(mdp, &r1, &r2, r, format!("seed={seed} S={} A={} gamma={}", dims.0, dims.1, family.gamma))
}

fn theorem1_instance(family: &InstanceFamily, seed: u64, opts: &VerifyOptions) -> Result<BoundReport> {
    let inst = random_instance(family, seed)?;
    let expert = soft_value_iteration(inst.mdp.true_reward().expect("random MDPs carry a reward"), &inst.mdp, &opts.solver)?;
    let rho_e = occupancy(&expert.policy, &inst.mdp)?;
    check_theorem1(
        &inst.mdp,
        &rho_e,
        &RewardParam::from_table(&inst.r1),
        &RewardParam::from_table(&inst.r2),
        inst.r_bound,
        &inst.label,
        opts,
    )
}

fn run_one(suite: Suite, family: &InstanceFamily, seed: u64, opts: &VerifyOptions) -> Result<Vec<BoundReport>> {
    if suite == Suite::Theorem1 {
        return Ok(vec![theorem1_instance(family, seed, opts)?]);
    }
    let inst = random_instance(family, seed)?;
    Ok(match suite {
        Suite::Lemma1 => vec![check_lemma1(&inst, opts)?],
        Suite::Lemma2 => vec![check_lemma2(&inst, opts)?],
        Suite::Lemma345 => check_lemma3_4_5(&inst, opts)?,
        Suite::Lemma6 => vec![check_lemma6(&inst, opts)?],
        Suite::Lemmas => check_lemmas(&inst, opts)?,
        Suite::All => {
            let mut v = check_lemmas(&inst, opts)?;
            v.push(theorem1_instance(family, seed, opts)?);
            v
        }
        Suite::Theorem1 => unreachable!(),
    })
}

/// Run `suite` over seeds `0..n_seeds` in parallel; reports come back in seed order.
pub fn run_suite(suite: Suite, family: &InstanceFamily, n_seeds: u64, opts: &VerifyOptions) -> Result<Vec<BoundReport>> {
    let per_seed: Vec<Result<Vec<BoundReport>>> = (0..n_seeds)
        .into_par_iter()
        .map(|seed| run_one(suite, family, seed, opts))
        .collect();
    let mut out = Vec::new();
    for r in per_seed {
        out.extend(r?);
    }
    Ok(out)
}

/// Human-readable pass/fail table.
pub fn format_table(reports: &[BoundReport], tol: f64) -> String {
    let mut s = format!("{:<18} {:>14} {:>14} {:>14}  {:<6} instance\n", "bound", "lhs", "rhs", "slack", "status");
    for r in reports {
        s.push_str(&format!(
            "{:<18} {:>14.6e} {:>14.6e} {:>14.6e}  {:<6} {}\n",
            r.name,
            r.lhs,
            r.rhs,
            r.slack,
            if r.passes(tol) { "pass" } else { "FAIL" },
            r.instance
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(seed: u64) -> BoundInstance {
        random_instance(&InstanceFamily::default(), seed).unwrap()
    }

    #[test]
    fn equal_rewards_give_zero_differences() {
        let base = inst(1);
        let same = BoundInstance::new(base.mdp.clone(), &base.r1, &base.r1, 1.0, "same").unwrap();
        let opts = VerifyOptions::default();
        let l1 = check_lemma1(&same, &opts).unwrap();
        assert_eq!((l1.lhs, l1.rhs), (0.0, 0.0));
        assert_eq!(check_lemma2(&same, &opts).unwrap().lhs, 0.0);
        assert_eq!(check_lemma3_4_5(&same, &opts).unwrap()[0].lhs, 0.0);
        assert_eq!(check_lemma6(&same, &opts).unwrap().lhs, 0.0);
    }

    #[test]
    fn doubling_eps_doubles_lemma1_bound() {
        let base = inst(2);
        let opts = VerifyOptions::default();
        let d = &base.r2 - &base.r1;
        let small = BoundInstance::new(base.mdp.clone(), &base.r1.mapv(|x| x * 0.1), &(base.r1.mapv(|x| x * 0.1) + &d.mapv(|x| x * 0.01)), 10.0, "a").unwrap();
        let big = BoundInstance::new(base.mdp.clone(), &base.r1.mapv(|x| x * 0.1), &(base.r1.mapv(|x| x * 0.1) + &d.mapv(|x| x * 0.02)), 10.0, "b").unwrap();
        let (a, b) = (check_lemma1(&small, &opts).unwrap(), check_lemma1(&big, &opts).unwrap());
        assert!((b.rhs - 2.0 * a.rhs).abs() < 1e-12 * b.rhs.max(1.0));
    }

    #[test]
    fn zero_reward_q_is_positive_and_bounded() {
        let base = inst(3);
        let zero = Array2::zeros(base.r1.dim());
        let z = BoundInstance::new(base.mdp.clone(), &zero, &zero, 0.0, "zero").unwrap();
        let reps = check_lemma3_4_5(&z, &VerifyOptions::default()).unwrap();
        let q = &reps[1];
        assert!(q.lhs > 0.0 && q.passes(1e-8));
        assert!((q.rhs - 0.9 * 3f64.ln() / 0.1).abs() < 1e-9);
    }

    #[test]
    fn dominant_action_rewards_stay_within_log_policy_bound() {
        let base = inst(4);
        let r = Array2::from_shape_fn(base.r1.dim(), |(_, a)| if a == 0 { 1.0 } else { -1.0 });
        let i = BoundInstance::new(base.mdp.clone(), &r, &r, 1.0, "dominant").unwrap();
        assert!(check_lemma3_4_5(&i, &VerifyOptions::default()).unwrap().iter().all(|r| r.passes(1e-8)));
    }

    #[test]
    fn lemma6_bound_scales_with_fourth_power() {
        let xs: Vec<f64> = [0.99, 0.995, 0.999].iter().map(|g: &f64| -(1.0 - g).ln()).collect();
        let ys: Vec<f64> = [0.99, 0.995, 0.999].iter().map(|&g| lemma6_rhs(3, 1.0, g, 0.1).ln()).collect();
        let slope = (ys[2] - ys[0]) / (xs[2] - xs[0]);
        assert!((slope - 4.0).abs() < 0.05, "{slope}");
    }

    #[test]
    fn theorem1_holds_with_equality_at_old() {
        let base = inst(5);
        let expert = soft_value_iteration(base.mdp.true_reward().unwrap(), &base.mdp, &SolverOptions::default()).unwrap();
        let rho_e = occupancy(&expert.policy, &base.mdp).unwrap();
        let t = RewardParam::from_table(&base.r1);
        let rep = check_theorem1(&base.mdp, &rho_e, &t, &t, 1.0, "same", &VerifyOptions::default()).unwrap();
        assert!(rep.lhs.abs() < 1e-6 && rep.rhs == 0.0);
    }

    #[test]
    fn theorem1_holds_for_large_perturbation() {
        let base = inst(6);
        let expert = soft_value_iteration(base.mdp.true_reward().unwrap(), &base.mdp, &SolverOptions::default()).unwrap();
        let rho_e = occupancy(&expert.policy, &base.mdp).unwrap();
        let old = RewardParam::from_table(&base.r1.mapv(|x| x.signum()));
        let new = RewardParam::from_table(&base.r1.mapv(|x| -x.signum()));
        let rep = check_theorem1(&base.mdp, &rho_e, &old, &new, 1.0, "flip", &VerifyOptions::default()).unwrap();
        assert!(rep.passes(1e-6));
        assert!(rep.slack > 1e4);
    }

    #[test]
    fn sweep_is_ordered_and_complete() {
        let opts = VerifyOptions::default();
        let reps = run_suite(Suite::Theorem1, &InstanceFamily::default(), 8, &opts).unwrap();
        assert_eq!(reps.len(), 8);
        assert!(reps.iter().enumerate().all(|(i, r)| r.instance.starts_with(&format!("seed={i} "))));
        let all = run_suite(Suite::All, &InstanceFamily::default(), 2, &opts).unwrap();
        assert_eq!(all.len(), 2 * 8);
    }

    #[test]
    fn scaled_bounds_flag_violations() {
        let opts = VerifyOptions {
            rhs_scale: 0.0,
            ..VerifyOptions::default()
        };
        let reps = run_suite(Suite::Lemma1, &InstanceFamily::default(), 3, &opts).unwrap();
        assert!(reps.iter().any(|r| !r.passes(1e-8)));
        assert!(format_table(&reps, 1e-8).contains("FAIL"));
    }
}
