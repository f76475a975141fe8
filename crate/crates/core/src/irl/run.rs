use std::io::Write;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::objective::LikelihoodEval;
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::reward::RewardParam;
use crate::soft::OccupancyMeasure;

pub const METRICS_HEADER: [&str; 7] = ["iteration", "likelihood", "surrogate", "eps", "mu", "j_gap", "wall_ms"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Exact `l(theta)` after the update.
    pub likelihood: f64,
    /// Surrogate of the new reward around the policy used for the update.
    pub surrogate: f64,
    /// Reward change: `eps_max` for TRRO, the sampled L2 change for PIRO.
    pub eps: f64,
    pub mu: f64,
    /// `E_rhoE[r_true] - E_rho_theta[r_true]`; NaN without a true reward.
    pub j_gap: f64,
    /// Discounted true-reward return of the policy induced by the new reward.
    pub true_return: f64,
    pub stalled: bool,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IrlRunState {
    pub theta_old: RewardParam,
    pub pi_old: Array2<f64>,
    pub mu: f64,
    pub iteration: usize,
    pub initial_likelihood: f64,
    pub initial_return: f64,
    history: Vec<IterationRecord>,
}

impl IrlRunState {
    pub fn new(theta: RewardParam, pi: Array2<f64>, mu: f64, initial: &LikelihoodEval, mdp: &TabularMdp) -> Self {
        Self {
            theta_old: theta,
            pi_old: pi,
            mu,
            iteration: 0,
            initial_likelihood: initial.value,
            initial_return: true_return(initial, mdp),
            history: Vec::new(),
        }
    }

    pub fn history(&self) -> &[IterationRecord] {
        &self.history
    }

    pub(crate) fn push(&mut self, rec: IterationRecord) {
        debug_assert_eq!(rec.iteration, self.iteration + 1);
        self.iteration = rec.iteration;
        self.history.push(rec);
    }

    pub fn likelihood_curve(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.likelihood).collect()
    }

    pub fn return_curve(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.true_return).collect()
    }

    /// Steps (including the first, measured from the initial reward) where
    /// the likelihood drops by more than `tol`.
    pub fn monotonicity_violations(&self, tol: f64) -> usize {
        let mut prev = self.initial_likelihood;
        let mut count = 0;
        for r in &self.history {
            if r.likelihood < prev - tol {
                count += 1;
            }
            prev = r.likelihood;
        }
        count
    }

    pub fn final_likelihood(&self) -> f64 {
        self.history.last().map_or(self.initial_likelihood, |r| r.likelihood)
    }

    pub fn final_return(&self) -> f64 {
        self.history.last().map_or(self.initial_return, |r| r.true_return)
    }

    pub fn write_metrics_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(METRICS_HEADER)?;
        for r in &self.history {
            w.write_record([
                r.iteration.to_string(),
                r.likelihood.to_string(),
                r.surrogate.to_string(),
                r.eps.to_string(),
                r.mu.to_string(),
                r.j_gap.to_string(),
                format!("{:.3}", r.wall_ms),
            ])?;
        }
        w.flush().map_err(Error::Io)
    }
}

/// `E_rhoE[r_true] - E_rho_theta[r_true]`.
pub(crate) fn j_gap(eval: &LikelihoodEval, rho_e: &OccupancyMeasure, mdp: &TabularMdp) -> f64 {
    match mdp.true_reward() {
        Some(r) => rho_e.expect(r) - eval.occupancy.expect(r),
        None => f64::NAN,
    }
}

pub(crate) fn true_return(eval: &LikelihoodEval, mdp: &TabularMdp) -> f64 {
    mdp.true_reward().map_or(f64::NAN, |r| eval.occupancy.expect(r))
}

pub(crate) struct Stopwatch(Instant);

impl Stopwatch {
    pub fn start() -> Self {
        Self(Instant::now())
    }

    pub fn ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}
