//! Demo generation, the three benchmark experiments and their artifacts.

mod artifacts;
mod metrics;

pub use crate::demos::{expert_policy, generate_demos, rollout, DemoSet, DemoSource};
pub use artifacts::{write_matrix_csv, write_run_artifacts, RunArtifacts};
pub use metrics::{episodic_return, kl_expert_learner, spearman, MetricBundle};

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irl::{self, Algo, CMode, IrlConfig, IrlRunState, OccupancyMode};
use crate::mdp::{build_binned_cartpole, build_gridworld, BinnedCartPoleSpec, GridworldSpec, Move, TabularMdp, Wind};
use crate::reward::RewardParam;
use crate::soft::{occupancy, soft_value_iteration, OccupancyMeasure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemoConfig {
    pub n_traj: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            n_traj: 200,
            max_len: 100,
            seed: 0,
        }
    }
}

/// Expert policy, demos, and the occupancy the learner matches (the demos'
/// empirical occupancy in sampled mode, the exact one otherwise).
pub struct ExpertData {
    pub policy: Array2<f64>,
    pub demos: DemoSet,
    pub rho_e: OccupancyMeasure,
}

pub fn expert_data(mdp: &TabularMdp, demo: &DemoConfig, irl: &IrlConfig) -> Result<ExpertData> {
    let policy = expert_policy(mdp, &irl.solver)?;
    let demos = generate_demos(mdp, &policy, demo.n_traj, demo.max_len, demo.seed)?;
    let rho_e = match irl.occupancy_mode {
        OccupancyMode::Sampled => demos.empirical_occupancy.clone(),
        OccupancyMode::Full => occupancy(&policy, mdp)?,
    };
    Ok(ExpertData { policy, demos, rho_e })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoveryConfig {
    pub env: GridworldSpec,
    pub demos: DemoConfig,
    pub irl: IrlConfig,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        let mut irl = IrlConfig::for_algo(Algo::Piro);
        irl.m = 200;
        irl.k = 2;
        irl.n = 2;
        irl.reward_lr = 1.0;
        irl.eps_target = 0.5;
        irl.occupancy_mode = OccupancyMode::Full;
        Self {
            env: GridworldSpec::seven_by_seven(),
            demos: DemoConfig::default(),
            irl,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub metrics: MetricBundle,
    /// Undiscounted true-reward return until the goal, from the start distribution.
    pub expert_return: f64,
    pub learner_return: f64,
    pub learned_state_reward: Vec<f64>,
    pub true_state_reward: Vec<f64>,
    pub argmax_cell: (usize, usize),
    pub goal: (usize, usize),
}

pub struct RecoveryOutcome {
    pub report: RecoveryReport,
    pub state: IrlRunState,
    pub learner_policy: Array2<f64>,
    /// `height x width` table of the learned state reward.
    pub heat: Array2<f64>,
    pub true_heat: Array2<f64>,
}

fn state_values(theta: &RewardParam, mdp: &TabularMdp) -> Result<Array1<f64>> {
    Ok(theta.table(mdp.n_states(), mdp.n_actions())?.column(0).to_owned())
}

/// PIRO on the gridworld with a state-only reward.
pub fn run_gridworld_recovery(config: &RecoveryConfig) -> Result<RecoveryOutcome> {
    if config.irl.reward_kind != crate::reward::RewardKind::TabularS {
        return Err(Error::Config("gridworld recovery learns a tabular-s reward".into()));
    }
    let spec = &config.env;
    let mdp = build_gridworld(spec)?;
    let expert = expert_data(&mdp, &config.demos, &config.irl)?;
    let state = irl::train(&config.irl, &mdp, &expert.rho_e, Some(&expert.demos), None)?;
    let learned = state.theta_old.table(mdp.n_states(), mdp.n_actions())?;
    let learner_policy = soft_value_iteration(&learned, &mdp, &config.irl.solver)?.policy;
    let true_r = mdp.true_reward().expect("gridworld has a reward");

    let cells = spec.n_cells();
    let learned_s = state_values(&state.theta_old, &mdp)?;
    let learned_cells: Vec<f64> = learned_s.iter().take(cells).copied().collect();
    let true_cells: Vec<f64> = true_r.column(0).iter().take(cells).copied().collect();
    let argmax = (0..cells)
        .max_by(|&a, &b| learned_cells[a].total_cmp(&learned_cells[b]))
        .expect("non-empty grid");
    let rho = spearman(&learned_cells, &true_cells)?;
    let heat = spec.to_grid(&learned_cells);
    let true_heat = spec.to_grid(&true_cells);

    let report = RecoveryReport {
        metrics: MetricBundle::from_run(&state, &expert.policy, &learner_policy, &expert.rho_e, rho, config.irl.violation_tol),
        expert_return: episodic_return(&expert.policy, true_r, &mdp)?,
        learner_return: episodic_return(&learner_policy, true_r, &mdp)?,
        learned_state_reward: learned_cells,
        true_state_reward: true_cells,
        argmax_cell: spec.cell(argmax),
        goal: spec.goal,
    };
    Ok(RecoveryOutcome {
        report,
        state,
        learner_policy,
        heat,
        true_heat,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferConfig {
    pub recovery: RecoveryConfig,
    pub p_wind: f64,
    pub wind_direction: Move,
    pub rollouts: usize,
    /// Success means reaching the goal within this multiple of the no-wind shortest path.
    pub horizon_multiple: usize,
    pub seed: u64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            recovery: RecoveryConfig::default(),
            p_wind: 0.2,
            wind_direction: Move::Right,
            rollouts: 500,
            horizon_multiple: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferReport {
    pub p_wind: f64,
    pub source_return: f64,
    /// Learned-reward policy under the shifted dynamics.
    pub transfer_return: f64,
    /// True-reward policy under the shifted dynamics.
    pub oracle_return: f64,
    pub success_rate: f64,
    pub oracle_success_rate: f64,
    pub rollouts: usize,
    pub source: RecoveryReport,
}

fn success_rate(
    mdp: &TabularMdp,
    spec: &GridworldSpec,
    policy: &Array2<f64>,
    rollouts: usize,
    multiple: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    use rand::Rng;
    let goal = spec.index(spec.goal);
    let mut hits = 0;
    for _ in 0..rollouts {
        let mut s = crate::mdp::sample_index(mdp.initial_dist().view(), rng.random::<f64>());
        let budget = multiple * spec.shortest_path_len(spec.cell(s));
        let mut reached = s == goal;
        for _ in 0..budget {
            if reached {
                break;
            }
            let a = crate::mdp::sample_index(policy.row(s), rng.random::<f64>());
            s = mdp.sample_next(s, a, rng.random::<f64>());
            reached = s == goal;
        }
        hits += usize::from(reached);
    }
    hits as f64 / rollouts as f64
}

/// Learn a state-only reward without wind, then re-solve under wind.
pub fn run_transfer(config: &TransferConfig) -> Result<TransferReport> {
    if !(0.0..=1.0).contains(&config.p_wind) {
        return Err(Error::Config(format!("p_wind must lie in [0, 1], got {}", config.p_wind)));
    }
    if config.rollouts == 0 {
        return Err(Error::Config("rollouts must be >= 1".into()));
    }
    let src = run_gridworld_recovery(&config.recovery)?;
    let spec = config.recovery.env.clone().with_wind(Wind {
        p_wind: config.p_wind,
        direction: config.wind_direction,
        columns: None,
    });
    let windy = build_gridworld(&spec)?;
    let solver = &config.recovery.irl.solver;
    let learned = src.state.theta_old.table(windy.n_states(), windy.n_actions())?;
    let pi = soft_value_iteration(&learned, &windy, solver)?.policy;
    let true_r = windy.true_reward().expect("gridworld has a reward");
    let oracle = soft_value_iteration(true_r, &windy, solver)?.policy;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let rate = success_rate(&windy, &spec, &pi, config.rollouts, config.horizon_multiple, &mut rng);
    let oracle_rate = success_rate(&windy, &spec, &oracle, config.rollouts, config.horizon_multiple, &mut rng);
    Ok(TransferReport {
        p_wind: config.p_wind,
        source_return: src.report.learner_return,
        transfer_return: episodic_return(&pi, true_r, &windy)?,
        oracle_return: episodic_return(&oracle, true_r, &windy)?,
        success_rate: rate,
        oracle_success_rate: oracle_rate,
        rollouts: config.rollouts,
        source: src.report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CComparisonConfig {
    pub env: BinnedCartPoleSpec,
    pub samples_per_cell: usize,
    pub env_seed: u64,
    /// Shared settings; `algo` and `c_mode` are overridden per run.
    pub irl: IrlConfig,
    pub r_bound: f64,
    pub mu_bounds: (f64, f64),
}

impl Default for CComparisonConfig {
    fn default() -> Self {
        let mut irl = IrlConfig::for_algo(Algo::Piro);
        irl.m = 200;
        irl.k = 2;
        irl.n = 1;
        irl.reward_lr = 0.05;
        irl.occupancy_mode = OccupancyMode::Full;
        Self {
            env: BinnedCartPoleSpec::new([3, 3, 6, 6]),
            samples_per_cell: 20,
            env_seed: 0,
            irl,
            r_bound: 1.0,
            mu_bounds: (1e-3, 10.0),
        }
    }
}

impl CComparisonConfig {
    pub fn theoretical_run(&self) -> IrlConfig {
        IrlConfig {
            algo: Algo::Trro,
            c_mode: CMode::Theoretical { r_bound: self.r_bound },
            ..self.irl.clone()
        }
    }

    pub fn adaptive_run(&self) -> IrlConfig {
        IrlConfig {
            algo: Algo::Piro,
            c_mode: CMode::AdaptiveBounds {
                lo: self.mu_bounds.0,
                hi: self.mu_bounds.1,
            },
            ..self.irl.clone()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CComparisonReport {
    pub theoretical_c: f64,
    pub theoretical: MetricBundle,
    pub adaptive: MetricBundle,
    pub theoretical_eps: Vec<f64>,
    pub adaptive_eps: Vec<f64>,
    pub adaptive_mu: Vec<f64>,
    pub mean_kl_theoretical: f64,
    pub mean_kl_adaptive: f64,
}

pub struct CComparisonOutcome {
    pub report: CComparisonReport,
    pub theoretical: IrlRunState,
    pub adaptive: IrlRunState,
}

/// Theoretical-constant TRRO against adaptive-coefficient PIRO on the binned
/// cart-pole, with every other setting shared.
pub fn run_c_comparison(config: &CComparisonConfig) -> Result<CComparisonOutcome> {
    let mdp = build_binned_cartpole(&config.env, config.samples_per_cell, config.env_seed)?;
    let (theo_cfg, adapt_cfg) = (config.theoretical_run(), config.adaptive_run());
    theo_cfg.validate()?;
    adapt_cfg.validate()?;
    let pi_e = expert_policy(&mdp, &config.irl.solver)?;
    let rho_e = occupancy(&pi_e, &mdp)?;
    let (theo, adapt) = rayon::join(
        || irl::train(&theo_cfg, &mdp, &rho_e, None, None),
        || irl::train(&adapt_cfg, &mdp, &rho_e, None, None),
    );
    let (theo, adapt) = (theo?, adapt?);
    let bundle = |s: &IrlRunState| -> Result<MetricBundle> {
        let r = s.theta_old.table(mdp.n_states(), mdp.n_actions())?;
        let pi = soft_value_iteration(&r, &mdp, &config.irl.solver)?.policy;
        Ok(MetricBundle::from_run(s, &pi_e, &pi, &rho_e, f64::NAN, config.irl.violation_tol))
    };
    let (tb, ab) = (bundle(&theo)?, bundle(&adapt)?);
    let total = rho_e.total();
    let report = CComparisonReport {
        theoretical_c: irl::resolve_c(theo_cfg.c_mode, &mdp)?,
        mean_kl_theoretical: tb.kl_expert_learner / total,
        mean_kl_adaptive: ab.kl_expert_learner / total,
        theoretical: tb,
        adaptive: ab,
        theoretical_eps: theo.history().iter().map(|r| r.eps).collect(),
        adaptive_eps: adapt.history().iter().map(|r| r.eps).collect(),
        adaptive_mu: adapt.history().iter().map(|r| r.mu).collect(),
    };
    Ok(CComparisonOutcome {
        report,
        theoretical: theo,
        adaptive: adapt,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    pub env: GridworldSpec,
    pub demos: DemoConfig,
    /// Shared settings; `algo` is overridden per run and `seed` per seed.
    pub irl: IrlConfig,
    pub trro_c: f64,
    pub seeds: Vec<u64>,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        let mut irl = IrlConfig::for_algo(Algo::Piro);
        irl.m = 60;
        irl.k = 2;
        irl.n = 1;
        irl.reward_lr = 10.0;
        irl.mu_init = 10.0;
        irl.adversarial_steps = 1;
        Self {
            env: GridworldSpec::seven_by_seven(),
            demos: DemoConfig::default(),
            irl,
            trro_c: 1.0,
            seeds: (0..5).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub algo: Algo,
    pub seed: u64,
    pub violations: usize,
    pub final_likelihood: f64,
    /// Standard deviation of the per-step likelihood change.
    pub delta_std: f64,
}

fn delta_std(state: &IrlRunState) -> f64 {
    let mut prev = state.initial_likelihood;
    let d: Vec<f64> = state
        .likelihood_curve()
        .into_iter()
        .map(|l| {
            let x = l - prev;
            prev = l;
            x
        })
        .collect();
    if d.is_empty() {
        return 0.0;
    }
    let m = d.iter().sum::<f64>() / d.len() as f64;
    (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / d.len() as f64).sqrt()
}

/// All four trainers per seed. Each seed draws its own demos and every
/// trainer fits their empirical occupancy.
pub fn run_stability_comparison(config: &StabilityConfig) -> Result<Vec<StabilityRow>> {
    let mdp = build_gridworld(&config.env)?;
    let algos = [Algo::Adversarial, Algo::MlIrl, Algo::Trro, Algo::Piro];
    let jobs: Vec<(Algo, u64)> = config
        .seeds
        .iter()
        .flat_map(|&s| algos.iter().map(move |&a| (a, s)))
        .collect();
    jobs.par_iter()
        .map(|&(algo, seed)| {
            let mut cfg = IrlConfig {
                algo,
                seed,
                ..config.irl.clone()
            };
            if algo == Algo::Trro {
                cfg.c_mode = CMode::Manual { value: config.trro_c };
            }
            let demo = DemoConfig {
                seed,
                ..config.demos.clone()
            };
            let expert = expert_data(&mdp, &demo, &cfg)?;
            let rho_e = &expert.demos.empirical_occupancy;
            let state = irl::train(&cfg, &mdp, rho_e, Some(&expert.demos), None)?;
            Ok(StabilityRow {
                algo,
                seed,
                violations: state.monotonicity_violations(cfg.violation_tol),
                final_likelihood: state.final_likelihood(),
                delta_std: delta_std(&state),
            })
        })
        .collect()
}

pub fn format_stability_table(rows: &[StabilityRow]) -> String {
    let mut s = format!("{:<12} {:>5} {:>11} {:>16} {:>12}\n", "algo", "seed", "violations", "final_l", "std_dl");
    for r in rows {
        s.push_str(&format!(
            "{:<12} {:>5} {:>11} {:>16.6} {:>12.4e}\n",
            r.algo.to_string(),
            r.seed,
            r.violations,
            r.final_likelihood,
            r.delta_std
        ));
    }
    s
}
