use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use piro_core::demos::{expert_policy, generate_demos, DemoSet};
use piro_core::experiment::{
    episodic_return, kl_expert_learner, run_c_comparison, run_transfer, spearman, write_run_artifacts,
    CComparisonConfig, RunArtifacts, TransferConfig,
};
use piro_core::irl::{self, Algo, IrlConfig, OccupancyMode, PolicyMode};
use piro_core::mdp::{EnvSpec, TabularMdp};
use piro_core::soft::{occupancy, soft_value_iteration};
use piro_core::verify::{format_table, run_suite, InstanceFamily, Suite, VerifyOptions};

#[derive(Parser)]
#[command(name = "piro", version, about = "Tabular inverse reward optimization experiments")]
struct Cli {
    /// Overrides every seed in the loaded config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "runs")]
    outdir: PathBuf,
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    /// Worker threads for sweeps; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample expert demonstrations from the soft-optimal policy.
    GenDemos(GenDemosArgs),
    /// Learn a reward with one of the four trainers.
    Train(TrainArgs),
    /// Check the bounds on seeded random instances.
    Verify(VerifyArgs),
    /// Learn on the calm gridworld, re-solve under wind.
    Transfer(ExperimentArgs),
    /// Theoretical constant against the adaptive coefficient on binned cart-pole.
    CCompare(ExperimentArgs),
}

#[derive(Args)]
struct GenDemosArgs {
    /// `gridworld7`, `windy-gridworld7`, `cartpole`, or an environment JSON file.
    #[arg(long)]
    env: String,
    #[arg(long, default_value_t = 200)]
    n_traj: usize,
    #[arg(long, default_value_t = 100)]
    max_len: usize,
    /// Defaults to `<outdir>/demos.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyModeArg {
    Exact,
    KRounds,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_parser = parse_algo)]
    algo: Algo,
    #[arg(long)]
    env: String,
    /// Demonstrations to fit; without them the exact expert occupancy is used.
    #[arg(long)]
    demos: Option<PathBuf>,
    /// Trainer settings as JSON; unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    policy_mode: Option<PolicyModeArg>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    run_id: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "all", value_parser = parse_suite)]
    suite: Suite,
    #[arg(long, default_value_t = 100)]
    seeds: u64,
    #[arg(long, default_value_t = 5)]
    states: usize,
    #[arg(long, default_value_t = 3)]
    actions: usize,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    r_bound: f64,
    #[arg(long, default_value_t = 1e-12)]
    solver_tol: f64,
    #[arg(long, hide = true, default_value_t = 1.0)]
    rhs_scale: f64,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    run_id: Option<String>,
}

fn parse_algo(s: &str) -> Result<Algo, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("unknown algo {s:?}; expected adversarial, ml-irl, trro or piro"))
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: piro_core::Error| e.to_string())
}

/// Exit status 2: bad input. Everything else that goes wrong is status 1.
#[derive(Debug)]
struct Usage(anyhow::Error);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(e: impl Into<anyhow::Error>) -> anyhow::Error {
    Usage(e.into()).into()
}

/// Core errors that come from what the user handed in.
fn classify(e: piro_core::Error) -> anyhow::Error {
    use piro_core::Error as E;
    match e {
        E::Config(_) | E::InvalidSpec(_) | E::InvalidArgument(_) | E::InvalidMdp(_) | E::RewardKind(_) | E::Json(_) => {
            usage(e)
        }
        other => other.into(),
    }
}

fn read_file(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).map_err(usage)
}

fn load_env(env: &str) -> anyhow::Result<(EnvSpec, TabularMdp)> {
    let spec = match EnvSpec::named(env) {
        Some(s) => s,
        None => EnvSpec::from_json(&read_file(Path::new(env))?).map_err(classify)?,
    };
    let mdp = spec.build().map_err(classify)?;
    Ok((spec, mdp))
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    serde_json::from_str(&read_file(path)?)
        .with_context(|| format!("invalid config {}", path.display()))
        .map_err(usage)
}

fn env_label(env: &str) -> String {
    Path::new(env)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| env.to_string())
}

fn gen_demos(cli: &Cli, args: &GenDemosArgs) -> anyhow::Result<()> {
    let (_, mdp) = load_env(&args.env)?;
    let expert = expert_policy(&mdp, &Default::default()).map_err(classify)?;
    let seed = cli.seed.unwrap_or(0);
    let demos = generate_demos(&mdp, &expert, args.n_traj, args.max_len, seed).map_err(classify)?;
    let out = args.out.clone().unwrap_or_else(|| cli.outdir.join("demos.json"));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&out, demos.to_json()?)?;
    println!(
        "{} trajectories, empirical occupancy mass {:.6}, written to {}",
        demos.n_traj(),
        demos.empirical_occupancy.total(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainEcho<'a> {
    env: &'a EnvSpec,
    demos: Option<&'a Path>,
    irl: &'a IrlConfig,
}

#[derive(Serialize)]
struct TrainReport {
    algo: Algo,
    iterations: usize,
    initial_likelihood: f64,
    final_likelihood: f64,
    monotonicity_violations: usize,
    kl_expert_learner: Option<f64>,
    expert_return: Option<f64>,
    learner_return: Option<f64>,
    reward_correlation: Option<f64>,
}

fn train(cli: &Cli, args: &TrainArgs) -> anyhow::Result<()> {
    let (spec, mdp) = load_env(&args.env)?;
    let mut cfg = match &args.config {
        Some(p) => IrlConfig::from_json(&read_file(p)?).map_err(classify)?,
        None => IrlConfig::for_algo(args.algo),
    };
    cfg.algo = args.algo;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(m) = args.iterations {
        cfg.m = m;
    }
    if let Some(mode) = args.policy_mode {
        cfg.policy_mode = match mode {
            PolicyModeArg::Exact => PolicyMode::Exact,
            PolicyModeArg::KRounds => PolicyMode::KRounds,
        };
    }
    cfg.validate().map_err(classify)?;

    let demos = match &args.demos {
        Some(p) => Some(DemoSet::from_json(&read_file(p)?).map_err(classify)?),
        None => None,
    };
    if let Some(d) = &demos {
        if d.empirical_occupancy.rho.dim() != (mdp.n_states(), mdp.n_actions()) {
            return Err(usage(anyhow!("demonstrations do not match the environment's state and action counts")));
        }
    }
    let expert = mdp.true_reward().map(|_| expert_policy(&mdp, &cfg.solver)).transpose().map_err(classify)?;
    let rho_e = match (&demos, &expert) {
        (Some(d), _) => d.empirical_occupancy.clone(),
        (None, Some(pi)) => occupancy(pi, &mdp)?,
        (None, None) => return Err(usage(anyhow!("the environment has no reward; pass --demos"))),
    };
    if cfg.occupancy_mode == OccupancyMode::Sampled && demos.is_none() {
        return Err(usage(anyhow!("sampled occupancy mode needs --demos")));
    }

    info!("training {} on {} for {} iterations", cfg.algo, args.env, cfg.m);
    let state = irl::train(&cfg, &mdp, &rho_e, demos.as_ref(), None).map_err(classify)?;
    let learned = state.theta_old.table(mdp.n_states(), mdp.n_actions())?;
    let policy = soft_value_iteration(&learned, &mdp, &cfg.solver)?.policy;

    let mut report = TrainReport {
        algo: cfg.algo,
        iterations: cfg.m,
        initial_likelihood: state.initial_likelihood,
        final_likelihood: state.final_likelihood(),
        monotonicity_violations: state.monotonicity_violations(cfg.violation_tol),
        kl_expert_learner: None,
        expert_return: None,
        learner_return: None,
        reward_correlation: None,
    };
    if let (Some(pi_e), Some(r)) = (&expert, mdp.true_reward()) {
        report.kl_expert_learner = Some(kl_expert_learner(pi_e, &policy, &rho_e));
        if spec.gridworld().is_some() {
            report.expert_return = episodic_return(pi_e, r, &mdp).ok();
            report.learner_return = episodic_return(&policy, r, &mdp).ok();
        }
        let a: Vec<f64> = learned.iter().copied().collect();
        let b: Vec<f64> = r.iter().copied().collect();
        report.reward_correlation = spearman(&a, &b).ok();
    }

    let run_id = args
        .run_id
        .clone()
        .unwrap_or_else(|| format!("{}-{}-seed{}", cfg.algo, env_label(&args.env), cfg.seed));
    let echo = TrainEcho {
        env: &spec,
        demos: args.demos.as_deref(),
        irl: &cfg,
    };
    let art = write_run_artifacts(&cli.outdir, &run_id, &echo, &state, &policy, &report)?;
    if let (Some(g), true) = (spec.gridworld(), state.theta_old.is_state_only()) {
        let values: Vec<f64> = learned.column(0).to_vec();
        art.write_matrix("heat.csv", &g.to_grid(&values))?;
    }
    println!(
        "{}: l {:.6} -> {:.6}, {} monotonicity violations, artifacts in {}",
        cfg.algo,
        report.initial_likelihood,
        report.final_likelihood,
        report.monotonicity_violations,
        art.dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct VerifySummary<'a> {
    suite: Suite,
    family: InstanceFamily,
    options: VerifyOptions,
    n_reports: usize,
    n_failed: usize,
    reports: &'a [piro_core::verify::BoundReport],
}

fn tolerance(name: &str) -> f64 {
    if name == "theorem1" {
        1e-6
    } else {
        1e-8
    }
}

/// `Ok(true)` when every bound holds.
fn verify(cli: &Cli, args: &VerifyArgs) -> anyhow::Result<bool> {
    let family = InstanceFamily {
        n_states: args.states,
        n_actions: args.actions,
        gamma: args.gamma,
        r_bound: args.r_bound,
    };
    let mut opts = VerifyOptions::default();
    opts.solver.tol = args.solver_tol;
    opts.rhs_scale = args.rhs_scale;
    let reports = run_suite(args.suite, &family, args.seeds, &opts).map_err(classify)?;
    let failed = reports.iter().filter(|r| !r.passes(tolerance(&r.name))).count();
    let art = RunArtifacts::create(&cli.outdir, &format!("verify-{}", serde_json::to_value(args.suite)?.as_str().unwrap_or("suite")))?;
    art.write_json(
        "report.json",
        &VerifySummary {
            suite: args.suite,
            family,
            options: opts,
            n_reports: reports.len(),
            n_failed: failed,
            reports: &reports,
        },
    )?;
    for r in reports.iter().filter(|r| !r.passes(tolerance(&r.name))) {
        eprint!("{}", format_table(std::slice::from_ref(r), tolerance(&r.name)).lines().nth(1).map(|l| format!("{l}\n")).unwrap_or_default());
    }
    println!("{} reports, {} failed, details in {}", reports.len(), failed, art.path("report.json").display());
    Ok(failed == 0)
}

fn transfer(cli: &Cli, args: &ExperimentArgs) -> anyhow::Result<()> {
    let mut cfg: TransferConfig = match &args.config {
        Some(p) => load_json(p)?,
        None => TransferConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.recovery.irl.seed = seed;
        cfg.recovery.demos.seed = seed;
    }
    cfg.recovery.irl.validate().map_err(classify)?;
    let report = run_transfer(&cfg).map_err(classify)?;
    let art = RunArtifacts::create(&cli.outdir, args.run_id.as_deref().unwrap_or("transfer"))?;
    art.write_json("config.json", &cfg)?;
    art.write_json("report.json", &report)?;
    println!(
        "p_wind {}: success rate {:.3} (true-reward policy {:.3}), return {:.3} (true-reward policy {:.3})",
        report.p_wind, report.success_rate, report.oracle_success_rate, report.transfer_return, report.oracle_return
    );
    Ok(())
}

fn c_compare(cli: &Cli, args: &ExperimentArgs) -> anyhow::Result<()> {
    let mut cfg: CComparisonConfig = match &args.config {
        Some(p) => load_json(p)?,
        None => CComparisonConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.irl.seed = seed;
    }
    let out = run_c_comparison(&cfg).map_err(classify)?;
    let art = RunArtifacts::create(&cli.outdir, args.run_id.as_deref().unwrap_or("c-compare"))?;
    art.write_json("config.json", &cfg)?;
    art.write_json("report.json", &out.report)?;
    for (name, state) in [("theoretical", &out.theoretical), ("adaptive", &out.adaptive)] {
        let sub = RunArtifacts::create(&art.dir, name)?;
        sub.write_metrics(state)?;
        sub.write_json("reward.json", &state.theta_old)?;
    }
    let r = &out.report;
    println!(
        "theoretical C {:.2}: final l {:.6}, return {:.4}; adaptive: final l {:.6}, return {:.4}",
        r.theoretical_c,
        r.theoretical.final_likelihood(),
        r.theoretical.final_return(),
        r.adaptive.final_likelihood(),
        r.adaptive.final_return()
    );
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(anyhow!(e)))?;
    }
    match &cli.command {
        Command::GenDemos(a) => gen_demos(cli, a).map(|_| true),
        Command::Train(a) => train(cli, a).map(|_| true),
        Command::Verify(a) => verify(cli, a),
        Command::Transfer(a) => transfer(cli, a).map(|_| true),
        Command::CCompare(a) => c_compare(cli, a).map(|_| true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).init();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
