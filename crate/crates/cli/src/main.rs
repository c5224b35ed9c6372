//! Command-line front end: config ingestion, run orchestration, and
//! structured outputs (trajectory CSVs, JSON summaries, plot data).

mod outputs;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use rice_dg::{
    generate, mpc_rice, pareto_frontier, rba_dg, rhfa_dg, scc_all, scc_instantaneous, simulate,
    simulate_window, solve_swm, ClusterSplit, ControlProfile, ExogenousPaths, ModelConfig,
    ModelParams, SolveOptions, SolveReport, Trajectory, UpdateMode,
};

use outputs::{
    dir_stamp, utc_now, write_dat, write_mu_compare_dat, write_region_paths_dat, write_summary,
    write_t_at_compare_dat, write_t_at_dat, write_trajectory_csv, FinalState, RunManifest,
    SolverSettings,
};

#[derive(Parser)]
#[command(name = "rice-dg", version, about = "Multi-region climate-economy game solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a constant policy and export the trajectory.
    Simulate(SimulateArgs),
    /// Maximize weighted world welfare over the full horizon.
    Swm(SwmArgs),
    /// Trace the developed/developing welfare frontier over a grid of p.
    Pareto(ParetoArgs),
    /// Receding-horizon welfare maximization, committing one step per window.
    Mpc(MpcArgs),
    /// Synchronous best-response iteration from the cooperative profile.
    Br(BrArgs),
    /// Receding-horizon feedback play with one window per player per step.
    Rhfa(RhfaArgs),
    /// Price carbon along a constant policy.
    Scc(SccArgs),
    /// Generate exogenous paths from the config and write them as CSV.
    GenExo(GenExoArgs),
    /// Check a config and/or an exogenous CSV without running anything.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Model and generator config (TOML); the literal "default" or omission
    /// selects the built-in calibration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Exogenous paths CSV; generated from the config when omitted.
    #[arg(long)]
    exo: Option<PathBuf>,
    /// Output directory; default results/<command>-<timestamp>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized solver restarts.
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    /// Override the final period index of the horizon.
    #[arg(long)]
    t: Option<usize>,
    /// Iteration cap per solve.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Projected-gradient tolerance, normalized by the objective scale.
    #[arg(long)]
    grad_tol: Option<f64>,
    /// Extra random feasible starts per solve.
    #[arg(long)]
    restarts: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Emission-reduction rate applied to every region and period.
    #[arg(long, default_value_t = 0.1)]
    mu: f64,
    /// Saving rate applied to every region and period.
    #[arg(long, default_value_t = 0.25)]
    s: f64,
}

#[derive(Args)]
struct SwmArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct ParetoArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of evenly spaced frontier points over p in [0, 1].
    #[arg(long, default_value_t = 5, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    grid: usize,
    /// Solve each point from the default start instead of the previous point.
    #[arg(long)]
    no_warm_start: bool,
}

#[derive(Args)]
struct MpcArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of committed periods (default: the full horizon).
    #[arg(long)]
    t_sim: Option<usize>,
    /// Lookahead periods beyond each committed step (0 is myopic).
    #[arg(long, default_value_t = 10)]
    t_rh: usize,
    /// Solve each window from the default start instead of the shifted plan.
    #[arg(long)]
    no_warm_start: bool,
}

#[derive(Args)]
struct BrArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Maximum best-response episodes.
    #[arg(long, default_value_t = 10, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    episodes: usize,
    /// Stop once every player's update norm falls under this threshold.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Field update discipline across an episode.
    #[arg(long, value_enum, default_value_t = Mode::Synchronous)]
    mode: Mode,
}

#[derive(Args)]
struct RhfaArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of committed periods (default: the full horizon).
    #[arg(long)]
    t_sim: Option<usize>,
    /// Planned periods ahead of each committed step (at least 1).
    #[arg(long, default_value_t = 10)]
    t_rh: usize,
}

#[derive(Args)]
struct SccArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Emission-reduction rate applied to every region and period.
    #[arg(long, default_value_t = 0.1)]
    mu: f64,
    /// Saving rate applied to every region and period.
    #[arg(long, default_value_t = 0.25)]
    s: f64,
    /// Price with the same-step consumption/emissions tradeoff instead of the
    /// welfare adjoint.
    #[arg(long)]
    instantaneous: bool,
}

#[derive(Args)]
struct GenExoArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Synchronous,
    Sequential,
}

/// Failures that indicate broken input data or config rather than a runtime
/// fault; they exit with status 3.
#[derive(Debug)]
enum CliError {
    Data(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Other(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.into())
    }
}

impl From<rice_dg::GradError> for CliError {
    fn from(e: rice_dg::GradError) -> Self {
        CliError::Other(e.into())
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(code) = init_threads() {
        return code;
    }
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Swm(a) => cmd_swm(a),
        Command::Pareto(a) => cmd_pareto(a),
        Command::Mpc(a) => cmd_mpc(a),
        Command::Br(a) => cmd_br(a),
        Command::Rhfa(a) => cmd_rhfa(a),
        Command::Scc(a) => cmd_scc(a),
        Command::GenExo(a) => cmd_gen_exo(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Data(msg)) => {
            eprintln!("error: {}", one_line(&msg));
            ExitCode::from(3)
        }
        Err(CliError::Other(e)) => {
            eprintln!("error: {}", one_line(&format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}

fn one_line(msg: &str) -> String {
    msg.replace('\n', " ")
}

fn init_threads() -> Result<(), ExitCode> {
    if let Ok(raw) = std::env::var("RICE_DG_THREADS") {
        let n: usize = match raw.trim().parse() {
            Ok(n) if n > 0 => n,
            _ => {
                eprintln!("error: RICE_DG_THREADS must be a positive integer, got {raw:?}");
                return Err(ExitCode::from(2));
            }
        };
        // Ignore the error from initializing twice; first call wins.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Inputs common to every run, fully resolved: config with overrides applied,
/// exogenous paths, output directory, and solver settings.
struct Resolved {
    config: ModelConfig,
    exo: ExogenousPaths,
    exo_source: String,
    out_dir: PathBuf,
    solver: SolveOptions,
}

impl Resolved {
    fn params(&self) -> &ModelParams {
        &self.config.model
    }
}

fn resolve(common: &CommonArgs, command: &str) -> Result<Resolved, CliError> {
    let mut config = match &common.config {
        Some(p) if p.as_os_str() != "default" => {
            ModelConfig::load(p).map_err(|e| data(format!("{}: {e}", p.display())))?
        }
        _ => ModelConfig::default(),
    };
    if let Some(t) = common.t {
        config.model.horizon.t_final = t;
    }
    config.validate().map_err(data)?;

    let (exo, exo_source) = match &common.exo {
        Some(p) => {
            let exo = ExogenousPaths::load_csv(p, &config.model.horizon)
                .map_err(|e| data(format!("{}: {e}", p.display())))?;
            exo.matches_regions(&config.model).map_err(data)?;
            (exo, p.display().to_string())
        }
        None => (
            generate(&config.generator, &config.model.horizon).map_err(data)?,
            "generated".to_string(),
        ),
    };

    let out_dir = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("results").join(format!("{command}-{}", dir_stamp())));
    fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Other(anyhow::anyhow!("creating {}: {e}", out_dir.display())))?;

    let defaults = SolveOptions::default();
    let solver = SolveOptions {
        max_iters: common.max_iters.unwrap_or(defaults.max_iters),
        grad_tol: common.grad_tol.unwrap_or(defaults.grad_tol),
        restarts: common.restarts.unwrap_or(defaults.restarts),
        seed: common.seed,
        ..defaults
    };
    Ok(Resolved { config, exo, exo_source, out_dir, solver })
}

fn manifest(r: &Resolved, command: &str, args: serde_json::Value) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        created_utc: utc_now(),
        out_dir: r.out_dir.display().to_string(),
        seed: r.solver.seed,
        exo_source: r.exo_source.clone(),
        solver: SolverSettings {
            max_iters: r.solver.max_iters,
            grad_tol: r.solver.grad_tol,
            restarts: r.solver.restarts,
            seed: r.solver.seed,
        },
        args,
        config: r.config.clone(),
    }
}

#[derive(Serialize)]
struct ReportSummary {
    converged: bool,
    stop_reason: String,
    iterations: usize,
    evaluations: usize,
    objective: f64,
    projected_grad_norm: f64,
}

impl ReportSummary {
    fn of(report: &SolveReport) -> ReportSummary {
        ReportSummary {
            converged: report.converged,
            stop_reason: format!("{:?}", report.stop_reason),
            iterations: report.iterations,
            evaluations: report.evaluations,
            objective: report.objective,
            projected_grad_norm: report.projected_grad_norm,
        }
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let r = resolve(&a.common, "simulate")?;
    manifest(&r, "simulate", json!({ "mu": a.mu, "s": a.s })).write(&r.out_dir)?;
    let p = r.params();
    let steps = p.horizon.t_final + 1;
    let u = ControlProfile::constant(p.n_regions(), steps, a.mu, a.s);
    if !u.is_within_box(p.numerics.s_max) {
        return Err(CliError::Data(format!(
            "policy mu={} s={} outside the feasible box (s_max={})",
            a.mu, a.s, p.numerics.s_max
        )));
    }
    let traj = simulate(p, &r.exo, &u).map_err(data)?;
    let scc = scc_all(p, &r.exo, &rice_dg::State::from_initial(&p.initial), &u, 0)?;
    write_trajectory_csv(&r.out_dir, p, &traj, Some(&scc))?;
    write_policy_plots(&r.out_dir, p, &traj, Some(&scc))?;

    #[derive(Serialize)]
    struct Body {
        mu: f64,
        s: f64,
        weighted_welfare: f64,
        welfare: Vec<f64>,
        final_state: FinalState,
    }
    write_summary(
        &r.out_dir,
        &envelope(
            "simulate",
            p,
            Body {
                mu: a.mu,
                s: a.s,
                weighted_welfare: traj.weighted_welfare(&p.welfare_weights()),
                welfare: traj.welfare.clone(),
                final_state: FinalState::of(traj.states.last().unwrap()),
            },
        ),
    )?;
    Ok(())
}

fn cmd_swm(a: &SwmArgs) -> Result<(), CliError> {
    let r = resolve(&a.common, "swm")?;
    manifest(&r, "swm", json!({})).write(&r.out_dir)?;
    let p = r.params();
    let sol = solve_swm(p, &r.exo, &r.solver, None, None).map_err(data)?;
    write_trajectory_csv(&r.out_dir, p, &sol.trajectory, Some(&sol.scc))?;
    write_policy_plots(&r.out_dir, p, &sol.trajectory, Some(&sol.scc))?;

    #[derive(Serialize)]
    struct Body {
        solve: ReportSummary,
        weighted_welfare: f64,
        welfare: Vec<f64>,
        final_state: FinalState,
    }
    write_summary(
        &r.out_dir,
        &envelope(
            "swm",
            p,
            Body {
                solve: ReportSummary::of(&sol.report),
                weighted_welfare: sol.trajectory.weighted_welfare(&p.welfare_weights()),
                welfare: sol.trajectory.welfare.clone(),
                final_state: FinalState::of(sol.trajectory.states.last().unwrap()),
            },
        ),
    )?;
    Ok(())
}

fn cmd_pareto(a: &ParetoArgs) -> Result<(), CliError> {
    let r = resolve(&a.common, "pareto")?;
    manifest(&r, "pareto", json!({ "grid": a.grid, "warm_start": !a.no_warm_start }))
        .write(&r.out_dir)?;
    let p = r.params();
    let split = ClusterSplit::default_split();
    split.validate(p.n_regions()).map_err(data)?;
    let grid: Vec<f64> = if a.grid == 1 {
        vec![0.5]
    } else {
        (0..a.grid).map(|i| i as f64 / (a.grid - 1) as f64).collect()
    };
    let points =
        pareto_frontier(p, &r.exo, &grid, &split, &r.solver, !a.no_warm_start).map_err(data)?;

    let mut csv = String::from("p,w_developed,w_developing,t_at_final,converged\n");
    for pt in &points {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            pt.p, pt.w_developed, pt.w_developing, pt.t_at_final, pt.converged
        ));
    }
    fs::write(r.out_dir.join("pareto.csv"), csv)?;

    write_dat(
        &r.out_dir,
        "frontier.dat",
        &[
            "developed vs developing cluster welfare along the p grid".to_string(),
            "p w_developed w_developing".to_string(),
        ],
        &points.iter().map(|pt| vec![pt.p, pt.w_developed, pt.w_developing]).collect::<Vec<_>>(),
    )?;
    write_dat(
        &r.out_dir,
        "t_at_vs_p.dat",
        &[
            "final-period atmospheric temperature deviation (degC) vs p".to_string(),
            "p T_AT_final".to_string(),
        ],
        &points.iter().map(|pt| vec![pt.p, pt.t_at_final]).collect::<Vec<_>>(),
    )?;

    #[derive(Serialize)]
    struct Point {
        p: f64,
        w_developed: f64,
        w_developing: f64,
        objective: f64,
        t_at_final: f64,
        converged: bool,
    }
    #[derive(Serialize)]
    struct Body {
        converged: bool,
        points: Vec<Point>,
    }
    write_summary(
        &r.out_dir,
        &envelope(
            "pareto",
            p,
            Body {
                converged: points.iter().all(|pt| pt.converged),
                points: points
                    .iter()
                    .map(|pt| Point {
                        p: pt.p,
                        w_developed: pt.w_developed,
                        w_developing: pt.w_developing,
                        objective: pt.objective,
                        t_at_final: pt.t_at_final,
                        converged: pt.converged,
                    })
                    .collect(),
            },
        ),
    )?;
    Ok(())
}

/// Weighted welfare of the first `steps` periods of `profile`, replayed from
/// the initial state. Welfare sums are comparable only across runs covering
/// the same periods, so partial-commitment runs are benchmarked against a
/// matching prefix of the reference profile.
fn prefix_welfare(
    p: &ModelParams,
    exo: &ExogenousPaths,
    profile: &ControlProfile,
    steps: usize,
) -> Result<f64, CliError> {
    let prefix = ControlProfile { steps: profile.steps[..steps].to_vec() };
    let traj = simulate_window(p, exo, &rice_dg::State::from_initial(&p.initial), &prefix, 0)
        .map_err(data)?;
    Ok(traj.weighted_welfare(&p.welfare_weights()))
}

fn cmd_mpc(a: &MpcArgs) -> Result<(), CliError> {
    let r = resolve(&a.common, "mpc")?;
    let p = r.params();
    let t_sim = a.t_sim.unwrap_or(p.horizon.t_final);
    manifest(&r, "mpc", json!({ "t_sim": t_sim, "t_rh": a.t_rh, "warm_start": !a.no_warm_start }))
        .write(&r.out_dir)?;
    let run = mpc_rice(p, &r.exo, t_sim, a.t_rh, &r.solver, !a.no_warm_start).map_err(data)?;
    let swm = solve_swm(p, &r.exo, &r.solver, None, None).map_err(data)?;
    write_trajectory_csv(&r.out_dir, p, &run.trajectory, None)?;
    write_t_at_compare_dat(&r.out_dir, "t_at_compare.dat", ("swm", "mpc"), p, &swm.trajectory, &run.trajectory)?;
    write_mu_compare_dat(&r.out_dir, "mu_compare.dat", ("swm", "mpc"), p, &swm.trajectory, &run.trajectory)?;

    let w = p.welfare_weights();
    let realized = run.trajectory.weighted_welfare(&w);
    let reference = if run.profile.len() < swm.profile.len() {
        prefix_welfare(p, &r.exo, &swm.profile, run.profile.len())?
    } else {
        swm.trajectory.weighted_welfare(&w)
    };
    #[derive(Serialize)]
    struct Body {
        t_sim: usize,
        t_rh: usize,
        converged: bool,
        windows: usize,
        realized_welfare: f64,
        swm_welfare: f64,
        relative_gap: f64,
        welfare: Vec<f64>,
        final_state: FinalState,
    }
    write_summary(
        &r.out_dir,
        &envelope(
            "mpc",
            p,
            Body {
                t_sim,
                t_rh: a.t_rh,
                converged: run.window_reports.iter().all(|w| w.converged),
                windows: run.window_reports.len(),
                realized_welfare: realized,
                swm_welfare: reference,
                relative_gap: (reference - realized).abs() / reference.abs().max(1.0),
                welfare: run.trajectory.welfare.clone(),
                final_state: FinalState::of(run.trajectory.states.last().unwrap()),
            },
        ),
    )?;
    Ok(())
}

fn cmd_br(a: &BrArgs) -> Result<(), CliError> {
    let r = resolve(&a.common, "br")?;
    manifest(
        &r,
        "br",
        json!({ "episodes": a.episodes, "tol": a.tol, "mode": match a.mode {
            Mode::Synchronous => "synchronous",
            Mode::Sequential => "sequential",
        }}),
    )
    .write(&r.out_dir)?;
    let p = r.params();
    let cfg = rice_dg::BrConfig {
        episodes: a.episodes,
        tol: a.tol,
        mode: match a.mode {
            Mode::Synchronous => UpdateMode::Synchronous,
            Mode::Sequential => UpdateMode::Sequential,
        },
        solver: r.solver.clone(),
    };
    let report = rba_dg(p, &r.exo, &cfg).map_err(data)?;

    let mut csv = String::from("k,region,delta\n");
    for (k, ep) in report.episodes.iter().enumerate() {
        for (i, d) in ep.deltas.iter().enumerate() {
            csv.push_str(&format!("{},{},{}\n", k + 1, p.regions[i].name, d));
        }
    }
    fs::write(r.out_dir.join("deltas.csv"), csv)?;

    write_trajectory_csv(&r.out_dir, p, &report.trajectory, None)?;
    // The first stored field is the cooperative start, which serves as the
    // comparison baseline.
    let coop = simulate(p, &r.exo, &report.profiles[0]).map_err(data)?;
    write_t_at_compare_dat(&r.out_dir, "t_at_compare.dat", ("swm", "br"), p, &coop, &report.trajectory)?;
    write_mu_compare_dat(&r.out_dir, "mu_compare.dat", ("swm", "br"), p, &coop, &report.trajectory)?;

    #[derive(Serialize)]
    struct Body {
        episodes_run: usize,
        converged: bool,
        converged_at: Option<usize>,
        max_delta_per_episode: Vec<f64>,
        welfare: Vec<f64>,
        final_state: FinalState,
    }
    write_summary(
        &r.out_dir,
        &envelope(
            "br",
            p,
            Body {
                episodes_run: report.episodes.len(),
                converged: report.converged_at.is_some(),
                converged_at: report.converged_at,
                max_delta_per_episode: report
                    .episodes
                    .iter()
                    .map(|e| e.deltas.iter().cloned().fold(0.0, f64::max))
                    .collect(),
                welfare: report.welfare.clone(),
                final_state: FinalState::of(report.trajectory.states.last().unwrap()),
            },
        ),
    )?;
    Ok(())
}

fn cmd_rhfa(a: &RhfaArgs) -> Result<(), CliError> {
    let r = resolve(&a.common, "rhfa")?;
    let p = r.params();
    let t_sim = a.t_sim.unwrap_or(p.horizon.t_final);
    manifest(&r, "rhfa", json!({ "t_sim": t_sim, "t_rh": a.t_rh })).write(&r.out_dir)?;
    let run = rhfa_dg(p, &r.exo, t_sim, a.t_rh, &r.solver).map_err(data)?;
    write_trajectory_csv(&r.out_dir, p, &run.trajectory, None)?;
    let coop = simulate(p, &r.exo, &run.coop_profile).map_err(data)?;
    write_t_at_compare_dat(&r.out_dir, "t_at_compare.dat", ("swm", "rhfa"), p, &coop, &run.trajectory)?;
    write_mu_compare_dat(&r.out_dir, "mu_compare.dat", ("swm", "rhfa"), p, &coop, &run.trajectory)?;
    let coop_reference = if run.profile.len() < run.coop_profile.len() {
        prefix_welfare(p, &r.exo, &run.coop_profile, run.profile.len())?
    } else {
        coop.weighted_welfare(&p.welfare_weights())
    };

    #[derive(Serialize)]
    struct Body {
        t_sim: usize,
        t_rh: usize,
        converged: bool,
        planning_rounds: usize,
        weighted_welfare: f64,
        coop_weighted_welfare: f64,
        welfare: Vec<f64>,
        final_state: FinalState,
    }
    write_summary(
        &r.out_dir,
        &envelope(
            "rhfa",
            p,
            Body {
                t_sim,
                t_rh: a.t_rh,
                converged: run
                    .planned_reports
                    .iter()
                    .all(|round| round.iter().all(|rep| rep.converged)),
                planning_rounds: run.planned_reports.len(),
                weighted_welfare: run.trajectory.weighted_welfare(&p.welfare_weights()),
                coop_weighted_welfare: coop_reference,
                welfare: run.trajectory.welfare.clone(),
                final_state: FinalState::of(run.trajectory.states.last().unwrap()),
            },
        ),
    )?;
    Ok(())
}

fn cmd_scc(a: &SccArgs) -> Result<(), CliError> {
    let r = resolve(&a.common, "scc")?;
    manifest(&r, "scc", json!({ "mu": a.mu, "s": a.s, "instantaneous": a.instantaneous }))
        .write(&r.out_dir)?;
    let p = r.params();
    let steps = p.horizon.t_final + 1;
    let u = ControlProfile::constant(p.n_regions(), steps, a.mu, a.s);
    if !u.is_within_box(p.numerics.s_max) {
        return Err(CliError::Data(format!(
            "policy mu={} s={} outside the feasible box (s_max={})",
            a.mu, a.s, p.numerics.s_max
        )));
    }
    let traj = simulate(p, &r.exo, &u).map_err(data)?;
    let scc = if a.instantaneous {
        (0..p.n_regions())
            .map(|i| {
                (0..steps)
                    .map(|t| scc_instantaneous(p, &r.exo, &traj.records[t], &u.steps[t], t, i))
                    .collect()
            })
            .collect()
    } else {
        scc_all(p, &r.exo, &rice_dg::State::from_initial(&p.initial), &u, 0)?
    };
    write_trajectory_csv(&r.out_dir, p, &traj, Some(&scc))?;
    write_policy_plots(&r.out_dir, p, &traj, Some(&scc))?;

    #[derive(Serialize)]
    struct Body {
        mu: f64,
        s: f64,
        variant: &'static str,
        scc_first_period: Vec<f64>,
        welfare: Vec<f64>,
        final_state: FinalState,
    }
    write_summary(
        &r.out_dir,
        &envelope(
            "scc",
            p,
            Body {
                mu: a.mu,
                s: a.s,
                variant: if a.instantaneous { "instantaneous" } else { "adjoint" },
                scc_first_period: scc.iter().map(|path| path[0]).collect(),
                welfare: traj.welfare.clone(),
                final_state: FinalState::of(traj.states.last().unwrap()),
            },
        ),
    )?;
    Ok(())
}

fn cmd_gen_exo(a: &GenExoArgs) -> Result<(), CliError> {
    let r = resolve(&a.common, "gen-exo")?;
    manifest(&r, "gen-exo", json!({})).write(&r.out_dir)?;
    let path = r.out_dir.join("exo.csv");
    r.exo.write_csv(&path).map_err(data)?;

    #[derive(Serialize)]
    struct Body {
        path: String,
        steps: usize,
    }
    write_summary(
        &r.out_dir,
        &envelope(
            "gen-exo",
            r.params(),
            Body { path: path.display().to_string(), steps: r.exo.len() },
        ),
    )?;
    Ok(())
}

fn cmd_validate(a: &ValidateArgs) -> Result<(), CliError> {
    let r = resolve(&a.common, "validate")?;
    manifest(&r, "validate", json!({})).write(&r.out_dir)?;
    r.exo.validate().map_err(data)?;

    #[derive(Serialize)]
    struct Body {
        valid: bool,
        exo_source: String,
        exo_steps: usize,
    }
    write_summary(
        &r.out_dir,
        &envelope(
            "validate",
            r.params(),
            Body { valid: true, exo_source: r.exo_source.clone(), exo_steps: r.exo.len() },
        ),
    )?;
    println!("ok");
    Ok(())
}

#[derive(Serialize)]
struct Envelope<T: Serialize> {
    command: &'static str,
    n_regions: usize,
    t_final: usize,
    #[serde(flatten)]
    body: T,
}

fn envelope<T: Serialize>(command: &'static str, p: &ModelParams, body: T) -> Envelope<T> {
    Envelope { command, n_regions: p.n_regions(), t_final: p.horizon.t_final, body }
}

/// The standard four plot files for a run with a priced trajectory.
fn write_policy_plots(
    dir: &std::path::Path,
    p: &ModelParams,
    traj: &Trajectory,
    scc: Option<&[Vec<f64>]>,
) -> Result<(), CliError> {
    write_region_paths_dat(dir, "mu.dat", "emission-reduction rate", "fraction", p, traj, |k, i| {
        traj.controls.steps[k].mu[i]
    })?;
    write_region_paths_dat(dir, "s.dat", "saving rate", "fraction", p, traj, |k, i| {
        traj.controls.steps[k].s[i]
    })?;
    write_t_at_dat(dir, "t_at.dat", p, traj)?;
    if let Some(scc) = scc {
        write_region_paths_dat(dir, "scc.dat", "social cost of carbon", "USD/tCO2", p, traj, |k, i| {
            scc[i][k]
        })?;
    }
    Ok(())
}
