//! Cooperative procedures: joint welfare maximization over the full horizon,
//! a two-cluster Pareto frontier, and receding-horizon planning that
//! re-solves a shrinking-to-rolling window as the state advances.

use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::{
    self, simulate_window, ControlProfile, DynError, State, Trajectory,
};
use crate::grad::{solver_evaluator, GradError, ObjectiveSpec};
use crate::params::{ExogenousPaths, ModelParams};
use crate::solve::{solve_box_max, SolveOptions, SolveReport, StopReason};

#[derive(Debug, Error)]
pub enum CoopError {
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error("window solve at t={t} aborted: {reason}")]
    WindowAborted { t: usize, reason: String, partial: Box<MpcPartial> },
}

/// Index partition of the regions into a developed and a developing cluster.
#[derive(Debug, Clone)]
pub struct ClusterSplit {
    pub developed: Vec<usize>,
    pub developing: Vec<usize>,
}

impl ClusterSplit {
    /// Default partition of the 12-region calibration: US, EU, Japan, and the
    /// other high-income group form the developed cluster.
    pub fn default_split() -> ClusterSplit {
        ClusterSplit { developed: vec![0, 1, 2, 10], developing: vec![3, 4, 5, 6, 7, 8, 9, 11] }
    }

    pub fn validate(&self, n: usize) -> Result<(), CoopError> {
        let mut seen = vec![false; n];
        for &i in self.developed.iter().chain(&self.developing) {
            if i >= n {
                return Err(CoopError::Invalid(format!("cluster index {i} outside {n} regions")));
            }
            if seen[i] {
                return Err(CoopError::Invalid(format!("region {i} appears in both clusters")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|&s| !s) {
            return Err(CoopError::Invalid("clusters must cover every region".into()));
        }
        Ok(())
    }
}

/// Solution of a full-horizon planning problem.
#[derive(Debug)]
pub struct SwmSolution {
    pub profile: ControlProfile,
    pub trajectory: Trajectory,
    pub report: SolveReport,
    /// Social cost of carbon along the solution, `[region][step]`.
    pub scc: Vec<Vec<f64>>,
}

/// Maximizes weighted welfare over the whole horizon. `weights` defaults to
/// the calibration's cooperative weights, `init` to the conventional starting
/// profile. Non-convergence is reported, not raised.
pub fn solve_swm(
    params: &ModelParams,
    exo: &ExogenousPaths,
    opts: &SolveOptions,
    init: Option<&ControlProfile>,
    weights: Option<&[f64]>,
) -> Result<SwmSolution, CoopError> {
    let n = params.n_regions();
    let steps = params.horizon.t_final + 1;
    let weights = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(CoopError::Invalid(format!(
                    "{} weights for {n} regions",
                    w.len()
                )));
            }
            w.to_vec()
        }
        None => params.welfare_weights(),
    };
    let spec = ObjectiveSpec::weighted(weights, steps);
    let x0 = State::from_initial(&params.initial);
    let u_init = init.cloned().unwrap_or_else(|| ControlProfile::default_init(n, steps));
    if u_init.len() != steps || u_init.n_regions() != n {
        return Err(CoopError::Invalid(format!(
            "initial profile is {} steps x {} regions, expected {steps} x {n}",
            u_init.len(),
            u_init.n_regions()
        )));
    }

    let bounds = ControlProfile::box_bounds(n, steps, params.numerics.s_max);
    let report = solve_box_max(
        solver_evaluator(params, exo, &spec, &x0),
        &bounds,
        &u_init.to_flat(),
        opts,
    );
    let profile = ControlProfile::from_flat(n, &report.u);
    let trajectory = dynamics::simulate(params, exo, &profile)?;
    let scc = crate::dynamics::scc::scc_all(params, exo, &x0, &profile, 0)?;
    Ok(SwmSolution { profile, trajectory, report, scc })
}

/// One solved point of the two-cluster frontier.
#[derive(Debug, Clone)]
pub struct ParetoPoint {
    pub p: f64,
    /// Sum of developed-cluster welfare at the solution.
    pub w_developed: f64,
    /// Sum of developing-cluster welfare at the solution.
    pub w_developing: f64,
    /// Scalarized objective value.
    pub objective: f64,
    /// Atmospheric temperature at the end of the horizon.
    pub t_at_final: f64,
    pub converged: bool,
    pub profile: ControlProfile,
}

/// Traces the frontier over `p_grid`. With `warm_start` the points are solved
/// in grid order, each initialized from its neighbor's solution; otherwise
/// the points solve independently in parallel from the conventional start.
/// Per-point non-convergence is recorded and the sweep continues.
pub fn pareto_frontier(
    params: &ModelParams,
    exo: &ExogenousPaths,
    p_grid: &[f64],
    split: &ClusterSplit,
    opts: &SolveOptions,
    warm_start: bool,
) -> Result<Vec<ParetoPoint>, CoopError> {
    let n = params.n_regions();
    split.validate(n)?;
    for &p in p_grid {
        if !(0.0..=1.0).contains(&p) {
            return Err(CoopError::Invalid(format!("scalarization weight {p} outside [0, 1]")));
        }
    }
    let steps = params.horizon.t_final + 1;
    let x0 = State::from_initial(&params.initial);
    let bounds = ControlProfile::box_bounds(n, steps, params.numerics.s_max);

    let solve_point = |p: f64, init: &ControlProfile| -> Result<ParetoPoint, CoopError> {
        let spec = ObjectiveSpec::cluster_scalarization(p, &split.developed, n, steps);
        let report = solve_box_max(
            solver_evaluator(params, exo, &spec, &x0),
            &bounds,
            &init.to_flat(),
            opts,
        );
        let profile = ControlProfile::from_flat(n, &report.u);
        let traj = dynamics::simulate(params, exo, &profile)?;
        let w_developed: f64 = split.developed.iter().map(|&i| traj.welfare[i]).sum();
        let w_developing: f64 = split.developing.iter().map(|&i| traj.welfare[i]).sum();
        Ok(ParetoPoint {
            p,
            w_developed,
            w_developing,
            objective: report.objective,
            t_at_final: traj.final_state().t_at,
            converged: report.converged,
            profile,
        })
    };

    if warm_start {
        let mut out = Vec::with_capacity(p_grid.len());
        let mut init = ControlProfile::default_init(n, steps);
        for &p in p_grid {
            let point = solve_point(p, &init)?;
            init = point.profile.clone();
            out.push(point);
        }
        Ok(out)
    } else {
        p_grid
            .par_iter()
            .map(|&p| solve_point(p, &ControlProfile::default_init(n, steps)))
            .collect()
    }
}

/// Partial output carried by a window-abort error.
#[derive(Debug)]
pub struct MpcPartial {
    /// Controls committed before the failing window.
    pub profile: Option<ControlProfile>,
    pub window_reports: Vec<SolveReport>,
}

/// A receding-horizon run: the committed profile, its realized trajectory,
/// and each window's solve report.
#[derive(Debug)]
pub struct MpcRun {
    pub profile: ControlProfile,
    pub trajectory: Trajectory,
    pub window_reports: Vec<SolveReport>,
}

/// Receding-horizon weighted-welfare planning. At every step `t` up to
/// `t_sim` the window `t..=min(t + t_rh, t_final)` is solved from the current
/// state and only the first control is applied. Windows clip at the final
/// period because later periods carry no payoff.
pub fn mpc_rice(
    params: &ModelParams,
    exo: &ExogenousPaths,
    t_sim: usize,
    t_rh: usize,
    opts: &SolveOptions,
    warm_start: bool,
) -> Result<MpcRun, CoopError> {
    let n = params.n_regions();
    if t_sim > params.horizon.t_final {
        return Err(CoopError::Invalid(format!(
            "t_sim {t_sim} exceeds horizon {}",
            params.horizon.t_final
        )));
    }
    let weights = params.welfare_weights();

    let mut x = State::from_initial(&params.initial);
    let mut committed: Vec<crate::dynamics::Control> = Vec::with_capacity(t_sim + 1);
    let mut window_reports = Vec::with_capacity(t_sim + 1);
    let mut prev_window: Option<ControlProfile> = None;

    for t in 0..=t_sim {
        // Periods past the final one carry no payoff, so the planning window
        // clips there rather than padding with held exogenous values.
        let end = (t + t_rh).min(params.horizon.t_final);
        let window_steps = end - t + 1;
        let bounds = ControlProfile::box_bounds(n, window_steps, params.numerics.s_max);
        let spec =
            ObjectiveSpec::weighted(weights.clone(), window_steps).with_window(t, (t, end));
        let init = match (&prev_window, warm_start) {
            (Some(prev), true) => prev.shifted_left().truncated(window_steps),
            _ => ControlProfile::default_init(n, window_steps),
        };
        let report = solve_box_max(
            solver_evaluator(params, exo, &spec, &x),
            &bounds,
            &init.to_flat(),
            opts,
        );
        if let StopReason::EvalAbort(reason) = &report.stop_reason {
            let reason = reason.clone();
            let profile = (!committed.is_empty())
                .then(|| ControlProfile { steps: committed });
            window_reports.push(report);
            return Err(CoopError::WindowAborted {
                t,
                reason,
                partial: Box::new(MpcPartial { profile, window_reports }),
            });
        }
        let window = ControlProfile::from_flat(n, &report.u);
        let first = window.steps[0].clone();
        let (next, _) = dynamics::step(params, exo, t, &x, &first)?;
        committed.push(first);
        window_reports.push(report);
        prev_window = Some(window);
        x = next;
    }

    let profile = ControlProfile { steps: committed };
    let trajectory =
        simulate_window(params, exo, &State::from_initial(&params.initial), &profile, 0)?;
    Ok(MpcRun { profile, trajectory, window_reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{default_params, generate, GeneratorConfig, HorizonConfig};

    fn instance(n: usize, t_final: usize) -> (ModelParams, ExogenousPaths) {
        let mut p = default_params().with_first_regions(n);
        p.horizon = HorizonConfig { year0: 2020, delta_years: 5, t_final };
        let exo = generate(&GeneratorConfig::default().with_first_regions(n), &p.horizon).unwrap();
        (p, exo)
    }

    fn fast_opts() -> SolveOptions {
        SolveOptions { max_iters: 4000, ..SolveOptions::default() }
    }

    #[test]
    fn swm_converges_and_beats_default_policy() {
        let (p, exo) = instance(3, 6);
        let sol = solve_swm(&p, &exo, &fast_opts(), None, None).unwrap();
        assert!(sol.report.converged, "{:?}", sol.report.stop_reason);
        let w = p.welfare_weights();
        let base = dynamics::simulate(&p, &exo, &ControlProfile::default_init(3, 7))
            .unwrap()
            .weighted_welfare(&w);
        assert!(sol.report.objective > base);
        assert_eq!(sol.trajectory.weighted_welfare(&w), sol.report.objective);
        assert!(sol.profile.is_within_box(p.numerics.s_max));
        assert_eq!(sol.scc.len(), 3);
    }

    #[test]
    fn swm_rejects_bad_shapes() {
        let (p, exo) = instance(2, 3);
        assert!(solve_swm(&p, &exo, &fast_opts(), None, Some(&[1.0])).is_err());
        let bad_init = ControlProfile::default_init(2, 2);
        assert!(solve_swm(&p, &exo, &fast_opts(), Some(&bad_init), None).is_err());
    }

    #[test]
    fn cluster_split_validation() {
        ClusterSplit::default_split().validate(12).unwrap();
        assert!(ClusterSplit::default_split().validate(11).is_err());
        let overlap = ClusterSplit { developed: vec![0, 1], developing: vec![1, 2] };
        assert!(overlap.validate(3).is_err());
        let gap = ClusterSplit { developed: vec![0], developing: vec![2] };
        assert!(gap.validate(3).is_err());
    }

    #[test]
    fn pareto_extremes_favor_their_cluster() {
        let (p, exo) = instance(4, 3);
        let split = ClusterSplit { developed: vec![0, 1], developing: vec![2, 3] };
        let points =
            pareto_frontier(&p, &exo, &[0.0, 0.5, 1.0], &split, &fast_opts(), true).unwrap();
        assert_eq!(points.len(), 3);
        assert!(points.iter().all(|pt| pt.converged));
        // More weight on the developed cluster must not lower its welfare.
        assert!(points[2].w_developed >= points[0].w_developed - 1e-6);
        assert!(points[0].w_developing >= points[2].w_developing - 1e-6);
    }

    #[test]
    fn pareto_parallel_matches_grid_len_and_orders_points() {
        let (p, exo) = instance(4, 2);
        let split = ClusterSplit { developed: vec![0, 1], developing: vec![2, 3] };
        let grid = [0.25, 0.75];
        let points = pareto_frontier(&p, &exo, &grid, &split, &fast_opts(), false).unwrap();
        assert_eq!(points.len(), 2);
        assert_eq!(points[0].p, 0.25);
        assert_eq!(points[1].p, 0.75);
    }

    #[test]
    fn mpc_with_full_windows_matches_swm() {
        let (p, exo) = instance(2, 5);
        let t = p.horizon.t_final;
        let swm = solve_swm(&p, &exo, &fast_opts(), None, None).unwrap();
        let mpc = mpc_rice(&p, &exo, t, t, &fast_opts(), true).unwrap();
        let w = p.welfare_weights();
        let v_swm = swm.trajectory.weighted_welfare(&w);
        let v_mpc = mpc.trajectory.weighted_welfare(&w);
        let rel = (v_swm - v_mpc).abs() / v_swm.abs().max(1.0);
        assert!(rel < 1e-3, "swm {v_swm} vs mpc {v_mpc} (rel {rel})");
    }

    #[test]
    fn mpc_windows_clip_at_the_final_period() {
        let (p, exo) = instance(2, 4);
        // t_rh = 6 would reach t = 10; every window must stop at t_final = 4.
        let run = mpc_rice(&p, &exo, 4, 6, &fast_opts(), true).unwrap();
        assert_eq!(run.profile.len(), 5);
        assert_eq!(run.window_reports.len(), 5);
        assert!(run.window_reports.iter().all(|r| r.converged));
        // First window plans 5 steps, the last one plans a single step.
        assert_eq!(run.window_reports[0].u.len(), 5 * 2 * 2);
        assert_eq!(run.window_reports[4].u.len(), 1 * 2 * 2);
    }

    #[test]
    fn mpc_realized_trajectory_matches_recommitted_profile() {
        let (p, exo) = instance(2, 3);
        let run = mpc_rice(&p, &exo, 3, 2, &fast_opts(), true).unwrap();
        let again = simulate_window(
            &p,
            &exo,
            &State::from_initial(&p.initial),
            &run.profile,
            0,
        )
        .unwrap();
        assert_eq!(run.trajectory.states, again.states);
    }

    #[test]
    fn mpc_rejects_t_sim_past_horizon() {
        let (p, exo) = instance(2, 3);
        assert!(matches!(
            mpc_rice(&p, &exo, 10, 2, &fast_opts(), true),
            Err(CoopError::Invalid(_))
        ));
    }
}
