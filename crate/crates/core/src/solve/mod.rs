//! Projected quasi-Newton maximization over box constraints.
//!
//! Limited-memory BFGS directions restricted to the free coordinates, a
//! projected backtracking line search, and a sup-norm projected-gradient
//! stopping rule normalized by the objective scale. Iterates are produced by
//! clamping, so bounds hold exactly at every evaluated point.

use std::collections::VecDeque;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Convergence threshold on the projected gradient sup-norm, relative to
    /// `max(1, |objective|)`.
    pub grad_tol: f64,
    /// Declares a stall when accepted steps stay below this sup-norm
    /// (relative to `max(1, |u|)`) three times in a row.
    pub step_tol: f64,
    /// Number of curvature pairs kept.
    pub memory: usize,
    /// Armijo sufficient-increase coefficient.
    pub armijo: f64,
    /// Line search backtracking factor in (0, 1).
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Extra random feasible starts beyond the caller's initial point.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 2000,
            grad_tol: 1e-6,
            step_tol: 1e-11,
            memory: 10,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
            restarts: 0,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopReason {
    /// Projected gradient sup-norm under the normalized tolerance.
    GradTol,
    /// Accepted steps shrank below step_tol repeatedly.
    StepTol,
    MaxIters,
    /// No acceptable step along any tried direction.
    LineSearchStall,
    /// The objective evaluator failed or returned a non-finite value at the
    /// initial point; the report carries the last feasible iterate.
    EvalAbort(String),
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub u: Vec<f64>,
    pub objective: f64,
    pub grad: Vec<f64>,
    pub projected_grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Objective at every accepted iterate, starting with the initial point;
    /// nondecreasing by construction.
    pub history: Vec<f64>,
    /// Final objective of each start when multi-start is enabled.
    pub start_objectives: Vec<f64>,
}

/// Sup-norm of the gradient with coordinates pointing out of the box zeroed.
pub fn projected_grad_norm(u: &[f64], grad: &[f64], bounds: &[(f64, f64)]) -> f64 {
    let mut norm = 0.0f64;
    for i in 0..u.len() {
        let (lo, hi) = bounds[i];
        let g = grad[i];
        let blocked = (u[i] <= lo && g < 0.0) || (u[i] >= hi && g > 0.0) || lo == hi;
        if !blocked {
            norm = norm.max(g.abs());
        }
    }
    norm
}

fn clamp_to(bounds: &[(f64, f64)], u: &mut [f64]) {
    for (v, &(lo, hi)) in u.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

/// Maximizes `eval` over the box. `eval` returns the objective value and its
/// gradient; an `Err` aborts the solve, keeping the last feasible iterate.
/// With `restarts > 0`, additional seeded random feasible starts are solved
/// and the best report (by objective) is returned, with every start's final
/// objective recorded.
pub fn solve_box_max<F>(
    mut eval: F,
    bounds: &[(f64, f64)],
    u_init: &[f64],
    opts: &SolveOptions,
) -> SolveReport
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), String>,
{
    assert_eq!(u_init.len(), bounds.len(), "bounds and initial point disagree");
    for &(lo, hi) in bounds {
        assert!(lo <= hi, "lower bound {lo} exceeds upper bound {hi}");
    }

    let mut best: Option<SolveReport> = None;
    let mut start_objectives = Vec::with_capacity(1 + opts.restarts);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    for start in 0..=opts.restarts {
        let mut u0 = if start == 0 {
            u_init.to_vec()
        } else {
            bounds
                .iter()
                .map(|&(lo, hi)| if lo == hi { lo } else { rng.gen_range(lo..=hi) })
                .collect()
        };
        clamp_to(bounds, &mut u0);
        let report = solve_single_start(&mut eval, bounds, &u0, opts);
        start_objectives.push(report.objective);
        let better = match &best {
            None => true,
            Some(b) => {
                report.objective > b.objective || (b.objective.is_nan() && !report.objective.is_nan())
            }
        };
        if better {
            best = Some(report);
        }
    }

    let mut report = best.unwrap();
    report.start_objectives = start_objectives;
    report
}

fn solve_single_start<F>(
    eval: &mut F,
    bounds: &[(f64, f64)],
    u0: &[f64],
    opts: &SolveOptions,
) -> SolveReport
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), String>,
{
    let dim = bounds.len();
    let mut evaluations = 0usize;
    let mut u = u0.to_vec();

    let abort = |u: Vec<f64>, f: f64, g: Vec<f64>, history: Vec<f64>, iters, evals, msg: String| {
        let pg = if g.len() == u.len() { projected_grad_norm(&u, &g, bounds) } else { f64::NAN };
        SolveReport {
            u,
            objective: f,
            grad: g,
            projected_grad_norm: pg,
            iterations: iters,
            evaluations: evals,
            converged: false,
            stop_reason: StopReason::EvalAbort(msg),
            history,
            start_objectives: Vec::new(),
        }
    };

    let (mut f, mut g) = match eval(&u) {
        Ok(pair) => pair,
        Err(msg) => return abort(u, f64::NAN, Vec::new(), Vec::new(), 0, 1, msg),
    };
    evaluations += 1;
    if !f.is_finite() {
        return abort(u, f, g, Vec::new(), 0, 1, format!("objective at start is {f}"));
    }
    let mut history = vec![f];

    let mut s_mem: VecDeque<Vec<f64>> = VecDeque::new();
    let mut y_mem: VecDeque<Vec<f64>> = VecDeque::new();
    let mut rho_mem: VecDeque<f64> = VecDeque::new();

    let mut iterations = 0usize;
    let mut small_steps = 0usize;
    let mut stop_reason = StopReason::MaxIters;
    let mut steepest_retry = false;

    while iterations < opts.max_iters {
        let pg = projected_grad_norm(&u, &g, bounds);
        if pg <= opts.grad_tol * f.abs().max(1.0) {
            stop_reason = StopReason::GradTol;
            break;
        }
        iterations += 1;

        // Free-coordinate set: drop anything pressing against its bound.
        let free: Vec<bool> = (0..dim)
            .map(|i| {
                let (lo, hi) = bounds[i];
                !(lo == hi || (u[i] <= lo && g[i] < 0.0) || (u[i] >= hi && g[i] > 0.0))
            })
            .collect();

        // Minimization convention on -f: gphi = -g, zeroed off the free set.
        let gphi: Vec<f64> =
            (0..dim).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();

        let mut d = if s_mem.is_empty() || steepest_retry {
            gphi.iter().map(|v| -v).collect::<Vec<f64>>()
        } else {
            two_loop(&gphi, &s_mem, &y_mem, &rho_mem)
        };
        for i in 0..dim {
            if !free[i] {
                d[i] = 0.0;
            }
        }
        // Guard: fall back to projected steepest ascent when the memory
        // direction loses descent (for -f).
        let descent: f64 = d.iter().zip(&gphi).map(|(a, b)| a * b).sum();
        if !(descent < 0.0) {
            d = gphi.iter().map(|v| -v).collect();
        }

        let d_sup = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if d_sup == 0.0 {
            stop_reason = StopReason::LineSearchStall;
            break;
        }
        let mut alpha = if s_mem.is_empty() { 1.0 / d_sup.max(1.0) } else { 1.0 };

        let mut accepted = false;
        for _ in 0..opts.max_backtracks {
            let mut u_try: Vec<f64> =
                u.iter().zip(&d).map(|(ui, di)| ui + alpha * di).collect();
            clamp_to(bounds, &mut u_try);
            let delta: Vec<f64> = u_try.iter().zip(&u).map(|(a, b)| a - b).collect();
            let delta_sup = delta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if delta_sup == 0.0 {
                break;
            }
            let (f_try, g_try) = match eval(&u_try) {
                Ok(pair) => pair,
                Err(msg) => {
                    return abort(u, f, g, history, iterations, evaluations + 1, msg);
                }
            };
            evaluations += 1;
            if f_try.is_finite() {
                let slope: f64 = g.iter().zip(&delta).map(|(a, b)| a * b).sum();
                let ok = if slope > 0.0 {
                    f_try >= f + opts.armijo * slope
                } else {
                    f_try > f
                };
                if ok {
                    // Curvature pair in the minimization convention.
                    let y: Vec<f64> =
                        g.iter().zip(&g_try).map(|(old, new)| -(new - old)).collect();
                    let sy: f64 = delta.iter().zip(&y).map(|(a, b)| a * b).sum();
                    let s_norm = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if sy > 1e-10 * s_norm * y_norm {
                        s_mem.push_back(delta.clone());
                        y_mem.push_back(y);
                        rho_mem.push_back(1.0 / sy);
                        if s_mem.len() > opts.memory {
                            s_mem.pop_front();
                            y_mem.pop_front();
                            rho_mem.pop_front();
                        }
                    }
                    u = u_try;
                    f = f_try;
                    g = g_try;
                    history.push(f);
                    accepted = true;
                    steepest_retry = false;

                    let u_sup = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    if delta_sup <= opts.step_tol * u_sup.max(1.0) {
                        small_steps += 1;
                    } else {
                        small_steps = 0;
                    }
                    break;
                }
            }
            alpha *= opts.backtrack;
        }

        if !accepted {
            if !s_mem.is_empty() && !steepest_retry {
                // Memory may be stale near newly active bounds; retry once
                // from plain projected steepest ascent.
                s_mem.clear();
                y_mem.clear();
                rho_mem.clear();
                steepest_retry = true;
                continue;
            }
            stop_reason = StopReason::LineSearchStall;
            break;
        }
        if small_steps >= 3 {
            stop_reason = StopReason::StepTol;
            break;
        }
    }

    let projected = projected_grad_norm(&u, &g, bounds);
    let converged_now = projected <= opts.grad_tol * f.abs().max(1.0);
    if converged_now {
        stop_reason = StopReason::GradTol;
    }
    SolveReport {
        u,
        objective: f,
        grad: g,
        projected_grad_norm: projected,
        iterations,
        evaluations,
        converged: converged_now,
        stop_reason,
        history,
        start_objectives: Vec::new(),
    }
}

/// Standard two-loop recursion returning the quasi-Newton descent direction
/// for the minimization convention.
fn two_loop(
    gphi: &[f64],
    s_mem: &VecDeque<Vec<f64>>,
    y_mem: &VecDeque<Vec<f64>>,
    rho_mem: &VecDeque<f64>,
) -> Vec<f64> {
    let m = s_mem.len();
    let mut q = gphi.to_vec();
    let mut alphas = vec![0.0; m];
    for j in (0..m).rev() {
        let a = rho_mem[j] * dot(&s_mem[j], &q);
        alphas[j] = a;
        axpy(-a, &y_mem[j], &mut q);
    }
    let last = m - 1;
    let gamma = dot(&s_mem[last], &y_mem[last]) / dot(&y_mem[last], &y_mem[last]).max(f64::MIN_POSITIVE);
    for v in q.iter_mut() {
        *v *= gamma;
    }
    for j in 0..m {
        let beta = rho_mem[j] * dot(&y_mem[j], &q);
        axpy(alphas[j] - beta, &s_mem[j], &mut q);
    }
    q.iter().map(|v| -v).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_eval(c: &[f64]) -> impl FnMut(&[f64]) -> Result<(f64, Vec<f64>), String> + '_ {
        move |u: &[f64]| {
            let f = -u.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            let g = u.iter().zip(c).map(|(a, b)| -2.0 * (a - b)).collect();
            Ok((f, g))
        }
    }

    #[test]
    fn separable_quadratic_interior_max() {
        let c = vec![0.5, 0.25, 0.75];
        let bounds = vec![(0.0, 1.0); 3];
        let report = solve_box_max(quad_eval(&c), &bounds, &[0.1, 0.9, 0.5], &SolveOptions::default());
        assert!(report.converged, "{:?}", report.stop_reason);
        for (u, c) in report.u.iter().zip(&c) {
            assert!((u - c).abs() < 1e-8, "{u} vs {c}");
        }
    }

    #[test]
    fn separable_quadratic_clamps_to_box() {
        let c = vec![1.7, -0.4, 0.6];
        let bounds = vec![(0.0, 1.0); 3];
        let report = solve_box_max(quad_eval(&c), &bounds, &[0.5; 3], &SolveOptions::default());
        assert!(report.converged);
        assert!((report.u[0] - 1.0).abs() == 0.0);
        assert!(report.u[1] == 0.0);
        assert!((report.u[2] - 0.6).abs() < 1e-8);
    }

    #[test]
    fn linear_objective_rides_to_the_corner() {
        let bounds = vec![(0.0, 1.0); 6];
        let report = solve_box_max(
            |u| Ok((u.iter().sum::<f64>(), vec![1.0; u.len()])),
            &bounds,
            &[0.3; 6],
            &SolveOptions::default(),
        );
        assert!(report.converged);
        for &v in &report.u {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn zero_objective_returns_init_unchanged() {
        let bounds = vec![(0.0, 1.0); 4];
        let init = [0.2, 0.4, 0.6, 0.8];
        let report = solve_box_max(
            |u| Ok((0.0, vec![0.0; u.len()])),
            &bounds,
            &init,
            &SolveOptions::default(),
        );
        assert!(report.converged);
        assert_eq!(report.u, init.to_vec());
        assert_eq!(report.iterations, 0);
    }

    #[test]
    fn every_evaluated_point_is_feasible() {
        let bounds: Vec<(f64, f64)> = vec![(0.0, 1.0), (0.25, 0.25), (-2.0, -1.0), (0.0, 0.99)];
        let mut worst: f64 = 0.0;
        let c = [1.5, 0.9, -1.2, 0.4];
        let report = solve_box_max(
            |u| {
                for (v, &(lo, hi)) in u.iter().zip(&bounds) {
                    worst = worst.max(lo - v).max(v - hi);
                }
                let f = -u.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                let g = u.iter().zip(&c).map(|(a, b)| -2.0 * (a - b)).collect();
                Ok((f, g))
            },
            &bounds,
            &[0.5, 0.25, -1.5, 0.2],
            &SolveOptions::default(),
        );
        assert_eq!(worst, 0.0, "bounds must hold exactly at every evaluation");
        assert!(report.converged);
        assert_eq!(report.u[1], 0.25); // pinched coordinate never moves
        assert!((report.u[2] + 1.2).abs() < 1e-8);
    }

    #[test]
    fn history_is_monotone_nondecreasing() {
        // Rosenbrock-flavored concave-ified objective to force backtracking.
        let bounds = vec![(-2.0, 2.0); 2];
        let report = solve_box_max(
            |u| {
                let (x, y) = (u[0], u[1]);
                let f = -(1.0 - x).powi(2) - 100.0 * (y - x * x).powi(2);
                let g = vec![
                    2.0 * (1.0 - x) + 400.0 * x * (y - x * x),
                    -200.0 * (y - x * x),
                ];
                Ok((f, g))
            },
            &bounds,
            &[-1.2, 1.0],
            &SolveOptions { max_iters: 5000, ..SolveOptions::default() },
        );
        for w in report.history.windows(2) {
            assert!(w[1] >= w[0], "history decreased: {} -> {}", w[0], w[1]);
        }
        assert!(report.converged, "{:?} pg={}", report.stop_reason, report.projected_grad_norm);
        assert!((report.u[0] - 1.0).abs() < 1e-5 && (report.u[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn scaling_the_objective_does_not_move_the_argmax() {
        let c = vec![0.3, 0.55, 0.8, 0.15];
        let bounds = vec![(0.0, 1.0); 4];
        let base = solve_box_max(quad_eval(&c), &bounds, &[0.5; 4], &SolveOptions::default());
        let scaled = solve_box_max(
            |u| {
                let f = -u.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                let g = u.iter().zip(&c).map(|(a, b)| -2.0e4 * (a - b)).collect();
                Ok((1.0e4 * f, g))
            },
            &bounds,
            &[0.5; 4],
            &SolveOptions::default(),
        );
        assert!(base.converged && scaled.converged);
        for (a, b) in base.u.iter().zip(&scaled.u) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn nan_objective_aborts_with_last_feasible_iterate() {
        let bounds = vec![(0.0, 1.0); 2];
        let mut calls = 0;
        let report = solve_box_max(
            |u: &[f64]| {
                calls += 1;
                if calls > 2 {
                    return Err("synthetic failure".into());
                }
                let f = -(u[0] - 0.6).powi(2) - (u[1] - 0.3).powi(2);
                Ok((f, vec![-2.0 * (u[0] - 0.6), -2.0 * (u[1] - 0.3)]))
            },
            &bounds,
            &[0.1, 0.9],
            &SolveOptions::default(),
        );
        assert!(!report.converged);
        assert!(matches!(report.stop_reason, StopReason::EvalAbort(_)));
        assert!(report.u.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(report.objective.is_finite());
        for w in report.history.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn iteration_cap_reports_nonconverged() {
        // A quartic bowl: one iteration cannot land on the flat top exactly,
        // so the cap has to fire with a still-large projected gradient.
        let c = [0.37, 0.81, 0.23, 0.64, 0.52, 0.11, 0.74, 0.46];
        let eval = |u: &[f64]| {
            let f: f64 = u.iter().zip(&c).map(|(&u, &c)| -(u - c).powi(4)).sum();
            let g: Vec<f64> = u.iter().zip(&c).map(|(&u, &c)| -4.0 * (u - c).powi(3)).collect();
            Ok((f, g))
        };
        let bounds = vec![(0.0, 1.0); 8];
        let opts = SolveOptions { max_iters: 1, grad_tol: 1e-14, ..SolveOptions::default() };
        let report = solve_box_max(eval, &bounds, &[0.0; 8], &opts);
        assert!(!report.converged);
        assert_eq!(report.stop_reason, StopReason::MaxIters);
    }

    #[test]
    fn multi_start_escapes_a_local_maximum() {
        // sin(3 pi u) + u/2 has a local max near 1/6 and the global near 5/6.
        let f = |u: &[f64]| {
            let x = u[0];
            let v = (3.0 * std::f64::consts::PI * x).sin() + 0.5 * x;
            let g = 3.0 * std::f64::consts::PI * (3.0 * std::f64::consts::PI * x).cos() + 0.5;
            Ok((v, vec![g]))
        };
        let bounds = vec![(0.0, 1.0)];
        let single = solve_box_max(f, &bounds, &[0.1], &SolveOptions::default());
        assert!(single.converged && (single.u[0] - 1.0 / 6.0).abs() < 0.05);
        let multi = solve_box_max(
            f,
            &bounds,
            &[0.1],
            &SolveOptions { restarts: 8, ..SolveOptions::default() },
        );
        assert_eq!(multi.start_objectives.len(), 9);
        assert!(multi.objective > single.objective + 0.2);
        assert!((multi.u[0] - 5.0 / 6.0).abs() < 0.05);
    }

    #[test]
    fn kkt_signs_at_the_solution() {
        let c = vec![1.4, -0.2, 0.6, 0.35];
        let bounds = vec![(0.0, 1.0); 4];
        let report = solve_box_max(quad_eval(&c), &bounds, &[0.5; 4], &SolveOptions::default());
        let tol = 1e-6 * report.objective.abs().max(1.0);
        for i in 0..4 {
            let (lo, hi) = bounds[i];
            let g = report.grad[i];
            if report.u[i] <= lo {
                assert!(g <= tol);
            } else if report.u[i] >= hi {
                assert!(g >= -tol);
            } else {
                assert!(g.abs() <= tol);
            }
        }
    }
}
