//! Non-cooperative procedures: single-player best responses against a frozen
//! field, synchronous best-response iteration episodes, and a receding-horizon
//! feedback scheme where every player replans each step.

use rayon::prelude::*;
use thiserror::Error;

use crate::coop::{solve_swm, CoopError};
use crate::dynamics::{
    self, simulate_window, ControlProfile, DynError, PlayerProfile, State, Trajectory,
};
use crate::grad::{solver_evaluator, GradError, ObjectiveSpec};
use crate::params::{ExogenousPaths, ModelParams};
use crate::solve::{solve_box_max, SolveOptions, SolveReport};

#[derive(Debug, Error)]
pub enum NoncoopError {
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error("cooperative initialization failed: {0}")]
    Init(#[from] Box<CoopError>),
    #[error("player {player} aborted the window at t = {t}: {reason}")]
    WindowAborted { t: usize, player: usize, reason: String, partial: Box<RhfaPartial> },
}

impl From<CoopError> for NoncoopError {
    fn from(e: CoopError) -> Self {
        NoncoopError::Init(Box::new(e))
    }
}

/// A control field together with the episode that produced it. Best-response
/// calls record which tag they read, which is how the synchronous-update
/// contract is audited.
#[derive(Debug, Clone)]
pub struct TaggedProfile {
    pub profile: ControlProfile,
    pub tag: usize,
}

/// One observed read of the field during best-response iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldAccess {
    pub episode: usize,
    pub player: usize,
    /// Tag of the profile the player read. Under synchronous updates this
    /// always equals `episode`.
    pub field_tag: usize,
}

/// Maximizes player `i`'s own welfare over the full horizon with every other
/// player's controls frozen at `field`. The player's own entries in `field`
/// seed the solver. Returns the optimized slice and the solve report.
pub fn best_response(
    params: &ModelParams,
    exo: &ExogenousPaths,
    player: usize,
    field: &ControlProfile,
    opts: &SolveOptions,
) -> Result<(PlayerProfile, SolveReport), NoncoopError> {
    let n = params.n_regions();
    let steps = params.horizon.t_final + 1;
    if player >= n {
        return Err(NoncoopError::Invalid(format!("player {player} outside {n} regions")));
    }
    if field.len() != steps || field.n_regions() != n {
        return Err(NoncoopError::Invalid(format!(
            "field is {} steps x {} regions, expected {steps} x {n}",
            field.len(),
            field.n_regions()
        )));
    }
    let x0 = State::from_initial(&params.initial);
    let spec = ObjectiveSpec::single_region(player, n, steps)
        .with_frozen(frozen_except(player, n, steps));
    let bounds = pinched_bounds(field, player, params.numerics.s_max);
    let report = solve_box_max(
        solver_evaluator(params, exo, &spec, &x0),
        &bounds,
        &field.to_flat(),
        opts,
    );
    let profile = ControlProfile::from_flat(n, &report.u);
    Ok((profile.player(player), report))
}

/// Frozen-entry mask covering everyone but `player`.
fn frozen_except(player: usize, n: usize, steps: usize) -> Vec<bool> {
    let mut mask = vec![true; ControlProfile::flat_len(n, steps)];
    for t in 0..steps {
        mask[(t * n + player) * 2] = false;
        mask[(t * n + player) * 2 + 1] = false;
    }
    mask
}

/// Box bounds with every frozen entry pinched to its field value, so the
/// solver cannot move other players even by rounding.
fn pinched_bounds(field: &ControlProfile, player: usize, s_max: f64) -> Vec<(f64, f64)> {
    let n = field.n_regions();
    let flat = field.to_flat();
    let mut bounds = Vec::with_capacity(flat.len());
    for t in 0..field.len() {
        for i in 0..n {
            if i == player {
                bounds.push((0.0, 1.0));
                bounds.push((0.0, s_max));
            } else {
                bounds.push((flat[(t * n + i) * 2], flat[(t * n + i) * 2]));
                bounds.push((flat[(t * n + i) * 2 + 1], flat[(t * n + i) * 2 + 1]));
            }
        }
    }
    bounds
}

/// How episodes consume the field: synchronous episodes give every player the
/// same start-of-episode profile; the sequential variant lets later players
/// see earlier updates within the episode (not part of the reference
/// procedure; kept for experiments).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateMode {
    Synchronous,
    Sequential,
}

#[derive(Debug, Clone)]
pub struct BrConfig {
    /// Maximum number of episodes.
    pub episodes: usize,
    /// Convergence threshold on the largest per-player update norm.
    pub tol: f64,
    pub mode: UpdateMode,
    pub solver: SolveOptions,
}

/// Per-episode measurements.
#[derive(Debug, Clone)]
pub struct EpisodeStats {
    /// Euclidean norm of each player's control update.
    pub deltas: Vec<f64>,
    /// Own welfare at the episode-start field.
    pub objective_before: Vec<f64>,
    /// Own welfare after the player's best response against that field.
    pub objective_after: Vec<f64>,
    pub solver_converged: Vec<bool>,
}

#[derive(Debug)]
pub struct BrReport {
    /// Field after each episode; entry 0 is the cooperative initialization.
    pub profiles: Vec<ControlProfile>,
    pub episodes: Vec<EpisodeStats>,
    /// Episode index at which the update norms fell under `tol`, if any.
    pub converged_at: Option<usize>,
    pub access_log: Vec<FieldAccess>,
    /// Realized run under the final field.
    pub trajectory: Trajectory,
    /// Per-region welfare under the final field.
    pub welfare: Vec<f64>,
}

/// Best-response iteration initialized from the cooperative solution. Each
/// episode solves every player's best response against the episode-start
/// field and then swaps all updates in at once (synchronous mode).
pub fn rba_dg(
    params: &ModelParams,
    exo: &ExogenousPaths,
    cfg: &BrConfig,
) -> Result<BrReport, NoncoopError> {
    let n = params.n_regions();
    let swm = solve_swm(params, exo, &cfg.solver, None, None)?;
    let mut field = TaggedProfile { profile: swm.profile, tag: 0 };
    let mut profiles = vec![field.profile.clone()];
    let mut episodes = Vec::new();
    let mut access_log = Vec::new();
    let mut converged_at = None;

    for episode in 0..cfg.episodes {
        let before_traj = dynamics::simulate(params, exo, &field.profile)?;
        let mut stats = EpisodeStats {
            deltas: vec![0.0; n],
            objective_before: before_traj.welfare.clone(),
            objective_after: vec![0.0; n],
            solver_converged: vec![false; n],
        };

        let results: Vec<(usize, usize, PlayerProfile, SolveReport)> = match cfg.mode {
            UpdateMode::Synchronous => (0..n)
                .into_par_iter()
                .map(|i| {
                    // Every player reads the same episode-start field.
                    let tag_read = field.tag;
                    best_response(params, exo, i, &field.profile, &cfg.solver)
                        .map(|(slice, report)| (i, tag_read, slice, report))
                })
                .collect::<Result<_, _>>()?,
            UpdateMode::Sequential => {
                let mut out = Vec::with_capacity(n);
                for i in 0..n {
                    let tag_read = field.tag;
                    let (slice, report) =
                        best_response(params, exo, i, &field.profile, &cfg.solver)?;
                    field.profile.set_player(i, &slice);
                    // In-place updates stale the field for later players.
                    field.tag += 1;
                    out.push((i, tag_read, slice, report));
                }
                out
            }
        };

        let mut next = field.profile.clone();
        for (i, tag_read, slice, report) in results {
            access_log.push(FieldAccess { episode, player: i, field_tag: tag_read });
            stats.deltas[i] = slice.delta_norm(&profiles[profiles.len() - 1].player(i));
            stats.objective_after[i] = report.objective;
            stats.solver_converged[i] = report.converged;
            next.set_player(i, &slice);
        }
        let max_delta = stats.deltas.iter().fold(0.0f64, |m, d| m.max(*d));
        episodes.push(stats);
        profiles.push(next.clone());
        field = TaggedProfile { profile: next, tag: episode + 1 };
        if max_delta <= cfg.tol {
            converged_at = Some(episode);
            break;
        }
    }

    let trajectory = dynamics::simulate(params, exo, &field.profile)?;
    let welfare = trajectory.welfare.clone();
    Ok(BrReport { profiles, episodes, converged_at, access_log, trajectory, welfare })
}

/// A receding-horizon feedback run.
#[derive(Debug)]
pub struct RhfaRun {
    /// Committed controls over `0..=t_sim`.
    pub profile: ControlProfile,
    pub trajectory: Trajectory,
    /// Solve reports of each planning round, `[round][player]`. The round at
    /// the final period is skipped because nothing is left to plan.
    pub planned_reports: Vec<Vec<SolveReport>>,
    /// The cooperative profile used to seed step 0.
    pub coop_profile: ControlProfile,
}

/// Whatever a receding-horizon feedback run had produced when a planning
/// window failed.
#[derive(Debug)]
pub struct RhfaPartial {
    pub profile: ControlProfile,
    pub planned_reports: Vec<Vec<SolveReport>>,
}

/// Receding-horizon feedback: step 0 plays the cooperative plan; after
/// playing each committed step, every player independently solves its own
/// welfare over the next `t_rh` steps (others held at their current step's
/// controls) and the first planned step becomes the next commitment.
pub fn rhfa_dg(
    params: &ModelParams,
    exo: &ExogenousPaths,
    t_sim: usize,
    t_rh: usize,
    opts: &SolveOptions,
) -> Result<RhfaRun, NoncoopError> {
    let n = params.n_regions();
    if t_rh == 0 {
        return Err(NoncoopError::Invalid("planning window must cover at least one step".into()));
    }
    if t_sim > params.horizon.t_final {
        return Err(NoncoopError::Invalid(format!(
            "t_sim {t_sim} exceeds horizon {}",
            params.horizon.t_final
        )));
    }

    let swm = solve_swm(params, exo, opts, None, None)?;
    let coop_profile = swm.profile;
    let mut committed = ControlProfile { steps: vec![coop_profile.steps[0].clone()] };
    let mut x = State::from_initial(&params.initial);
    let mut planned_reports = Vec::with_capacity(t_sim + 1);
    let mut prev_plans: Vec<Option<PlayerProfile>> = vec![None; n];

    for t in 0..=t_sim {
        let u_now = committed.steps[t].clone();
        let (x_next, _) = dynamics::step(params, exo, t, &x, &u_now)?;

        // Plan the next step, even after the last committed one; the final
        // round's plan is simply never played. Windows clip at the final
        // period, and the round at the final period itself is skipped.
        let end = (t + t_rh).min(params.horizon.t_final);
        if t + 1 > end {
            x = x_next;
            continue;
        }
        let steps = end - t;
        let window = (t + 1, end);
        let field_base = constant_field(&u_now, steps);
        let results: Vec<(PlayerProfile, SolveReport)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut field = field_base.clone();
                if let Some(prev) = &prev_plans[i] {
                    field.set_player(i, &shift_plan(prev, steps));
                }
                let spec = ObjectiveSpec::single_region(i, n, steps)
                    .with_window(t + 1, window)
                    .with_frozen(frozen_except(i, n, steps));
                let bounds = pinched_bounds(&field, i, params.numerics.s_max);
                let report = solve_box_max(
                    solver_evaluator(params, exo, &spec, &x_next),
                    &bounds,
                    &field.to_flat(),
                    opts,
                );
                let profile = ControlProfile::from_flat(n, &report.u);
                (profile.player(i), report)
            })
            .collect();

        let mut next_mu = Vec::with_capacity(n);
        let mut next_s = Vec::with_capacity(n);
        let mut reports = Vec::with_capacity(n);
        let mut aborted: Option<(usize, String)> = None;
        for (i, (plan, report)) in results.into_iter().enumerate() {
            if let crate::solve::StopReason::EvalAbort(reason) = &report.stop_reason {
                aborted.get_or_insert((i, reason.clone()));
            }
            next_mu.push(plan.mu[0]);
            next_s.push(plan.s[0]);
            prev_plans[i] = Some(plan);
            reports.push(report);
        }
        planned_reports.push(reports);
        if let Some((player, reason)) = aborted {
            return Err(NoncoopError::WindowAborted {
                t,
                player,
                reason,
                partial: Box::new(RhfaPartial { profile: committed, planned_reports }),
            });
        }

        if t < t_sim {
            committed.steps.push(dynamics::Control { mu: next_mu, s: next_s });
        }
        x = x_next;
    }

    let trajectory =
        simulate_window(params, exo, &State::from_initial(&params.initial), &committed, 0)?;
    Ok(RhfaRun { profile: committed, trajectory, planned_reports, coop_profile })
}

/// Field holding every player's step-`t` controls constant over the window.
fn constant_field(u_now: &dynamics::Control, steps: usize) -> ControlProfile {
    ControlProfile {
        steps: (0..steps).map(|_| u_now.clone()).collect(),
    }
}

/// Warm start for the next planning round: drop the played step, repeat the
/// last.
fn shift_plan(prev: &PlayerProfile, len: usize) -> PlayerProfile {
    let mut mu = prev.mu[1..].to_vec();
    let mut s = prev.s[1..].to_vec();
    mu.push(*prev.mu.last().unwrap());
    s.push(*prev.s.last().unwrap());
    mu.truncate(len);
    s.truncate(len);
    PlayerProfile { mu, s }
}
