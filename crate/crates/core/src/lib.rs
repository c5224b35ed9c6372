//! A multi-region climate-economy model posed as a finite-horizon dynamic
//! game: deterministic forward dynamics, exact adjoint gradients, a projected
//! quasi-Newton box solver, and cooperative plus non-cooperative solution
//! procedures built on top.

pub mod coop;
pub mod dynamics;
pub mod grad;
pub mod noncoop;
pub mod params;
pub mod solve;

pub use coop::{
    mpc_rice, pareto_frontier, solve_swm, ClusterSplit, CoopError, MpcPartial, MpcRun,
    ParetoPoint, SwmSolution,
};
pub use dynamics::scc::{scc_all, scc_instantaneous, scc_single};
pub use dynamics::{
    radiative_forcing, simulate, simulate_window, step, Control, ControlProfile, DynError,
    PlayerProfile, State, StepRecord, Trajectory,
};
pub use grad::{
    adjoint_sweep, fd_gradient, objective_and_gradient, objective_value, GradError,
    GradientReport, ObjectiveSpec,
};
pub use noncoop::{
    best_response, rba_dg, rhfa_dg, BrConfig, BrReport, EpisodeStats, NoncoopError, RhfaPartial,
    RhfaRun, UpdateMode,
};
pub use params::{
    default_params, generate, year_of, ConfigError, ExoError, ExogenousPaths, GeneratorConfig,
    GeophysParams, HorizonConfig, InitialState, ModelConfig, ModelParams, NumericsParams,
    ParamsError, RegionParams, REGION_NAMES,
};
pub use solve::{projected_grad_norm, solve_box_max, SolveOptions, SolveReport, StopReason};
