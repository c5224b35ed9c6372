//! Social cost of carbon along a simulated policy.
//!
//! For region `i` at step `t`, the SCC is the marginal welfare loss from one
//! extra unit of world emissions at `t`, converted into consumption units by
//! the region's own marginal welfare of consumption, and scaled from
//! trillion USD per GtCO2 to USD per tCO2.

use crate::dynamics::{discount, ControlProfile, State, StepRecord};
use crate::grad::{adjoint_sweep, GradError, ObjectiveSpec};
use crate::params::{ExogenousPaths, ModelParams};

/// SCC paths for every region, indexed `[region][step]`. One adjoint sweep of
/// region `i`'s own welfare gives `dJ_i/dE(t)` for all `t` at once.
pub fn scc_all(
    params: &ModelParams,
    exo: &ExogenousPaths,
    x_start: &State,
    u: &ControlProfile,
    t_offset: usize,
) -> Result<Vec<Vec<f64>>, GradError> {
    let n = params.n_regions();
    let steps = u.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let spec = ObjectiveSpec::single_region(i, n, steps)
            .with_window(t_offset, (t_offset, t_offset + steps - 1));
        let sweep = adjoint_sweep(params, exo, &spec, x_start, u)?;
        let r = &params.regions[i];
        let mut path = Vec::with_capacity(steps);
        for t in 0..steps {
            let t_abs = t_offset + t;
            // Marginal welfare of one more GtCO2 emitted at t: emissions only
            // enter the next step's atmospheric carbon.
            let dj_de = params.geophys.xi1 * sweep.adjoints[t + 1].m_at;
            let rec = &sweep.trajectory.records[t];
            let dj_dc = discount(r, params.horizon.delta_years, t_abs)
                * (rec.c[i] / exo.l_at(i, t_abs)).powf(-r.alpha);
            if !(dj_dc > 0.0) {
                return Err(GradError::Internal(format!(
                    "marginal welfare of consumption is {dj_dc} for region {i} at t={t_abs}"
                )));
            }
            path.push(-1000.0 * dj_de / dj_dc);
        }
        out.push(path);
    }
    Ok(out)
}

/// SCC of one region at one step.
pub fn scc_single(
    params: &ModelParams,
    exo: &ExogenousPaths,
    x_start: &State,
    u: &ControlProfile,
    t_offset: usize,
    i: usize,
    t: usize,
) -> Result<f64, GradError> {
    let n = params.n_regions();
    let steps = u.len();
    if i >= n || t >= steps {
        return Err(GradError::Spec(format!(
            "requested region {i}, step {t} outside {n} regions x {steps} steps"
        )));
    }
    let spec = ObjectiveSpec::single_region(i, n, steps)
        .with_window(t_offset, (t_offset, t_offset + steps - 1));
    let sweep = adjoint_sweep(params, exo, &spec, x_start, u)?;
    let r = &params.regions[i];
    let dj_de = params.geophys.xi1 * sweep.adjoints[t + 1].m_at;
    let rec = &sweep.trajectory.records[t];
    let dj_dc = discount(r, params.horizon.delta_years, t_offset + t)
        * (rec.c[i] / exo.l_at(i, t_offset + t)).powf(-r.alpha);
    if !(dj_dc > 0.0) {
        return Err(GradError::Internal(format!(
            "marginal welfare of consumption is {dj_dc} for region {i} at t={}",
            t_offset + t
        )));
    }
    Ok(-1000.0 * dj_de / dj_dc)
}

/// Instantaneous variant: the within-period marginal abatement cost, i.e. the
/// consumption given up per extra tonne abated at the current control,
/// `1000 * (dC_i/dmu) / (dE_i/dmu)` in USD per tCO2. Zero at `mu = 0`; ignores
/// all dynamic effects, so it is not the planner's shadow price.
pub fn scc_instantaneous(
    params: &ModelParams,
    exo: &ExogenousPaths,
    rec: &StepRecord,
    u_step: &crate::dynamics::Control,
    t_abs: usize,
    i: usize,
) -> f64 {
    let r = &params.regions[i];
    let dc_dmu = rec.damage[i]
        * (1.0 - u_step.s[i])
        * rec.y_gross[i]
        * rec.theta1[i]
        * r.theta2
        * u_step.mu[i].powf(r.theta2 - 1.0);
    let de_dmu = exo.sigma_at(i, t_abs) * rec.y_gross[i];
    1000.0 * dc_dmu / de_dmu
}
