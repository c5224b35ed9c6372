//! Forward model: the coupled climate-capital transition, per-step
//! diagnostics, welfare accounting, and trajectory export.

pub mod scc;

use std::io::{self, Write};

use thiserror::Error;

use crate::params::{ExogenousPaths, GeophysParams, ModelParams, RegionParams};

#[derive(Debug, Error)]
pub enum DynError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("domain violation at t={t}: {what}")]
    Domain { t: usize, what: String },
    #[error("non-finite value at t={t}: {what}")]
    NonFinite { t: usize, what: String },
}

/// World state at the start of a step.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    /// Atmospheric temperature deviation, degC.
    pub t_at: f64,
    /// Lower-ocean temperature deviation, degC.
    pub t_lo: f64,
    /// Atmospheric carbon, GtC.
    pub m_at: f64,
    /// Upper-ocean carbon, GtC.
    pub m_up: f64,
    /// Lower-ocean carbon, GtC.
    pub m_lo: f64,
    /// Capital per region, trillion USD.
    pub k: Vec<f64>,
}

impl State {
    pub fn from_initial(init: &crate::params::InitialState) -> State {
        State {
            t_at: init.t_at,
            t_lo: init.t_lo,
            m_at: init.m_at,
            m_up: init.m_up,
            m_lo: init.m_lo,
            k: init.k.clone(),
        }
    }

    pub fn total_carbon(&self) -> f64 {
        self.m_at + self.m_up + self.m_lo
    }

    fn check_finite(&self, t: usize) -> Result<(), DynError> {
        let scalars = [
            ("T_AT", self.t_at),
            ("T_LO", self.t_lo),
            ("M_AT", self.m_at),
            ("M_UP", self.m_up),
            ("M_LO", self.m_lo),
        ];
        for (name, v) in scalars {
            if !v.is_finite() {
                return Err(DynError::NonFinite { t, what: format!("state {name} = {v}") });
            }
        }
        for (i, &k) in self.k.iter().enumerate() {
            if !k.is_finite() {
                return Err(DynError::NonFinite { t, what: format!("state K[{i}] = {k}") });
            }
        }
        Ok(())
    }
}

/// One step's controls for every region: emission reduction rate `mu` and
/// saving rate `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    pub mu: Vec<f64>,
    pub s: Vec<f64>,
}

/// Controls for a run of consecutive steps.
///
/// The flat vector layout used by the gradient engine and solvers is
/// `flat[(t * n + i) * 2 + ch]` with `ch = 0` for `mu` and `ch = 1` for `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlProfile {
    pub steps: Vec<Control>,
}

impl ControlProfile {
    pub fn constant(n: usize, steps: usize, mu: f64, s: f64) -> ControlProfile {
        ControlProfile {
            steps: (0..steps)
                .map(|_| Control { mu: vec![mu; n], s: vec![s; n] })
                .collect(),
        }
    }

    /// Conventional solver starting point.
    pub fn default_init(n: usize, steps: usize) -> ControlProfile {
        ControlProfile::constant(n, steps, 0.1, 0.25)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn n_regions(&self) -> usize {
        self.steps.first().map_or(0, |c| c.mu.len())
    }

    pub fn flat_len(n: usize, steps: usize) -> usize {
        steps * n * 2
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(Self::flat_len(self.n_regions(), self.len()));
        for c in &self.steps {
            for i in 0..c.mu.len() {
                flat.push(c.mu[i]);
                flat.push(c.s[i]);
            }
        }
        flat
    }

    pub fn from_flat(n: usize, flat: &[f64]) -> ControlProfile {
        assert!(n > 0 && flat.len() % (2 * n) == 0, "flat control vector length mismatch");
        let steps = flat.len() / (2 * n);
        let mut profile = ControlProfile { steps: Vec::with_capacity(steps) };
        for t in 0..steps {
            let mut c = Control { mu: Vec::with_capacity(n), s: Vec::with_capacity(n) };
            for i in 0..n {
                c.mu.push(flat[(t * n + i) * 2]);
                c.s.push(flat[(t * n + i) * 2 + 1]);
            }
            profile.steps.push(c);
        }
        profile
    }

    /// Box bounds matching the flat layout: `mu` in [0, 1], `s` in [0, s_max].
    pub fn box_bounds(n: usize, steps: usize, s_max: f64) -> Vec<(f64, f64)> {
        let mut bounds = Vec::with_capacity(Self::flat_len(n, steps));
        for _ in 0..steps * n {
            bounds.push((0.0, 1.0));
            bounds.push((0.0, s_max));
        }
        bounds
    }

    pub fn is_within_box(&self, s_max: f64) -> bool {
        self.steps.iter().all(|c| {
            c.mu.iter().all(|&v| (0.0..=1.0).contains(&v))
                && c.s.iter().all(|&v| (0.0..=s_max).contains(&v))
        })
    }

    pub fn player(&self, i: usize) -> PlayerProfile {
        PlayerProfile {
            mu: self.steps.iter().map(|c| c.mu[i]).collect(),
            s: self.steps.iter().map(|c| c.s[i]).collect(),
        }
    }

    pub fn set_player(&mut self, i: usize, p: &PlayerProfile) {
        assert_eq!(p.mu.len(), self.len(), "player profile length mismatch");
        for (t, c) in self.steps.iter_mut().enumerate() {
            c.mu[i] = p.mu[t];
            c.s[i] = p.s[t];
        }
    }

    /// Drops the first step and repeats the last one; used to warm-start the
    /// next receding-horizon window from the current plan.
    pub fn shifted_left(&self) -> ControlProfile {
        let mut steps: Vec<Control> = self.steps[1..].to_vec();
        if let Some(last) = self.steps.last() {
            steps.push(last.clone());
        }
        ControlProfile { steps }
    }

    /// Keeps only the first `len` steps; rolling windows shrink once their far
    /// end hits the final period.
    pub fn truncated(mut self, len: usize) -> ControlProfile {
        self.steps.truncate(len);
        self
    }
}

/// One player's controls over a run of steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerProfile {
    pub mu: Vec<f64>,
    pub s: Vec<f64>,
}

impl PlayerProfile {
    pub fn delta_norm(&self, other: &PlayerProfile) -> f64 {
        let sq: f64 = self
            .mu
            .iter()
            .zip(&other.mu)
            .chain(self.s.iter().zip(&other.s))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        sq.sqrt()
    }
}

/// Everything computed while advancing one step, kept for diagnostics,
/// welfare, exports, and the reverse sweep of the gradient engine.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// Total radiative forcing, W/m^2.
    pub forcing: f64,
    /// Per-region emissions, GtCO2.
    pub e: Vec<f64>,
    /// World emissions, GtCO2.
    pub e_total: f64,
    /// Gross output, trillion USD.
    pub y_gross: Vec<f64>,
    /// Damage retention factor (1 = no damage).
    pub damage: Vec<f64>,
    /// Abatement retention factor (1 = no abatement spending).
    pub abate: Vec<f64>,
    /// Abatement cost coefficient used this step.
    pub theta1: Vec<f64>,
    /// Output net of damage and abatement, trillion USD.
    pub net_output: Vec<f64>,
    /// Consumption before the floor, trillion USD.
    pub c_raw: Vec<f64>,
    /// Consumption after the floor, trillion USD.
    pub c: Vec<f64>,
    /// Slope of the floor blend at c_raw; 1 wherever the floor is inactive.
    pub blend_slope: Vec<f64>,
    /// Period utility.
    pub g: Vec<f64>,
    /// True where the consumption floor changed the value.
    pub floored: Vec<bool>,
    /// True where the damage factor was not positive.
    pub nonpositive_damage: Vec<bool>,
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct DomainViolation(String);

/// Damage retention factor at atmospheric temperature `t_at`. Negative
/// temperatures are tolerated; callers flag nonpositive results.
pub fn damage_factor(r: &RegionParams, t_at: f64) -> f64 {
    1.0 - r.a1 * t_at - r.a2 * t_at.powf(r.a3)
}

/// Abatement cost coefficient: backstop price declining per period, scaled by
/// current emission intensity.
pub fn abatement_cost_coeff(r: &RegionParams, sigma_it: f64, t_abs: usize) -> f64 {
    r.pb / (1000.0 * r.theta2) * (1.0 - r.delta_pb).powi(t_abs as i32) * sigma_it
}

/// Radiative forcing from atmospheric carbon plus exogenous forcing.
pub fn radiative_forcing(g: &GeophysParams, m_at: f64, f_ex: f64) -> Result<f64, DomainViolation> {
    if !(m_at > 0.0) {
        return Err(DomainViolation(format!("atmospheric carbon must be positive, got {m_at}")));
    }
    Ok(g.eta * (m_at / g.m_at_1750).ln() / std::f64::consts::LN_2 + f_ex)
}

/// Cobb-Douglas gross output. Population enters in billions.
pub fn gross_output(r: &RegionParams, a: f64, k: f64, l: f64) -> Result<f64, DomainViolation> {
    if !(k > 0.0 && a > 0.0 && l > 0.0) {
        return Err(DomainViolation(format!(
            "gross output needs positive inputs, got A={a}, K={k}, L={l}"
        )));
    }
    Ok(a * k.powf(r.gamma) * (l / 1000.0).powf(1.0 - r.gamma))
}

/// Industrial plus land-use emissions; affine in `mu`, zero industrial part at
/// `mu = 1`.
pub fn regional_emissions(sigma: f64, mu: f64, y_gross: f64, e_land: f64) -> f64 {
    sigma * (1.0 - mu) * y_gross + e_land
}

/// Consumption floor blend: identity above twice the floor, a quadratic patch
/// down to zero, and the floor value below. Once continuously differentiable;
/// returns (value, slope, floored).
pub fn consumption_floor(c_raw: f64, floor: f64) -> (f64, f64, bool) {
    if c_raw >= 2.0 * floor {
        (c_raw, 1.0, false)
    } else if c_raw >= 0.0 {
        (floor + c_raw * c_raw / (4.0 * floor), c_raw / (2.0 * floor), true)
    } else {
        (floor, 0.0, true)
    }
}

/// Population-weighted isoelastic period utility.
pub fn utility(r: &RegionParams, c: f64, l: f64) -> f64 {
    debug_assert!(c > 0.0 && l > 0.0);
    let e = 1.0 - r.alpha;
    l * ((c / l).powf(e) - 1.0) / e
}

/// Per-period discount factor at absolute step `t_abs`.
pub fn discount(r: &RegionParams, delta_years: u32, t_abs: usize) -> f64 {
    (1.0 + r.rho).powf(-(delta_years as f64) * t_abs as f64)
}

/// Advances the world one step from `x` under controls `u` at absolute step
/// `t_abs`. Exogenous signals are held at their last value past the stored
/// horizon.
pub fn step(
    params: &ModelParams,
    exo: &ExogenousPaths,
    t_abs: usize,
    x: &State,
    u: &Control,
) -> Result<(State, StepRecord), DynError> {
    let n = params.n_regions();
    if x.k.len() != n || u.mu.len() != n || u.s.len() != n || exo.n_regions() != n {
        return Err(DynError::Contract(format!(
            "region counts disagree: params {n}, state {}, controls {}/{}, exogenous {}",
            x.k.len(),
            u.mu.len(),
            u.s.len(),
            exo.n_regions()
        )));
    }
    let geo = &params.geophys;
    let dt = params.horizon.delta_years as f64;
    let floor = params.numerics.consumption_floor;

    let forcing = radiative_forcing(geo, x.m_at, exo.f_ex_at(t_abs))
        .map_err(|e| DynError::Domain { t: t_abs, what: e.to_string() })?;

    let mut rec = StepRecord {
        forcing,
        e: Vec::with_capacity(n),
        e_total: 0.0,
        y_gross: Vec::with_capacity(n),
        damage: Vec::with_capacity(n),
        abate: Vec::with_capacity(n),
        theta1: Vec::with_capacity(n),
        net_output: Vec::with_capacity(n),
        c_raw: Vec::with_capacity(n),
        c: Vec::with_capacity(n),
        blend_slope: Vec::with_capacity(n),
        g: Vec::with_capacity(n),
        floored: Vec::with_capacity(n),
        nonpositive_damage: Vec::with_capacity(n),
    };
    let mut k_next = Vec::with_capacity(n);

    for (i, r) in params.regions.iter().enumerate() {
        let l = exo.l_at(i, t_abs);
        let sigma = exo.sigma_at(i, t_abs);
        let y = gross_output(r, exo.a_at(i, t_abs), x.k[i], l)
            .map_err(|e| DynError::Domain { t: t_abs, what: format!("region {i}: {e}") })?;
        let e_i = regional_emissions(sigma, u.mu[i], y, exo.e_land_at(i, t_abs));
        let d = damage_factor(r, x.t_at);
        let theta1 = abatement_cost_coeff(r, sigma, t_abs);
        let abate = 1.0 - theta1 * u.mu[i].powf(r.theta2);
        let net = d * abate * y;
        let c_raw = net * (1.0 - u.s[i]);
        let (c, slope, floored) = consumption_floor(c_raw, floor);
        let g = utility(r, c, l);

        rec.e.push(e_i);
        rec.y_gross.push(y);
        rec.damage.push(d);
        rec.abate.push(abate);
        rec.theta1.push(theta1);
        rec.net_output.push(net);
        rec.c_raw.push(c_raw);
        rec.c.push(c);
        rec.blend_slope.push(slope);
        rec.g.push(g);
        rec.floored.push(floored);
        rec.nonpositive_damage.push(d <= 0.0);

        k_next.push((1.0 - r.delta_k).powi(dt as i32) * x.k[i] + dt * net * u.s[i]);
    }
    rec.e_total = rec.e.iter().sum();

    let next = State {
        t_at: geo.phi[0][0] * x.t_at + geo.phi[0][1] * x.t_lo + geo.xi2 * forcing,
        t_lo: geo.phi[1][0] * x.t_at + geo.phi[1][1] * x.t_lo,
        m_at: geo.zeta[0][0] * x.m_at + geo.zeta[0][1] * x.m_up + geo.zeta[0][2] * x.m_lo
            + geo.xi1 * rec.e_total,
        m_up: geo.zeta[1][0] * x.m_at + geo.zeta[1][1] * x.m_up + geo.zeta[1][2] * x.m_lo,
        m_lo: geo.zeta[2][0] * x.m_at + geo.zeta[2][1] * x.m_up + geo.zeta[2][2] * x.m_lo,
        k: k_next,
    };
    next.check_finite(t_abs + 1)?;
    for (i, &g) in rec.g.iter().enumerate() {
        if !g.is_finite() {
            return Err(DynError::NonFinite { t: t_abs, what: format!("utility g[{i}] = {g}") });
        }
    }
    Ok((next, rec))
}

/// A simulated run: states, per-step records, the controls that produced
/// them, and per-region discounted welfare over the simulated window.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Absolute step of `states[0]`; discounting uses absolute time.
    pub t_offset: usize,
    pub states: Vec<State>,
    pub records: Vec<StepRecord>,
    pub controls: ControlProfile,
    /// Per-region discounted welfare summed over the simulated steps.
    pub welfare: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_state(&self) -> &State {
        self.states.last().unwrap()
    }

    /// Discounted welfare of one region, recomputed from the stored period
    /// utilities. Equals `welfare[i]`.
    pub fn welfare_of(&self, i: usize, params: &ModelParams) -> f64 {
        let r = &params.regions[i];
        let mut acc = 0.0;
        for (k, rec) in self.records.iter().enumerate() {
            acc += rec.g[i] * discount(r, params.horizon.delta_years, self.t_offset + k);
        }
        acc
    }

    /// Weighted sum of per-region welfare.
    pub fn weighted_welfare(&self, weights: &[f64]) -> f64 {
        assert_eq!(weights.len(), self.welfare.len(), "weight vector length mismatch");
        weights.iter().zip(&self.welfare).map(|(w, j)| w * j).sum()
    }

    /// Steps where the consumption floor engaged, as (absolute step, region).
    pub fn floored_steps(&self) -> Vec<(usize, usize)> {
        self.flagged(|rec| &rec.floored)
    }

    /// Steps with a nonpositive damage factor, as (absolute step, region).
    pub fn nonpositive_damage_steps(&self) -> Vec<(usize, usize)> {
        self.flagged(|rec| &rec.nonpositive_damage)
    }

    fn flagged(&self, pick: impl Fn(&StepRecord) -> &Vec<bool>) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (k, rec) in self.records.iter().enumerate() {
            for (i, &hit) in pick(rec).iter().enumerate() {
                if hit {
                    out.push((self.t_offset + k, i));
                }
            }
        }
        out
    }

    /// Writes the per-step, per-region table. `scc` is indexed `[region][step]`
    /// and left empty in rows where it is not supplied.
    pub fn write_csv(
        &self,
        out: &mut dyn Write,
        params: &ModelParams,
        scc: Option<&[Vec<f64>]>,
    ) -> io::Result<()> {
        writeln!(
            out,
            "t,year,T_AT,T_LO,M_AT,M_UP,M_LO,region,K,mu,s,E,C,g,damage,abate,F,SCC"
        )?;
        let h = &params.horizon;
        for (k, rec) in self.records.iter().enumerate() {
            let t = self.t_offset + k;
            let year = h.year0 + h.delta_years as i32 * t as i32;
            let x = &self.states[k];
            let u = &self.controls.steps[k];
            for (i, r) in params.regions.iter().enumerate() {
                let scc_cell = match scc {
                    Some(s) => format!("{}", s[i][k]),
                    None => String::new(),
                };
                writeln!(
                    out,
                    "{t},{year},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{scc_cell}",
                    x.t_at,
                    x.t_lo,
                    x.m_at,
                    x.m_up,
                    x.m_lo,
                    r.name,
                    x.k[i],
                    u.mu[i],
                    u.s[i],
                    rec.e[i],
                    rec.c[i],
                    rec.g[i],
                    rec.damage[i],
                    rec.abate[i],
                    rec.forcing,
                )?;
            }
        }
        Ok(())
    }
}

/// Simulates a window of `u.len()` steps starting from `x_start` at absolute
/// step `t_offset`.
pub fn simulate_window(
    params: &ModelParams,
    exo: &ExogenousPaths,
    x_start: &State,
    u: &ControlProfile,
    t_offset: usize,
) -> Result<Trajectory, DynError> {
    if u.is_empty() {
        return Err(DynError::Contract("control profile must cover at least one step".into()));
    }
    let n = params.n_regions();
    let mut states = Vec::with_capacity(u.len() + 1);
    let mut records = Vec::with_capacity(u.len());
    let mut welfare = vec![0.0; n];
    states.push(x_start.clone());
    for (k, c) in u.steps.iter().enumerate() {
        let t_abs = t_offset + k;
        let (next, rec) = step(params, exo, t_abs, states.last().unwrap(), c)?;
        for (i, r) in params.regions.iter().enumerate() {
            welfare[i] += rec.g[i] * discount(r, params.horizon.delta_years, t_abs);
        }
        states.push(next);
        records.push(rec);
    }
    Ok(Trajectory { t_offset, states, records, controls: u.clone(), welfare })
}

/// Simulates a full run over `t = 0..=t_final` from the configured initial
/// state. The profile and the exogenous paths must both cover the horizon.
pub fn simulate(
    params: &ModelParams,
    exo: &ExogenousPaths,
    u: &ControlProfile,
) -> Result<Trajectory, DynError> {
    let steps = params.horizon.t_final + 1;
    if u.len() != steps {
        return Err(DynError::Contract(format!(
            "control profile covers {} steps, horizon needs {steps}",
            u.len()
        )));
    }
    if exo.len() != steps {
        return Err(DynError::Contract(format!(
            "exogenous paths cover {} steps, horizon needs {steps}",
            exo.len()
        )));
    }
    simulate_window(params, exo, &State::from_initial(&params.initial), u, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{default_params, generate, GeneratorConfig, HorizonConfig};
    use approx::assert_relative_eq;

    fn horizon(t_final: usize) -> HorizonConfig {
        HorizonConfig { year0: 2020, delta_years: 5, t_final }
    }

    /// Single-region instance with hand-pinned exogenous values.
    fn pinned_one_region() -> (ModelParams, ExogenousPaths) {
        let mut p = default_params().with_first_regions(1);
        p.horizon = horizon(1);
        let exo = ExogenousPaths {
            names: vec!["US".into()],
            l: vec![vec![331.0, 331.0]],
            a: vec![vec![32.6778, 32.6778]],
            sigma: vec![vec![0.3, 0.3]],
            e_land: vec![vec![0.5, 0.5]],
            f_ex: vec![0.5, 0.5],
        };
        (p, exo)
    }

    #[test]
    fn damage_factor_values() {
        let p = default_params();
        assert_relative_eq!(damage_factor(&p.regions[5], 1.15), 0.99736075, max_relative = 1e-12);
        assert_relative_eq!(damage_factor(&p.regions[0], 2.0), 0.9944, max_relative = 1e-12);
    }

    #[test]
    fn abatement_coeff_declines_with_backstop() {
        let p = default_params();
        let us = &p.regions[0];
        assert_relative_eq!(
            abatement_cost_coeff(us, 0.30, 0),
            0.12126923076923077,
            max_relative = 1e-12
        );
        assert_relative_eq!(abatement_cost_coeff(us, 0.30, 1), 0.1182375, max_relative = 1e-12);
    }

    #[test]
    fn forcing_doubles_to_eta() {
        let g = default_params().geophys;
        assert_eq!(radiative_forcing(&g, 1176.0, 0.0).unwrap(), 3.6813);
        assert_relative_eq!(
            radiative_forcing(&g, 979.0, 0.5).unwrap(),
            3.2075692940599745,
            max_relative = 1e-12
        );
        assert!(radiative_forcing(&g, 0.0, 0.0).is_err());
    }

    #[test]
    fn gross_output_value_and_domain() {
        let p = default_params();
        let us = &p.regions[0];
        assert_relative_eq!(
            gross_output(us, 32.6778, 36.59, 331.0).unwrap(),
            20.999993330138697,
            max_relative = 1e-12
        );
        assert!(gross_output(us, 32.6778, 0.0, 331.0).is_err());
        assert!(gross_output(us, -1.0, 36.59, 331.0).is_err());
    }

    #[test]
    fn emissions_are_affine_in_mu() {
        assert_relative_eq!(regional_emissions(0.3, 0.2, 10.0, 0.5), 2.9, max_relative = 1e-15);
        assert_eq!(regional_emissions(0.3, 1.0, 10.0, 0.5), 0.5);
    }

    #[test]
    fn utility_value() {
        let p = default_params();
        assert_relative_eq!(
            utility(&p.regions[0], 2.0, 1.0),
            0.5954603378381941,
            max_relative = 1e-12
        );
    }

    #[test]
    fn floor_blend_is_c1_and_monotone() {
        let eps = 1e-6;
        // Continuity of value and slope at the seams.
        let (v, d, hit) = consumption_floor(2.0 * eps, eps);
        assert_eq!((v, d, hit), (2.0 * eps, 1.0, false));
        let (v, d, _) = consumption_floor(2.0 * eps - 1e-18, eps);
        assert_relative_eq!(v, 2.0 * eps, max_relative = 1e-9);
        assert_relative_eq!(d, 1.0, max_relative = 1e-9);
        let (v, d, hit) = consumption_floor(0.0, eps);
        assert_eq!((v, d, hit), (eps, 0.0, true));
        let (v, d, hit) = consumption_floor(-5.0, eps);
        assert_eq!((v, d, hit), (eps, 0.0, true));
        // Monotone nondecreasing across the patch.
        let mut prev = 0.0;
        for k in -100..=400 {
            let c = k as f64 * 1e-8;
            let (v, _, _) = consumption_floor(c, eps);
            assert!(v >= prev);
            assert!(v >= eps);
            prev = v;
        }
    }

    #[test]
    fn pinned_step_golden() {
        let (p, exo) = pinned_one_region();
        let x = State { t_at: 1.15, t_lo: 0.05, m_at: 979.0, m_up: 485.0, m_lo: 1741.0, k: vec![36.59] };
        let u = Control { mu: vec![0.2], s: vec![0.25] };
        let (next, rec) = step(&p, &exo, 0, &x, &u).unwrap();
        assert_relative_eq!(rec.forcing, 3.2075692940599745, max_relative = 1e-12);
        assert_relative_eq!(rec.y_gross[0], 20.999993330138697, max_relative = 1e-12);
        assert_relative_eq!(rec.e[0], 5.539998399233287, max_relative = 1e-12);
        assert_relative_eq!(rec.damage[0], 0.9981485, max_relative = 1e-12);
        assert_relative_eq!(rec.theta1[0], 0.12126923076923077, max_relative = 1e-12);
        assert_relative_eq!(rec.abate[0], 0.9981531628096089, max_relative = 1e-12);
        assert_relative_eq!(rec.net_output[0], 20.92240008158529, max_relative = 1e-12);
        assert_relative_eq!(rec.c[0], 15.691800061188967, max_relative = 1e-12);
        assert_relative_eq!(rec.g[0], -2165.027679954422, max_relative = 1e-12);
        assert!(!rec.floored[0] && !rec.nonpositive_damage[0]);
        assert_relative_eq!(next.t_at, 1.3253851374030274, max_relative = 1e-12);
        assert_relative_eq!(next.t_lo, 0.0775, max_relative = 1e-12);
        assert_relative_eq!(next.m_at, 964.1345431961363, max_relative = 1e-12);
        assert_relative_eq!(next.m_up, 506.575565, max_relative = 1e-12);
        assert_relative_eq!(next.m_lo, 1741.84422608, max_relative = 1e-12);
        assert_relative_eq!(next.k[0], 47.75902920198162, max_relative = 1e-12);
    }

    #[test]
    fn carbon_step_with_zero_emissions() {
        let (mut p, mut exo) = pinned_one_region();
        p.initial.m_at = 588.0;
        p.initial.m_up = 485.0;
        p.initial.m_lo = 1741.0;
        exo.e_land = vec![vec![0.0, 0.0]];
        let x = State::from_initial(&p.initial);
        let u = Control { mu: vec![1.0], s: vec![0.25] };
        let (next, rec) = step(&p, &exo, 0, &x, &u).unwrap();
        assert_eq!(rec.e_total, 0.0);
        assert_relative_eq!(next.m_at, 612.5, max_relative = 1e-13);
        assert_relative_eq!(next.m_up, 459.655565, max_relative = 1e-13);
        assert_relative_eq!(next.m_lo, 1741.84422608, max_relative = 1e-13);
    }

    #[test]
    fn mass_balance_holds_per_step() {
        let p = {
            let mut p = default_params();
            p.horizon = horizon(20);
            p
        };
        let exo = generate(&GeneratorConfig::default(), &p.horizon).unwrap();
        let u = ControlProfile::constant(12, 21, 0.35, 0.2);
        let traj = simulate(&p, &exo, &u).unwrap();
        for (k, rec) in traj.records.iter().enumerate() {
            let gain = traj.states[k + 1].total_carbon() - traj.states[k].total_carbon();
            let injected = p.geophys.xi1 * rec.e_total;
            assert!(
                (gain - injected).abs() <= 1e-6 * traj.states[k].total_carbon(),
                "step {k}: gain {gain} vs injected {injected}"
            );
        }
    }

    #[test]
    fn welfare_matches_brute_force() {
        let (mut p, exo) = pinned_one_region();
        p.horizon = horizon(1);
        let u = ControlProfile::constant(1, 2, 0.2, 0.25);
        let traj = simulate(&p, &exo, &u).unwrap();
        let r = &p.regions[0];
        let brute: f64 = (0..2)
            .map(|t| traj.records[t].g[0] * (1.0 + r.rho).powf(-5.0 * t as f64))
            .sum();
        assert_eq!(traj.welfare[0], traj.welfare_of(0, &p));
        assert_relative_eq!(traj.welfare[0], brute, max_relative = 1e-14);
        assert_relative_eq!(
            traj.weighted_welfare(&[2.0]),
            2.0 * traj.welfare[0],
            max_relative = 1e-15
        );
    }

    #[test]
    fn window_discounting_uses_absolute_time() {
        let (mut p, exo) = pinned_one_region();
        p.horizon = horizon(9);
        let x = State::from_initial(&p.initial);
        let u = ControlProfile::constant(1, 3, 0.2, 0.25);
        let shifted = simulate_window(&p, &exo, &x, &u, 4).unwrap();
        let r = &p.regions[0];
        let brute: f64 = (0..3)
            .map(|k| shifted.records[k].g[0] * (1.0 + r.rho).powf(-5.0 * (4 + k) as f64))
            .sum();
        assert_relative_eq!(shifted.welfare[0], brute, max_relative = 1e-14);
    }

    #[test]
    fn simulate_checks_lengths() {
        let (p, exo) = pinned_one_region();
        let u = ControlProfile::constant(1, 5, 0.2, 0.25);
        assert!(matches!(simulate(&p, &exo, &u), Err(DynError::Contract(_))));
    }

    #[test]
    fn repeat_simulation_is_bit_identical() {
        let p = {
            let mut p = default_params();
            p.horizon = horizon(8);
            p
        };
        let exo = generate(&GeneratorConfig::default(), &p.horizon).unwrap();
        let u = ControlProfile::default_init(12, 9);
        let a = simulate(&p, &exo, &u).unwrap();
        let b = simulate(&p, &exo, &u).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.welfare, b.welfare);
    }

    #[test]
    fn flat_layout_round_trip() {
        let mut u = ControlProfile::constant(3, 4, 0.1, 0.2);
        u.steps[2].mu[1] = 0.77;
        u.steps[3].s[0] = 0.55;
        let flat = u.to_flat();
        assert_eq!(flat.len(), ControlProfile::flat_len(3, 4));
        assert_eq!(flat[(2 * 3 + 1) * 2], 0.77);
        assert_eq!(flat[(3 * 3) * 2 + 1], 0.55);
        assert_eq!(ControlProfile::from_flat(3, &flat), u);
    }

    #[test]
    fn player_slice_round_trip() {
        let mut u = ControlProfile::default_init(4, 3);
        let mut p1 = u.player(1);
        p1.mu = vec![0.9, 0.8, 0.7];
        p1.s = vec![0.1, 0.2, 0.3];
        u.set_player(1, &p1);
        assert_eq!(u.player(1), p1);
        assert_eq!(u.player(0), ControlProfile::default_init(4, 3).player(0));
    }

    #[test]
    fn nonpositive_damage_is_flagged_not_fatal() {
        let (p, exo) = pinned_one_region();
        let x = State { t_at: 30.0, t_lo: 0.05, m_at: 979.0, m_up: 485.0, m_lo: 1741.0, k: vec![36.59] };
        let u = Control { mu: vec![0.2], s: vec![0.25] };
        let (_, rec) = step(&p, &exo, 0, &x, &u).unwrap();
        assert!(rec.damage[0] < 0.0);
        assert!(rec.nonpositive_damage[0]);
        assert!(rec.floored[0]);
        assert_eq!(rec.c[0], p.numerics.consumption_floor);
    }

    #[test]
    fn csv_export_shape() {
        let (mut p, exo) = pinned_one_region();
        p.horizon = horizon(2);
        let exo = ExogenousPaths {
            f_ex: vec![0.5; 3],
            l: vec![vec![331.0; 3]],
            a: vec![vec![32.6778; 3]],
            sigma: vec![vec![0.3; 3]],
            e_land: vec![vec![0.5; 3]],
            names: exo.names,
        };
        let u = ControlProfile::constant(1, 3, 0.2, 0.25);
        let traj = simulate(&p, &exo, &u).unwrap();
        let scc = vec![vec![1.5, 2.5, 3.5]];
        let mut buf = Vec::new();
        traj.write_csv(&mut buf, &p, Some(&scc)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "t,year,T_AT,T_LO,M_AT,M_UP,M_LO,region,K,mu,s,E,C,g,damage,abate,F,SCC"
        );
        assert_eq!(lines.len(), 1 + 3);
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(first.len(), 18);
        assert_eq!(first[0], "0");
        assert_eq!(first[1], "2020");
        assert_eq!(first[7], "US");
        assert_eq!(first[17], "1.5");
        let second: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(second[1], "2025");
    }
}
