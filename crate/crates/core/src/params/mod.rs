//! Model parameters: geophysical constants, regional economics, run horizon,
//! initial conditions, and exogenous signal paths.

mod config;
mod exogenous;

pub use config::{ConfigError, ModelConfig};
pub use exogenous::{generate, ExoError, ExogenousPaths, GeneratorConfig, RegionGenerator};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Canonical region order of the default calibration. Index positions are the
/// contract used by every per-region vector in the crate.
pub const REGION_NAMES: [&str; 12] = [
    "US", "EU", "JN", "RS", "EUR", "CN", "IN", "ME", "AF", "LA", "OHI", "OA",
];

#[derive(Debug, Error)]
pub enum ParamsError {
    #[error("parameter invariant violated: {0}")]
    Invariant(String),
    #[error("time step {t} outside horizon 0..={t_final}")]
    OutOfHorizon { t: usize, t_final: usize },
}

/// Two-box temperature and three-reservoir carbon dynamics, shared by all regions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeophysParams {
    /// Temperature transition matrix, row-major: [[to-atmosphere], [to-ocean]].
    pub phi: [[f64; 2]; 2],
    /// Forcing-to-atmospheric-temperature coefficient.
    pub xi2: f64,
    /// Carbon transition matrix over (atmosphere, upper ocean, lower ocean).
    pub zeta: [[f64; 3]; 3],
    /// Emissions-to-atmospheric-carbon coefficient (GtC per GtCO2, 5-year step).
    pub xi1: f64,
    /// Forcing at doubled atmospheric carbon, W/m^2.
    pub eta: f64,
    /// Pre-industrial atmospheric carbon stock, GtC.
    pub m_at_1750: f64,
}

impl GeophysParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        let entries = self
            .phi
            .iter()
            .flatten()
            .chain(self.zeta.iter().flatten());
        for &v in entries {
            if !(0.0..=1.0).contains(&v) {
                return Err(ParamsError::Invariant(format!(
                    "transition matrix entry {v} outside [0, 1]"
                )));
            }
        }
        // Columns of the carbon matrix move mass between reservoirs; each must
        // conserve it up to the calibration's own rounding.
        for col in 0..3 {
            let sum: f64 = (0..3).map(|row| self.zeta[row][col]).sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(ParamsError::Invariant(format!(
                    "carbon matrix column {col} sums to {sum}, expected 1 within 1e-6"
                )));
            }
        }
        for (name, v) in [
            ("eta", self.eta),
            ("xi1", self.xi1),
            ("m_at_1750", self.m_at_1750),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ParamsError::Invariant(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.xi2.is_finite() && self.xi2 >= 0.0) {
            return Err(ParamsError::Invariant(format!(
                "xi2 must be nonnegative, got {}",
                self.xi2
            )));
        }
        Ok(())
    }
}

/// Economic and damage parameters for one region.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionParams {
    pub name: String,
    /// Capital depreciation rate per year.
    pub delta_k: f64,
    /// Linear damage coefficient, 1/degC.
    pub a1: f64,
    /// Polynomial damage coefficient, 1/degC^a3.
    pub a2: f64,
    /// Damage exponent.
    pub a3: f64,
    /// Abatement cost exponent.
    pub theta2: f64,
    /// Capital elasticity of gross output.
    pub gamma: f64,
    /// Backstop price, USD per tCO2.
    pub pb: f64,
    /// Backstop price decline rate per period.
    pub delta_pb: f64,
    /// Elasticity of marginal utility of consumption.
    pub alpha: f64,
    /// Pure rate of social time preference per year.
    pub rho: f64,
    /// Welfare weight in the cooperative objective.
    pub c: f64,
}

impl RegionParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        let bad = |what: &str, v: f64| {
            Err(ParamsError::Invariant(format!(
                "region {}: {what} (got {v})",
                self.name
            )))
        };
        if !(self.delta_k >= 0.0 && self.delta_k < 1.0) {
            return bad("depreciation rate must lie in [0, 1)", self.delta_k);
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("capital elasticity must lie in (0, 1)", self.gamma);
        }
        if !(self.theta2 > 1.0) {
            return bad("abatement exponent must exceed 1", self.theta2);
        }
        if !(self.pb >= 0.0 && self.pb.is_finite()) {
            return bad("backstop price must be nonnegative", self.pb);
        }
        if !(self.delta_pb >= 0.0 && self.delta_pb < 1.0) {
            return bad("backstop decline rate must lie in [0, 1)", self.delta_pb);
        }
        if !(self.alpha > 0.0 && (self.alpha - 1.0).abs() > f64::EPSILON) {
            return bad("utility elasticity must be positive and not equal 1", self.alpha);
        }
        if !(self.rho >= 0.0) {
            return bad("time preference rate must be nonnegative", self.rho);
        }
        if !(self.c >= 0.0) {
            return bad("welfare weight must be nonnegative", self.c);
        }
        Ok(())
    }
}

/// Period structure of a run: `t = 0..=t_final`, each step `delta_years` long.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HorizonConfig {
    /// Calendar year of step 0.
    pub year0: i32,
    /// Years per step. The capital, discounting, and backstop recursions are
    /// written for 5-year periods, so this must be 5.
    pub delta_years: u32,
    /// Last decision step.
    pub t_final: usize,
}

impl HorizonConfig {
    pub fn validate(&self) -> Result<(), ParamsError> {
        if self.delta_years != 5 {
            return Err(ParamsError::Invariant(format!(
                "period length must be 5 years, got {}",
                self.delta_years
            )));
        }
        if self.t_final == 0 {
            return Err(ParamsError::Invariant("horizon must have at least one step".into()));
        }
        Ok(())
    }
}

/// Calendar year of step `t`, valid for `t <= t_final`.
pub fn year_of(t: usize, horizon: &HorizonConfig) -> Result<i32, ParamsError> {
    if t > horizon.t_final {
        return Err(ParamsError::OutOfHorizon { t, t_final: horizon.t_final });
    }
    Ok(horizon.year0 + (horizon.delta_years as i32) * (t as i32))
}

/// State of the world at step 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialState {
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
    /// Capital stock per region, trillion USD.
    pub k: Vec<f64>,
}

impl InitialState {
    pub fn validate(&self, n_regions: usize) -> Result<(), ParamsError> {
        for (name, v) in [("m_at", self.m_at), ("m_up", self.m_up), ("m_lo", self.m_lo)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ParamsError::Invariant(format!(
                    "initial carbon stock {name} must be positive, got {v}"
                )));
            }
        }
        if !self.t_at.is_finite() || !self.t_lo.is_finite() {
            return Err(ParamsError::Invariant("initial temperatures must be finite".into()));
        }
        if self.k.len() != n_regions {
            return Err(ParamsError::Invariant(format!(
                "initial capital has {} entries for {n_regions} regions",
                self.k.len()
            )));
        }
        for (i, &k) in self.k.iter().enumerate() {
            if !(k.is_finite() && k > 0.0) {
                return Err(ParamsError::Invariant(format!(
                    "initial capital of region {i} must be positive, got {k}"
                )));
            }
        }
        Ok(())
    }
}

/// Numerical guards that are part of the model definition, not solver knobs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NumericsParams {
    /// Upper bound on the saving rate control.
    pub s_max: f64,
    /// Consumption floor, trillion USD; the floor blend keeps utility defined
    /// and once continuously differentiable near zero consumption.
    pub consumption_floor: f64,
}

impl Default for NumericsParams {
    fn default() -> Self {
        NumericsParams { s_max: 0.99, consumption_floor: 1e-6 }
    }
}

impl NumericsParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        if !(self.s_max > 0.0 && self.s_max <= 1.0) {
            return Err(ParamsError::Invariant(format!(
                "saving rate cap must lie in (0, 1], got {}",
                self.s_max
            )));
        }
        if !(self.consumption_floor > 0.0 && self.consumption_floor.is_finite()) {
            return Err(ParamsError::Invariant(format!(
                "consumption floor must be positive, got {}",
                self.consumption_floor
            )));
        }
        Ok(())
    }
}

/// Everything the forward model needs besides controls and exogenous paths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    pub geophys: GeophysParams,
    pub regions: Vec<RegionParams>,
    pub horizon: HorizonConfig,
    pub initial: InitialState,
    pub numerics: NumericsParams,
}

impl ModelParams {
    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn region_index(&self, name: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.name == name)
    }

    /// Negishi-style welfare weights of the default cooperative objective.
    pub fn welfare_weights(&self) -> Vec<f64> {
        self.regions.iter().map(|r| r.c).collect()
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        self.geophys.validate()?;
        self.horizon.validate()?;
        self.numerics.validate()?;
        if self.regions.is_empty() {
            return Err(ParamsError::Invariant("at least one region is required".into()));
        }
        for r in &self.regions {
            r.validate()?;
        }
        let mut names: Vec<&str> = self.regions.iter().map(|r| r.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.regions.len() {
            return Err(ParamsError::Invariant("region names must be unique".into()));
        }
        self.initial.validate(self.regions.len())?;
        Ok(())
    }

    /// Truncated copy keeping only the first `k` regions. Useful for small
    /// test instances; the geophysics and horizon are unchanged.
    pub fn with_first_regions(&self, k: usize) -> ModelParams {
        assert!(k >= 1 && k <= self.regions.len());
        let mut p = self.clone();
        p.regions.truncate(k);
        p.initial.k.truncate(k);
        p
    }
}

/// Default 12-region calibration.
pub fn default_params() -> ModelParams {
    let geophys = GeophysParams {
        phi: [[0.871810629, 0.008844], [0.025, 0.975]],
        xi2: 0.1005,
        zeta: [
            [0.88, 0.196, 0.0],
            [0.12, 0.797, 0.001465],
            [0.0, 0.007, 0.99853488],
        ],
        xi1: 5.0 * 0.27272727,
        eta: 3.6813,
        m_at_1750: 588.0,
    };

    let a1 = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0008, 0.0044, 0.0028, 0.0034, 0.0006, 0.0, 0.0018];
    let a2 = [
        0.0014, 0.0016, 0.0016, 0.0011, 0.0013, 0.0013, 0.0017, 0.0016, 0.0020, 0.0014, 0.0016,
        0.0017,
    ];
    let gamma = [
        0.141, 0.159, 0.162, 0.115, 0.130, 0.126, 0.169, 0.159, 0.198, 0.135, 0.156, 0.173,
    ];
    let pb = [
        1051.0, 1635.0, 1635.0, 701.0, 701.0, 817.0, 1284.0, 1167.0, 1284.0, 1518.0, 1284.0,
        1401.0,
    ];
    let c = [
        0.2010, 0.1030, 0.1300, 0.0300, 0.0080, 0.0040, 0.0020, 0.0156, 0.0013, 0.0157, 0.1187,
        0.0031,
    ];

    let regions = (0..12)
        .map(|i| RegionParams {
            name: REGION_NAMES[i].to_string(),
            delta_k: 0.1,
            a1: a1[i],
            a2: a2[i],
            a3: 2.0,
            theta2: 2.6,
            gamma: gamma[i],
            pb: pb[i],
            delta_pb: 0.025,
            alpha: 1.45,
            rho: 0.015,
            c: c[i],
        })
        .collect();

    let horizon = HorizonConfig { year0: 2020, delta_years: 5, t_final: 120 };

    let initial = InitialState {
        t_at: 1.15,
        t_lo: 0.05,
        m_at: 979.0,
        m_up: 485.0,
        m_lo: 1741.0,
        k: vec![
            36.59, 37.11, 9.60, 4.96, 2.61, 28.47, 11.94, 14.46, 6.81, 17.49, 11.61, 11.09,
        ],
    };

    ModelParams { geophys, regions, horizon, initial, numerics: NumericsParams::default() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        default_params().validate().unwrap();
    }

    #[test]
    fn default_calibration_values() {
        let p = default_params();
        assert_eq!(p.n_regions(), 12);
        assert_eq!(p.geophys.phi, [[0.871810629, 0.008844], [0.025, 0.975]]);
        assert_eq!(p.geophys.xi2, 0.1005);
        assert_eq!(p.geophys.xi1, 5.0 * 0.27272727);
        assert_eq!(p.geophys.eta, 3.6813);
        assert_eq!(p.geophys.m_at_1750, 588.0);
        assert_eq!(p.geophys.zeta[0], [0.88, 0.196, 0.0]);
        assert_eq!(p.geophys.zeta[1], [0.12, 0.797, 0.001465]);
        assert_eq!(p.geophys.zeta[2], [0.0, 0.007, 0.99853488]);
        let us = &p.regions[0];
        assert_eq!((us.delta_k, us.a2, us.gamma, us.pb), (0.1, 0.0014, 0.141, 1051.0));
        assert_eq!((us.alpha, us.rho, us.c), (1.45, 0.015, 0.2010));
        assert_eq!(p.regions[6].a1, 0.0044);
        assert_eq!(p.regions[8].a2, 0.0020);
        assert_eq!(p.horizon.t_final, 120);
        assert_eq!(p.initial.m_at, 979.0);
        assert_eq!(p.initial.k[0], 36.59);
    }

    #[test]
    fn year_mapping() {
        let h = default_params().horizon;
        assert_eq!(year_of(0, &h).unwrap(), 2020);
        assert_eq!(year_of(1, &h).unwrap(), 2025);
        assert_eq!(year_of(120, &h).unwrap(), 2620);
        assert!(matches!(year_of(121, &h), Err(ParamsError::OutOfHorizon { .. })));
    }

    #[test]
    fn region_lookup() {
        let p = default_params();
        assert_eq!(p.region_index("CN"), Some(5));
        assert_eq!(p.region_index("OHI"), Some(10));
        assert_eq!(p.region_index("XX"), None);
    }

    #[test]
    fn truncation_keeps_prefix() {
        let p = default_params().with_first_regions(2);
        assert_eq!(p.n_regions(), 2);
        assert_eq!(p.initial.k, vec![36.59, 37.11]);
        p.validate().unwrap();
    }

    #[test]
    fn validation_rejects_broken_carbon_matrix() {
        let mut p = default_params();
        p.geophys.zeta[0][0] = 0.5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn validation_rejects_log_utility_elasticity() {
        let mut p = default_params();
        p.regions[3].alpha = 1.0;
        assert!(p.validate().is_err());
    }
}
