//! Exogenous signal paths: population, productivity, emission intensity,
//! land-use emissions, and non-CO2 forcing. Paths are either generated from a
//! small recursion config or loaded from CSV.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{HorizonConfig, ModelParams, ParamsError};

const REGION_HEADER: &str = "t,region,L,A,sigma,e_land";
const FORCING_HEADER: &str = "t,f_ex";

#[derive(Debug, Error)]
pub enum ExoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Schema { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}

/// Per-region, per-step exogenous inputs plus the global forcing path.
/// All per-region vectors are indexed `[region][step]` with `step = 0..=t_final`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousPaths {
    pub names: Vec<String>,
    /// Population, millions.
    pub l: Vec<Vec<f64>>,
    /// Total factor productivity.
    pub a: Vec<Vec<f64>>,
    /// Emission intensity of gross output, GtCO2 per trillion USD.
    pub sigma: Vec<Vec<f64>>,
    /// Land-use emissions, GtCO2 per period.
    pub e_land: Vec<Vec<f64>>,
    /// Exogenous radiative forcing, W/m^2.
    pub f_ex: Vec<f64>,
}

impl ExogenousPaths {
    pub fn n_regions(&self) -> usize {
        self.names.len()
    }

    /// Number of stored steps (`t_final + 1`).
    pub fn len(&self) -> usize {
        self.f_ex.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f_ex.is_empty()
    }

    // Receding-horizon windows may look past the stored horizon; signals are
    // held at their last stored value there.
    #[inline]
    pub fn l_at(&self, i: usize, t: usize) -> f64 {
        clamped(&self.l[i], t)
    }

    #[inline]
    pub fn a_at(&self, i: usize, t: usize) -> f64 {
        clamped(&self.a[i], t)
    }

    #[inline]
    pub fn sigma_at(&self, i: usize, t: usize) -> f64 {
        clamped(&self.sigma[i], t)
    }

    #[inline]
    pub fn e_land_at(&self, i: usize, t: usize) -> f64 {
        clamped(&self.e_land[i], t)
    }

    #[inline]
    pub fn f_ex_at(&self, t: usize) -> f64 {
        clamped(&self.f_ex, t)
    }

    pub fn validate(&self) -> Result<(), ExoError> {
        let n = self.names.len();
        let steps = self.f_ex.len();
        if n == 0 || steps == 0 {
            return Err(ExoError::Invalid("exogenous paths must be non-empty".into()));
        }
        for (field, data, min_ok) in [
            ("L", &self.l, false),
            ("A", &self.a, false),
            ("sigma", &self.sigma, false),
            ("e_land", &self.e_land, true),
        ] {
            if data.len() != n {
                return Err(ExoError::Invalid(format!(
                    "{field} covers {} regions, expected {n}",
                    data.len()
                )));
            }
            for (i, path) in data.iter().enumerate() {
                if path.len() != steps {
                    return Err(ExoError::Invalid(format!(
                        "{field} for region {} has {} steps, expected {steps}",
                        self.names[i],
                        path.len()
                    )));
                }
                for (t, &v) in path.iter().enumerate() {
                    let ok = v.is_finite() && if min_ok { v >= 0.0 } else { v > 0.0 };
                    if !ok {
                        return Err(ExoError::Invalid(format!(
                            "{field} for region {} at t={t} is {v}",
                            self.names[i]
                        )));
                    }
                }
            }
        }
        if let Some((t, &v)) = self.f_ex.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(ExoError::Invalid(format!("f_ex at t={t} is {v}")));
        }
        Ok(())
    }

    /// Checks that these paths cover exactly the model's regions, in order.
    pub fn matches_regions(&self, params: &ModelParams) -> Result<(), ExoError> {
        if self.names.len() != params.n_regions() {
            return Err(ExoError::Invalid(format!(
                "exogenous paths cover {} regions, model expects {}",
                self.names.len(),
                params.n_regions()
            )));
        }
        for (i, r) in params.regions.iter().enumerate() {
            if self.names[i] != r.name {
                return Err(ExoError::Invalid(format!(
                    "exogenous region {} at position {i} does not match model region {}",
                    self.names[i], r.name
                )));
            }
        }
        Ok(())
    }

    /// Writes the two-block CSV form: a per-region block followed by a blank
    /// line and the forcing block.
    pub fn write_csv(&self, path: &Path) -> Result<(), ExoError> {
        let mut out = Vec::new();
        writeln!(out, "{REGION_HEADER}")?;
        for t in 0..self.len() {
            for (i, name) in self.names.iter().enumerate() {
                writeln!(
                    out,
                    "{t},{name},{},{},{},{}",
                    self.l[i][t], self.a[i][t], self.sigma[i][t], self.e_land[i][t]
                )?;
            }
        }
        writeln!(out)?;
        writeln!(out, "{FORCING_HEADER}")?;
        for (t, f) in self.f_ex.iter().enumerate() {
            writeln!(out, "{t},{f}")?;
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Loads the two-block CSV form, requiring full coverage of
    /// `0..=horizon.t_final` for every region found in the file.
    pub fn load_csv(path: &Path, horizon: &HorizonConfig) -> Result<Self, ExoError> {
        let text = fs::read_to_string(path)?;
        Self::from_csv_str(&text, horizon)
    }

    pub fn from_csv_str(text: &str, horizon: &HorizonConfig) -> Result<Self, ExoError> {
        let steps = horizon.t_final + 1;
        let mut lines = text.lines().enumerate();

        let (lno, header) = lines
            .next()
            .ok_or(ExoError::Schema { line: 1, msg: "empty file".into() })?;
        if header.trim() != REGION_HEADER {
            return Err(ExoError::Schema {
                line: lno + 1,
                msg: format!("expected header '{REGION_HEADER}', found '{header}'"),
            });
        }

        let mut names: Vec<String> = Vec::new();
        let mut rows: Vec<Vec<Option<[f64; 4]>>> = Vec::new(); // [region][t]
        let mut forcing_header_line = None;
        for (idx, raw) in lines.by_ref() {
            let line = idx + 1;
            let row = raw.trim();
            if row.is_empty() {
                forcing_header_line = Some(line + 1);
                break;
            }
            let fields: Vec<&str> = row.split(',').collect();
            if fields.len() != 6 {
                return Err(ExoError::Schema {
                    line,
                    msg: format!(
                        "expected 6 columns ({REGION_HEADER}), found {}",
                        fields.len()
                    ),
                });
            }
            let t = parse_step(fields[0], line, "t")?;
            if t >= steps {
                return Err(ExoError::Schema {
                    line,
                    msg: format!("t={t} outside horizon 0..={}", horizon.t_final),
                });
            }
            let region = fields[1].to_string();
            let i = match names.iter().position(|n| *n == region) {
                Some(i) => i,
                None => {
                    names.push(region);
                    rows.push(vec![None; steps]);
                    names.len() - 1
                }
            };
            let mut vals = [0.0; 4];
            for (k, col) in ["L", "A", "sigma", "e_land"].iter().enumerate() {
                vals[k] = parse_value(fields[k + 2], line, col)?;
            }
            if rows[i][t].replace(vals).is_some() {
                return Err(ExoError::Schema {
                    line,
                    msg: format!("duplicate row for t={t}, region {}", names[i]),
                });
            }
        }

        let forcing_start = forcing_header_line.ok_or(ExoError::Schema {
            line: text.lines().count(),
            msg: "missing forcing block; expected a blank line then 't,f_ex'".into(),
        })?;
        let (lno, header) = lines.next().ok_or(ExoError::Schema {
            line: forcing_start,
            msg: format!("expected header '{FORCING_HEADER}'"),
        })?;
        if header.trim() != FORCING_HEADER {
            return Err(ExoError::Schema {
                line: lno + 1,
                msg: format!("expected header '{FORCING_HEADER}', found '{header}'"),
            });
        }
        let mut f_ex: Vec<Option<f64>> = vec![None; steps];
        for (idx, raw) in lines {
            let line = idx + 1;
            let row = raw.trim();
            if row.is_empty() {
                continue;
            }
            let fields: Vec<&str> = row.split(',').collect();
            if fields.len() != 2 {
                return Err(ExoError::Schema {
                    line,
                    msg: format!("expected 2 columns ({FORCING_HEADER}), found {}", fields.len()),
                });
            }
            let t = parse_step(fields[0], line, "t")?;
            if t >= steps {
                return Err(ExoError::Schema {
                    line,
                    msg: format!("t={t} outside horizon 0..={}", horizon.t_final),
                });
            }
            let v = parse_value(fields[1], line, "f_ex")?;
            if f_ex[t].replace(v).is_some() {
                return Err(ExoError::Schema { line, msg: format!("duplicate f_ex row for t={t}") });
            }
        }

        if names.is_empty() {
            return Err(ExoError::Invalid("no region rows found".into()));
        }
        let mut paths = ExogenousPaths {
            names,
            l: Vec::new(),
            a: Vec::new(),
            sigma: Vec::new(),
            e_land: Vec::new(),
            f_ex: Vec::new(),
        };
        for (i, per_t) in rows.iter().enumerate() {
            let mut l = Vec::with_capacity(steps);
            let mut a = Vec::with_capacity(steps);
            let mut sigma = Vec::with_capacity(steps);
            let mut e_land = Vec::with_capacity(steps);
            for (t, entry) in per_t.iter().enumerate() {
                let vals = entry.ok_or_else(|| ExoError::Invalid(format!(
                    "region {} is missing t={t} (horizon needs 0..={})",
                    paths.names[i], horizon.t_final
                )))?;
                l.push(vals[0]);
                a.push(vals[1]);
                sigma.push(vals[2]);
                e_land.push(vals[3]);
            }
            paths.l.push(l);
            paths.a.push(a);
            paths.sigma.push(sigma);
            paths.e_land.push(e_land);
        }
        paths.f_ex = f_ex
            .iter()
            .enumerate()
            .map(|(t, v)| {
                v.ok_or_else(|| ExoError::Invalid(format!(
                    "f_ex is missing t={t} (horizon needs 0..={})",
                    horizon.t_final
                )))
            })
            .collect::<Result<_, _>>()?;
        paths.validate()?;
        Ok(paths)
    }
}

fn clamped(path: &[f64], t: usize) -> f64 {
    path[t.min(path.len() - 1)]
}

fn parse_step(field: &str, line: usize, col: &str) -> Result<usize, ExoError> {
    field.trim().parse().map_err(|_| ExoError::Schema {
        line,
        msg: format!("column {col}: expected a step index, found '{field}'"),
    })
}

fn parse_value(field: &str, line: usize, col: &str) -> Result<f64, ExoError> {
    field.trim().parse().map_err(|_| ExoError::Schema {
        line,
        msg: format!("column {col}: expected a number, found '{field}'"),
    })
}

/// Growth recursion inputs for one region's exogenous paths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionGenerator {
    pub name: String,
    /// Initial population, millions.
    pub l0: f64,
    /// Population asymptote, millions.
    pub l_asym: f64,
    /// Population convergence exponent per period, in [0, 1].
    pub l_g: f64,
    /// Initial total factor productivity.
    pub a0: f64,
    /// Initial productivity growth per period, in [0, 1).
    pub ga0: f64,
    /// Productivity growth decline rate per year.
    pub dela: f64,
    /// Initial emission intensity.
    pub sigma0: f64,
    /// Initial intensity growth rate per year (typically negative).
    pub gsigma0: f64,
    /// Per-year trend in the intensity growth rate.
    pub dsigma: f64,
    /// Initial land-use emissions, GtCO2 per period.
    pub e_land0: f64,
    /// Land-use emission decline rate per period, in [0, 1].
    pub e_land_decline: f64,
}

/// Inputs for `generate`, one entry per region plus the shared forcing ramp.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub regions: Vec<RegionGenerator>,
    /// Exogenous forcing at step 0, W/m^2.
    pub f_ex0: f64,
    /// Exogenous forcing after the ramp, W/m^2.
    pub f_ex1: f64,
    /// Steps over which forcing ramps linearly from f_ex0 to f_ex1.
    pub f_ex_ramp: usize,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), ParamsError> {
        if self.regions.is_empty() {
            return Err(ParamsError::Invariant("generator needs at least one region".into()));
        }
        if self.f_ex_ramp == 0 {
            return Err(ParamsError::Invariant("forcing ramp must be at least one step".into()));
        }
        if !self.f_ex0.is_finite() || !self.f_ex1.is_finite() {
            return Err(ParamsError::Invariant("forcing levels must be finite".into()));
        }
        for r in &self.regions {
            let bad = |what: &str, v: f64| {
                Err(ParamsError::Invariant(format!("generator region {}: {what} (got {v})", r.name)))
            };
            if !(r.l0 > 0.0) {
                return bad("initial population must be positive", r.l0);
            }
            if !(r.l_asym > 0.0) {
                return bad("population asymptote must be positive", r.l_asym);
            }
            if !(0.0..=1.0).contains(&r.l_g) {
                return bad("population exponent must lie in [0, 1]", r.l_g);
            }
            if !(r.a0 > 0.0) {
                return bad("initial productivity must be positive", r.a0);
            }
            if !(0.0..1.0).contains(&r.ga0) {
                return bad("productivity growth must lie in [0, 1)", r.ga0);
            }
            if !(r.dela >= 0.0) {
                return bad("productivity growth decline must be nonnegative", r.dela);
            }
            if !(r.sigma0 > 0.0) {
                return bad("initial intensity must be positive", r.sigma0);
            }
            if !(r.dsigma > -1.0) {
                return bad("intensity growth trend must exceed -1", r.dsigma);
            }
            if !(r.e_land0 >= 0.0) {
                return bad("land-use emissions must be nonnegative", r.e_land0);
            }
            if !(0.0..=1.0).contains(&r.e_land_decline) {
                return bad("land-use decline must lie in [0, 1]", r.e_land_decline);
            }
        }
        Ok(())
    }

    pub fn with_first_regions(&self, k: usize) -> GeneratorConfig {
        assert!(k >= 1 && k <= self.regions.len());
        let mut g = self.clone();
        g.regions.truncate(k);
        g
    }
}

impl Default for GeneratorConfig {
    /// Illustrative growth inputs for the 12 default regions, chosen so the
    /// generated paths have plausible magnitudes and trends.
    fn default() -> Self {
        use super::REGION_NAMES;
        let l0 = [331.0, 448.0, 126.0, 146.0, 95.0, 1411.0, 1380.0, 350.0, 1200.0, 650.0, 115.0, 1500.0];
        let l_asym =
            [450.0, 455.0, 105.0, 140.0, 100.0, 1400.0, 1700.0, 600.0, 2900.0, 800.0, 130.0, 1900.0];
        let a0 = [
            32.6778, 17.2524, 19.6667, 7.7628, 8.211, 7.1347, 1.4593, 5.534, 1.5364, 5.1293,
            27.5151, 2.7354,
        ];
        let sigma0 = [
            0.2238, 0.1667, 0.22, 1.0, 0.75, 0.7279, 0.8276, 0.7714, 0.5385, 0.3269, 0.3077,
            0.6034,
        ];
        let e_land0 = [0.1, 0.1, 0.0, 0.3, 0.1, 0.2, 0.3, 0.1, 1.6, 1.9, 0.1, 1.5];
        let regions = (0..12)
            .map(|i| RegionGenerator {
                name: REGION_NAMES[i].to_string(),
                l0: l0[i],
                l_asym: l_asym[i],
                l_g: 0.134,
                a0: a0[i],
                ga0: 0.076,
                dela: 0.005,
                sigma0: sigma0[i],
                gsigma0: -0.0152,
                dsigma: -0.001,
                e_land0: e_land0[i],
                e_land_decline: 0.115,
            })
            .collect();
        GeneratorConfig { regions, f_ex0: 0.5, f_ex1: 1.0, f_ex_ramp: 16 }
    }
}

/// Runs the growth recursions over `0..=horizon.t_final`.
pub fn generate(gen: &GeneratorConfig, horizon: &HorizonConfig) -> Result<ExogenousPaths, ParamsError> {
    gen.validate()?;
    horizon.validate()?;
    let steps = horizon.t_final + 1;
    let dt = horizon.delta_years as f64;

    let mut paths = ExogenousPaths {
        names: gen.regions.iter().map(|r| r.name.clone()).collect(),
        l: Vec::new(),
        a: Vec::new(),
        sigma: Vec::new(),
        e_land: Vec::new(),
        f_ex: Vec::new(),
    };

    for r in &gen.regions {
        let mut l = Vec::with_capacity(steps);
        let mut a = Vec::with_capacity(steps);
        let mut sigma = Vec::with_capacity(steps);
        let mut e_land = Vec::with_capacity(steps);
        let (mut lv, mut av, mut sv) = (r.l0, r.a0, r.sigma0);
        let mut gsig = r.gsigma0;
        for t in 0..steps {
            l.push(lv);
            a.push(av);
            sigma.push(sv);
            e_land.push(r.e_land0 * (1.0 - r.e_land_decline).powi(t as i32));
            lv *= (r.l_asym / lv).powf(r.l_g);
            let ga = r.ga0 * (-r.dela * dt * t as f64).exp();
            av /= 1.0 - ga;
            sv *= (gsig * dt).exp();
            gsig *= (1.0 + r.dsigma).powf(dt);
        }
        paths.l.push(l);
        paths.a.push(a);
        paths.sigma.push(sigma);
        paths.e_land.push(e_land);
    }

    for t in 0..steps {
        let frac = (t as f64 / gen.f_ex_ramp as f64).min(1.0);
        paths.f_ex.push(gen.f_ex0 + (gen.f_ex1 - gen.f_ex0) * frac);
    }

    paths.validate().map_err(|e| ParamsError::Invariant(e.to_string()))?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::super::default_params;
    use super::*;

    fn small_horizon(t_final: usize) -> HorizonConfig {
        HorizonConfig { year0: 2020, delta_years: 5, t_final }
    }

    #[test]
    fn default_generator_matches_model_regions() {
        let exo = generate(&GeneratorConfig::default(), &small_horizon(120)).unwrap();
        exo.matches_regions(&default_params()).unwrap();
        assert_eq!(exo.len(), 121);
    }

    #[test]
    fn population_converges_monotonically() {
        let exo = generate(&GeneratorConfig::default(), &small_horizon(120)).unwrap();
        let gen = GeneratorConfig::default();
        for (i, r) in gen.regions.iter().enumerate() {
            let path = &exo.l[i];
            let rising = r.l0 < r.l_asym;
            for t in 0..path.len() - 1 {
                if rising {
                    assert!(path[t + 1] >= path[t] && path[t + 1] <= r.l_asym);
                } else {
                    assert!(path[t + 1] <= path[t] && path[t + 1] >= r.l_asym);
                }
            }
        }
    }

    #[test]
    fn productivity_is_nondecreasing() {
        let exo = generate(&GeneratorConfig::default(), &small_horizon(120)).unwrap();
        for path in &exo.a {
            for t in 0..path.len() - 1 {
                assert!(path[t + 1] >= path[t]);
            }
        }
    }

    #[test]
    fn intensity_is_monotone_under_one_signed_growth() {
        let exo = generate(&GeneratorConfig::default(), &small_horizon(120)).unwrap();
        for path in &exo.sigma {
            for t in 0..path.len() - 1 {
                assert!(path[t + 1] <= path[t]);
            }
        }
    }

    #[test]
    fn zero_growth_rates_give_constant_paths() {
        let mut gen = GeneratorConfig::default().with_first_regions(3);
        for r in &mut gen.regions {
            r.l_g = 0.0;
            r.ga0 = 0.0;
            r.gsigma0 = 0.0;
            r.e_land_decline = 0.0;
        }
        gen.f_ex1 = gen.f_ex0;
        let exo = generate(&gen, &small_horizon(30)).unwrap();
        for i in 0..3 {
            assert!(exo.l[i].iter().all(|&v| v == gen.regions[i].l0));
            assert!(exo.a[i].iter().all(|&v| v == gen.regions[i].a0));
            assert!(exo.sigma[i].iter().all(|&v| v == gen.regions[i].sigma0));
            assert!(exo.e_land[i].iter().all(|&v| v == gen.regions[i].e_land0));
        }
        assert!(exo.f_ex.iter().all(|&v| v == gen.f_ex0));
    }

    #[test]
    fn land_use_decay_closed_form() {
        let gen = GeneratorConfig::default();
        let exo = generate(&gen, &small_horizon(20)).unwrap();
        for (i, r) in gen.regions.iter().enumerate() {
            for t in 0..=20usize {
                let expect = r.e_land0 * (1.0 - r.e_land_decline).powi(t as i32);
                assert!((exo.e_land[i][t] - expect).abs() <= 1e-15 * expect.abs().max(1.0));
            }
        }
    }

    #[test]
    fn nonpositive_initial_level_is_rejected() {
        let mut gen = GeneratorConfig::default();
        gen.regions[4].a0 = 0.0;
        assert!(generate(&gen, &small_horizon(10)).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let horizon = small_horizon(12);
        let exo = generate(&GeneratorConfig::default(), &horizon).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exo.csv");
        exo.write_csv(&path).unwrap();
        let back = ExogenousPaths::load_csv(&path, &horizon).unwrap();
        assert_eq!(exo, back);
    }

    #[test]
    fn load_rejects_missing_step() {
        let horizon = small_horizon(2);
        let text = "t,region,L,A,sigma,e_land\n\
                    0,US,100,10,0.5,0.1\n\
                    1,US,101,11,0.5,0.1\n\
                    \n\
                    t,f_ex\n0,0.5\n1,0.5\n2,0.5\n";
        let err = ExogenousPaths::from_csv_str(text, &horizon).unwrap_err();
        assert!(err.to_string().contains("missing t=2"), "{err}");
    }

    #[test]
    fn load_rejects_bad_column_count() {
        let horizon = small_horizon(0);
        let text = "t,region,L,A,sigma,e_land\n0,US,100,10,0.5\n\nt,f_ex\n0,0.5\n";
        let err = ExogenousPaths::from_csv_str(text, &horizon).unwrap_err();
        match err {
            ExoError::Schema { line, .. } => assert_eq!(line, 2),
            other => panic!("expected schema error, got {other}"),
        }
    }

    #[test]
    fn load_rejects_non_numeric_value() {
        let horizon = small_horizon(0);
        let text = "t,region,L,A,sigma,e_land\n0,US,100,ten,0.5,0.1\n\nt,f_ex\n0,0.5\n";
        let err = ExogenousPaths::from_csv_str(text, &horizon).unwrap_err();
        assert!(err.to_string().contains("column A"), "{err}");
    }

    #[test]
    fn region_count_mismatch_is_reported() {
        let horizon = small_horizon(3);
        let exo = generate(&GeneratorConfig::default().with_first_regions(11), &horizon).unwrap();
        let err = exo.matches_regions(&default_params()).unwrap_err();
        assert!(err.to_string().contains("11 regions, model expects 12"), "{err}");
    }

    #[test]
    fn accessors_clamp_past_the_horizon() {
        let horizon = small_horizon(5);
        let exo = generate(&GeneratorConfig::default(), &horizon).unwrap();
        assert_eq!(exo.l_at(0, 50), exo.l[0][5]);
        assert_eq!(exo.f_ex_at(50), exo.f_ex[5]);
    }
}
