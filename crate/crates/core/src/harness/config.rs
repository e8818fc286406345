//! TOML experiment configuration.
//!
//! ```toml
//! schema_version = 1
//!
//! [geometry]
//! tx_x = 8
//! tx_y = 8
//! rx_count = 4
//! wavelength = 0.015                # m
//! tx_spacing_wavelengths = 0.5      # optional, default 0.5
//! min_distance_wavelengths = 0.5    # optional, default 0.5
//! region_wavelengths = [1, 2, 3, 4] # A / lambda
//!
//! [population]
//! users = 4
//! paths = 20
//! clutter = 9
//! sinr_target = [1.0]               # linear
//! power_budget = [1.0]              # W
//! noise_dbm = -105                  # user noise
//! radar_noise_dbm = -105
//! angle_max = 1.5707963267948966    # optional, angles ~ U[0, angle_max]
//! coefficients = "complex"          # optional: "complex" (CN(0,1)) or "real" (N(0,1))
//!
//! [run]
//! sweep = "region"                  # region | power | gamma
//! trials = 50
//! seed = 1
//! schemes = ["fas", "aps", "rula", "fpa"]
//! output = "results.csv"            # optional
//! threads = 0                       # optional, 0 = one per core
//!
//! [solver]                          # optional, defaults shown
//! eps = 1e-4
//! relative = false
//! backtracking = false               # adaptive position step size
//! extrapolate = false                # line search along each re-expansion
//! max_outer = 100
//! max_inner = 200
//! qcqp_tol = 1e-10
//! ```
//!
//! Only the list named by `run.sweep` may hold more than one value.
//! `solver.eps_w`, `solver.eps_r_outer` and `solver.eps_r_inner` override
//! `solver.eps` for the individual loops.

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::baselines::Scheme;
use crate::error::{Error, Result};
use crate::model::ArrayGeometry;
use crate::solver::SolverConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub geometry: GeometryConfig,
    pub population: PopulationConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub solver: SolverSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub tx_x: usize,
    pub tx_y: usize,
    pub rx_count: usize,
    pub wavelength: f64,
    #[serde(default = "half")]
    pub tx_spacing_wavelengths: f64,
    #[serde(default = "half")]
    pub min_distance_wavelengths: f64,
    pub region_wavelengths: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientLaw {
    /// Circularly-symmetric `CN(0, 1)`.
    #[default]
    Complex,
    /// Real `N(0, 1)`.
    Real,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    pub users: usize,
    pub paths: usize,
    pub clutter: usize,
    pub sinr_target: Vec<f64>,
    pub power_budget: Vec<f64>,
    pub noise_dbm: f64,
    pub radar_noise_dbm: f64,
    #[serde(default = "quarter_turn")]
    pub angle_max: f64,
    #[serde(default)]
    pub coefficients: CoefficientLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVariable {
    Region,
    Power,
    Gamma,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Region => "region_wavelengths",
            SweepVariable::Power => "power_budget",
            SweepVariable::Gamma => "sinr_target",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub sweep: SweepVariable,
    pub trials: usize,
    pub seed: u64,
    pub schemes: Vec<Scheme>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_eps")]
    pub eps: f64,
    pub eps_w: Option<f64>,
    pub eps_r_outer: Option<f64>,
    pub eps_r_inner: Option<f64>,
    #[serde(default)]
    pub relative: bool,
    #[serde(default)]
    pub backtracking: bool,
    #[serde(default)]
    pub extrapolate: bool,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default = "default_max_inner")]
    pub max_inner: usize,
    #[serde(default = "default_qcqp_tol")]
    pub qcqp_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            eps: d.eps_outer,
            eps_w: None,
            eps_r_outer: None,
            eps_r_inner: None,
            relative: d.relative,
            backtracking: d.position_backtracking,
            extrapolate: d.position_extrapolation,
            max_outer: d.max_outer,
            max_inner: d.max_inner,
            qcqp_tol: d.qcqp_tol,
        }
    }
}

fn half() -> f64 {
    0.5
}
fn quarter_turn() -> f64 {
    FRAC_PI_2
}
fn default_eps() -> f64 {
    SolverConfig::default().eps_outer
}
fn default_max_outer() -> usize {
    SolverConfig::default().max_outer
}
fn default_max_inner() -> usize {
    SolverConfig::default().max_inner
}
fn default_qcqp_tol() -> f64 {
    SolverConfig::default().qcqp_tol
}

/// One point of the sweep: every swept list reduced to a single value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub region_wavelengths: f64,
    pub power_budget: f64,
    pub sinr_target: f64,
    /// Value of the swept variable.
    pub value: f64,
}

/// `10^((dbm - 30) / 10)` watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl ExperimentConfig {
    /// The full-scale setup: 8x8 UPA, N = 4, K = 4, L = 20, I = 9,
    /// lambda = 0.015 m, gamma = 1, -105 dBm noise, D = lambda / 2, eps = 1e-4,
    /// swept over A / lambda in {1, 2, 3, 4}. `P_0 = 1 W`, 50 trials and seed
    /// 1 are repo choices.
    pub fn full_scale() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            geometry: GeometryConfig {
                tx_x: 8,
                tx_y: 8,
                rx_count: 4,
                wavelength: 0.015,
                tx_spacing_wavelengths: 0.5,
                min_distance_wavelengths: 0.5,
                region_wavelengths: vec![1.0, 2.0, 3.0, 4.0],
            },
            population: PopulationConfig {
                users: 4,
                paths: 20,
                clutter: 9,
                sinr_target: vec![1.0],
                power_budget: vec![1.0],
                noise_dbm: -105.0,
                radar_noise_dbm: -105.0,
                angle_max: FRAC_PI_2,
                coefficients: CoefficientLaw::Complex,
            },
            run: RunConfig {
                sweep: SweepVariable::Region,
                trials: 50,
                seed: 1,
                schemes: Scheme::ALL.to_vec(),
                output: None,
                threads: 0,
            },
            solver: SolverSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::Config(format!("{key}: {msg}")));
        if self.schema_version != SCHEMA_VERSION {
            return bad(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            );
        }
        let g = &self.geometry;
        let p = &self.population;
        for (key, v) in [
            ("geometry.wavelength", g.wavelength),
            ("geometry.tx_spacing_wavelengths", g.tx_spacing_wavelengths),
            ("geometry.min_distance_wavelengths", g.min_distance_wavelengths),
            ("population.angle_max", p.angle_max),
            ("solver.eps", self.solver.eps),
            ("solver.qcqp_tol", self.solver.qcqp_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(key, format!("must be positive and finite, got {v}"));
            }
        }
        for (key, v) in [
            ("solver.eps_w", self.solver.eps_w),
            ("solver.eps_r_outer", self.solver.eps_r_outer),
            ("solver.eps_r_inner", self.solver.eps_r_inner),
        ] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return bad(key, format!("must be positive, got {v}"));
                }
            }
        }
        for (key, v) in [
            ("geometry.tx_x", g.tx_x),
            ("geometry.tx_y", g.tx_y),
            ("geometry.rx_count", g.rx_count),
            ("population.paths", p.paths),
            ("run.trials", self.run.trials),
            ("solver.max_outer", self.solver.max_outer),
            ("solver.max_inner", self.solver.max_inner),
        ] {
            if v == 0 {
                return bad(key, "must be at least 1".into());
            }
        }
        if !p.noise_dbm.is_finite() || !p.radar_noise_dbm.is_finite() {
            return bad("population.noise_dbm", "noise levels must be finite".into());
        }
        if self.run.schemes.is_empty() {
            return bad("run.schemes", "list is empty".into());
        }
        let lists = [
            (SweepVariable::Region, "geometry.region_wavelengths", &g.region_wavelengths),
            (SweepVariable::Power, "population.power_budget", &p.power_budget),
            (SweepVariable::Gamma, "population.sinr_target", &p.sinr_target),
        ];
        for (var, key, list) in lists {
            if list.is_empty() {
                return bad(key, "list is empty".into());
            }
            if var != self.run.sweep && list.len() > 1 {
                return bad(key, format!("only the swept list (run.sweep = {:?}) may hold several values", self.run.sweep));
            }
            if let Some(v) = list.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return bad(key, format!("values must be positive and finite, got {v}"));
            }
        }
        for &a in &g.region_wavelengths {
            self.geometry_for(a).map_err(|e| Error::Config(format!("geometry.region_wavelengths: {e}")))?;
        }
        Ok(())
    }

    pub fn geometry_for(&self, region_wavelengths: f64) -> Result<ArrayGeometry> {
        let g = &self.geometry;
        ArrayGeometry::new(
            g.tx_x,
            g.tx_y,
            g.tx_spacing_wavelengths * g.wavelength,
            g.rx_count,
            region_wavelengths * g.wavelength,
            g.min_distance_wavelengths * g.wavelength,
            g.wavelength,
        )
    }

    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let g = &self.geometry;
        let p = &self.population;
        let point = |a: f64, p0: f64, gamma: f64, value: f64| SweepPoint {
            region_wavelengths: a,
            power_budget: p0,
            sinr_target: gamma,
            value,
        };
        let (a, p0, gamma) = (g.region_wavelengths[0], p.power_budget[0], p.sinr_target[0]);
        match self.run.sweep {
            SweepVariable::Region => g.region_wavelengths.iter().map(|&v| point(v, p0, gamma, v)).collect(),
            SweepVariable::Power => p.power_budget.iter().map(|&v| point(a, v, gamma, v)).collect(),
            SweepVariable::Gamma => p.sinr_target.iter().map(|&v| point(a, p0, v, v)).collect(),
        }
    }

    pub fn solver_config(&self, seed: u64) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            eps_outer: s.eps,
            eps_w: s.eps_w.unwrap_or(s.eps),
            eps_r_outer: s.eps_r_outer.unwrap_or(s.eps),
            eps_r_inner: s.eps_r_inner.unwrap_or(s.eps),
            relative: s.relative,
            position_backtracking: s.backtracking,
            position_extrapolation: s.extrapolate,
            max_outer: s.max_outer,
            max_inner: s.max_inner,
            qcqp_tol: s.qcqp_tol,
            rng_seed: seed,
        }
    }
}
