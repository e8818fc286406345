//! Alternating optimization: precoder MM block, then position MM block,
//! repeated until the SCNR gain of a full round drops below the threshold.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::{ArrayGeometry, Environment, Positions, Precoder, Scenario};
use crate::position::{optimize_positions, PositionOptions};
use crate::precoder::{initial_precoder, optimize_precoder, PrecoderOptions, Threshold};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Outer (alternation) threshold on the SCNR gain.
    pub eps_outer: f64,
    /// Precoder MM threshold.
    pub eps_w: f64,
    /// Position re-expansion threshold.
    pub eps_r_outer: f64,
    /// Per-antenna threshold on the surrogate gain.
    pub eps_r_inner: f64,
    /// Measure every gain relative to `max(1, |previous|)` instead of
    /// absolutely.
    pub relative: bool,
    /// Backtracking on the position step size (see
    /// [`PositionOptions::backtracking`]); off means the fixed `delta_n` step.
    pub position_backtracking: bool,
    /// Extrapolate positions after each re-expansion (see
    /// [`PositionOptions::extrapolate`]).
    pub position_extrapolation: bool,
    pub max_outer: usize,
    /// Cap shared by every inner MM loop.
    pub max_inner: usize,
    pub qcqp_tol: f64,
    pub rng_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_outer: 1e-4,
            eps_w: 1e-4,
            eps_r_outer: 1e-4,
            eps_r_inner: 1e-4,
            relative: false,
            position_backtracking: false,
            position_extrapolation: false,
            max_outer: 100,
            max_inner: 200,
            qcqp_tol: 1e-10,
            rng_seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps_outer", self.eps_outer),
            ("eps_w", self.eps_w),
            ("eps_r_outer", self.eps_r_outer),
            ("eps_r_inner", self.eps_r_inner),
            ("qcqp_tol", self.qcqp_tol),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::Config("iteration caps must be at least 1".into()));
        }
        Ok(())
    }

    fn threshold(&self, eps: f64) -> Threshold {
        Threshold { eps, relative: self.relative }
    }

    pub fn precoder_options(&self) -> PrecoderOptions {
        PrecoderOptions {
            threshold: self.threshold(self.eps_w),
            max_iterations: self.max_inner,
            qcqp_tol: self.qcqp_tol,
        }
    }

    pub fn position_options(&self) -> PositionOptions {
        PositionOptions {
            outer: self.threshold(self.eps_r_outer),
            inner: self.threshold(self.eps_r_inner),
            max_outer: self.max_inner,
            max_inner: self.max_inner,
            backtracking: self.position_backtracking,
            extrapolate: self.position_extrapolation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIterations,
    Infeasible,
}

/// State after an outer round (round 0 is the starting point).
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub scnr: f64,
    pub sinr: Vec<f64>,
    pub power: f64,
    pub min_distance: f64,
    pub ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub outer: Vec<OuterRecord>,
    /// SCNR after every accepted MM step of either block, in order.
    pub scnr_steps: Vec<f64>,
    pub precoder_iterations: usize,
    pub position_iterations: usize,
    pub status: Status,
}

impl SolveTrace {
    pub fn final_scnr(&self) -> f64 {
        self.outer.last().map_or(0.0, |r| r.scnr)
    }

    pub fn outer_iterations(&self) -> usize {
        self.outer.len().saturating_sub(1)
    }

    /// True when no recorded SCNR drops by more than `rel * max(1, |scnr|)`.
    pub fn is_monotone(&self, rel: f64) -> bool {
        self.scnr_steps.windows(2).all(|p| p[1] >= p[0] - rel * p[0].abs().max(1.0))
    }

    /// Equality ignoring the wall-clock columns.
    pub fn same_path(&self, other: &Self) -> bool {
        let strip = |t: &Self| {
            let mut t = t.clone();
            t.outer.iter_mut().for_each(|r| r.ms = 0.0);
            t
        };
        strip(self) == strip(other)
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub precoder: Precoder,
    pub positions: Positions,
    pub trace: SolveTrace,
}

/// Runs the alternating optimization from the default start: the
/// strictly feasible initial precoder and the centered planar grid.
pub fn solve(scenario: &Scenario, geom: &ArrayGeometry, config: &SolverConfig) -> Result<Solution> {
    scenario.validate()?;
    let env = Environment::new(scenario, geom);
    let positions = geom.centered_grid();
    match initial_precoder(&env) {
        Ok(w) => solve_from(scenario, geom, &w, &positions, config),
        Err(Error::Infeasible(_)) => Ok(infeasible(&env, positions)),
        Err(e) => Err(e),
    }
}

/// Runs the alternating optimization from a given feasible start.
pub fn solve_from(
    scenario: &Scenario,
    geom: &ArrayGeometry,
    w0: &Precoder,
    pos0: &Positions,
    config: &SolverConfig,
) -> Result<Solution> {
    config.validate()?;
    scenario.validate()?;
    let env = Environment::new(scenario, geom);
    let start = Instant::now();
    let mut w = w0.clone();
    let mut positions = pos0.clone();
    let mut current = env.scnr(w.matrix(), &positions);
    let mut trace = SolveTrace {
        outer: vec![record(&env, &w, &positions, current, &start)],
        scnr_steps: vec![current],
        precoder_iterations: 0,
        position_iterations: 0,
        status: Status::MaxIterations,
    };
    let outer = config.threshold(config.eps_outer);
    let (p_opts, r_opts) = (config.precoder_options(), config.position_options());
    for _ in 0..config.max_outer {
        let (w_next, w_trace) = match optimize_precoder(&w, &env, &positions, &p_opts) {
            Ok(r) => r,
            Err(Error::Infeasible(_)) => {
                trace.status = Status::Infeasible;
                break;
            }
            Err(e) => return Err(e),
        };
        trace.precoder_iterations += w_trace.iterations;
        trace.scnr_steps.extend_from_slice(&w_trace.scnr[1..]);
        w = w_next;
        let (pos_next, r_trace) = optimize_positions(w.matrix(), &positions, &env, &r_opts)?;
        trace.position_iterations += r_trace.outer_iterations;
        trace.scnr_steps.extend_from_slice(&r_trace.scnr[1..]);
        positions = pos_next;
        let value = env.scnr(w.matrix(), &positions);
        let done = outer.reached(current, value);
        current = value;
        trace.outer.push(record(&env, &w, &positions, current, &start));
        if done {
            trace.status = Status::Converged;
            break;
        }
    }
    Ok(Solution {
        precoder: w,
        positions,
        trace,
    })
}

fn record(env: &Environment, w: &Precoder, positions: &Positions, scnr: f64, start: &Instant) -> OuterRecord {
    OuterRecord {
        scnr,
        sinr: env.sinrs(w.matrix()),
        power: w.power(),
        min_distance: positions.min_pairwise_distance(),
        ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

fn infeasible(env: &Environment, positions: Positions) -> Solution {
    Solution {
        precoder: Precoder::zeros(env.tx_count(), env.streams()),
        positions,
        trace: SolveTrace {
            outer: Vec::new(),
            scnr_steps: Vec::new(),
            precoder_iterations: 0,
            position_iterations: 0,
            status: Status::Infeasible,
        },
    }
}

/// Residuals of every constraint; each is `<= 0` when satisfied.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    /// `||W||_F^2 - P_0`.
    pub power: f64,
    /// `gamma_k - SINR_k`.
    pub sinr: Vec<f64>,
    /// `D - |r_n - r_l|` for every pair `n < l`.
    pub distance: Vec<f64>,
    /// Largest distance outside the region.
    pub region: f64,
}

impl FeasibilityReport {
    /// Power within `P_0 (1 + rel)`, SINR within `gamma (1 - rel)`, spacing
    /// within `D (1 - dist_rel)` and region violation at most `region_tol`.
    pub fn satisfied(&self, scenario: &Scenario, geom: &ArrayGeometry, rel: f64, dist_rel: f64, region_tol: f64) -> bool {
        self.power <= scenario.power_budget * rel
            && self.sinr.iter().zip(&scenario.users).all(|(r, u)| *r <= u.sinr_target * rel)
            && self.distance.iter().all(|r| *r <= geom.min_distance() * dist_rel)
            && self.region <= region_tol
    }
}

pub fn check_constraints(w: &Precoder, positions: &Positions, scenario: &Scenario, geom: &ArrayGeometry) -> FeasibilityReport {
    let env = Environment::new(scenario, geom);
    let pts = positions.points();
    let mut distance = Vec::new();
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            distance.push(geom.min_distance() - (a - b).norm());
        }
    }
    FeasibilityReport {
        power: w.power() - scenario.power_budget,
        sinr: scenario
            .users
            .iter()
            .enumerate()
            .map(|(k, u)| u.sinr_target - env.sinr(k, w.matrix()))
            .collect(),
        distance,
        region: positions.region_violation(geom.region_side()),
    }
}
