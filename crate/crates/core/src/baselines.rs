//! Comparison schemes. All share the precoder optimizer and differ only in
//! how the receive antennas are placed:
//!
//! * FPA: fixed planar grid at spacing `D`, centered in the region;
//! * RULA: uniform linear array through the region center, rotated to the
//!   best of 50 angles `j pi / 50`, with `W` re-optimized per angle;
//! * APS: antennas restricted to the lattice `{0, D, 2D, ...}^2`, moved one
//!   at a time to the best free node, alternating with `W` re-optimization.

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArrayGeometry, Environment, Positions, Precoder, Scenario};
use crate::precoder::{initial_precoder, optimize_precoder};
use crate::solver::SolverConfig;

/// Number of candidate RULA rotations.
pub const RULA_ANGLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Fas,
    Aps,
    Rula,
    Fpa,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Fas, Scheme::Aps, Scheme::Rula, Scheme::Fpa];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Fas => "fas",
            Scheme::Aps => "aps",
            Scheme::Rula => "rula",
            Scheme::Fpa => "fpa",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub scheme: Scheme,
    pub positions: Positions,
    pub precoder: Precoder,
    pub scnr: f64,
    /// Precoder MM iterations (summed over all candidates evaluated).
    pub iterations: usize,
    pub converged: bool,
    pub ms: f64,
}

/// Fixed planar grid.
pub fn run_fpa(scenario: &Scenario, geom: &ArrayGeometry, config: &SolverConfig) -> Result<BaselineResult> {
    let start = Instant::now();
    scenario.validate()?;
    let env = Environment::new(scenario, geom);
    let w0 = initial_precoder(&env)?;
    let positions = geom.centered_grid();
    let (w, trace) = optimize_precoder(&w0, &env, &positions, &config.precoder_options())?;
    Ok(BaselineResult {
        scheme: Scheme::Fpa,
        scnr: env.scnr(w.matrix(), &positions),
        positions,
        precoder: w,
        iterations: trace.iterations,
        converged: trace.converged,
        ms: elapsed_ms(&start),
    })
}

/// Linear array through the region center at angle `angle`.
pub fn rula_positions(geom: &ArrayGeometry, angle: f64) -> Positions {
    let n = geom.rx_count();
    let c = geom.region_side() / 2.0;
    let dir = Vector2::new(angle.cos(), angle.sin());
    Positions::new(
        (0..n)
            .map(|i| Vector2::new(c, c) + dir * ((i as f64 - (n - 1) as f64 / 2.0) * geom.min_distance()))
            .collect(),
    )
}

/// Rotatable linear array. Angles whose array leaves the region are skipped.
pub fn run_rula(scenario: &Scenario, geom: &ArrayGeometry, config: &SolverConfig) -> Result<BaselineResult> {
    let start = Instant::now();
    scenario.validate()?;
    let env = Environment::new(scenario, geom);
    let w0 = initial_precoder(&env)?;
    let opts = config.precoder_options();
    let candidates: Vec<Positions> = (0..RULA_ANGLES)
        .map(|j| rula_positions(geom, j as f64 * PI / RULA_ANGLES as f64))
        .filter(|p| p.feasible(geom))
        .collect();
    if candidates.is_empty() {
        return Err(Error::NoFeasibleAngle);
    }
    let results = candidates
        .par_iter()
        .map(|pos| optimize_precoder(&w0, &env, pos, &opts))
        .collect::<Result<Vec<_>>>()?;
    let iterations = results.iter().map(|(_, t)| t.iterations).sum();
    let converged = results.iter().all(|(_, t)| t.converged);
    let best = argmax(results.iter().map(|(_, t)| *t.scnr.last().unwrap_or(&0.0)));
    let (w, trace) = results.into_iter().nth(best).expect("non-empty");
    Ok(BaselineResult {
        scheme: Scheme::Rula,
        positions: candidates[best].clone(),
        precoder: w,
        scnr: *trace.scnr.last().unwrap_or(&0.0),
        iterations,
        converged,
        ms: elapsed_ms(&start),
    })
}

/// Lattice `{0, D, ..., gD}^2` with `g = floor(A / D)`.
pub fn aps_nodes(geom: &ArrayGeometry) -> Vec<Vector2<f64>> {
    let d = geom.min_distance();
    let g = (geom.region_side() / d * (1.0 + 1e-12)).floor() as usize;
    (0..=g)
        .flat_map(|i| (0..=g).map(move |j| Vector2::new(i as f64 * d, j as f64 * d)))
        .collect()
}

/// The centered grid translated onto the lattice.
pub fn aps_initial_positions(geom: &ArrayGeometry) -> Positions {
    let grid = geom.centered_grid();
    let d = geom.min_distance();
    let origin = grid.get(0);
    let snapped = Vector2::new((origin.x / d + 1e-9).floor() * d, (origin.y / d + 1e-9).floor() * d);
    let shift = snapped - origin;
    Positions::new(grid.points().iter().map(|p| p + shift).collect())
}

/// Alternating position selection on the lattice.
pub fn run_aps(scenario: &Scenario, geom: &ArrayGeometry, config: &SolverConfig) -> Result<BaselineResult> {
    let start = Instant::now();
    scenario.validate()?;
    let env = Environment::new(scenario, geom);
    let opts = config.precoder_options();
    let nodes = aps_nodes(geom);
    let mut positions = aps_initial_positions(geom);
    let w0 = initial_precoder(&env)?;
    let (mut w, trace) = optimize_precoder(&w0, &env, &positions, &opts)?;
    let mut iterations = trace.iterations;
    let mut converged = false;
    let mut current = env.scnr(w.matrix(), &positions);
    let threshold = crate::precoder::Threshold {
        eps: config.eps_outer,
        relative: config.relative,
    };
    for _ in 0..config.max_outer {
        for n in 0..positions.len() {
            select_node(n, &nodes, &env, &w, &mut positions);
        }
        let (w_next, trace) = optimize_precoder(&w, &env, &positions, &opts)?;
        iterations += trace.iterations;
        w = w_next;
        let value = env.scnr(w.matrix(), &positions);
        let done = threshold.reached(current, value);
        current = value.max(current);
        if done {
            converged = true;
            break;
        }
    }
    Ok(BaselineResult {
        scheme: Scheme::Aps,
        scnr: env.scnr(w.matrix(), &positions),
        positions,
        precoder: w,
        iterations,
        converged,
        ms: elapsed_ms(&start),
    })
}

/// Moves antenna `n` to the free node with the highest SCNR. The current
/// node wins ties, other ties go to the lowest node index.
fn select_node(n: usize, nodes: &[Vector2<f64>], env: &Environment, w: &Precoder, positions: &mut Positions) {
    let d = env.geometry.min_distance() * (1.0 - 1e-9);
    let scores: Vec<f64> = nodes
        .par_iter()
        .map(|node| {
            let free = positions
                .points()
                .iter()
                .enumerate()
                .all(|(l, r)| l == n || (node - r).norm() >= d);
            if !free {
                return f64::NEG_INFINITY;
            }
            let mut trial = positions.clone();
            trial.set(n, *node);
            env.scnr(w.matrix(), &trial)
        })
        .collect();
    let best = argmax(scores.iter().copied());
    if scores[best] > env.scnr(w.matrix(), positions) {
        positions.set(n, nodes[best]);
    }
}

/// Index of the largest value, lowest index on ties; NaN never wins.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn elapsed_ms(start: &Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}
