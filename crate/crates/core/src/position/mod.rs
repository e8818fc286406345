//! Receive-position block of the alternating optimization.
//!
//! With `W` fixed, the SCNR is minorized at the expansion positions `r_v` by
//!
//! ```text
//! |alpha_0|^2 [ 2 Re(b a_r(theta_0, phi_0, r)) - tr(E J(r)) ]
//! b = a_t0^T W W^H A_v^H J_v^-1,   E = J_v^-1 A_v W W^H A_v^H J_v^-1
//! ```
//!
//! which separates over antennas. The part that depends on `r_n` alone is
//!
//! ```text
//! q(r_n) = 2|b_n| cos(<b_n + k rho_0(r_n))
//!        - sum_i |alpha_i|^2 p_i (E_nn + 2 sum_{l != n} |E_ln| cos(<E_ln + k (rho_i(r_n) - rho_i(r_l))))
//! ```
//!
//! with `k = 2 pi / lambda`. Each antenna is moved by maximizing the proximal
//! minorant `q(r_c) + grad^T (r - r_c) - delta/2 |r - r_c|^2`; when the
//! closed-form maximizer leaves the feasible set, it is projected onto the
//! region intersected with the linearized minimum-distance half-planes.

pub mod qp2d;

use std::f64::consts::PI;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::model::{
    hermitize, path_difference, path_difference_gradient, ArrayGeometry, CMatrix, CVector,
    Environment, Positions,
};
use crate::precoder::Threshold;
use qp2d::{box_constraints, HalfPlane};

/// `delta` below this is treated as zero.
const DELTA_FLOOR: f64 = 1e-300;
/// Backtracking tries `delta * BACKTRACK_START` first and multiplies by
/// four until the step is accepted.
const BACKTRACK_START: f64 = 1.0 / 1048576.0;
/// Doublings tried by [`extrapolate`] after a re-expansion.
const MAX_EXTRAPOLATION: usize = 40;

/// Expansion of the position surrogate at `(W, r_v)`.
#[derive(Debug, Clone)]
pub struct QCoefficients {
    /// Entries `b_n` of the row vector `b`.
    pub b: CVector,
    /// `p_i = ||W^T a_t(theta_i, phi_i)||^2`.
    pub p: Vec<f64>,
    pub e: CMatrix,
    pub alpha_sq: Vec<f64>,
    pub expansion: Positions,
    pub target_alpha_sq: f64,
    pub noise_power: f64,
    wavelength: f64,
    target_angles: (f64, f64),
    clutter_angles: Vec<(f64, f64)>,
}

pub fn q_coefficients(env: &Environment, w: &CMatrix, pos_v: &Positions) -> QCoefficients {
    let scenario = env.scenario;
    let a = env.target_matrix(pos_v);
    // y = J^-1 A W; b^T = conj(y W^H a_t0^*), E = y y^H.
    let y = env.covariance_inverse(w, pos_v).solve(&(&a * w));
    let v = &y * (w.adjoint() * env.target_tx.map(|z| z.conj()));
    let b = v.map(|z| z.conj());
    let mut e = &y * y.adjoint();
    hermitize(&mut e);
    QCoefficients {
        b,
        p: env.clutter_illumination(w),
        e,
        alpha_sq: scenario.clutter.iter().map(|c| c.coefficient.norm_sqr()).collect(),
        expansion: pos_v.clone(),
        target_alpha_sq: scenario.target.coefficient.norm_sqr(),
        noise_power: scenario.radar_noise_power,
        wavelength: env.geometry.wavelength(),
        target_angles: (scenario.target.elevation, scenario.target.azimuth),
        clutter_angles: scenario.clutter.iter().map(|c| (c.elevation, c.azimuth)).collect(),
    }
}

impl QCoefficients {
    fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    fn clutter_weight(&self, i: usize) -> f64 {
        self.alpha_sq[i] * self.p[i]
    }

    /// Position surrogate in SCNR units, evaluated at every antenna through
    /// `b`, `p` and `E`.
    pub fn surrogate(&self, positions: &Positions) -> f64 {
        let k = self.wavenumber();
        let (t0, f0) = self.target_angles;
        let mut linear = 0.0;
        for (n, r) in positions.points().iter().enumerate() {
            let phase = self.b[n].arg() + k * path_difference(r, t0, f0);
            linear += 2.0 * self.b[n].norm() * phase.cos();
        }
        let mut penalty = self.noise_power * self.e.trace().re;
        for (i, &(ti, fi)) in self.clutter_angles.iter().enumerate() {
            let rho: Vec<f64> = positions.points().iter().map(|r| path_difference(r, ti, fi)).collect();
            let mut quad = 0.0;
            for n in 0..positions.len() {
                quad += self.e[(n, n)].re;
                for l in 0..n {
                    let e = self.e[(l, n)];
                    quad += 2.0 * e.norm() * (e.arg() + k * (rho[n] - rho[l])).cos();
                }
            }
            penalty += self.clutter_weight(i) * quad;
        }
        self.target_alpha_sq * (linear - penalty)
    }
}

/// Position surrogate in its trace form,
/// `|alpha_0|^2 [2 Re tr(W^H A_v^H J_v^-1 A(r) W) - tr(J_v^-1 A_v W W^H A_v^H J_v^-1 J(r))]`.
pub fn position_surrogate_trace(env: &Environment, w: &CMatrix, pos_v: &Positions, positions: &Positions) -> f64 {
    let alpha_sq = env.scenario.target.coefficient.norm_sqr();
    let y = env.covariance_inverse(w, pos_v).solve(&(env.target_matrix(pos_v) * w));
    let aw = env.target_matrix(positions) * w;
    let linear = 2.0 * (y.adjoint() * aw).trace().re;
    let e = &y * y.adjoint();
    let penalty = (e * env.clutter_plus_noise(w, positions)).trace().re;
    alpha_sq * (linear - penalty)
}

/// Per-antenna objective `q(r_n)` with the other antennas held at
/// `others` (entry `n` of `others` is ignored).
pub fn q_single(r: &Vector2<f64>, n: usize, coeffs: &QCoefficients, others: &Positions) -> f64 {
    let k = coeffs.wavenumber();
    let (t0, f0) = coeffs.target_angles;
    let b = coeffs.b[n];
    let mut q = 2.0 * b.norm() * (b.arg() + k * path_difference(r, t0, f0)).cos();
    for (i, &(ti, fi)) in coeffs.clutter_angles.iter().enumerate() {
        let rho_n = path_difference(r, ti, fi);
        let mut sum = coeffs.e[(n, n)].re;
        for (l, rl) in others.points().iter().enumerate() {
            if l != n {
                let e = coeffs.e[(l, n)];
                sum += 2.0 * e.norm() * (e.arg() + k * (rho_n - path_difference(rl, ti, fi))).cos();
            }
        }
        q -= coeffs.clutter_weight(i) * sum;
    }
    q
}

pub fn q_gradient(r: &Vector2<f64>, n: usize, coeffs: &QCoefficients, others: &Positions) -> Vector2<f64> {
    let k = coeffs.wavenumber();
    let (t0, f0) = coeffs.target_angles;
    let b = coeffs.b[n];
    let mut g = path_difference_gradient(t0, f0) * (-2.0 * k * b.norm() * (b.arg() + k * path_difference(r, t0, f0)).sin());
    for (i, &(ti, fi)) in coeffs.clutter_angles.iter().enumerate() {
        let rho_n = path_difference(r, ti, fi);
        let mut s = 0.0;
        for (l, rl) in others.points().iter().enumerate() {
            if l != n {
                let e = coeffs.e[(l, n)];
                s += e.norm() * (e.arg() + k * (rho_n - path_difference(rl, ti, fi))).sin();
            }
        }
        g += path_difference_gradient(ti, fi) * (2.0 * k * coeffs.clutter_weight(i) * s);
    }
    g
}

/// Curvature bound `(16 pi^2 / lambda^2) (|b_n| + sum_i |alpha_i|^2 p_i sum_{l != n} |E_ln|)`.
pub fn lipschitz_delta(n: usize, coeffs: &QCoefficients) -> f64 {
    let off_diag: f64 = (0..coeffs.e.nrows()).filter(|&l| l != n).map(|l| coeffs.e[(l, n)].norm()).sum();
    let clutter: f64 = (0..coeffs.p.len()).map(|i| coeffs.clutter_weight(i)).sum::<f64>() * off_diag;
    16.0 * PI * PI / (coeffs.wavelength * coeffs.wavelength) * (coeffs.b[n].norm() + clutter)
}

/// Maximizer of the proximal minorant, `r_c + grad / delta`.
pub fn unconstrained_update(r_c: &Vector2<f64>, grad: &Vector2<f64>, delta: f64) -> Result<Vector2<f64>> {
    if !(delta > DELTA_FLOOR) {
        return Err(Error::DegenerateDelta(delta));
    }
    Ok(r_c + grad / delta)
}

/// Maximizer of the proximal minorant over the region and the half-planes
/// `u_l^T (r - r_l) >= D`, `u_l = (r_c - r_l) / |r_c - r_l|`, which lie inside
/// the true minimum-distance constraints.
pub fn constrained_update(
    r_c: &Vector2<f64>,
    grad: &Vector2<f64>,
    delta: f64,
    n: usize,
    others: &Positions,
    geom: &ArrayGeometry,
) -> Result<Vector2<f64>> {
    let z = unconstrained_update(r_c, grad, delta)?;
    let mut planes = box_constraints(geom.region_side()).to_vec();
    for (l, rl) in others.points().iter().enumerate() {
        if l == n {
            continue;
        }
        let diff = r_c - rl;
        let dist = diff.norm();
        if dist == 0.0 {
            return Err(Error::Infeasible(format!("antennas {n} and {l} coincide")));
        }
        let u = diff / dist;
        planes.push(HalfPlane::new(u, geom.min_distance() + u.dot(rl)));
    }
    let tol = 1e-12 * geom.region_side().max(geom.min_distance());
    let side = geom.region_side();
    qp2d::project(&z, &planes, tol)
        .map(|r| Vector2::new(r.x.clamp(0.0, side), r.y.clamp(0.0, side)))
        .ok_or_else(|| Error::Infeasible(format!("linearized feasible set of antenna {n} is empty")))
}

/// Region membership and exact minimum distance to the other antennas.
fn point_feasible(r: &Vector2<f64>, n: usize, others: &Positions, geom: &ArrayGeometry) -> bool {
    let side = geom.region_side();
    let d = geom.min_distance();
    (0.0..=side).contains(&r.x)
        && (0.0..=side).contains(&r.y)
        && others.points().iter().enumerate().all(|(l, rl)| l == n || (r - rl).norm() >= d)
}

#[derive(Debug, Clone, Copy)]
pub struct PositionOptions {
    /// Stops the re-expansion loop on the SCNR gain.
    pub outer: Threshold,
    /// Stops each antenna's loop on the surrogate gain (SCNR units).
    pub inner: Threshold,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Try proximal coefficients below `delta_n` first and raise them until
    /// the quadratic model under-estimates `q` at the candidate (it always
    /// does at `delta_n`). Every accepted step still increases `q`.
    pub backtracking: bool,
    /// After each re-expansion, continue along the displacement it produced
    /// while the SCNR rises and the array stays feasible.
    pub extrapolate: bool,
}

impl Default for PositionOptions {
    fn default() -> Self {
        Self {
            outer: Threshold::absolute(1e-4),
            inner: Threshold::absolute(1e-4),
            max_outer: 100,
            max_inner: 200,
            backtracking: false,
            extrapolate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionTrace {
    /// SCNR at the start and after every re-expansion.
    pub scnr: Vec<f64>,
    /// `q` along each antenna's inner loop, one entry per `(v, n)`.
    pub q_steps: Vec<Vec<f64>>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub converged: bool,
}

/// Moves antenna `n` by proximal MM steps on `q`, returning the `q` values
/// visited. Steps that would lower `q` (round-off only) are refused. `scnr`
/// is the SCNR at the expansion point, the scale of relative thresholds.
fn move_antenna(
    n: usize,
    coeffs: &QCoefficients,
    positions: &mut Positions,
    geom: &ArrayGeometry,
    opts: &PositionOptions,
    scnr: f64,
) -> Result<Vec<f64>> {
    let delta = lipschitz_delta(n, coeffs);
    let mut r = positions.get(n);
    let mut q = q_single(&r, n, coeffs, positions);
    let mut values = vec![q];
    if !(delta > DELTA_FLOOR) {
        return Ok(values);
    }
    for _ in 0..opts.max_inner {
        let grad = q_gradient(&r, n, coeffs, positions);
        let mut trial = if opts.backtracking { delta * BACKTRACK_START } else { delta };
        let (next, q_next) = loop {
            let mut next = unconstrained_update(&r, &grad, trial)?;
            if !point_feasible(&next, n, positions, geom) {
                next = constrained_update(&r, &grad, trial, n, positions, geom)?;
            }
            let q_next = q_single(&next, n, coeffs, positions);
            let d = next - r;
            let minorant = q + grad.dot(&d) - 0.5 * trial * d.norm_squared();
            if trial >= delta || q_next >= minorant {
                break (next, q_next);
            }
            trial = (trial * 4.0).min(delta);
        };
        if !(q_next >= q) {
            break;
        }
        // q carries large position-independent offsets, so relative gains
        // are measured against the SCNR at the expansion point.
        let done = opts.inner.reached_gain(coeffs.target_alpha_sq * (q_next - q), scnr);
        r = next;
        q = q_next;
        positions.set(n, r);
        values.push(q);
        if done {
            break;
        }
    }
    Ok(values)
}

/// Moves every antenna by `2^j` times its displacement from `from` to `to`
/// (cumulatively), doubling while the SCNR increases. Antennas updated one at
/// a time cannot translate a pair held at spacing `D` in one sweep; this
/// covers that ground in a few SCNR evaluations. Spacing is checked with a
/// `1e-12` slack so the next linearization starts feasible.
fn extrapolate(w: &CMatrix, env: &Environment, from: &Positions, to: Positions, value: f64) -> (Positions, f64) {
    let geom = env.geometry;
    let step: Vec<Vector2<f64>> = to.points().iter().zip(from.points()).map(|(a, b)| a - b).collect();
    let mut best = (to, value);
    let mut scale = 1.0;
    for _ in 0..MAX_EXTRAPOLATION {
        let trial = Positions::new(best.0.points().iter().zip(&step).map(|(p, d)| p + d * scale).collect());
        if trial.region_violation(geom.region_side()) > 0.0
            || trial.min_pairwise_distance() < geom.min_distance() * (1.0 - 1e-12)
        {
            break;
        }
        let v = env.scnr(w, &trial);
        if !(v > best.1) {
            break;
        }
        best = (trial, v);
        scale *= 2.0;
    }
    best
}

/// Alternates antenna-wise MM sweeps (`n = 0..N` in order) with
/// re-expansion of the surrogate until the SCNR gain drops below
/// `opts.outer`. The SCNR sequence is non-decreasing by construction.
pub fn optimize_positions(
    w: &CMatrix,
    pos_init: &Positions,
    env: &Environment,
    opts: &PositionOptions,
) -> Result<(Positions, PositionTrace)> {
    let geom = env.geometry;
    if pos_init.len() != geom.rx_count() {
        return Err(Error::InvalidGeometry(format!(
            "{} positions for {} receive antennas",
            pos_init.len(),
            geom.rx_count()
        )));
    }
    if !pos_init.feasible(geom) {
        return Err(Error::Infeasible("initial positions violate the region or minimum distance".into()));
    }
    let mut positions = pos_init.clone();
    let mut current = env.scnr(w, &positions);
    let mut trace = PositionTrace {
        scnr: vec![current],
        q_steps: Vec::new(),
        outer_iterations: 0,
        inner_iterations: 0,
        converged: false,
    };
    while trace.outer_iterations < opts.max_outer {
        let coeffs = q_coefficients(env, w, &positions);
        let mut candidate = positions.clone();
        for n in 0..candidate.len() {
            let values = move_antenna(n, &coeffs, &mut candidate, geom, opts, current)?;
            trace.inner_iterations += values.len() - 1;
            trace.q_steps.push(values);
        }
        trace.outer_iterations += 1;
        let mut value = env.scnr(w, &candidate);
        if value < current {
            trace.converged = true;
            break;
        }
        if opts.extrapolate {
            (candidate, value) = extrapolate(w, env, &positions, candidate, value);
        }
        let done = opts.outer.reached(current, value);
        positions = candidate;
        current = value;
        trace.scnr.push(current);
        if done {
            trace.converged = true;
            break;
        }
    }
    Ok((positions, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Scatterer, Scenario, C64};

    fn scenario(clutter: Vec<Scatterer>, noise: f64) -> Scenario {
        Scenario {
            users: vec![],
            target: Scatterer {
                coefficient: C64::new(1.0, 0.0),
                elevation: 0.7,
                azimuth: 0.4,
            },
            clutter,
            radar_noise_power: noise,
            power_budget: 1.0,
        }
    }

    fn geom(n: usize, side: f64) -> ArrayGeometry {
        ArrayGeometry::new(2, 2, 0.5, n, side, 0.5, 1.0).unwrap()
    }

    fn coeffs_with(b: &[C64], lambda: f64) -> QCoefficients {
        let n = b.len();
        QCoefficients {
            b: CVector::from_column_slice(b),
            p: vec![],
            e: CMatrix::zeros(n, n),
            alpha_sq: vec![],
            expansion: Positions::new(vec![Vector2::zeros(); n]),
            target_alpha_sq: 1.0,
            noise_power: 1.0,
            wavelength: lambda,
            target_angles: (0.7, 0.4),
            clutter_angles: vec![],
        }
    }

    #[test]
    fn zero_precoder_gives_zero_coefficients() {
        let s = scenario(vec![Scatterer { coefficient: C64::new(0.5, 0.1), elevation: 0.3, azimuth: 1.0 }], 0.1);
        let g = geom(4, 3.0);
        let env = Environment::new(&s, &g);
        let c = q_coefficients(&env, &CMatrix::zeros(4, 1), &g.centered_grid());
        assert!(c.b.iter().all(|z| z.norm() == 0.0));
        assert_eq!(c.p, vec![0.0]);
        assert!(c.e.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn clutter_free_coefficients() {
        let s = scenario(vec![], 0.5);
        let g = geom(4, 3.0);
        let env = Environment::new(&s, &g);
        let pos = g.centered_grid();
        let w = CMatrix::from_fn(4, 2, |i, j| C64::new(0.1 * i as f64 + 0.2, 0.3 * j as f64 - 0.1));
        let c = q_coefficients(&env, &w, &pos);
        assert!(c.p.is_empty());
        let a = env.target_matrix(&pos);
        let expected = &a * &w * w.adjoint() * a.adjoint() / C64::new(0.25, 0.0);
        assert!((&c.e - expected).norm() < 1e-12 * c.e.norm());
    }

    #[test]
    fn scalar_coefficients() {
        // M = N = 1: J = sigma^2 + |alpha_1|^2 |w|^2, A = e^{j k rho_0}.
        let s = scenario(vec![Scatterer { coefficient: C64::new(0.0, 2.0), elevation: 0.3, azimuth: 1.0 }], 0.5);
        let g = ArrayGeometry::new(1, 1, 0.5, 1, 1.0, 0.5, 1.0).unwrap();
        let env = Environment::new(&s, &g);
        let pos = Positions::from_xy(&[(0.3, 0.6)]);
        let w = CMatrix::from_element(1, 1, C64::new(0.6, -0.8));
        let c = q_coefficients(&env, &w, &pos);
        let j = 0.5 + 4.0 * 1.0;
        let a = env.target_matrix(&pos)[(0, 0)];
        assert!((c.b[0] - a.conj() / j).norm() < 1e-14);
        assert!((c.e[(0, 0)].re - 1.0 / (j * j)).abs() < 1e-14);
        assert_eq!(c.p, vec![1.0]);
    }

    #[test]
    fn single_cosine_objective() {
        let c = coeffs_with(&[C64::new(1.0, 0.0)], 1.0);
        let pos = Positions::from_xy(&[(0.0, 0.0)]);
        assert!((q_single(&Vector2::zeros(), 0, &c, &pos) - 2.0).abs() < 1e-15);
        assert!(q_gradient(&Vector2::zeros(), 0, &c, &pos).norm() < 1e-12);
        let zero = coeffs_with(&[C64::new(0.0, 0.0)], 1.0);
        let r = Vector2::new(0.3, 0.8);
        assert_eq!(q_single(&r, 0, &zero, &pos), 0.0);
        assert_eq!(q_gradient(&r, 0, &zero, &pos), Vector2::zeros());
        assert_eq!(lipschitz_delta(0, &zero), 0.0);
    }

    #[test]
    fn delta_formula() {
        let c = coeffs_with(&[C64::new(0.0, 1.0)], 0.015);
        let d = lipschitz_delta(0, &c);
        assert!((d - 7.0184e5).abs() / 7.0184e5 < 1e-4, "{d}");
    }

    #[test]
    fn unconstrained_update_examples() {
        let r = Vector2::new(0.2, 0.4);
        assert_eq!(unconstrained_update(&r, &Vector2::zeros(), 3.0).unwrap(), r);
        assert_eq!(unconstrained_update(&r, &Vector2::new(3.0, 0.0), 3.0).unwrap(), r + Vector2::new(1.0, 0.0));
        assert!(matches!(unconstrained_update(&r, &Vector2::zeros(), 0.0), Err(Error::DegenerateDelta(_))));
    }

    #[test]
    fn constrained_update_examples() {
        let g = geom(2, 2.0);
        let others = Positions::from_xy(&[(1.0, 1.0), (1.0, 0.5)]);
        // Antenna 0 at (1, 1), antenna 1 at (1, 0.5): the linearized
        // constraint for antenna 0 is y >= 1. Gradient pointing down is
        // stopped at the half-plane.
        let r_c = others.get(0);
        let r = constrained_update(&r_c, &Vector2::new(0.3, -1.0), 1.0, 0, &others, &g).unwrap();
        assert!((r - Vector2::new(1.3, 1.0)).norm() < 1e-12, "{r}");
        // Already feasible optimum is returned unchanged.
        let r = constrained_update(&r_c, &Vector2::new(0.2, 0.3), 1.0, 0, &others, &g).unwrap();
        assert!((r - Vector2::new(1.2, 1.3)).norm() < 1e-15);
        assert_eq!(constrained_update(&r_c, &Vector2::zeros(), 1.0, 0, &others, &g).unwrap(), r_c);
        // Half-plane and box edge together: the corner (2, 1).
        let r = constrained_update(&r_c, &Vector2::new(5.0, -5.0), 1.0, 0, &others, &g).unwrap();
        assert!((r - Vector2::new(2.0, 1.0)).norm() < 1e-12, "{r}");
    }

    #[test]
    fn surrogate_forms_agree_and_touch() {
        let clutter = vec![
            Scatterer { coefficient: C64::new(0.5, 0.1), elevation: 0.3, azimuth: 1.0 },
            Scatterer { coefficient: C64::new(-0.2, 0.7), elevation: 1.2, azimuth: 0.2 },
        ];
        let s = scenario(clutter, 0.3);
        let g = geom(3, 3.0);
        let env = Environment::new(&s, &g);
        let pos_v = g.centered_grid();
        let w = CMatrix::from_fn(4, 1, |i, _| C64::new(0.3 + 0.1 * i as f64, -0.2 * i as f64));
        let c = q_coefficients(&env, &w, &pos_v);
        let scnr = env.scnr(&w, &pos_v);
        assert!((c.surrogate(&pos_v) - scnr).abs() < 1e-10 * scnr);
        let moved = Positions::from_xy(&[(0.1, 2.2), (1.7, 0.4), (2.9, 2.9)]);
        let trace = position_surrogate_trace(&env, &w, &pos_v, &moved);
        assert!((c.surrogate(&moved) - trace).abs() < 1e-10 * trace.abs().max(1.0));
        assert!(trace <= env.scnr(&w, &moved) + 1e-10);
    }

    #[test]
    fn single_antenna_aligns_phase() {
        let s = scenario(vec![], 1.0);
        let g = ArrayGeometry::new(2, 2, 0.5, 1, 1.0, 0.5, 1.0).unwrap();
        let env = Environment::new(&s, &g);
        let w = CMatrix::from_element(4, 1, C64::new(0.5, 0.0));
        let pos = g.centered_grid();
        let opts = PositionOptions {
            inner: Threshold::absolute(1e-14),
            outer: Threshold::absolute(1e-14),
            ..Default::default()
        };
        let (out, trace) = optimize_positions(&w, &pos, &env, &opts).unwrap();
        let c = q_coefficients(&env, &w, &out);
        let q = q_single(&out.get(0), 0, &c, &out);
        assert!((q - 2.0 * c.b[0].norm()).abs() < 1e-8 * c.b[0].norm(), "{q} vs {}", 2.0 * c.b[0].norm());
        assert!(trace.scnr.windows(2).all(|p| p[1] >= p[0]));
        assert!(out.feasible(&g));
    }

    #[test]
    fn infinite_threshold_runs_one_pass() {
        let s = scenario(vec![Scatterer { coefficient: C64::new(0.9, 0.0), elevation: 0.3, azimuth: 1.0 }], 0.1);
        let g = geom(4, 3.0);
        let env = Environment::new(&s, &g);
        let w = CMatrix::from_fn(4, 1, |i, _| C64::new(0.2, 0.1 * i as f64));
        let opts = PositionOptions {
            outer: Threshold::absolute(f64::INFINITY),
            ..Default::default()
        };
        let (out, trace) = optimize_positions(&w, &g.centered_grid(), &env, &opts).unwrap();
        assert_eq!(trace.outer_iterations, 1);
        assert!(out.feasible(&g));
        assert!(trace.scnr[1] >= trace.scnr[0]);
    }

    #[test]
    fn backtracking_is_monotone_and_feasible() {
        let clutter = vec![
            Scatterer { coefficient: C64::new(0.8, -0.3), elevation: 0.4, azimuth: 2.1 },
            Scatterer { coefficient: C64::new(0.1, 0.9), elevation: 1.1, azimuth: 0.6 },
        ];
        let s = scenario(clutter, 0.2);
        let g = geom(3, 2.0);
        let env = Environment::new(&s, &g);
        let w = CMatrix::from_fn(4, 1, |i, _| C64::new(0.4 - 0.1 * i as f64, 0.15 * i as f64));
        let pos = g.centered_grid();
        let fixed = PositionOptions {
            max_outer: 5,
            ..Default::default()
        };
        let adaptive = PositionOptions {
            backtracking: true,
            ..fixed
        };
        let extrapolated = PositionOptions {
            extrapolate: true,
            ..adaptive
        };
        let (p_fixed, t_fixed) = optimize_positions(&w, &pos, &env, &fixed).unwrap();
        let (p_adapt, t_adapt) = optimize_positions(&w, &pos, &env, &adaptive).unwrap();
        let (p_extra, t_extra) = optimize_positions(&w, &pos, &env, &extrapolated).unwrap();
        assert!(p_fixed.feasible(&g) && p_adapt.feasible(&g) && p_extra.feasible(&g));
        assert!(t_adapt.scnr.windows(2).all(|p| p[1] >= p[0]));
        assert!(t_extra.scnr.windows(2).all(|p| p[1] >= p[0]));
        assert!((env.scnr(&w, &p_extra) - t_extra.scnr.last().unwrap()).abs() <= 1e-12 * t_extra.scnr[0]);
        let (first, last) = (t_fixed.scnr[0], *t_adapt.scnr.last().unwrap());
        assert_eq!(first, t_adapt.scnr[0]);
        assert!(last >= first);
    }

    #[test]
    fn inner_gain_is_relative_to_scnr() {
        let t = Threshold::relative(1e-4);
        assert!(t.reached_gain(5.0, 1e6));
        assert!(!t.reached_gain(500.0, 1e6));
        assert!(!t.reached_gain(2e-4, 0.5));
        assert!(t.reached_gain(f64::NAN, 1.0));
    }
}
