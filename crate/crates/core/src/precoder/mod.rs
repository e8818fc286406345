//! Precoder block of the alternating optimization.
//!
//! With the receive positions fixed, the SCNR `|alpha_0|^2 tr(X^H J^-1 X)`
//! (`X = A W`) is minorized at an expansion point `W_p` by
//!
//! ```text
//! |alpha_0|^2 [ 2 Re tr(W_p^H G_p W) - tr(J_p^-1 A W_p W_p^H A^H J_p^-1 J(W)) ]
//! ```
//!
//! with `G_p = A^H J_p^-1 A`. Because `J(W)` is quadratic in `W`, the bound is
//! a concave quadratic. Each SINR constraint is rewritten as
//! `(1 + 1/gamma_k) |h_k^H w_k|^2 >= sum_j |h_k^H w_j|^2 + sigma_k^2` and its
//! left side is replaced by the tangent minorant at `w_{k,p}`, which turns
//! the subproblem into a convex QCQP solved by [`qcqp`].

mod init;
pub mod qcqp;

pub use init::initial_precoder;

use crate::error::{Error, Result};
use crate::model::{hermitize, real_inner, CMatrix, Environment, Positions, Precoder, C64};
use qcqp::{BarrierOptions, ColumnQcqp, ColumnQuadratic};

/// Everything the surrogate needs from the expansion point `W_p`.
#[derive(Debug, Clone)]
pub struct PrecoderExpansion {
    pub w_p: CMatrix,
    /// `J` evaluated at `W_p`.
    pub j_p: CMatrix,
    /// `A^H J_p^-1 A`.
    pub g_p: CMatrix,
    /// `J_p^-1 A W_p W_p^H A^H J_p^-1`.
    f_p: CMatrix,
    /// `V` with `V V^H = sum_i |alpha_i|^2 A_i^H F_p A_i`, the quadratic
    /// weight of `-tr(F_p J(W))`. Column `i` is `sqrt(beta_i) a_t,i^*` with
    /// `beta_i = |alpha_i|^2 a_r,i^H F_p a_r,i`.
    clutter_factor: CMatrix,
}

impl PrecoderExpansion {
    pub fn new(env: &Environment, w_p: &CMatrix, positions: &Positions) -> Self {
        let j_p = env.clutter_plus_noise(w_p, positions);
        let a = env.target_matrix(positions);
        let j_inv_a = env.covariance_inverse(w_p, positions).solve(&a);
        let mut g_p = a.adjoint() * &j_inv_a;
        hermitize(&mut g_p);
        let y = &j_inv_a * w_p;
        let mut f_p = &y * y.adjoint();
        hermitize(&mut f_p);
        let mut clutter_factor = CMatrix::zeros(env.tx_count(), env.clutter_tx.len());
        for (i, ((scatterer, ar), at)) in env.scenario.clutter.iter().zip(env.clutter_rx(positions)).zip(&env.clutter_tx).enumerate() {
            let beta = scatterer.coefficient.norm_sqr() * (y.adjoint() * &ar).norm_squared();
            clutter_factor.set_column(i, &(at.map(|z| z.conj()) * C64::new(beta.sqrt(), 0.0)));
        }
        Self {
            w_p: w_p.clone(),
            j_p,
            g_p,
            f_p,
            clutter_factor,
        }
    }

    /// Surrogate evaluated literally as
    /// `|alpha_0|^2 [2 Re tr(W_p^H G_p W) - tr(F_p J(W))]`.
    pub fn surrogate(&self, env: &Environment, w: &CMatrix, positions: &Positions) -> f64 {
        let alpha_sq = env.scenario.target.coefficient.norm_sqr();
        let linear = 2.0 * (self.w_p.adjoint() * &self.g_p * w).trace().re;
        let j = env.clutter_plus_noise(w, positions);
        let penalty = (&self.f_p * j).trace().re;
        alpha_sq * (linear - penalty)
    }

    /// Same value through the quadratic form used by the solver.
    fn surrogate_quadratic(&self, env: &Environment, w: &CMatrix) -> f64 {
        let alpha_sq = env.scenario.target.coefficient.norm_sqr();
        let lin = &self.g_p * &self.w_p;
        let noise = env.scenario.radar_noise_power * self.f_p.trace().re;
        alpha_sq * (2.0 * real_inner(&lin, w) - (self.clutter_factor.adjoint() * w).norm_squared() - noise)
    }
}

/// Free-function form of [`PrecoderExpansion::surrogate`].
pub fn surrogate_precoder_objective(
    w: &Precoder,
    expansion: &PrecoderExpansion,
    env: &Environment,
    positions: &Positions,
) -> f64 {
    expansion.surrogate(env, w.matrix(), positions)
}

/// Tangent minorant of `(1 + 1/gamma_k) |h_k^H w_k|^2` at `w_{k,p}`:
/// `(1 + 1/gamma_k) (2 Re(h_k^H w_{k,p} w_k^H h_k) - |h_k^H w_{k,p}|^2)`.
pub fn linearized_sinr_lhs(k: usize, w: &CMatrix, w_p: &CMatrix, env: &Environment) -> f64 {
    let h = &env.channels[k];
    let gamma = env.scenario.users[k].sinr_target;
    let a = h.dotc(&w_p.column(k));
    let b = h.dotc(&w.column(k));
    (1.0 + 1.0 / gamma) * (2.0 * (a * b.conj()).re - a.norm_sqr())
}

#[derive(Debug, Clone)]
pub struct QcqpSolution {
    pub w: Precoder,
    /// Surrogate value at `w`.
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// False when the Newton cap was hit or the constraint set had no
    /// interior; `w` is then the best available point.
    pub converged: bool,
}

/// The convexified subproblem in normalized units (`X = W / sqrt(P_0)`,
/// objective and each constraint divided by a data-dependent scale).
struct NormalizedSubproblem {
    problem: ColumnQcqp,
    sqrt_budget: f64,
}

fn build_subproblem(expansion: &PrecoderExpansion, env: &Environment) -> NormalizedSubproblem {
    let budget = env.scenario.power_budget;
    let sqrt_budget = budget.sqrt();
    let m = env.tx_count();
    let k = expansion.w_p.ncols();

    let lin = &expansion.g_p * &expansion.w_p;
    let noise_term = env.scenario.radar_noise_power * expansion.f_p.trace().re;
    // The surrogate value at W_p (SCNR / |alpha_0|^2 by tangency). Gains are
    // meaningful relative to it, and the barrier's duality-gap tolerance is
    // applied in these units.
    let objective_scale = {
        let at_p = 2.0 * real_inner(&lin, &expansion.w_p)
            - (expansion.clutter_factor.adjoint() * &expansion.w_p).norm_squared()
            - noise_term;
        let fallback = (2.0 * sqrt_budget * lin.norm()).max(budget * expansion.clutter_factor.norm_squared());
        [at_p, fallback, 1.0].into_iter().find(|s| *s > 0.0 && s.is_finite()).unwrap_or(1.0)
    };
    let objective = ColumnQuadratic::new(
        &expansion.clutter_factor * C64::new((budget / objective_scale).sqrt(), 0.0),
        &lin * C64::new(-sqrt_budget / objective_scale, 0.0),
        noise_term / objective_scale,
    );

    let mut constraints = vec![ColumnQuadratic::new(CMatrix::identity(m, m), CMatrix::zeros(m, k), -1.0)];
    for (idx, (user, h)) in env.scenario.users.iter().zip(&env.channels).enumerate() {
        let c = 1.0 + 1.0 / user.sinr_target;
        let a = h.dotc(&expansion.w_p.column(idx));
        let mut lin = CMatrix::zeros(m, k);
        lin.set_column(idx, &(h * (-a * c * sqrt_budget)));
        let raw = ColumnQuadratic::new(
            CMatrix::from_columns(&[h * C64::new(sqrt_budget, 0.0)]),
            lin,
            user.noise_power + c * a.norm_sqr(),
        );
        let scale = user.noise_power + c * a.norm_sqr();
        constraints.push(raw.scaled(1.0 / scale));
    }
    NormalizedSubproblem {
        problem: ColumnQcqp { objective, constraints },
        sqrt_budget,
    }
}

/// Maximizes the surrogate subject to the power budget and the linearized
/// SINR constraints, warm-started at `W_p`.
///
/// The returned precoder never has a lower surrogate value than `W_p`: a
/// solver result that would lose ground is replaced by `W_p`.
pub fn solve_precoder_subproblem(expansion: &PrecoderExpansion, env: &Environment, tol: f64) -> Result<QcqpSolution> {
    if !(tol > 0.0) {
        return Err(Error::Numerical(format!("tolerance must be positive, got {tol}")));
    }
    let sub = build_subproblem(expansion, env);
    let x0 = &expansion.w_p * C64::new(1.0 / sub.sqrt_budget, 0.0);
    let violation = sub.problem.max_violation(&x0);
    if violation > tol.max(1e-9) {
        return Err(Error::Infeasible(format!(
            "expansion point violates its convexified constraints by {violation:e} (normalized)"
        )));
    }
    let start_value = expansion.surrogate_quadratic(env, &expansion.w_p);
    let opts = BarrierOptions {
        tol,
        ..BarrierOptions::default()
    };
    let solved = match sub.problem.solve(&x0, &opts) {
        Ok(s) => s,
        Err(Error::Infeasible(_)) => {
            return Ok(QcqpSolution {
                w: Precoder::new(expansion.w_p.clone()),
                objective: start_value,
                kkt_residual: f64::NAN,
                iterations: 0,
                converged: false,
            })
        }
        Err(e) => return Err(e),
    };
    let w = &solved.x * C64::new(sub.sqrt_budget, 0.0);
    let value = expansion.surrogate_quadratic(env, &w);
    if value < start_value {
        return Ok(QcqpSolution {
            w: Precoder::new(expansion.w_p.clone()),
            objective: start_value,
            kkt_residual: solved.kkt_residual,
            iterations: solved.newton_steps,
            converged: solved.converged,
        });
    }
    Ok(QcqpSolution {
        w: Precoder::new(w),
        objective: value,
        kkt_residual: solved.kkt_residual,
        iterations: solved.newton_steps,
        converged: solved.converged,
    })
}

/// Stopping rule shared by every MM loop: stop once the objective gain is
/// below `eps`, measured absolutely or relative to `max(1, |previous|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub eps: f64,
    pub relative: bool,
}

impl Threshold {
    pub fn absolute(eps: f64) -> Self {
        Self { eps, relative: false }
    }

    pub fn relative(eps: f64) -> Self {
        Self { eps, relative: true }
    }

    pub fn reached(&self, previous: f64, current: f64) -> bool {
        self.reached_gain(current - previous, previous)
    }

    /// Same rule for a gain whose relative scale is `reference` rather than
    /// the previous value.
    pub fn reached_gain(&self, gain: f64, reference: f64) -> bool {
        let scale = if self.relative { reference.abs().max(1.0) } else { 1.0 };
        !(gain >= self.eps * scale)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderTrace {
    /// SCNR at the start and after every accepted MM step.
    pub scnr: Vec<f64>,
    pub iterations: usize,
    pub newton_steps: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct PrecoderOptions {
    pub threshold: Threshold,
    pub max_iterations: usize,
    pub qcqp_tol: f64,
}

/// Checks the original power and SINR constraints with relative slack.
pub fn precoder_feasible(env: &Environment, w: &CMatrix, slack: f64) -> bool {
    let power: f64 = w.iter().map(|z| z.norm_sqr()).sum();
    power <= env.scenario.power_budget * (1.0 + slack)
        && env
            .scenario
            .users
            .iter()
            .enumerate()
            .all(|(k, u)| env.sinr(k, w) >= u.sinr_target * (1.0 - slack))
}

/// Repeats [`solve_precoder_subproblem`] until the SCNR gain falls below the
/// threshold. The SCNR sequence is non-decreasing by construction: a step
/// whose true SCNR would drop is discarded and the loop stops.
pub fn optimize_precoder(
    w_init: &Precoder,
    env: &Environment,
    positions: &Positions,
    opts: &PrecoderOptions,
) -> Result<(Precoder, PrecoderTrace)> {
    if w_init.matrix().shape() != (env.tx_count(), env.streams()) {
        return Err(Error::Numerical(format!(
            "precoder has shape {:?}, expected {:?}",
            w_init.matrix().shape(),
            (env.tx_count(), env.streams())
        )));
    }
    if !precoder_feasible(env, w_init.matrix(), 1e-9) {
        return Err(Error::Infeasible("initial precoder violates the power or SINR constraints".into()));
    }
    let mut w = w_init.matrix().clone();
    let mut current = env.scnr(&w, positions);
    let mut trace = PrecoderTrace {
        scnr: vec![current],
        iterations: 0,
        newton_steps: 0,
        converged: false,
    };
    while trace.iterations < opts.max_iterations {
        let expansion = PrecoderExpansion::new(env, &w, positions);
        let sol = solve_precoder_subproblem(&expansion, env, opts.qcqp_tol)?;
        trace.iterations += 1;
        trace.newton_steps += sol.iterations;
        let candidate = sol.w.into_matrix();
        let value = env.scnr(&candidate, positions);
        if value < current {
            trace.converged = true;
            break;
        }
        let done = opts.threshold.reached(current, value);
        w = candidate;
        current = value;
        trace.scnr.push(current);
        if done {
            trace.converged = true;
            break;
        }
    }
    Ok((Precoder::new(w), trace))
}
