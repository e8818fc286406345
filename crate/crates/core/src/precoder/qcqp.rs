//! Dense log-barrier interior-point solver for column-structured QCQPs.
//!
//! The variable is a complex `M x K` matrix `X`. Every function has the form
//!
//! ```text
//! f(X) = sum_k x_k^H P x_k + 2 Re tr(L^H X) + c
//! ```
//!
//! with one Hermitian PSD `P = V V^H` shared by all columns, given through
//! its factor `V`. Values are computed as `||V^H X||^2`, which keeps full
//! relative accuracy when `X` lies almost in the null space of a large
//! `P` (a precoder nulling a strong user channel). The solver minimizes one
//! such function subject to any number of others being `<= 0`, and requires
//! one constraint with positive definite `P` (the power ball) so that the
//! barrier Hessian is invertible.
//!
//! Real lifting: `X` is treated as a point of `R^{2MK}` with entries
//! interleaved `(re, im)` in column-major order, and the inner product is
//! `<U, V> = Re tr(U^H V)`. Gradients are returned in the same matrix shape,
//! so `f(X + D) ~ f(X) + <grad f, D>`.
//!
//! The barrier Hessian is `2 B (x) I_K` plus one rank-one term per
//! constraint, where `B` collects the weighted `P` matrices. Newton steps
//! factor the `M x M` block once and apply Woodbury for the rank-one part,
//! so a step costs `O(M^3 + m M^2 K)` rather than `O((MK)^3)`.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};
use crate::model::{real_inner, CMatrix, C64};

/// `sum_k ||V^H x_k||^2 + 2 Re tr(L^H X) + c`.
#[derive(Debug, Clone)]
pub struct ColumnQuadratic {
    factor: CMatrix,
    quad: CMatrix,
    lin: CMatrix,
    constant: f64,
}

impl ColumnQuadratic {
    pub fn new(factor: CMatrix, lin: CMatrix, constant: f64) -> Self {
        let mut quad = &factor * factor.adjoint();
        crate::model::hermitize(&mut quad);
        Self {
            factor,
            quad,
            lin,
            constant,
        }
    }

    /// `P = V V^H`.
    pub fn quad(&self) -> &CMatrix {
        &self.quad
    }

    pub fn lin(&self) -> &CMatrix {
        &self.lin
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn value(&self, x: &CMatrix) -> f64 {
        (self.factor.adjoint() * x).norm_squared() + 2.0 * real_inner(&self.lin, x) + self.constant
    }

    pub fn gradient(&self, x: &CMatrix) -> CMatrix {
        (&self.factor * (self.factor.adjoint() * x) + &self.lin) * C64::new(2.0, 0.0)
    }

    /// Value and gradient sharing the `V^H X` product.
    fn eval(&self, x: &CMatrix) -> (f64, CMatrix) {
        let vx = self.factor.adjoint() * x;
        let value = vx.norm_squared() + 2.0 * real_inner(&self.lin, x) + self.constant;
        (value, (&self.factor * vx + &self.lin) * C64::new(2.0, 0.0))
    }

    /// Multiplies the whole function by `s > 0`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            factor: &self.factor * C64::new(s.sqrt(), 0.0),
            quad: &self.quad * C64::new(s, 0.0),
            lin: &self.lin * C64::new(s, 0.0),
            constant: self.constant * s,
        }
    }
}

/// Minimize `objective` subject to every constraint being `<= 0`.
#[derive(Debug, Clone)]
pub struct ColumnQcqp {
    pub objective: ColumnQuadratic,
    pub constraints: Vec<ColumnQuadratic>,
}

#[derive(Debug, Clone, Copy)]
pub struct BarrierOptions {
    /// Target duality measure `m / t`.
    pub tol: f64,
    /// Barrier parameter growth factor.
    pub mu: f64,
    pub t0: f64,
    /// Newton decrement threshold `lambda^2 / 2` for centering.
    pub newton_tol: f64,
    /// Cap on Newton steps over both phases.
    pub max_newton: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            mu: 20.0,
            t0: 1.0,
            newton_tol: 1e-12,
            max_newton: 2000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BarrierSolution {
    pub x: CMatrix,
    pub objective: f64,
    /// Multiplier estimates `-1 / (t f_i)`.
    pub duals: Vec<f64>,
    /// Max of scaled stationarity, complementarity and primal violation.
    pub kkt_residual: f64,
    pub newton_steps: usize,
    pub converged: bool,
}

/// Outcome of the phase-I search for a strictly feasible point.
#[derive(Debug)]
enum PhaseOne {
    Interior(CMatrix),
    /// Smallest achievable `max_i f_i`, non-negative.
    Empty(f64),
}

impl ColumnQcqp {
    fn dims(&self) -> (usize, usize) {
        (self.objective.lin.nrows(), self.objective.lin.ncols())
    }

    fn constraint_values(&self, x: &CMatrix) -> Vec<f64> {
        self.constraints.iter().map(|c| c.value(x)).collect()
    }

    /// Largest constraint value at `x`.
    pub fn max_violation(&self, x: &CMatrix) -> f64 {
        self.constraint_values(x).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Runs the barrier method from `x0`. A start that is not strictly
    /// feasible goes through a phase-I problem first; if the feasible set has
    /// no interior the result is [`Error::Infeasible`]. Hitting the Newton
    /// cap returns the last iterate with `converged = false`.
    pub fn solve(&self, x0: &CMatrix, opts: &BarrierOptions) -> Result<BarrierSolution> {
        let (m, k) = self.dims();
        if x0.shape() != (m, k) {
            return Err(Error::Numerical(format!("start point has shape {:?}, expected {:?}", x0.shape(), (m, k))));
        }
        if self.constraints.is_empty() {
            return Err(Error::Numerical("barrier solver needs at least one constraint".into()));
        }
        let mut steps = 0usize;
        let start = if self.max_violation(x0) < 0.0 {
            x0.clone()
        } else {
            match self.phase_one(x0, opts, &mut steps)? {
                PhaseOne::Interior(x) => x,
                PhaseOne::Empty(best) => {
                    return Err(Error::Infeasible(format!(
                        "constraint set has no interior (best max violation {best:e})"
                    )))
                }
            }
        };
        self.phase_two(start, opts, steps)
    }

    fn phase_two(&self, mut x: CMatrix, opts: &BarrierOptions, mut steps: usize) -> Result<BarrierSolution> {
        let count = self.constraints.len() as f64;
        let mut t = opts.t0;
        let mut converged = false;
        'outer: loop {
            let mut centering = 0;
            loop {
                if steps >= opts.max_newton {
                    break 'outer;
                }
                let (f0, g0) = self.objective.eval(&x);
                let evals: Vec<(f64, CMatrix)> = self.constraints.iter().map(|c| c.eval(&x)).collect();
                let weights: Vec<f64> = evals.iter().map(|(v, _)| -1.0 / v).collect();

                let mut grad = &g0 * C64::new(t, 0.0);
                let mut block = self.objective.quad() * C64::new(t, 0.0);
                let mut terms = Vec::with_capacity(evals.len());
                for ((c, (_, g)), &w) in self.constraints.iter().zip(&evals).zip(&weights) {
                    grad += g * C64::new(w, 0.0);
                    block += c.quad() * C64::new(w, 0.0);
                    terms.push((1.0, g * C64::new(w, 0.0)));
                }
                let neg_grad = -&grad;
                let dir = woodbury_solve(&block, &terms, &neg_grad)?;
                let decrement = -real_inner(&grad, &dir);
                steps += 1;
                if decrement / 2.0 <= opts.newton_tol || !decrement.is_finite() {
                    break;
                }
                let phi0 = t * f0 - evals.iter().map(|(v, _)| (-v).ln()).sum::<f64>();
                let barrier = |y: &CMatrix| -> Option<f64> {
                    let mut acc = t * self.objective.value(y);
                    for c in &self.constraints {
                        let v = c.value(y);
                        if !(v < 0.0) {
                            return None;
                        }
                        acc -= (-v).ln();
                    }
                    Some(acc)
                };
                match line_search(&x, &dir, phi0, decrement, barrier) {
                    Some(next) => x = next,
                    None => break,
                }
                centering += 1;
                if centering >= MAX_CENTERING_STEPS {
                    break;
                }
            }
            if count / t <= opts.tol {
                converged = true;
                break;
            }
            t *= opts.mu;
        }

        let objective = self.objective.value(&x);
        let (f0_grad, evals) = (self.objective.gradient(&x), self.constraints.iter().map(|c| c.eval(&x)).collect::<Vec<_>>());
        let barrier_duals: Vec<f64> = evals.iter().map(|(v, _)| -1.0 / (t * v)).collect();
        let barrier_res = kkt_residual(&f0_grad, &evals, &barrier_duals);
        let (duals, kkt_residual) = match least_squares_duals(&f0_grad, &evals) {
            Some(ls) => {
                let ls_res = kkt_residual(&f0_grad, &evals, &ls);
                if ls_res < barrier_res {
                    (ls, ls_res)
                } else {
                    (barrier_duals, barrier_res)
                }
            }
            None => (barrier_duals, barrier_res),
        };
        Ok(BarrierSolution {
            x,
            objective,
            duals,
            kkt_residual,
            newton_steps: steps,
            converged,
        })
    }

    /// Minimize `s` subject to `f_i(X) <= s`, stopping as soon as `s < 0`.
    fn phase_one(&self, x0: &CMatrix, opts: &BarrierOptions, steps: &mut usize) -> Result<PhaseOne> {
        let count = self.constraints.len() as f64;
        let mut x = x0.clone();
        let mut s = self.max_violation(&x) + 1.0;
        let mut t = opts.t0;
        loop {
            let mut centering = 0;
            loop {
                if s < 0.0 {
                    return Ok(PhaseOne::Interior(x));
                }
                if *steps >= opts.max_newton {
                    return Err(Error::MaxIterations { iterations: *steps });
                }
                let evals: Vec<(f64, CMatrix)> = self.constraints.iter().map(|c| c.eval(&x)).collect();
                let weights: Vec<f64> = evals.iter().map(|(v, _)| 1.0 / (s - v)).collect();

                let mut grad_x = CMatrix::zeros(x.nrows(), x.ncols());
                let mut block = CMatrix::zeros(x.nrows(), x.nrows());
                let mut coupling = CMatrix::zeros(x.nrows(), x.ncols());
                let mut terms = Vec::with_capacity(evals.len() + 1);
                let mut weight_sum = 0.0;
                let mut weight_sq_sum = 0.0;
                for ((c, (_, g)), &w) in self.constraints.iter().zip(&evals).zip(&weights) {
                    grad_x += g * C64::new(w, 0.0);
                    block += c.quad() * C64::new(w, 0.0);
                    coupling += g * C64::new(w * w, 0.0);
                    terms.push((1.0, g * C64::new(w, 0.0)));
                    weight_sum += w;
                    weight_sq_sum += w * w;
                }
                let grad_s = t - weight_sum;
                // Eliminate ds: (H_xx - v v^T / h) dx = -g_x - v g_s / h.
                terms.push((-1.0, &coupling * C64::new(1.0 / weight_sq_sum.sqrt(), 0.0)));
                let rhs = -&grad_x - &coupling * C64::new(grad_s / weight_sq_sum, 0.0);
                let dx = woodbury_solve(&block, &terms, &rhs)?;
                let ds = (real_inner(&coupling, &dx) - grad_s) / weight_sq_sum;
                let decrement = -(real_inner(&grad_x, &dx) + grad_s * ds);
                *steps += 1;
                if decrement / 2.0 <= opts.newton_tol || !decrement.is_finite() {
                    break;
                }
                let psi0 = t * s - evals.iter().map(|(v, _)| (s - v).ln()).sum::<f64>();
                let barrier = |y: &CMatrix, sy: f64| -> Option<f64> {
                    let mut acc = t * sy;
                    for c in &self.constraints {
                        let gap = sy - c.value(y);
                        if !(gap > 0.0) {
                            return None;
                        }
                        acc -= gap.ln();
                    }
                    Some(acc)
                };
                let mut alpha = 1.0;
                let mut accepted = false;
                let damped = decrement.sqrt() >= QUADRATIC_REGION;
                for _ in 0..80 {
                    let y = &x + &dx * C64::new(alpha, 0.0);
                    let sy = s + alpha * ds;
                    if let Some(v) = barrier(&y, sy) {
                        if !damped || v <= psi0 - 0.01 * alpha * decrement {
                            x = y;
                            s = sy;
                            accepted = true;
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                if !accepted {
                    break;
                }
                centering += 1;
                if centering >= MAX_CENTERING_STEPS {
                    break;
                }
            }
            if count / t <= opts.tol {
                let best = self.max_violation(&x);
                return Ok(if best < 0.0 {
                    PhaseOne::Interior(x)
                } else {
                    PhaseOne::Empty(best)
                });
            }
            t *= opts.mu;
        }
    }
}

/// Max of scaled stationarity `|grad f_0 + sum_i y_i grad f_i|`,
/// complementarity `max_i y_i |f_i|` and primal violation, for multipliers
/// `y >= 0`.
fn kkt_residual(f0_grad: &CMatrix, evals: &[(f64, CMatrix)], duals: &[f64]) -> f64 {
    let mut stationarity = f0_grad.clone();
    for ((_, g), &d) in evals.iter().zip(duals) {
        stationarity += g * C64::new(d, 0.0);
    }
    let grad_scale = f0_grad.norm().max(1.0);
    let complementarity = evals.iter().zip(duals).map(|((v, _), d)| (d * v).abs()).fold(0.0, f64::max);
    let violation = evals.iter().map(|(v, _)| v.max(0.0)).fold(0.0, f64::max);
    (stationarity.norm() / grad_scale).max(complementarity).max(violation)
}

/// Multipliers minimizing the stationarity residual, clamped at zero.
/// Near the optimum these certify KKT more sharply than the barrier
/// estimates, whose stationarity error scales with the square root of the
/// final Newton decrement.
fn least_squares_duals(f0_grad: &CMatrix, evals: &[(f64, CMatrix)]) -> Option<Vec<f64>> {
    let m = evals.len();
    let gram = DMatrix::<f64>::from_fn(m, m, |i, j| real_inner(&evals[i].1, &evals[j].1));
    let rhs = nalgebra::DVector::<f64>::from_fn(m, |i, _| -real_inner(&evals[i].1, f0_grad));
    let y = gram.svd(true, true).solve(&rhs, 1e-14).ok()?;
    Some(y.iter().map(|v| v.max(0.0)).collect())
}

/// Newton decrement below which the full step is taken without a
/// sufficient-decrease test. The barrier is self-concordant, so such steps
/// stay feasible and converge quadratically; testing decrease there would
/// only measure round-off in the barrier value.
const QUADRATIC_REGION: f64 = 0.2;

/// Newton steps allowed per centering before the barrier parameter moves on.
const MAX_CENTERING_STEPS: usize = 60;

/// Backtracking line search keeping the barrier finite. `decrement` is the
/// squared Newton decrement. Returns `None` when no step is acceptable.
fn line_search<F>(x: &CMatrix, dir: &CMatrix, phi0: f64, decrement: f64, barrier: F) -> Option<CMatrix>
where
    F: Fn(&CMatrix) -> Option<f64>,
{
    let damped = decrement.sqrt() >= QUADRATIC_REGION;
    let mut alpha = 1.0;
    for _ in 0..80 {
        let y = x + dir * C64::new(alpha, 0.0);
        if let Some(v) = barrier(&y) {
            if !damped || v <= phi0 - 0.01 * alpha * decrement {
                return Some(y);
            }
        }
        alpha *= 0.5;
    }
    None
}

/// Solves `2 B D + sum_j s_j u_j <u_j, D> = R` for `D`, with `B` Hermitian
/// positive definite and signs `s_j = +-1`.
fn woodbury_solve(block: &CMatrix, terms: &[(f64, CMatrix)], rhs: &CMatrix) -> Result<CMatrix> {
    let mut b2 = block * C64::new(2.0, 0.0);
    crate::model::hermitize(&mut b2);
    let chol = factor(b2)?;
    let y = chol.solve(rhs);
    if terms.is_empty() {
        return Ok(y);
    }
    let z: Vec<CMatrix> = terms.iter().map(|(_, u)| chol.solve(u)).collect();
    let r = terms.len();
    let cap = DMatrix::<f64>::from_fn(r, r, |i, j| {
        let diag = if i == j { terms[i].0 } else { 0.0 };
        diag + real_inner(&terms[i].1, &z[j])
    });
    let proj = nalgebra::DVector::<f64>::from_fn(r, |i, _| real_inner(&terms[i].1, &y));
    let coeffs = cap
        .lu()
        .solve(&proj)
        .ok_or_else(|| Error::Numerical("singular Woodbury capacitance matrix".into()))?;
    let mut d = y;
    for (c, zj) in coeffs.iter().zip(&z) {
        d -= zj * C64::new(*c, 0.0);
    }
    Ok(d)
}

fn factor(m: CMatrix) -> Result<Cholesky<C64, Dyn>> {
    let scale = m.diagonal().iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    if !scale.is_finite() {
        return Err(Error::Numerical("non-finite Newton block".into()));
    }
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let mut jitter = scale.max(f64::MIN_POSITIVE) * 1e-14;
    for _ in 0..20 {
        let lifted = &m + CMatrix::identity(m.nrows(), m.nrows()) * C64::new(jitter, 0.0);
        if let Some(c) = Cholesky::new(lifted) {
            return Ok(c);
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical("Newton block is not positive definite".into()))
}
