//! Numerical self-checks of the MM machinery on small random instances.
//!
//! Each function measures one property and returns the worst normalized
//! violation it saw; the caller decides the tolerance. The `check` CLI
//! subcommand and the acceptance tests are both built on these.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{ArrayGeometry, CMatrix, Environment, Path, Positions, Scatterer, Scenario, User, C64};
use crate::position::{lipschitz_delta, q_coefficients, q_gradient, q_single, QCoefficients};
use crate::precoder::{initial_precoder, linearized_sinr_lhs, solve_precoder_subproblem, PrecoderExpansion};

/// Shape and noise levels of a random test instance. Gains are CN(0, 1) and
/// angles uniform on `[0, pi/2]`.
#[derive(Debug, Clone, Copy)]
pub struct InstanceSpec {
    pub tx_x: usize,
    pub tx_y: usize,
    pub rx_count: usize,
    pub users: usize,
    pub paths: usize,
    pub clutter: usize,
    pub region_wavelengths: f64,
    pub power_budget: f64,
    pub sinr_target: f64,
    pub noise_power: f64,
    pub radar_noise_power: f64,
}

impl InstanceSpec {
    /// `M = 8`, `N = 3`, `K = 2`, `I = 3` with noise well above round-off.
    pub fn small() -> Self {
        Self {
            tx_x: 4,
            tx_y: 2,
            rx_count: 3,
            users: 2,
            paths: 4,
            clutter: 3,
            region_wavelengths: 2.0,
            power_budget: 1.0,
            sinr_target: 1.0,
            noise_power: 0.1,
            radar_noise_power: 0.1,
        }
    }

    /// `M = 2`, `K = 1`, the QCQP oracle size.
    pub fn tiny() -> Self {
        Self {
            tx_x: 2,
            tx_y: 1,
            rx_count: 2,
            users: 1,
            paths: 2,
            clutter: 2,
            ..Self::small()
        }
    }
}

/// A scenario together with a random feasible point `(W, r)`. `W` uses the
/// full power budget but need not meet the SINR targets.
#[derive(Debug, Clone)]
pub struct Instance {
    pub scenario: Scenario,
    pub geometry: ArrayGeometry,
    pub precoder: CMatrix,
    pub positions: Positions,
}

impl Instance {
    pub fn env(&self) -> Environment<'_> {
        Environment::new(&self.scenario, &self.geometry)
    }
}

fn cn(rng: &mut impl Rng) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn angle(rng: &mut impl Rng) -> f64 {
    rng.random_range(0.0..=PI / 2.0)
}

fn scatterer(rng: &mut impl Rng) -> Scatterer {
    Scatterer {
        coefficient: cn(rng),
        elevation: angle(rng),
        azimuth: angle(rng),
    }
}

/// `W` with i.i.d. CN(0, 1) entries rescaled to power `power`.
pub fn random_precoder(m: usize, k: usize, power: f64, rng: &mut impl Rng) -> CMatrix {
    let w = CMatrix::from_fn(m, k, |_, _| cn(rng));
    let norm = w.norm();
    w * C64::new(power.sqrt() / norm, 0.0)
}

/// Uniform point of `[0, A]^2` per antenna, redrawn until the minimum
/// distance holds.
pub fn random_positions(geom: &ArrayGeometry, rng: &mut impl Rng) -> Positions {
    let side = geom.region_side();
    let mut points: Vec<Vector2<f64>> = Vec::with_capacity(geom.rx_count());
    while points.len() < geom.rx_count() {
        let p = Vector2::new(rng.random_range(0.0..=side), rng.random_range(0.0..=side));
        if points.iter().all(|q| (p - q).norm() >= geom.min_distance()) {
            points.push(p);
        }
    }
    Positions::new(points)
}

pub fn random_instance(spec: &InstanceSpec, rng: &mut impl Rng) -> Result<Instance> {
    let wavelength = 1.0;
    let geometry = ArrayGeometry::new(
        spec.tx_x,
        spec.tx_y,
        0.5 * wavelength,
        spec.rx_count,
        spec.region_wavelengths * wavelength,
        0.5 * wavelength,
        wavelength,
    )?;
    let users = (0..spec.users)
        .map(|_| User {
            paths: (0..spec.paths)
                .map(|_| Path {
                    gain: cn(rng),
                    elevation: angle(rng),
                    azimuth: angle(rng),
                })
                .collect(),
            noise_power: spec.noise_power,
            sinr_target: spec.sinr_target,
        })
        .collect();
    let scenario = Scenario {
        users,
        target: scatterer(rng),
        clutter: (0..spec.clutter).map(|_| scatterer(rng)).collect(),
        radar_noise_power: spec.radar_noise_power,
        power_budget: spec.power_budget,
    };
    scenario.validate()?;
    let precoder = random_precoder(geometry.tx_count(), scenario.stream_count(), spec.power_budget, rng);
    let positions = random_positions(&geometry, rng);
    Ok(Instance {
        scenario,
        geometry,
        precoder,
        positions,
    })
}

/// `|surrogate(W_p; W_p) - SCNR(W_p)| / max(1, SCNR)`.
pub fn precoder_tangency_gap(inst: &Instance) -> f64 {
    let env = inst.env();
    let scnr = env.scnr(&inst.precoder, &inst.positions);
    let expansion = PrecoderExpansion::new(&env, &inst.precoder, &inst.positions);
    let surrogate = expansion.surrogate(&env, &inst.precoder, &inst.positions);
    (surrogate - scnr).abs() / scnr.max(1.0)
}

/// Tangency of the position surrogate at `r_v`, through both the separable
/// form (the one the optimizer uses) and the trace form.
pub fn position_tangency_gap(inst: &Instance) -> f64 {
    let env = inst.env();
    let scnr = env.scnr(&inst.precoder, &inst.positions);
    let coeffs = q_coefficients(&env, &inst.precoder, &inst.positions);
    let separable = coeffs.surrogate(&inst.positions);
    let trace = crate::position::position_surrogate_trace(&env, &inst.precoder, &inst.positions, &inst.positions);
    (separable - scnr).abs().max((trace - scnr).abs()) / scnr.max(1.0)
}

/// Largest `(surrogate(W; W_p) - SCNR(W)) / scale` over `samples` random `W`
/// of random power in `(0, 2 P_0]`, with `scale = max(1, SCNR(W_p), SCNR(W))`.
/// Non-positive when the surrogate minorizes the SCNR.
pub fn precoder_majorization_excess(inst: &Instance, samples: usize, rng: &mut impl Rng) -> f64 {
    let env = inst.env();
    let expansion = PrecoderExpansion::new(&env, &inst.precoder, &inst.positions);
    let base = env.scnr(&inst.precoder, &inst.positions);
    let (m, k) = inst.precoder.shape();
    let mut worst = f64::NEG_INFINITY;
    for s in 0..samples {
        let power = inst.scenario.power_budget * rng.random_range(0.0..2.0f64).max(1e-6);
        // Half of the samples are local perturbations of W_p.
        let w = if s % 2 == 0 {
            random_precoder(m, k, power, rng)
        } else {
            let t = 10f64.powf(rng.random_range(-6.0..0.0));
            &inst.precoder + random_precoder(m, k, inst.scenario.power_budget * t * t, rng)
        };
        let scnr = env.scnr(&w, &inst.positions);
        let surrogate = expansion.surrogate(&env, &w, &inst.positions);
        worst = worst.max((surrogate - scnr) / base.max(scnr).max(1.0));
    }
    worst
}

/// Proximal minorant `q(r_c) + g^T (r - r_c) - delta/2 |r - r_c|^2` of
/// antenna `n`.
pub fn quadratic_minorant(
    r: &Vector2<f64>,
    r_c: &Vector2<f64>,
    n: usize,
    coeffs: &QCoefficients,
    positions: &Positions,
) -> f64 {
    let g = q_gradient(r_c, n, coeffs, positions);
    let d = r - r_c;
    q_single(r_c, n, coeffs, positions) + g.dot(&d) - 0.5 * lipschitz_delta(n, coeffs) * d.norm_squared()
}

/// Largest `(minorant(r) - q(r)) / scale` over `samples` random `r` in the
/// region, for a random antenna and a random `r_c` each time. `scale` is
/// `max(1, |q(r_c)|, |q(r)|)`.
pub fn position_majorization_excess(inst: &Instance, samples: usize, rng: &mut impl Rng) -> f64 {
    let env = inst.env();
    let coeffs = q_coefficients(&env, &inst.precoder, &inst.positions);
    let side = inst.geometry.region_side();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let n = rng.random_range(0..inst.positions.len());
        let r_c = Vector2::new(rng.random_range(0.0..=side), rng.random_range(0.0..=side));
        let r = Vector2::new(rng.random_range(0.0..=side), rng.random_range(0.0..=side));
        let q = q_single(&r, n, &coeffs, &inst.positions);
        let q_c = q_single(&r_c, n, &coeffs, &inst.positions);
        let minorant = quadratic_minorant(&r, &r_c, n, &coeffs, &inst.positions);
        worst = worst.max((minorant - q) / q.abs().max(q_c.abs()).max(1.0));
    }
    worst
}

/// Relative error of [`q_gradient`] against central differences with step
/// `1e-6 lambda`, at one random antenna and point.
pub fn gradient_error(inst: &Instance, rng: &mut impl Rng) -> f64 {
    let env = inst.env();
    let coeffs = q_coefficients(&env, &inst.precoder, &inst.positions);
    let side = inst.geometry.region_side();
    let n = rng.random_range(0..inst.positions.len());
    let r = Vector2::new(rng.random_range(0.0..=side), rng.random_range(0.0..=side));
    let h = 1e-6 * inst.geometry.wavelength();
    let q = |p: Vector2<f64>| q_single(&p, n, &coeffs, &inst.positions);
    let fd = Vector2::new(
        (q(r + Vector2::new(h, 0.0)) - q(r - Vector2::new(h, 0.0))) / (2.0 * h),
        (q(r + Vector2::new(0.0, h)) - q(r - Vector2::new(0.0, h))) / (2.0 * h),
    );
    let g = q_gradient(&r, n, &coeffs, &inst.positions);
    (g - fd).norm() / g.norm().max(fd.norm()).max(f64::MIN_POSITIVE)
}

/// Largest `|eig(H)| / delta_n` over `points` random `(n, r)`, where `H` is
/// the finite-difference Hessian of `q`.
pub fn hessian_ratio(inst: &Instance, points: usize, rng: &mut impl Rng) -> f64 {
    let env = inst.env();
    let coeffs = q_coefficients(&env, &inst.precoder, &inst.positions);
    let side = inst.geometry.region_side();
    let h = 1e-4 * inst.geometry.wavelength();
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let n = rng.random_range(0..inst.positions.len());
        let r = Vector2::new(rng.random_range(0.0..=side), rng.random_range(0.0..=side));
        let q = |dx: f64, dy: f64| q_single(&(r + Vector2::new(dx, dy)), n, &coeffs, &inst.positions);
        let q0 = q(0.0, 0.0);
        let hxx = (q(h, 0.0) - 2.0 * q0 + q(-h, 0.0)) / (h * h);
        let hyy = (q(0.0, h) - 2.0 * q0 + q(0.0, -h)) / (h * h);
        let hxy = (q(h, h) - q(h, -h) - q(-h, h) + q(-h, -h)) / (4.0 * h * h);
        let eig = Matrix2::new(hxx, hxy, hxy, hyy).symmetric_eigenvalues();
        let delta = lipschitz_delta(n, &coeffs);
        if delta > 0.0 {
            worst = worst.max(eig.abs().max() / delta);
        }
    }
    worst
}

/// Result of [`qcqp_oracle`].
#[derive(Debug, Clone, Copy)]
pub struct QcqpOracle {
    /// Largest `(surrogate(sample) - surrogate(solution)) / max(1, |solution|)`
    /// over the feasible samples.
    pub excess: f64,
    pub kkt_residual: f64,
    /// Number of feasible samples actually compared.
    pub feasible_samples: usize,
}

/// Solves one precoder subproblem at the initial precoder and compares its
/// objective with `samples` random points of the convexified feasible set.
pub fn qcqp_oracle(inst: &Instance, samples: usize, tol: f64, rng: &mut impl Rng) -> Result<QcqpOracle> {
    let env = inst.env();
    let w_p = initial_precoder(&env)?.into_matrix();
    let expansion = PrecoderExpansion::new(&env, &w_p, &inst.positions);
    let sol = solve_precoder_subproblem(&expansion, &env, tol)?;
    let best = sol.objective;
    let budget = inst.scenario.power_budget;
    let (m, k) = w_p.shape();
    let feasible = |w: &CMatrix| {
        w.norm_squared() <= budget
            && env.scenario.users.iter().enumerate().all(|(j, u)| {
                let h = &env.channels[j];
                let received: f64 = (0..k).map(|c| h.dotc(&w.column(c)).norm_sqr()).sum();
                linearized_sinr_lhs(j, w, &w_p, &env) >= received + u.noise_power
            })
    };
    let mut excess = f64::NEG_INFINITY;
    let mut count = 0;
    for s in 0..samples {
        let w = if s % 2 == 0 {
            let radius = budget * rng.random_range(0.0..=1.0f64);
            random_precoder(m, k, radius, rng)
        } else {
            let t = 10f64.powf(rng.random_range(-6.0..-1.0));
            let w = sol.w.matrix() + random_precoder(m, k, budget * t * t, rng);
            let p = w.norm_squared();
            if p > budget {
                w * C64::new((budget / p).sqrt(), 0.0)
            } else {
                w
            }
        };
        if !feasible(&w) {
            continue;
        }
        count += 1;
        let value = expansion.surrogate(&env, &w, &inst.positions);
        excess = excess.max((value - best) / best.abs().max(1.0));
    }
    Ok(QcqpOracle {
        excess,
        kkt_residual: sol.kkt_residual,
        feasible_samples: count,
    })
}

/// `M = K = 1`, `I = 0`: the subproblem optimum spends the whole budget.
/// Returns `| |w|^2 - P_0 | / P_0`.
pub fn scalar_power_gap(budget: f64, gamma: f64) -> Result<f64> {
    let scenario = Scenario {
        users: vec![User {
            paths: vec![Path {
                gain: C64::new(0.8, -0.3),
                elevation: 0.4,
                azimuth: 0.9,
            }],
            noise_power: 0.1,
            sinr_target: gamma,
        }],
        target: Scatterer {
            coefficient: C64::new(1.0, 0.5),
            elevation: 0.6,
            azimuth: 0.2,
        },
        clutter: vec![],
        radar_noise_power: 0.1,
        power_budget: budget,
    };
    let geometry = ArrayGeometry::new(1, 1, 0.5, 1, 1.0, 0.5, 1.0)?;
    let env = Environment::new(&scenario, &geometry);
    let positions = geometry.centered_grid();
    let w_p = initial_precoder(&env)?.into_matrix();
    let expansion = PrecoderExpansion::new(&env, &w_p, &positions);
    let sol = solve_precoder_subproblem(&expansion, &env, 1e-12)?;
    if !sol.converged {
        return Err(Error::Numerical("scalar subproblem did not converge".into()));
    }
    Ok((sol.w.power() - budget).abs() / budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_instance_is_feasible_and_full_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = random_instance(&InstanceSpec::small(), &mut rng).unwrap();
        assert!(inst.positions.feasible(&inst.geometry));
        assert!((inst.precoder.norm_squared() - 1.0).abs() < 1e-12);
        assert_eq!(inst.precoder.shape(), (8, 2));
    }

    #[test]
    fn checks_pass_on_one_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inst = random_instance(&InstanceSpec::small(), &mut rng).unwrap();
        assert!(precoder_tangency_gap(&inst) < 1e-8);
        assert!(position_tangency_gap(&inst) < 1e-8);
        assert!(precoder_majorization_excess(&inst, 50, &mut rng) < 1e-8);
        assert!(position_majorization_excess(&inst, 50, &mut rng) < 1e-8);
        assert!(gradient_error(&inst, &mut rng) < 1e-5);
        assert!(hessian_ratio(&inst, 10, &mut rng) <= 1.0 + 1e-6);
    }

    #[test]
    fn scalar_case_spends_budget() {
        assert!(scalar_power_gap(2.0, 1.0).unwrap() < 1e-9);
    }
}
