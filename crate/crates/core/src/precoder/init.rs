//! Strictly feasible starting precoder.
//!
//! Each candidate direction family (zero-forcing, regularized zero-forcing,
//! matched filter) fixes unit beam directions `u_k`. For fixed directions the
//! SINR targets are linear in the stream powers:
//!
//! ```text
//! |h_k^H u_k|^2 p_k >= gamma_k (sum_{j != k} |h_k^H u_j|^2 p_j + sigma_k^2)
//! ```
//!
//! so the minimal powers come from one linear solve. The first family whose
//! minimal powers fit the budget wins. Leftover power goes to the target
//! direction projected onto the users' null space, or, when that space is
//! empty, scales all streams up uniformly (which only raises every SINR).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{CMatrix, CVector, Environment, Precoder, C64};

/// SINR targets are met with this relative surplus and this fraction of the
/// budget is left unused, so the start is strictly inside both constraints.
const MARGIN: f64 = 1e-3;

pub fn initial_precoder(env: &Environment) -> Result<Precoder> {
    let m = env.tx_count();
    let budget = env.scenario.power_budget * (1.0 - MARGIN);
    let target_dir = env.target_tx.map(|z| z.conj());

    if env.channels.is_empty() {
        let w = &target_dir * C64::new((budget / m as f64).sqrt(), 0.0);
        return Ok(Precoder::new(CMatrix::from_columns(&[w])));
    }

    let families = [zero_forcing(env), regularized_zero_forcing(env), matched_filter(env)];
    for dirs in families.into_iter().flatten() {
        let Some(powers) = minimal_powers(env, &dirs) else {
            continue;
        };
        let used: f64 = powers.iter().sum();
        if used > budget {
            continue;
        }
        let mut w = CMatrix::zeros(m, env.channels.len());
        for (k, (u, p)) in dirs.iter().zip(&powers).enumerate() {
            w.set_column(k, &(u * C64::new(p.sqrt(), 0.0)));
        }
        let leftover = budget - used;
        let spare = null_space_component(env, &target_dir);
        match spare {
            Some(t) if leftover > 0.0 => {
                let add = &t * C64::new((leftover / t.norm_squared()).sqrt(), 0.0);
                let col = w.column(0) + add;
                w.set_column(0, &col);
            }
            _ if used > 0.0 => {
                w *= C64::new((budget / used).sqrt(), 0.0);
            }
            _ => {}
        }
        return Ok(Precoder::new(w));
    }
    Err(Error::Infeasible(
        "no zero-forcing, regularized or matched-filter precoder meets the SINR targets within the power budget".into(),
    ))
}

fn channel_matrix(env: &Environment) -> CMatrix {
    CMatrix::from_columns(&env.channels)
}

fn normalize_columns(w: CMatrix) -> Option<Vec<CVector>> {
    w.column_iter()
        .map(|c| {
            let n = c.norm();
            (n > 0.0 && n.is_finite()).then(|| c / C64::new(n, 0.0))
        })
        .collect()
}

fn zero_forcing(env: &Environment) -> Option<Vec<CVector>> {
    let h = channel_matrix(env);
    if h.ncols() > h.nrows() {
        return None;
    }
    let gram = h.adjoint() * &h;
    let diag_max = gram.diagonal().iter().map(|z| z.re).fold(0.0, f64::max);
    let eig_min = gram.clone().symmetric_eigenvalues().min();
    if !(eig_min > diag_max * 1e-10) {
        return None;
    }
    let inv = gram.cholesky()?.inverse();
    normalize_columns(&h * inv)
}

fn regularized_zero_forcing(env: &Environment) -> Option<Vec<CVector>> {
    let h = channel_matrix(env);
    let m = h.nrows();
    let noise = env.scenario.users.iter().map(|u| u.noise_power).sum::<f64>() / env.scenario.users.len() as f64;
    let reg = (noise / env.scenario.power_budget).max(1e-12 * h.norm_squared() / m as f64);
    let cov = &h * h.adjoint() + CMatrix::identity(m, m) * C64::new(reg, 0.0);
    let solved = cov.cholesky()?.solve(&h);
    normalize_columns(solved)
}

fn matched_filter(env: &Environment) -> Option<Vec<CVector>> {
    normalize_columns(channel_matrix(env))
}

/// Smallest powers meeting every inflated SINR target with the given
/// directions, or `None` when no non-negative solution exists.
fn minimal_powers(env: &Environment, dirs: &[CVector]) -> Option<Vec<f64>> {
    let k = dirs.len();
    let gains = DMatrix::<f64>::from_fn(k, k, |i, j| env.channels[i].dotc(&dirs[j]).norm_sqr());
    let mut system = DMatrix::<f64>::identity(k, k);
    let mut rhs = nalgebra::DVector::<f64>::zeros(k);
    for i in 0..k {
        let own = gains[(i, i)];
        if !(own > 0.0) {
            return None;
        }
        let gamma = env.scenario.users[i].sinr_target * (1.0 + MARGIN);
        for j in 0..k {
            if j != i {
                system[(i, j)] = -gamma * gains[(i, j)] / own;
            }
        }
        rhs[i] = gamma * env.scenario.users[i].noise_power / own;
    }
    let p = system.lu().solve(&rhs)?;
    p.iter().all(|v| *v > 0.0 && v.is_finite()).then(|| p.iter().copied().collect())
}

/// Part of `v` orthogonal to every user channel, if it is not negligible.
fn null_space_component(env: &Environment, v: &CVector) -> Option<CVector> {
    let h = channel_matrix(env);
    let qr = (h.ncols() <= h.nrows()).then(|| h.clone().qr());
    let full_rank = qr
        .as_ref()
        .is_some_and(|q| q.r().diagonal().iter().all(|d| d.norm() > 1e-10 * h.norm()));
    let residual = if let (true, Some(q)) = (full_rank, qr) {
        let qm = q.q();
        v - &qm * (qm.adjoint() * v)
    } else {
        // Rank-deficient channels: project with a pseudo-inverse.
        let pinv = h.clone().pseudo_inverse(1e-12).ok()?;
        v - &h * (pinv * v)
    };
    (residual.norm() > 1e-8 * v.norm()).then_some(residual)
}
