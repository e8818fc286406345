//! Exact Euclidean projection onto a convex polygon in the plane, by
//! active-set enumeration.
//!
//! The projection of `z` onto `{r : n_i^T r >= c_i}` has at most two active
//! constraints. Every candidate is therefore `z` itself, the foot of `z` on
//! one boundary line, or the intersection of two boundary lines. The nearest
//! feasible candidate is the projection.

use nalgebra::{Matrix2, Vector2};

/// `normal^T r >= offset`, with `normal` of unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub normal: Vector2<f64>,
    pub offset: f64,
}

impl HalfPlane {
    pub fn new(normal: Vector2<f64>, offset: f64) -> Self {
        let len = normal.norm();
        Self {
            normal: normal / len,
            offset: offset / len,
        }
    }

    pub fn slack(&self, r: &Vector2<f64>) -> f64 {
        self.normal.dot(r) - self.offset
    }
}

/// Half-planes of the box `[0, side]^2`.
pub fn box_constraints(side: f64) -> [HalfPlane; 4] {
    [
        HalfPlane::new(Vector2::new(1.0, 0.0), 0.0),
        HalfPlane::new(Vector2::new(-1.0, 0.0), -side),
        HalfPlane::new(Vector2::new(0.0, 1.0), 0.0),
        HalfPlane::new(Vector2::new(0.0, -1.0), -side),
    ]
}

/// Closest point to `z` satisfying every half-plane within `tol`, or `None`
/// when no candidate is feasible.
pub fn project(z: &Vector2<f64>, planes: &[HalfPlane], tol: f64) -> Option<Vector2<f64>> {
    let feasible = |r: &Vector2<f64>| planes.iter().all(|p| p.slack(r) >= -tol);
    if feasible(z) {
        return Some(*z);
    }
    let mut best: Option<(f64, Vector2<f64>)> = None;
    let mut consider = |r: Vector2<f64>| {
        if feasible(&r) {
            let d = (r - z).norm_squared();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, r));
            }
        }
    };
    for p in planes {
        consider(z - p.normal * p.slack(z));
    }
    for (i, p) in planes.iter().enumerate() {
        for q in &planes[i + 1..] {
            let m = Matrix2::new(p.normal.x, p.normal.y, q.normal.x, q.normal.y);
            let det = m.determinant();
            if det.abs() < 1e-12 {
                continue;
            }
            if let Some(inv) = m.try_inverse() {
                consider(inv * Vector2::new(p.offset, q.offset));
            }
        }
    }
    best.map(|(_, r)| r)
}
