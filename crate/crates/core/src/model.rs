//! Physical-layer model of the fluid-antenna ISAC link.
//!
//! The base station transmits through a fixed `Mx x My` uniform planar array
//! and receives radar echoes on `N` fluid antennas that can sit anywhere in
//! the square region `[0, A]^2`. Everything here is a closed-form function
//! of the scenario, the transmit precoder `W` (M x K) and the receive
//! positions:
//!
//! * transmit steering `a_t(psi, theta)`: Kronecker product of the x-ramp in
//!   `sin(psi) cos(theta)` and the y-ramp in `cos(psi)`, x-index major;
//! * receive steering `a_r(theta, phi, r)` with entries
//!   `exp(j 2 pi / lambda * (x_n sin(theta) cos(phi) + y_n cos(theta)))`;
//! * effective echo matrix `A = a_r a_t^T` (plain transpose);
//! * clutter-plus-noise covariance
//!   `J = sum_i |alpha_i|^2 A_i W W^H A_i^H + sigma_0^2 I`;
//! * radar SCNR `|alpha_0|^2 tr(A^H J^-1 A W W^H)`;
//! * user SINR `|h_k^H w_k|^2 / (sum_{j != k} |h_k^H w_j|^2 + sigma_k^2)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector2};
use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;

/// Transmit UPA plus the fluid-antenna receive region.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    tx_x: usize,
    tx_y: usize,
    tx_spacing: f64,
    rx_count: usize,
    region_side: f64,
    min_distance: f64,
    wavelength: f64,
}

impl ArrayGeometry {
    /// Validates the configuration. A receive region is accepted when the
    /// `ceil(sqrt(N))`-column grid at spacing `D` fits inside it, which is
    /// the layout used to initialize the position optimizer.
    pub fn new(
        tx_x: usize,
        tx_y: usize,
        tx_spacing: f64,
        rx_count: usize,
        region_side: f64,
        min_distance: f64,
        wavelength: f64,
    ) -> Result<Self> {
        if tx_x == 0 || tx_y == 0 {
            return Err(Error::InvalidGeometry("transmit array must have at least one element".into()));
        }
        if rx_count == 0 {
            return Err(Error::InvalidGeometry("need at least one receive antenna".into()));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::InvalidGeometry(format!("wavelength must be positive, got {wavelength}")));
        }
        if !(min_distance > 0.0 && min_distance.is_finite()) {
            return Err(Error::InvalidGeometry(format!("minimum distance must be positive, got {min_distance}")));
        }
        if !(region_side >= 0.0 && region_side.is_finite()) {
            return Err(Error::InvalidGeometry(format!("region side must be non-negative, got {region_side}")));
        }
        if !(tx_spacing >= 0.0 && tx_spacing.is_finite()) {
            return Err(Error::InvalidGeometry(format!("transmit spacing must be non-negative, got {tx_spacing}")));
        }
        let geom = Self {
            tx_x,
            tx_y,
            tx_spacing,
            rx_count,
            region_side,
            min_distance,
            wavelength,
        };
        let (cols, rows) = geom.grid_shape();
        let span = (cols.max(rows) - 1) as f64 * min_distance;
        if span > region_side * (1.0 + 1e-12) {
            return Err(Error::InvalidGeometry(format!(
                "{rx_count} antennas at spacing {min_distance} need a {span} m square, region side is {region_side} m"
            )));
        }
        Ok(geom)
    }

    /// The simulation setup used throughout: 8x8 half-wavelength UPA,
    /// 4 fluid antennas, `lambda = 0.015 m`, `D = lambda / 2`, and a region
    /// side of `region_wavelengths * lambda`.
    pub fn full_scale(region_wavelengths: f64) -> Result<Self> {
        let lambda = 0.015;
        Self::new(8, 8, lambda / 2.0, 4, region_wavelengths * lambda, lambda / 2.0, lambda)
    }

    pub fn tx_x(&self) -> usize {
        self.tx_x
    }

    pub fn tx_y(&self) -> usize {
        self.tx_y
    }

    /// Number of transmit antennas `M = Mx * My`.
    pub fn tx_count(&self) -> usize {
        self.tx_x * self.tx_y
    }

    pub fn tx_spacing(&self) -> f64 {
        self.tx_spacing
    }

    pub fn rx_count(&self) -> usize {
        self.rx_count
    }

    pub fn region_side(&self) -> f64 {
        self.region_side
    }

    pub fn min_distance(&self) -> f64 {
        self.min_distance
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// `2 pi / lambda`.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Same geometry with a different region side.
    pub fn with_region_side(&self, region_side: f64) -> Result<Self> {
        Self::new(
            self.tx_x,
            self.tx_y,
            self.tx_spacing,
            self.rx_count,
            region_side,
            self.min_distance,
            self.wavelength,
        )
    }

    /// Columns and rows of the planar receive grid: `ceil(sqrt(N))` columns,
    /// last row possibly partial.
    pub fn grid_shape(&self) -> (usize, usize) {
        let mut cols = (self.rx_count as f64).sqrt().ceil() as usize;
        while cols * cols < self.rx_count {
            cols += 1;
        }
        while cols > 1 && (cols - 1) * (cols - 1) >= self.rx_count {
            cols -= 1;
        }
        let rows = self.rx_count.div_ceil(cols);
        (cols, rows)
    }

    /// Planar grid at spacing `D` whose bounding box is centered in the
    /// region. Rows are filled in order; a partial last row is left-aligned.
    pub fn centered_grid(&self) -> Positions {
        let (cols, rows) = self.grid_shape();
        let d = self.min_distance;
        let center = self.region_side / 2.0;
        let x0 = center - (cols - 1) as f64 * d / 2.0;
        let y0 = center - (rows - 1) as f64 * d / 2.0;
        let points = (0..self.rx_count)
            .map(|i| Vector2::new(x0 + (i % cols) as f64 * d, y0 + (i / cols) as f64 * d))
            .collect();
        Positions::new(points)
    }
}

/// One propagation path towards a user: complex gain plus elevation and
/// azimuth angles of departure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: C64,
    pub elevation: f64,
    pub azimuth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct User {
    pub paths: Vec<Path>,
    /// Receiver noise power in watts.
    pub noise_power: f64,
    /// Linear SINR requirement.
    pub sinr_target: f64,
}

/// A point scatterer seen by the radar: the target or one clutter patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub coefficient: C64,
    pub elevation: f64,
    pub azimuth: f64,
}

/// One random realization of users, target, clutter and noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub users: Vec<User>,
    pub target: Scatterer,
    pub clutter: Vec<Scatterer>,
    /// Radar receiver noise power `sigma_0^2` in watts.
    pub radar_noise_power: f64,
    /// Transmit power budget `P_0` in watts.
    pub power_budget: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.radar_noise_power) {
            return Err(Error::InvalidScenario("radar noise power must be positive".into()));
        }
        if !positive(self.power_budget) {
            return Err(Error::InvalidScenario("power budget must be positive".into()));
        }
        let scatterer_ok = |s: &Scatterer| {
            s.elevation.is_finite() && s.azimuth.is_finite() && s.coefficient.re.is_finite() && s.coefficient.im.is_finite()
        };
        if !scatterer_ok(&self.target) {
            return Err(Error::InvalidScenario("target parameters must be finite".into()));
        }
        if let Some(i) = self.clutter.iter().position(|c| !scatterer_ok(c)) {
            return Err(Error::InvalidScenario(format!("clutter {i} has non-finite parameters")));
        }
        for (k, user) in self.users.iter().enumerate() {
            if user.paths.is_empty() {
                return Err(Error::InvalidScenario(format!("user {k} has no paths")));
            }
            if !positive(user.noise_power) || !positive(user.sinr_target) {
                return Err(Error::InvalidScenario(format!(
                    "user {k} needs positive noise power and SINR target"
                )));
            }
            let finite = user.paths.iter().all(|p| {
                p.elevation.is_finite() && p.azimuth.is_finite() && p.gain.re.is_finite() && p.gain.im.is_finite()
            });
            if !finite {
                return Err(Error::InvalidScenario(format!("user {k} has non-finite path parameters")));
            }
        }
        Ok(())
    }

    /// Number of data streams, i.e. precoder columns. A scenario without
    /// users still radiates one sensing stream.
    pub fn stream_count(&self) -> usize {
        self.users.len().max(1)
    }
}

/// Receive antenna coordinates in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Positions(Vec<Vector2<f64>>);

impl Positions {
    pub fn new(points: Vec<Vector2<f64>>) -> Self {
        Self(points)
    }

    pub fn from_xy(points: &[(f64, f64)]) -> Self {
        Self(points.iter().map(|&(x, y)| Vector2::new(x, y)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn points(&self) -> &[Vector2<f64>] {
        &self.0
    }

    pub fn get(&self, n: usize) -> Vector2<f64> {
        self.0[n]
    }

    pub fn set(&mut self, n: usize, point: Vector2<f64>) {
        self.0[n] = point;
    }

    /// Smallest pairwise distance, `+inf` for fewer than two antennas.
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.0.iter().enumerate() {
            for b in &self.0[i + 1..] {
                best = best.min((a - b).norm());
            }
        }
        best
    }

    /// Largest distance by which any coordinate leaves `[0, side]`.
    pub fn region_violation(&self, side: f64) -> f64 {
        self.0
            .iter()
            .flat_map(|p| [p.x, p.y])
            .map(|c| (-c).max(c - side).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Region membership and minimum spacing, both with a relative slack of
    /// `1e-9`.
    pub fn feasible(&self, geom: &ArrayGeometry) -> bool {
        let slack = 1e-9;
        self.region_violation(geom.region_side()) <= slack * geom.region_side().max(geom.min_distance())
            && self.min_pairwise_distance() >= geom.min_distance() * (1.0 - slack)
    }
}

/// Transmit precoder `W`, one column per stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder(CMatrix);

impl Precoder {
    pub fn new(matrix: CMatrix) -> Self {
        Self(matrix)
    }

    pub fn zeros(tx_count: usize, streams: usize) -> Self {
        Self(CMatrix::zeros(tx_count, streams))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    /// `tr(W W^H)`.
    pub fn power(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn streams(&self) -> usize {
        self.0.ncols()
    }
}

/// `x_n sin(theta) cos(phi) + y_n cos(theta)`: path-length difference between
/// the antenna at `r` and the origin for a plane wave from `(theta, phi)`.
pub fn path_difference(r: &Vector2<f64>, theta: f64, phi: f64) -> f64 {
    r.x * theta.sin() * phi.cos() + r.y * theta.cos()
}

/// Gradient of [`path_difference`] with respect to `r`.
pub fn path_difference_gradient(theta: f64, phi: f64) -> Vector2<f64> {
    Vector2::new(theta.sin() * phi.cos(), theta.cos())
}

/// UPA steering vector. Element `ix * My + iy` carries phase
/// `2 pi d / lambda * (ix sin(psi) cos(theta) + iy cos(psi))`.
pub fn transmit_steering(psi: f64, theta: f64, geom: &ArrayGeometry) -> CVector {
    let k = geom.wavenumber() * geom.tx_spacing();
    let ux = psi.sin() * theta.cos();
    let uy = psi.cos();
    let my = geom.tx_y();
    CVector::from_fn(geom.tx_count(), |i, _| {
        let (ix, iy) = (i / my, i % my);
        C64::from_polar(1.0, k * (ix as f64 * ux + iy as f64 * uy))
    })
}

/// Far-field receive steering vector over the fluid antennas.
pub fn receive_steering(theta: f64, phi: f64, positions: &Positions, geom: &ArrayGeometry) -> CVector {
    let k = geom.wavenumber();
    CVector::from_iterator(
        positions.len(),
        positions
            .points()
            .iter()
            .map(|r| C64::from_polar(1.0, k * path_difference(r, theta, phi))),
    )
}

/// Saleh-Valenzuela channel `sqrt(1/L) sum_l rho_l a_t(psi_l, theta_l)`.
pub fn user_channel(user: &User, geom: &ArrayGeometry) -> CVector {
    let scale = (1.0 / user.paths.len() as f64).sqrt();
    let mut h = CVector::zeros(geom.tx_count());
    for path in &user.paths {
        h += transmit_steering(path.elevation, path.azimuth, geom) * path.gain;
    }
    h * C64::new(scale, 0.0)
}

/// `A(theta, phi, r) = a_r a_t^T`, an `N x M` rank-one matrix.
pub fn effective_matrix(theta: f64, phi: f64, positions: &Positions, geom: &ArrayGeometry) -> CMatrix {
    let ar = receive_steering(theta, phi, positions, geom);
    let at = transmit_steering(theta, phi, geom);
    &ar * at.transpose()
}

/// Precomputed transmit-side responses of one scenario on one array.
///
/// Nothing cached here depends on the receive positions or the precoder, so
/// one `Environment` serves every iteration of a solve.
#[derive(Debug, Clone)]
pub struct Environment<'a> {
    pub scenario: &'a Scenario,
    pub geometry: &'a ArrayGeometry,
    /// `a_t(theta_0, phi_0)`.
    pub target_tx: CVector,
    /// `a_t(theta_i, phi_i)` per clutter patch.
    pub clutter_tx: Vec<CVector>,
    /// `h_k` per user.
    pub channels: Vec<CVector>,
}

impl<'a> Environment<'a> {
    pub fn new(scenario: &'a Scenario, geometry: &'a ArrayGeometry) -> Self {
        let target_tx = transmit_steering(scenario.target.elevation, scenario.target.azimuth, geometry);
        let clutter_tx = scenario
            .clutter
            .iter()
            .map(|c| transmit_steering(c.elevation, c.azimuth, geometry))
            .collect();
        let channels = scenario.users.iter().map(|u| user_channel(u, geometry)).collect();
        Self {
            scenario,
            geometry,
            target_tx,
            clutter_tx,
            channels,
        }
    }

    pub fn tx_count(&self) -> usize {
        self.geometry.tx_count()
    }

    pub fn streams(&self) -> usize {
        self.scenario.stream_count()
    }

    pub fn target_rx(&self, positions: &Positions) -> CVector {
        receive_steering(self.scenario.target.elevation, self.scenario.target.azimuth, positions, self.geometry)
    }

    pub fn clutter_rx(&self, positions: &Positions) -> Vec<CVector> {
        self.scenario
            .clutter
            .iter()
            .map(|c| receive_steering(c.elevation, c.azimuth, positions, self.geometry))
            .collect()
    }

    /// `A(theta_0, phi_0, r)`.
    pub fn target_matrix(&self, positions: &Positions) -> CMatrix {
        self.target_rx(positions) * self.target_tx.transpose()
    }

    /// `A(theta_i, phi_i, r)` per clutter patch.
    pub fn clutter_matrices(&self, positions: &Positions) -> Vec<CMatrix> {
        self.clutter_rx(positions)
            .into_iter()
            .zip(&self.clutter_tx)
            .map(|(ar, at)| ar * at.transpose())
            .collect()
    }

    /// Transmit power radiated towards each clutter patch,
    /// `p_i = a_t^T W W^H a_t^* = ||W^T a_t||^2`.
    pub fn clutter_illumination(&self, w: &CMatrix) -> Vec<f64> {
        self.clutter_tx.iter().map(|at| (w.transpose() * at).norm_squared()).collect()
    }

    /// `C` with `J = sigma_0^2 I + C C^H`: column `i` is
    /// `sqrt(|alpha_i|^2 p_i) a_r,i`, since `A_i W = a_r,i (a_t,i^T W)`.
    pub fn clutter_factor(&self, w: &CMatrix, positions: &Positions) -> CMatrix {
        let rx = self.clutter_rx(positions);
        let mut c = CMatrix::zeros(positions.len(), rx.len());
        for (i, ((scatterer, ar), p)) in self.scenario.clutter.iter().zip(rx).zip(self.clutter_illumination(w)).enumerate() {
            let weight = (scatterer.coefficient.norm_sqr() * p).sqrt();
            c.set_column(i, &(ar * C64::new(weight, 0.0)));
        }
        c
    }

    /// Clutter-plus-noise covariance `J`.
    pub fn clutter_plus_noise(&self, w: &CMatrix, positions: &Positions) -> CMatrix {
        let n = positions.len();
        let c = self.clutter_factor(w, positions);
        let mut j = CMatrix::identity(n, n) * C64::new(self.scenario.radar_noise_power, 0.0) + &c * c.adjoint();
        hermitize(&mut j);
        j
    }

    pub fn covariance_inverse(&self, w: &CMatrix, positions: &Positions) -> CovarianceInverse {
        CovarianceInverse::new(&self.clutter_factor(w, positions), self.scenario.radar_noise_power)
    }

    /// Radar output SCNR `|alpha_0|^2 tr((A W)^H J^-1 (A W))`.
    pub fn scnr(&self, w: &CMatrix, positions: &Positions) -> f64 {
        let alpha_sq = self.scenario.target.coefficient.norm_sqr();
        if alpha_sq == 0.0 {
            return 0.0;
        }
        let aw = self.target_matrix(positions) * w;
        let tr = self.covariance_inverse(w, positions).quadratic_trace(&aw);
        (alpha_sq * tr).max(0.0)
    }

    /// SINR of user `k` (zero-based).
    pub fn sinr(&self, k: usize, w: &CMatrix) -> f64 {
        let h = &self.channels[k];
        let gains = w.adjoint() * h;
        let signal = gains[k].norm_sqr();
        let interference: f64 = gains.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, g)| g.norm_sqr()).sum();
        signal / (interference + self.scenario.users[k].noise_power)
    }

    pub fn sinrs(&self, w: &CMatrix) -> Vec<f64> {
        (0..self.channels.len()).map(|k| self.sinr(k, w)).collect()
    }
}

/// `J^-1` for `J = sigma_0^2 I + C C^H`, through the SVD of `C`.
///
/// Forming `J` and factoring it would bound the error in every direction by
/// `eps ||J||`, which swamps the noise floor once some clutter is strong and
/// some is nulled. The singular values of `C` carry absolute error
/// `eps ||C||` instead, so `s^2 + sigma_0^2` stays accurate where `s` is small.
#[derive(Debug, Clone)]
pub struct CovarianceInverse {
    u: CMatrix,
    inv_eigs: DVector<f64>,
}

impl CovarianceInverse {
    pub fn new(factor: &CMatrix, noise: f64) -> Self {
        let n = factor.nrows();
        let cols = factor.ncols().max(n);
        let mut padded = CMatrix::zeros(n, cols);
        padded.columns_mut(0, factor.ncols()).copy_from(factor);
        let svd = padded.svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let inv_eigs = svd.singular_values.map(|s| 1.0 / (s * s + noise));
        Self { u, inv_eigs }
    }

    pub fn solve(&self, rhs: &CMatrix) -> CMatrix {
        let mut proj = self.u.adjoint() * rhs;
        for (mut row, &d) in proj.row_iter_mut().zip(self.inv_eigs.iter()) {
            row *= C64::new(d, 0.0);
        }
        &self.u * proj
    }

    /// `tr(X^H J^-1 X)`, summed from non-negative terms.
    pub fn quadratic_trace(&self, x: &CMatrix) -> f64 {
        let proj = self.u.adjoint() * x;
        proj.row_iter()
            .zip(self.inv_eigs.iter())
            .map(|(row, &d)| d * row.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum()
    }
}

/// Convenience wrapper around [`Environment::clutter_plus_noise`].
pub fn clutter_plus_noise(w: &Precoder, positions: &Positions, scenario: &Scenario, geom: &ArrayGeometry) -> CMatrix {
    Environment::new(scenario, geom).clutter_plus_noise(w.matrix(), positions)
}

/// Convenience wrapper around [`Environment::scnr`].
pub fn scnr(w: &Precoder, positions: &Positions, scenario: &Scenario, geom: &ArrayGeometry) -> f64 {
    Environment::new(scenario, geom).scnr(w.matrix(), positions)
}

/// Convenience wrapper around [`Environment::sinr`]; `k` is zero-based.
pub fn sinr(k: usize, w: &Precoder, scenario: &Scenario, geom: &ArrayGeometry) -> f64 {
    Environment::new(scenario, geom).sinr(k, w.matrix())
}

/// Forces exact Hermitian symmetry after accumulation round-off.
pub(crate) fn hermitize(m: &mut CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in i + 1..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// Real part of `tr(X^H Y)`, the real inner product on complex matrices.
pub(crate) fn real_inner(x: &CMatrix, y: &CMatrix) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| a.re * b.re + a.im * b.im).sum()
}
