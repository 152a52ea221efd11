//! Filter process model: heliocentric gravity, cannonball solar radiation
//! pressure, third-body terms and two first-order Gauss–Markov
//! acceleration processes, with joint state/covariance propagation in
//! non-dimensional units.

use nalgebra::{SMatrix, SVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::constants::{AU_KM, MU_SUN, SECONDS_PER_DAY, SPEED_OF_LIGHT, SUN_RADIUS_KM};
use crate::ephemeris::{Ephemeris, PlanetId};
use crate::error::{NavError, Result};
use crate::integrator::{integrate, integrate_scaled, Dopri5Config};
use crate::math::{symmetrize, Mat3, Vec3};

pub type Vec12 = SVector<f64, 12>;
pub type Mat12 = SMatrix<f64, 12, 12>;

/// Solar flux at the photosphere [W/m^2] (nominal luminosity over 4 pi R0^2).
pub const SOLAR_SURFACE_FLUX: f64 = 6.294e7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub r: Vec3,
    pub v: Vec3,
    pub eta_r: Vec3,
    pub eta_srp: Vec3,
}

impl StateVector {
    pub fn new(r: Vec3, v: Vec3) -> Self {
        Self {
            r,
            v,
            eta_r: Vec3::zeros(),
            eta_srp: Vec3::zeros(),
        }
    }

    pub fn to_vector(&self) -> Vec12 {
        let mut x = Vec12::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.r);
        x.fixed_rows_mut::<3>(3).copy_from(&self.v);
        x.fixed_rows_mut::<3>(6).copy_from(&self.eta_r);
        x.fixed_rows_mut::<3>(9).copy_from(&self.eta_srp);
        x
    }

    pub fn from_vector(x: &Vec12) -> Self {
        Self {
            r: x.fixed_rows::<3>(0).into_owned(),
            v: x.fixed_rows::<3>(3).into_owned(),
            eta_r: x.fixed_rows::<3>(6).into_owned(),
            eta_srp: x.fixed_rows::<3>(9).into_owned(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.to_vector().iter().all(|c| c.is_finite()) {
            return Err(NavError::InvalidArgument("non-finite state".into()));
        }
        if self.r.norm() <= SUN_RADIUS_KM {
            return Err(NavError::InvalidArgument("state inside the Sun".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsParams {
    /// [km^3/s^2]
    pub mu_sun: f64,
    /// Third bodies and their gravitational parameters [km^3/s^2].
    pub third_bodies: Vec<(PlanetId, f64)>,
    /// Speed of light used by the radiation-pressure term [km/s].
    pub c: f64,
    pub c_r: f64,
    /// Solar flux at radius `r0_km` [W/m^2].
    pub p0: f64,
    pub r0_km: f64,
    pub area_m2: f64,
    pub mass_kg: f64,
    /// Reciprocal of the Gauss–Markov correlation time [1/s].
    pub xi: f64,
    /// Driving white-noise intensities of the two GM processes [km/s^2/sqrt(s)].
    pub sigma_r: f64,
    pub sigma_srp: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        let xi = 1.0 / SECONDS_PER_DAY;
        let sigma = gm_driving_sigma(1e-10, xi);
        Self {
            mu_sun: MU_SUN,
            third_bodies: [PlanetId::Earth, PlanetId::Mars, PlanetId::Jupiter]
                .into_iter()
                .map(|p| (p, p.mu()))
                .collect(),
            c: SPEED_OF_LIGHT,
            c_r: 1.3,
            p0: SOLAR_SURFACE_FLUX,
            r0_km: SUN_RADIUS_KM,
            area_m2: 0.1,
            mass_kg: 20.0,
            xi,
            sigma_r: sigma,
            sigma_srp: sigma,
        }
    }
}

/// Driving-noise intensity giving a stationary standard deviation
/// `stationary_sigma` for a GM process with reciprocal correlation time `xi`.
pub fn gm_driving_sigma(stationary_sigma: f64, xi: f64) -> f64 {
    stationary_sigma * (2.0 * xi).sqrt()
}

impl DynamicsParams {
    /// Default filter model plus Venus and Saturn, used to generate truth.
    pub fn truth_default() -> Self {
        let mut p = Self::default();
        for body in [PlanetId::Venus, PlanetId::Saturn] {
            p.third_bodies.push((body, body.mu()));
        }
        p
    }

    /// Coefficient `k` of the radiation-pressure acceleration `k r / |r|^3` [km^3/s^2].
    pub fn srp_coefficient(&self) -> f64 {
        // W/m^2 over m/s gives N/m^2; times m^2/kg gives m/s^2 at r = r0.
        let accel_at_r0_km_s2 = self.c_r * self.p0 / (self.c * 1e3) * self.area_m2 / self.mass_kg * 1e-3;
        accel_at_r0_km_s2 * self.r0_km * self.r0_km
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mu_sun", self.mu_sun),
            ("c", self.c),
            ("r0_km", self.r0_km),
            ("mass_kg", self.mass_kg),
            ("xi", self.xi),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(NavError::Config(format!("{name} must be positive")));
            }
        }
        let non_negative = [
            ("c_r", self.c_r),
            ("p0", self.p0),
            ("area_m2", self.area_m2),
            ("sigma_r", self.sigma_r),
            ("sigma_srp", self.sigma_srp),
        ];
        for (name, value) in non_negative {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(NavError::Config(format!("{name} must be non-negative")));
            }
        }
        if self.third_bodies.iter().any(|(_, mu)| !(*mu > 0.0)) {
            return Err(NavError::Config("third-body mu must be positive".into()));
        }
        Ok(())
    }
}

/// Distance and time units of the non-dimensional formulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSet {
    pub du: f64,
    pub tu: f64,
}

impl Default for ScaleSet {
    fn default() -> Self {
        Self::new(AU_KM, MU_SUN)
    }
}

impl ScaleSet {
    pub fn new(du: f64, mu: f64) -> Self {
        Self {
            du,
            tu: (du * du * du / mu).sqrt(),
        }
    }

    /// Scales that leave every quantity in km and s.
    pub fn identity() -> Self {
        Self { du: 1.0, tu: 1.0 }
    }

    pub fn vu(&self) -> f64 {
        self.du / self.tu
    }

    pub fn acc_unit(&self) -> f64 {
        self.du / (self.tu * self.tu)
    }

    pub fn mu_unit(&self) -> f64 {
        self.du * self.du * self.du / (self.tu * self.tu)
    }

    fn units(&self) -> Vec12 {
        let (d, v, a) = (self.du, self.vu(), self.acc_unit());
        Vec12::from_column_slice(&[d, d, d, v, v, v, a, a, a, a, a, a])
    }

    pub fn state_to_nd(&self, x: &Vec12) -> Vec12 {
        x.component_div(&self.units())
    }

    pub fn state_from_nd(&self, x: &Vec12) -> Vec12 {
        x.component_mul(&self.units())
    }

    pub fn cov_to_nd(&self, p: &Mat12) -> Mat12 {
        let u = self.units();
        Mat12::from_fn(|i, j| p[(i, j)] / (u[i] * u[j]))
    }

    pub fn cov_from_nd(&self, p: &Mat12) -> Mat12 {
        let u = self.units();
        Mat12::from_fn(|i, j| p[(i, j)] * u[i] * u[j])
    }

    pub fn time_to_nd(&self, t: f64) -> f64 {
        t / self.tu
    }

    pub fn time_from_nd(&self, t: f64) -> f64 {
        t * self.tu
    }
}

/// Model constants expressed in a given unit system.
#[derive(Clone, Debug)]
struct Field {
    mu: f64,
    k_srp: f64,
    xi: f64,
    bodies: Vec<(PlanetId, f64)>,
    scales: ScaleSet,
}

impl Field {
    fn new(params: &DynamicsParams, scales: ScaleSet) -> Self {
        let mu_unit = scales.mu_unit();
        Self {
            mu: params.mu_sun / mu_unit,
            k_srp: params.srp_coefficient() / mu_unit,
            xi: params.xi * scales.tu,
            bodies: params.third_bodies.iter().map(|&(p, mu)| (p, mu / mu_unit)).collect(),
            scales,
        }
    }

    fn body_positions(&self, eph: &Ephemeris, t: f64) -> Vec<(Vec3, f64)> {
        let t_sec = self.scales.time_from_nd(t);
        self.bodies
            .iter()
            .map(|&(p, mu)| {
                let r = eph.position_unchecked(p, t_sec).unwrap_or_else(Vec3::zeros);
                (r / self.scales.du, mu)
            })
            .collect()
    }

    fn derivative(&self, x: &Vec12, bodies: &[(Vec3, f64)]) -> Vec12 {
        let r: Vec3 = x.fixed_rows::<3>(0).into_owned();
        let v: Vec3 = x.fixed_rows::<3>(3).into_owned();
        let eta_r: Vec3 = x.fixed_rows::<3>(6).into_owned();
        let eta_s: Vec3 = x.fixed_rows::<3>(9).into_owned();
        let rn = r.norm();
        let mut a = r * ((self.k_srp - self.mu) / (rn * rn * rn));
        for (r_i, mu_i) in bodies {
            let d = r_i - r;
            let dn = d.norm();
            let ri = r_i.norm();
            a += *mu_i * (d / (dn * dn * dn) - r_i / (ri * ri * ri));
        }
        a += eta_r + eta_s;
        let mut dx = Vec12::zeros();
        dx.fixed_rows_mut::<3>(0).copy_from(&v);
        dx.fixed_rows_mut::<3>(3).copy_from(&a);
        dx.fixed_rows_mut::<3>(6).copy_from(&(-self.xi * eta_r));
        dx.fixed_rows_mut::<3>(9).copy_from(&(-self.xi * eta_s));
        dx
    }

    fn jacobian(&self, x: &Vec12, bodies: &[(Vec3, f64)]) -> Mat12 {
        let r: Vec3 = x.fixed_rows::<3>(0).into_owned();
        let eye = Mat3::identity();
        let point = |d: &Vec3| {
            let n = d.norm();
            eye / (n * n * n) - d * d.transpose() * (3.0 / (n * n * n * n * n))
        };
        let mut dadr = point(&r) * (self.k_srp - self.mu);
        for (r_i, mu_i) in bodies {
            dadr -= point(&(r_i - r)) * *mu_i;
        }
        let mut f = Mat12::zeros();
        f.fixed_view_mut::<3, 3>(0, 3).copy_from(&eye);
        f.fixed_view_mut::<3, 3>(3, 0).copy_from(&dadr);
        f.fixed_view_mut::<3, 3>(3, 6).copy_from(&eye);
        f.fixed_view_mut::<3, 3>(3, 9).copy_from(&eye);
        f.fixed_view_mut::<3, 3>(6, 6).copy_from(&(-self.xi * eye));
        f.fixed_view_mut::<3, 3>(9, 9).copy_from(&(-self.xi * eye));
        f
    }
}

fn check_bodies(params: &DynamicsParams, eph: &Ephemeris) -> Result<()> {
    for (p, _) in &params.third_bodies {
        eph.get(*p)?;
    }
    Ok(())
}

fn body_positions_checked(params: &DynamicsParams, eph: &Ephemeris, t: f64) -> Result<Vec<(Vec3, f64)>> {
    eph.check_epoch(t)?;
    params
        .third_bodies
        .iter()
        .map(|&(p, mu)| Ok((eph.planet_state(p, t)?.0, mu)))
        .collect()
}

fn check_geometry(x: &StateVector, bodies: &[(Vec3, f64)]) -> Result<()> {
    if x.r.norm() == 0.0 || bodies.iter().any(|(r_i, _)| (r_i - x.r).norm() == 0.0) {
        return Err(NavError::Degenerate("singular gravity evaluation".into()));
    }
    Ok(())
}

/// Deterministic part of the state derivative in km and s.
pub fn state_derivative(x: &StateVector, t: f64, params: &DynamicsParams, eph: &Ephemeris) -> Result<Vec12> {
    let bodies = body_positions_checked(params, eph, t)?;
    check_geometry(x, &bodies)?;
    Ok(Field::new(params, ScaleSet::identity()).derivative(&x.to_vector(), &bodies))
}

/// Analytic Jacobian of [`state_derivative`] with respect to the state.
pub fn dynamics_jacobian(x: &StateVector, t: f64, params: &DynamicsParams, eph: &Ephemeris) -> Result<Mat12> {
    let bodies = body_positions_checked(params, eph, t)?;
    check_geometry(x, &bodies)?;
    Ok(Field::new(params, ScaleSet::identity()).jacobian(&x.to_vector(), &bodies))
}

/// Process-noise spectral density `diag(0, Q_a, Q_R, Q_SRP)` in km and s.
pub fn process_noise(params: &DynamicsParams) -> Mat12 {
    let q_r = params.sigma_r * params.sigma_r;
    let q_s = params.sigma_srp * params.sigma_srp;
    let q_a = (q_r + q_s) / (2.0 * params.xi);
    let diag = [0.0, 0.0, 0.0, q_a, q_a, q_a, q_r, q_r, q_r, q_s, q_s, q_s];
    Mat12::from_diagonal(&Vec12::from_column_slice(&diag))
}

fn process_noise_nd(params: &DynamicsParams, scales: &ScaleSet) -> Mat12 {
    // Spectral densities carry one extra factor of time.
    scales.cov_to_nd(&process_noise(params)) * scales.tu
}

/// Relative tolerance on covariance entries during joint propagation.
const COV_RTOL: f64 = 1e-10;

pub fn integrator_config() -> Dopri5Config {
    Dopri5Config {
        rtol: 1e-12,
        atol: 1e-15,
        ..Dopri5Config::default()
    }
}

/// Joint propagation of the state and its covariance from `t0` to `t1`
/// (seconds past J2000), integrated in the non-dimensional units of `scales`.
pub fn propagate(
    x: &StateVector,
    p: &Mat12,
    t0: f64,
    t1: f64,
    params: &DynamicsParams,
    scales: &ScaleSet,
    eph: &Ephemeris,
) -> Result<(StateVector, Mat12)> {
    if t1 < t0 {
        return Err(NavError::InvalidArgument("propagation backwards in time".into()));
    }
    if t1 == t0 {
        return Ok((*x, *p));
    }
    eph.check_epoch(t0)?;
    eph.check_epoch(t1)?;
    check_bodies(params, eph)?;
    let field = Field::new(params, *scales);
    let q = process_noise_nd(params, scales);

    let mut y = vec![0.0; 12 + 144];
    y[..12].copy_from_slice(scales.state_to_nd(&x.to_vector()).as_slice());
    y[12..].copy_from_slice(scales.cov_to_nd(p).as_slice());
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let xs = Vec12::from_column_slice(&y[..12]);
        let pm = Mat12::from_column_slice(&y[12..]);
        let bodies = field.body_positions(eph, t);
        dy[..12].copy_from_slice(field.derivative(&xs, &bodies).as_slice());
        let f = field.jacobian(&xs, &bodies);
        let fp = f * pm;
        let dp = fp + fp.transpose() + q;
        dy[12..].copy_from_slice(dp.as_slice());
    };
    let symmetrize_cov = |y: &mut [f64]| {
        let mut pm = Mat12::from_column_slice(&y[12..]);
        symmetrize(&mut pm);
        y[12..].copy_from_slice(pm.as_slice());
    };
    let cfg = integrator_config();
    // Covariance entries are controlled relative to the geometric mean of
    // the matching variances, with an absolute floor built from negligible
    // standard deviations (1 m, 1 um/s, 1e-16 km/s^2).
    let floor = scales.state_to_nd(&Vec12::from_column_slice(&[
        1e-3, 1e-3, 1e-3, 1e-9, 1e-9, 1e-9, 1e-16, 1e-16, 1e-16, 1e-16, 1e-16, 1e-16,
    ]));
    let err_scale = |a: &[f64], b: &[f64], i: usize| {
        if i < 12 {
            cfg.atol + cfg.rtol * a[i].abs().max(b[i].abs())
        } else {
            let (r, c) = ((i - 12) % 12, (i - 12) / 12);
            let var = |y: &[f64], k: usize| y[12 + 13 * k].abs();
            let s = (var(a, r) * var(a, c)).sqrt().max((var(b, r) * var(b, c)).sqrt());
            floor[r] * floor[c] + COV_RTOL * s
        }
    };
    integrate_scaled(
        rhs,
        scales.time_to_nd(t0),
        &mut y,
        scales.time_to_nd(t1),
        &cfg,
        symmetrize_cov,
        err_scale,
    )?;
    let x1 = StateVector::from_vector(&scales.state_from_nd(&Vec12::from_column_slice(&y[..12])));
    let mut p1 = scales.cov_from_nd(&Mat12::from_column_slice(&y[12..]));
    symmetrize(&mut p1);
    Ok((x1, p1))
}

/// State-only propagation under the deterministic field.
pub fn propagate_state(
    x: &StateVector,
    t0: f64,
    t1: f64,
    params: &DynamicsParams,
    scales: &ScaleSet,
    eph: &Ephemeris,
) -> Result<StateVector> {
    if t1 == t0 {
        return Ok(*x);
    }
    eph.check_epoch(t0)?;
    eph.check_epoch(t1)?;
    check_bodies(params, eph)?;
    let field = Field::new(params, *scales);
    let mut y = scales.state_to_nd(&x.to_vector());
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let xs = Vec12::from_column_slice(y);
        let bodies = field.body_positions(eph, t);
        dy.copy_from_slice(field.derivative(&xs, &bodies).as_slice());
    };
    integrate(
        rhs,
        scales.time_to_nd(t0),
        y.as_mut_slice(),
        scales.time_to_nd(t1),
        &integrator_config(),
        |_| {},
    )?;
    Ok(StateVector::from_vector(&scales.state_from_nd(&y)))
}

/// State transition matrix from the variational equations.
pub fn state_transition(
    x: &StateVector,
    t0: f64,
    t1: f64,
    params: &DynamicsParams,
    scales: &ScaleSet,
    eph: &Ephemeris,
) -> Result<Mat12> {
    eph.check_epoch(t0)?;
    eph.check_epoch(t1)?;
    check_bodies(params, eph)?;
    let field = Field::new(params, *scales);
    let mut y = vec![0.0; 12 + 144];
    y[..12].copy_from_slice(scales.state_to_nd(&x.to_vector()).as_slice());
    y[12..].copy_from_slice(Mat12::identity().as_slice());
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let xs = Vec12::from_column_slice(&y[..12]);
        let phi = Mat12::from_column_slice(&y[12..]);
        let bodies = field.body_positions(eph, t);
        dy[..12].copy_from_slice(field.derivative(&xs, &bodies).as_slice());
        dy[12..].copy_from_slice((field.jacobian(&xs, &bodies) * phi).as_slice());
    };
    integrate(
        rhs,
        scales.time_to_nd(t0),
        &mut y,
        scales.time_to_nd(t1),
        &integrator_config(),
        |_| {},
    )?;
    // Phi maps non-dimensional deviations; convert to km and s.
    let phi_nd = Mat12::from_column_slice(&y[12..]);
    let u = scales.units();
    Ok(Mat12::from_fn(|i, j| phi_nd[(i, j)] * u[i] / u[j]))
}

/// Truth-trajectory generator: higher-fidelity field plus a sampled
/// realization of the two Gauss–Markov processes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthModel {
    pub params: DynamicsParams,
    /// Interval between Gauss–Markov noise injections [s].
    pub noise_step: f64,
}

impl Default for TruthModel {
    fn default() -> Self {
        Self {
            params: DynamicsParams::truth_default(),
            noise_step: 600.0,
        }
    }
}

impl TruthModel {
    /// Stationary standard deviations of the residual and SRP processes.
    pub fn stationary_sigmas(&self) -> (f64, f64) {
        let s = (2.0 * self.params.xi).sqrt();
        (self.params.sigma_r / s, self.params.sigma_srp / s)
    }

    /// Draw the initial GM states from their stationary distribution.
    pub fn sample_initial_gm<R: Rng + ?Sized>(&self, x: &mut StateVector, rng: &mut R) {
        let (sr, ss) = self.stationary_sigmas();
        x.eta_r = gaussian3(rng) * sr;
        x.eta_srp = gaussian3(rng) * ss;
    }

    /// Advance the true state from `t0` to `t1`, injecting the exact
    /// discrete-time GM noise every `noise_step` seconds.
    pub fn advance<R: Rng + ?Sized>(
        &self,
        x: &StateVector,
        t0: f64,
        t1: f64,
        scales: &ScaleSet,
        eph: &Ephemeris,
        rng: &mut R,
    ) -> Result<StateVector> {
        let (sr, ss) = self.stationary_sigmas();
        let mut state = *x;
        let mut t = t0;
        while t < t1 {
            let next = (t + self.noise_step).min(t1);
            state = propagate_state(&state, t, next, &self.params, scales, eph)?;
            let decay = 1.0 - (-2.0 * self.params.xi * (next - t)).exp();
            state.eta_r += gaussian3(rng) * (sr * decay.sqrt());
            state.eta_srp += gaussian3(rng) * (ss * decay.sqrt());
            t = next;
        }
        Ok(state)
    }
}

fn gaussian3<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    Vec3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}
