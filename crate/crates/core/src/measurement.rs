//! Planet pixel measurement model with first-order light-time and
//! light-aberration terms, and its analytic Jacobian.

use nalgebra::{RowVector3, SMatrix};
use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, Pixel};
use crate::constants::SPEED_OF_LIGHT;
use crate::ephemeris::{Ephemeris, PlanetId};
use crate::error::{NavError, Result};
use crate::math::{skew, AttitudeQuat, Mat3, Vec3};

/// Jacobian columns: `r (0..3), v (3..6), q_v (6..9), r_pl (9..12), v_pl (12..15)`.
pub type PiMatrix = SMatrix<f64, 2, 15>;

pub const COL_R: usize = 0;
pub const COL_V: usize = 3;
pub const COL_QV: usize = 6;
pub const COL_RPL: usize = 9;
pub const COL_VPL: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightTimeSolution {
    pub delta_t: f64,
    pub emission_position: Vec3,
    pub beta_pl: f64,
    /// Cosine of the angle between the planet velocity and the
    /// spacecraft-to-planet vector.
    pub cos_eps: f64,
}

/// Which light effects the model includes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementMode {
    pub light_time: bool,
    pub aberration: bool,
}

impl MeasurementMode {
    pub const CASE1_FULL: Self = Self {
        light_time: true,
        aberration: true,
    };
    pub const CASE2_LT_ONLY: Self = Self {
        light_time: true,
        aberration: false,
    };
    pub const ABERRATION_ONLY: Self = Self {
        light_time: false,
        aberration: true,
    };
    pub const GEOMETRIC: Self = Self {
        light_time: false,
        aberration: false,
    };
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementPrediction {
    pub pixel: Pixel,
    pub los: Vec3,
    pub los_aberrated: Vec3,
    pub light_time: LightTimeSolution,
    pub jacobian_pi: PiMatrix,
    pub mode: MeasurementMode,
}

/// First-order light time from the linearized emission constraint,
/// `dt = (-rho.v + sqrt(|rho|^2 D + (rho.v)^2)) / D` with `D = c^2 - |v_pl|^2`.
pub fn light_time_delay(r_sc: &Vec3, r_pl: &Vec3, v_pl: &Vec3) -> LightTimeSolution {
    let rho = r_pl - r_sc;
    let c = SPEED_OF_LIGHT;
    let d = c * c - v_pl.norm_squared();
    let rv = rho.dot(v_pl);
    let s = (rho.norm_squared() * d + rv * rv).sqrt();
    let delta_t = (s - rv) / d;
    let speed = v_pl.norm();
    LightTimeSolution {
        delta_t,
        emission_position: r_pl - v_pl * delta_t,
        beta_pl: speed / c,
        cos_eps: if speed > 0.0 { rv / (rho.norm() * speed) } else { 0.0 },
    }
}

/// Gradients of the light time with respect to `rho = r_pl - r` and `v_pl`.
fn light_time_gradients(rho: &Vec3, v_pl: &Vec3, delta_t: f64) -> (RowVector3<f64>, RowVector3<f64>) {
    let c = SPEED_OF_LIGHT;
    let d = c * c - v_pl.norm_squared();
    let rv = rho.dot(v_pl);
    let s = (rho.norm_squared() * d + rv * rv).sqrt();
    let d_rho = ((rho.transpose() * d + v_pl.transpose() * rv) / s - v_pl.transpose()) / d;
    let d_v = ((rho.transpose() * rv - v_pl.transpose() * rho.norm_squared()) / s - rho.transpose()
        + v_pl.transpose() * (2.0 * delta_t))
        / d;
    (d_rho, d_v)
}

/// First-order aberration of a unit line of sight, renormalized.
pub fn aberrate_los(los: &Vec3, v_sc: &Vec3) -> Vec3 {
    let beta = v_sc / SPEED_OF_LIGHT;
    (los + los.cross(&beta.cross(los))).normalize()
}

/// Predicted planet pixel and Jacobian for a spacecraft at `(r, v)` with
/// attitude `q` observing a planet at `(r_pl, v_pl)` (evaluated at the
/// measurement epoch).
pub fn predict_from_states(
    r: &Vec3,
    v: &Vec3,
    q: &AttitudeQuat,
    r_pl: &Vec3,
    v_pl: &Vec3,
    camera: &CameraModel,
    mode: MeasurementMode,
) -> Result<MeasurementPrediction> {
    let c = SPEED_OF_LIGHT;
    let rho = r_pl - r;
    if rho.norm() == 0.0 {
        return Err(NavError::InvalidArgument("planet and spacecraft coincide".into()));
    }
    let lt = if mode.light_time {
        light_time_delay(r, r_pl, v_pl)
    } else {
        LightTimeSolution {
            delta_t: 0.0,
            emission_position: *r_pl,
            beta_pl: v_pl.norm() / c,
            cos_eps: 0.0,
        }
    };
    let d = lt.emission_position - r;
    let dn = d.norm();
    let l = d / dn;
    let beta = v / c;
    let l_ab = if mode.aberration { l + l.cross(&beta.cross(&l)) } else { l };

    let a = q.dcm();
    let h = camera.k_cam * a * l_ab;
    if h.z <= 0.0 {
        return Err(NavError::BehindCamera);
    }
    let pixel = Pixel::new(h.x / h.z, h.y / h.z);
    let persp = SMatrix::<f64, 2, 3>::new(1.0 / h.z, 0.0, -h.x / (h.z * h.z), 0.0, 1.0 / h.z, -h.y / (h.z * h.z));
    let pka = persp * camera.k_cam * a;

    // d(d) with respect to r, r_pl, v_pl through the emission position.
    let eye = Mat3::identity();
    let (dd_r, dd_rpl, dd_vpl) = if mode.light_time {
        let (g_rho, g_v) = light_time_gradients(&rho, v_pl, lt.delta_t);
        let coupling = v_pl * g_rho;
        (-eye + coupling, eye - coupling, -eye * lt.delta_t - v_pl * g_v)
    } else {
        (-eye, eye, Mat3::zeros())
    };
    let dl_dd = (eye - l * l.transpose()) / dn;
    let (dlab_dl, dlab_dv) = if mode.aberration {
        let m_l = eye + 2.0 * beta * l.transpose() - eye * l.dot(&beta) - l * beta.transpose();
        let m_b = eye * l.dot(&l) - l * l.transpose();
        (m_l, m_b / c)
    } else {
        (eye, Mat3::zeros())
    };

    let chain = pka * dlab_dl * dl_dd;
    let mut pi = PiMatrix::zeros();
    pi.fixed_view_mut::<2, 3>(0, COL_R).copy_from(&(chain * dd_r));
    pi.fixed_view_mut::<2, 3>(0, COL_V).copy_from(&(pka * dlab_dv));
    pi.fixed_view_mut::<2, 3>(0, COL_QV).copy_from(&(pka * skew(&l_ab) * 2.0));
    pi.fixed_view_mut::<2, 3>(0, COL_RPL).copy_from(&(chain * dd_rpl));
    pi.fixed_view_mut::<2, 3>(0, COL_VPL).copy_from(&(chain * dd_vpl));
    Ok(MeasurementPrediction {
        pixel,
        los: l,
        los_aberrated: l_ab.normalize(),
        light_time: lt,
        jacobian_pi: pi,
        mode,
    })
}

/// Prediction with the planet state looked up at the measurement epoch `t`.
#[allow(clippy::too_many_arguments)]
pub fn predict_measurement(
    r: &Vec3,
    v: &Vec3,
    q: &AttitudeQuat,
    t: f64,
    planet: PlanetId,
    ephemeris: &Ephemeris,
    camera: &CameraModel,
    mode: MeasurementMode,
) -> Result<MeasurementPrediction> {
    let (r_pl, v_pl) = ephemeris.planet_state(planet, t)?;
    predict_from_states(r, v, q, &r_pl, &v_pl, camera, mode)
}

/// Iterative solution of the exact emission constraint
/// `|r_pl(t - dt) - r_sc| = c dt` with the planet on its Keplerian orbit.
pub fn light_time_iterative(
    planet: &crate::ephemeris::PlanetEphemeris,
    r_sc: &Vec3,
    t: f64,
    tol: f64,
    max_iter: usize,
) -> f64 {
    let mut dt = (planet.state(t).0 - r_sc).norm() / SPEED_OF_LIGHT;
    for _ in 0..max_iter {
        let next = (planet.state(t - dt).0 - r_sc).norm() / SPEED_OF_LIGHT;
        let done = (next - dt).abs() <= tol * next;
        dt = next;
        if done {
            break;
        }
    }
    dt
}
