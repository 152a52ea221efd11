//! Expected planet projection, its covariance ellipse, and spike selection.

use nalgebra::{Matrix2, SMatrix, SVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, Pixel};
use crate::constants::CHI2_2DOF_3SIGMA;
use crate::error::{NavError, Result};
use crate::math::{skew, AttitudeQuat, Mat3, Vec3};

pub type GMatrix = SMatrix<f64, 2, 10>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub a: f64,
    pub b: f64,
    pub psi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionCovariance {
    pub mean: Pixel,
    pub p: Matrix2<f64>,
    pub ellipse: Ellipse,
}

impl ProjectionCovariance {
    pub fn from_mean_and_covariance(mean: Pixel, p: Matrix2<f64>) -> Self {
        let p = (p + p.transpose()) * 0.5;
        let eig = SymmetricEigen::new(p);
        let (i_max, i_min) = if eig.eigenvalues[0] >= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
        let l_max = eig.eigenvalues[i_max].max(0.0);
        let l_min = eig.eigenvalues[i_min].max(0.0);
        let v = eig.eigenvectors.column(i_max);
        let ellipse = Ellipse {
            a: (CHI2_2DOF_3SIGMA * l_max).sqrt(),
            b: (CHI2_2DOF_3SIGMA * l_min).sqrt(),
            psi: v[1].atan2(v[0]),
        };
        Self { mean, p, ellipse }
    }

    /// Whether `pt` lies inside (or on) the 3-sigma ellipse.
    pub fn contains(&self, pt: &Pixel) -> bool {
        let d = pt - self.mean;
        let (s, c) = self.ellipse.psi.sin_cos();
        let along = c * d.x + s * d.y;
        let across = -s * d.x + c * d.y;
        let term = |u: f64, axis: f64| {
            if axis > 0.0 {
                (u / axis).powi(2)
            } else if u.abs() <= 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        };
        term(along, self.ellipse.a) + term(across, self.ellipse.b) <= 1.0
    }
}

/// Jacobian of the pixel projection `K A(q) (r_pl - r)` with respect to
/// `(q0, q_v, r, r_pl)`, and the homogeneous projection itself.
pub fn projection_jacobian(q: &AttitudeQuat, r_sc: &Vec3, r_pl: &Vec3, camera: &CameraModel) -> Result<(Pixel, GMatrix)> {
    let rho = r_pl - r_sc;
    let a = q.dcm();
    let h = camera.k_cam * a * rho;
    if h.z <= 0.0 {
        return Err(NavError::BehindCamera);
    }
    let persp = SMatrix::<f64, 2, 3>::new(1.0 / h.z, 0.0, -h.x / (h.z * h.z), 0.0, 1.0 / h.z, -h.y / (h.z * h.z));
    let pk = persp * camera.k_cam;
    let (q0, qv) = (q.q0, q.qv);
    let d_q0 = 2.0 * q0 * rho - 2.0 * qv.cross(&rho);
    let d_qv = -2.0 * rho * qv.transpose()
        + 2.0 * qv.dot(&rho) * Mat3::identity()
        + 2.0 * qv * rho.transpose()
        + 2.0 * q0 * skew(&rho);
    let mut g = GMatrix::zeros();
    g.fixed_view_mut::<2, 1>(0, 0).copy_from(&(pk * d_q0));
    g.fixed_view_mut::<2, 3>(0, 1).copy_from(&(pk * d_qv));
    g.fixed_view_mut::<2, 3>(0, 4).copy_from(&(pk * -a));
    g.fixed_view_mut::<2, 3>(0, 7).copy_from(&(pk * a));
    Ok((Pixel::new(h.x / h.z, h.y / h.z), g))
}

/// Expected planet pixel and its covariance `P = G S G^T`, with
/// `S = diag(0, sigma_qv^2 I, sigma_r^2 I, sigma_rpl^2 I)`.
pub fn planet_projection_covariance(
    q_est: &AttitudeQuat,
    r_sc_est: &Vec3,
    r_pl: &Vec3,
    sigma_qv: f64,
    sigma_r: f64,
    sigma_rpl: f64,
    camera: &CameraModel,
) -> Result<ProjectionCovariance> {
    let (mean, g) = projection_jacobian(q_est, r_sc_est, r_pl, camera)?;
    let mut s = SVector::<f64, 10>::zeros();
    for i in 0..3 {
        s[1 + i] = sigma_qv * sigma_qv;
        s[4 + i] = sigma_r * sigma_r;
        s[7 + i] = sigma_rpl * sigma_rpl;
    }
    let p = g * SMatrix::<f64, 10, 10>::from_diagonal(&s) * g.transpose();
    Ok(ProjectionCovariance::from_mean_and_covariance(mean, p))
}

/// The spike inside the ellipse that is closest to the expected position.
/// Ties resolve on pixel coordinates so the result does not depend on the
/// order of `spikes`.
pub fn identify_planet(spikes: &[Pixel], cov: &ProjectionCovariance) -> Option<Pixel> {
    spikes
        .iter()
        .filter(|p| cov.contains(p))
        .min_by(|a, b| {
            (*a - cov.mean)
                .norm()
                .total_cmp(&(*b - cov.mean).norm())
                .then(a.x.total_cmp(&b.x))
                .then(a.y.total_cmp(&b.y))
        })
        .copied()
}
