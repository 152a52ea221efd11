//! Small linear-algebra helpers and the attitude quaternion.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(a: &Vec3) -> Mat3 {
    Mat3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Angle between two (not necessarily unit) vectors, stable near 0 and pi.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Principal rotation angle of `a * b^T`, i.e. the angular distance between
/// two attitude matrices.
pub fn rotation_angle(a: &Mat3, b: &Mat3) -> f64 {
    let d = a * b.transpose();
    let cos = ((d.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let axis = Vec3::new(d[(2, 1)] - d[(1, 2)], d[(0, 2)] - d[(2, 0)], d[(1, 0)] - d[(0, 1)]);
    (axis.norm() / 2.0).atan2(cos)
}

/// Unit vector from right ascension and declination [rad].
pub fn radec_to_unit(ra: f64, dec: f64) -> Vec3 {
    Vec3::new(dec.cos() * ra.cos(), dec.cos() * ra.sin(), dec.sin())
}

/// Any unit vector perpendicular to `v`.
pub fn any_perpendicular(v: &Vec3) -> Vec3 {
    let helper = if v.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    v.cross(&helper).normalize()
}

/// Rotation about the x axis that maps ecliptic J2000 components to
/// equatorial J2000 components.
pub fn ecliptic_to_equatorial() -> Mat3 {
    let (s, c) = crate::constants::OBLIQUITY_J2000.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Attitude quaternion, scalar first.
///
/// The attitude matrix follows the passive convention
/// `A = (q0^2 - |qv|^2) I + 2 qv qv^T - 2 q0 [qv]x`, mapping inertial
/// components into the body (camera) frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttitudeQuat {
    pub q0: f64,
    pub qv: Vec3,
}

impl AttitudeQuat {
    pub fn identity() -> Self {
        Self {
            q0: 1.0,
            qv: Vec3::zeros(),
        }
    }

    pub fn new(q0: f64, qv: Vec3) -> Self {
        Self { q0, qv }
    }

    /// Frame rotation by `angle` about `axis`.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let e = axis.normalize();
        let (s, c) = (angle / 2.0).sin_cos();
        Self { q0: c, qv: e * s }
    }

    /// Quaternion for a rotation vector `theta * e` (small or large).
    pub fn from_rotation_vector(phi: &Vec3) -> Self {
        let angle = phi.norm();
        if angle < 1e-300 {
            return Self::identity();
        }
        Self::from_axis_angle(phi, angle)
    }

    pub fn norm(&self) -> f64 {
        (self.q0 * self.q0 + self.qv.norm_squared()).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self {
            q0: self.q0 / n,
            qv: self.qv / n,
        }
    }

    /// Attitude matrix from the (not necessarily normalized) quaternion
    /// using the quadratic form above.
    pub fn dcm(&self) -> Mat3 {
        let q0 = self.q0;
        let qv = self.qv;
        Mat3::identity() * (q0 * q0 - qv.norm_squared()) + qv * qv.transpose() * 2.0
            - skew(&qv) * (2.0 * q0)
    }

    /// Quaternion from a proper orthogonal attitude matrix (Shepperd's method).
    pub fn from_dcm(a: &Mat3) -> Self {
        let tr = a.trace();
        let cands = [tr, a[(0, 0)], a[(1, 1)], a[(2, 2)]];
        let (imax, _) = cands
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        // Passive convention: A[1,2] - A[2,1] = 4 q0 q1 etc.
        let q = match imax {
            0 => {
                let q0 = 0.5 * (1.0 + tr).sqrt();
                let f = 0.25 / q0;
                (
                    q0,
                    Vec3::new(
                        (a[(1, 2)] - a[(2, 1)]) * f,
                        (a[(2, 0)] - a[(0, 2)]) * f,
                        (a[(0, 1)] - a[(1, 0)]) * f,
                    ),
                )
            }
            1 => {
                let q1 = 0.5 * (1.0 + 2.0 * a[(0, 0)] - tr).sqrt();
                let f = 0.25 / q1;
                (
                    (a[(1, 2)] - a[(2, 1)]) * f,
                    Vec3::new(q1, (a[(0, 1)] + a[(1, 0)]) * f, (a[(0, 2)] + a[(2, 0)]) * f),
                )
            }
            2 => {
                let q2 = 0.5 * (1.0 + 2.0 * a[(1, 1)] - tr).sqrt();
                let f = 0.25 / q2;
                (
                    (a[(2, 0)] - a[(0, 2)]) * f,
                    Vec3::new((a[(0, 1)] + a[(1, 0)]) * f, q2, (a[(1, 2)] + a[(2, 1)]) * f),
                )
            }
            _ => {
                let q3 = 0.5 * (1.0 + 2.0 * a[(2, 2)] - tr).sqrt();
                let f = 0.25 / q3;
                (
                    (a[(0, 1)] - a[(1, 0)]) * f,
                    Vec3::new((a[(0, 2)] + a[(2, 0)]) * f, (a[(1, 2)] + a[(2, 1)]) * f, q3),
                )
            }
        };
        let out = Self { q0: q.0, qv: q.1 }.normalized();
        if out.q0 < 0.0 {
            Self {
                q0: -out.q0,
                qv: -out.qv,
            }
        } else {
            out
        }
    }

    /// Composition such that `(p.compose(&q)).dcm() == p.dcm() * q.dcm()`.
    pub fn compose(&self, q: &AttitudeQuat) -> AttitudeQuat {
        AttitudeQuat {
            q0: self.q0 * q.q0 - self.qv.dot(&q.qv),
            qv: q.qv * self.q0 + self.qv * q.q0 - self.qv.cross(&q.qv),
        }
    }
}

/// Symmetrize a square matrix in place: `(P + P^T) / 2`.
pub fn symmetrize<const N: usize>(p: &mut nalgebra::SMatrix<f64, N, N>) {
    for i in 0..N {
        for j in (i + 1)..N {
            let m = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = m;
            p[(j, i)] = m;
        }
    }
}
