//! Ideal pinhole camera with a simple photometric model.

use nalgebra::{Matrix3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::math::{Mat3, Vec3};

pub type Pixel = Vector2<f64>;

/// Camera block of the scenario configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    pub fov_deg: f64,
    pub width_px: usize,
    pub height_px: usize,
    pub focal_mm: f64,
    pub f_number: f64,
    pub exposure_ms: f64,
    pub qe_tlens: f64,
    pub defocus_sigma_px: f64,
    /// Photon flux of a magnitude-0 source [photons / m^2 / s].
    pub phi0_photons_m2_s: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            fov_deg: 20.0,
            width_px: 1024,
            height_px: 1024,
            focal_mm: 40.0,
            f_number: 2.2,
            exposure_ms: 400.0,
            qe_tlens: 0.49,
            defocus_sigma_px: 0.5,
            phi0_photons_m2_s: 1.0e10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraModel {
    pub fov: f64,
    pub width: usize,
    pub height: usize,
    pub focal_length_mm: f64,
    pub f_number: f64,
    /// Exposure time [s].
    pub exposure: f64,
    pub qe_tlens: f64,
    pub defocus_sigma: f64,
    pub phi0: f64,
    pub k_cam: Mat3,
    k_inv: Mat3,
}

impl CameraModel {
    /// Pinhole intrinsics from the horizontal field of view and image size.
    pub fn build_intrinsics(fov: f64, width: usize, height: usize, focal_length_mm: f64) -> Result<Self> {
        if !(fov > 0.0 && fov < std::f64::consts::PI) {
            return Err(NavError::InvalidArgument(format!("field of view {fov} rad out of range")));
        }
        if width == 0 || height == 0 || !(focal_length_mm > 0.0) {
            return Err(NavError::InvalidArgument(
                "image size and focal length must be positive".into(),
            ));
        }
        let f = (width as f64 / 2.0) / (fov / 2.0).tan();
        let k_cam = Matrix3::new(
            f,
            0.0,
            width as f64 / 2.0,
            0.0,
            f,
            height as f64 / 2.0,
            0.0,
            0.0,
            1.0,
        );
        let k_inv = k_cam.try_inverse().expect("pinhole intrinsics are invertible");
        let defaults = CameraConfig::default();
        Ok(Self {
            fov,
            width,
            height,
            focal_length_mm,
            f_number: defaults.f_number,
            exposure: defaults.exposure_ms / 1000.0,
            qe_tlens: defaults.qe_tlens,
            defocus_sigma: defaults.defocus_sigma_px,
            phi0: defaults.phi0_photons_m2_s,
            k_cam,
            k_inv,
        })
    }

    pub fn from_config(cfg: &CameraConfig) -> Result<Self> {
        let mut cam = Self::build_intrinsics(cfg.fov_deg.to_radians(), cfg.width_px, cfg.height_px, cfg.focal_mm)?;
        let checks = [
            ("f_number", cfg.f_number),
            ("exposure_ms", cfg.exposure_ms),
            ("qe_tlens", cfg.qe_tlens),
            ("defocus_sigma_px", cfg.defocus_sigma_px),
            ("phi0_photons_m2_s", cfg.phi0_photons_m2_s),
        ];
        for (name, v) in checks {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(NavError::Config(format!("camera.{name} must be non-negative")));
            }
        }
        if !(cfg.f_number > 0.0) {
            return Err(NavError::Config("camera.f_number must be positive".into()));
        }
        cam.f_number = cfg.f_number;
        cam.exposure = cfg.exposure_ms / 1000.0;
        cam.qe_tlens = cfg.qe_tlens;
        cam.defocus_sigma = cfg.defocus_sigma_px;
        cam.phi0 = cfg.phi0_photons_m2_s;
        Ok(cam)
    }

    pub fn focal_px(&self) -> f64 {
        self.k_cam[(0, 0)]
    }

    pub fn principal_point(&self) -> Pixel {
        Pixel::new(self.k_cam[(0, 2)], self.k_cam[(1, 2)])
    }

    /// Pixel pitch [mm].
    pub fn pixel_pitch_mm(&self) -> f64 {
        self.focal_length_mm / self.focal_px()
    }

    /// Field of view recovered from the intrinsics.
    pub fn fov_from_intrinsics(&self) -> f64 {
        2.0 * (self.k_cam[(0, 2)] / self.k_cam[(0, 0)]).atan()
    }

    /// Half-diagonal angular radius of the field.
    pub fn half_diagonal(&self) -> f64 {
        let (w, h) = (self.width as f64 / 2.0, self.height as f64 / 2.0);
        ((w * w + h * h).sqrt() / self.focal_px()).atan()
    }

    pub fn contains(&self, p: &Pixel) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width as f64 && p.y <= self.height as f64
    }

    /// Project a camera-frame direction; `None` when it lies behind the camera.
    pub fn project_camera(&self, v_cam: &Vec3) -> Option<Pixel> {
        let h = self.k_cam * v_cam;
        if h.z <= 0.0 {
            return None;
        }
        Some(Pixel::new(h.x / h.z, h.y / h.z))
    }

    /// Project an inertial line of sight through attitude `a` (N to C).
    pub fn project(&self, a: &Mat3, los: &Vec3) -> Option<Pixel> {
        self.project_camera(&(a * los))
    }

    /// Camera-frame unit direction of a pixel.
    pub fn unproject_camera(&self, p: &Pixel) -> Vec3 {
        (self.k_inv * Vec3::new(p.x, p.y, 1.0)).normalize()
    }

    /// Inertial unit direction of a pixel, `(K A)^-1 [u v 1]^T` normalized.
    pub fn unproject(&self, a: &Mat3, p: &Pixel) -> Vec3 {
        a.transpose() * self.unproject_camera(p)
    }

    pub fn aperture_area_m2(&self) -> f64 {
        let d = self.focal_length_mm / self.f_number / 1000.0;
        std::f64::consts::PI * d * d / 4.0
    }

    /// Expected photo-electrons collected from a point source.
    pub fn magnitude_to_electrons(&self, magnitude: f64) -> f64 {
        self.phi0 * 10f64.powf(-0.4 * magnitude) * self.aperture_area_m2() * self.exposure * self.qe_tlens
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::AttitudeQuat;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table_camera() -> CameraModel {
        CameraModel::from_config(&CameraConfig::default()).unwrap()
    }

    #[test]
    fn focal_length_in_pixels() {
        let cam = table_camera();
        let expected = 512.0 / 10f64.to_radians().tan();
        assert_relative_eq!(cam.focal_px(), expected, max_relative = 1e-14);
        assert!((cam.focal_px() - 2903.5).abs() < 0.5);
        assert_eq!(cam.k_cam[(1, 1)], cam.k_cam[(0, 0)]);
        assert_eq!(cam.k_cam[(2, 2)], 1.0);
        assert!((cam.pixel_pitch_mm() * 1000.0 - 13.78).abs() < 0.01);
        let tiny = CameraModel::build_intrinsics(90f64.to_radians(), 2, 2, 1.0).unwrap();
        assert_relative_eq!(tiny.focal_px(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_intrinsics_are_rejected() {
        assert!(CameraModel::build_intrinsics(0.0, 10, 10, 1.0).is_err());
        assert!(CameraModel::build_intrinsics(4.0, 10, 10, 1.0).is_err());
        assert!(CameraModel::build_intrinsics(0.3, 0, 10, 1.0).is_err());
        assert!(CameraModel::build_intrinsics(0.3, 10, 10, -1.0).is_err());
    }

    #[test]
    fn boresight_and_edge() {
        let cam = table_camera();
        let a = Mat3::identity();
        assert_relative_eq!(cam.project(&a, &Vec3::z()).unwrap(), Pixel::new(512.0, 512.0));
        let half = 10f64.to_radians();
        let edge = Vec3::new(half.sin(), 0.0, half.cos());
        assert_relative_eq!(cam.project(&a, &edge).unwrap().x, 1024.0, epsilon = 1e-9);
        let other = Vec3::new(-half.sin(), 0.0, half.cos());
        assert_relative_eq!(cam.project(&a, &other).unwrap().x, 0.0, epsilon = 1e-9);
        assert!(cam.project(&a, &-Vec3::z()).is_none());
        assert!(cam.project(&a, &Vec3::x()).is_none());
    }

    #[test]
    fn project_unproject_roundtrip() {
        let cam = table_camera();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let q = AttitudeQuat::from_rotation_vector(&Vec3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            ));
            let a = q.dcm();
            let p = Pixel::new(rng.random_range(0.0..1024.0), rng.random_range(0.0..1024.0));
            let los = cam.unproject(&a, &p);
            let back = cam.project(&a, &los).unwrap();
            assert!((back - p).norm() < 1e-10);
            // Frame composition: inertial projection equals camera-frame projection.
            let direct = cam.project_camera(&(a * los)).unwrap();
            assert!((direct - back).norm() < 1e-12);
        }
    }

    #[test]
    fn fov_recovered_from_intrinsics() {
        for deg in [5.0, 20.0, 60.0, 120.0] {
            let cam = CameraModel::build_intrinsics(f64::to_radians(deg), 640, 480, 10.0).unwrap();
            assert!((cam.fov_from_intrinsics() - f64::to_radians(deg)).abs() < 1e-12);
        }
    }

    #[test]
    fn photometry_follows_magnitude_law() {
        let cam = table_camera();
        assert_relative_eq!(
            cam.magnitude_to_electrons(2.0) / cam.magnitude_to_electrons(7.0),
            100.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            cam.magnitude_to_electrons(1.0) / cam.magnitude_to_electrons(3.5),
            10.0,
            max_relative = 1e-12
        );
        let dark = CameraConfig {
            exposure_ms: 0.0,
            ..CameraConfig::default()
        };
        assert_eq!(CameraModel::from_config(&dark).unwrap().magnitude_to_electrons(1.0), 0.0);
        // A magnitude 5.5 star stands well above read noise.
        assert!(cam.magnitude_to_electrons(5.5) > 1000.0);
    }
}
