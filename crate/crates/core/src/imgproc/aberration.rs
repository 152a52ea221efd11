//! Removal of stellar aberration from observed inertial directions.

use crate::camera::{CameraModel, Pixel};
use crate::constants::SPEED_OF_LIGHT;
use crate::math::{Mat3, Vec3};

/// Undo the aberration shift of an observed inertial line of sight given the
/// estimated spacecraft velocity [km/s].
///
/// The shift angle follows `tan(eps) = beta sin(theta) / (1 - beta cos(theta))`
/// and the direction is rotated away from the velocity by `eps` in the plane
/// spanned by the line of sight and the velocity.
pub fn correct_star_aberration(obs: &Vec3, v: &Vec3) -> Vec3 {
    let speed = v.norm();
    if speed == 0.0 {
        return *obs;
    }
    let v_hat = v / speed;
    let beta = speed / SPEED_OF_LIGHT;
    let sin_obs = obs.cross(&v_hat).norm();
    let cos_obs = obs.dot(&v_hat);
    if sin_obs == 0.0 {
        return *obs;
    }
    let theta_obs = sin_obs.atan2(cos_obs);
    let eps = (beta * sin_obs).atan2(1.0 - beta * cos_obs);
    let theta_corr = theta_obs + eps;
    let out = (obs * theta_corr.sin() - v_hat * eps.sin()) / sin_obs;
    out.normalize()
}

/// Remove the aberration shift from a measured pixel, given the attitude
/// `a` used to express it inertially.
pub fn correct_pixel_aberration(pixel: &Pixel, a: &Mat3, v: &Vec3, camera: &CameraModel) -> Option<Pixel> {
    let obs = camera.unproject(a, pixel);
    camera.project(a, &correct_star_aberration(&obs, v))
}
