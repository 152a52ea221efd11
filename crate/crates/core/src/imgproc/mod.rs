//! Image processing chain: centroids, star identification and attitude,
//! stellar-aberration correction, planet identification.

pub mod aberration;
pub mod centroid;
pub mod planet;
pub mod starid;
pub mod wahba;

pub use aberration::{correct_pixel_aberration, correct_star_aberration};
pub use centroid::{extract_centroids, Centroid, CentroidConfig, Window};
pub use planet::{identify_planet, planet_projection_covariance, projection_jacobian, Ellipse, ProjectionCovariance};
pub use starid::{identify_stars_lis, identify_stars_recursive, StarIdConfig};
pub use wahba::{ransac_attitude, solve_wahba_svd, AttitudeSolution, IdMode, StarMatch, VectorMatch};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, Pixel};
use crate::constants::ARCSEC;
use crate::error::Result;
use crate::kvector::KVectorCatalog;
use crate::math::{AttitudeQuat, Mat3, Vec3};
use crate::scene::SkyImage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IpConfig {
    pub centroid: CentroidConfig,
    pub star_id: StarIdConfig,
    /// Per-axis pointing uncertainty fed to the planet gate [rad].
    pub sigma_att: f64,
    /// Planet ephemeris uncertainty [km].
    pub sigma_rpl: f64,
}

impl Default for IpConfig {
    fn default() -> Self {
        Self {
            centroid: CentroidConfig::default(),
            star_id: StarIdConfig::default(),
            sigma_att: 20.0 * ARCSEC,
            sigma_rpl: 0.0,
        }
    }
}

/// Onboard knowledge handed to the image-processing chain.
#[derive(Clone, Debug)]
pub struct IpInput {
    /// Previous attitude for recursive identification, if any.
    pub prior_attitude: Option<Mat3>,
    /// One-sigma uncertainty of the prior [rad].
    pub prior_sigma: f64,
    pub r_est: Vec3,
    pub v_est: Vec3,
    /// Planet position from the onboard ephemeris at the image epoch.
    pub r_pl: Vec3,
    pub sigma_r: f64,
    /// Apply the stellar-aberration correction before the final Wahba solve.
    pub correct_aberration: bool,
}

#[derive(Clone, Debug)]
pub struct IpResult {
    pub centroids: Vec<Centroid>,
    pub solution: AttitudeSolution,
    /// Attitude from the raw (aberrated) star directions.
    pub a_raw: Mat3,
    /// Attitude after stellar-aberration correction.
    pub a_corr: Mat3,
    pub q_corr: AttitudeQuat,
    pub covariance: Option<ProjectionCovariance>,
    pub planet_pixel: Option<Pixel>,
}

/// Re-solve the attitude from aberration-corrected inlier directions.
pub fn corrected_attitude(
    solution: &AttitudeSolution,
    centroids: &[Centroid],
    kvec: &KVectorCatalog,
    camera: &CameraModel,
    v_est: &Vec3,
) -> Result<Mat3> {
    let a0 = solution.dcm();
    let mut obs = Vec::with_capacity(solution.inliers.len());
    let mut cat = Vec::with_capacity(solution.inliers.len());
    for m in &solution.inliers {
        let b = camera.unproject_camera(&centroids[m.centroid_index].position);
        let rho_obs = a0.transpose() * b;
        let rho_corr = correct_star_aberration(&rho_obs, v_est);
        obs.push(a0 * rho_corr);
        cat.push(kvec.stars.by_id(m.star_id).expect("matched star exists").los);
    }
    solve_wahba_svd(&obs, &cat)
}

/// Full chain of the image-processing workflow for one frame.
pub fn process_image<R: Rng + ?Sized>(
    image: &SkyImage,
    input: &IpInput,
    camera: &CameraModel,
    kvec: &KVectorCatalog,
    cfg: &IpConfig,
    rng: &mut R,
) -> Result<IpResult> {
    let centroids = extract_centroids(image, &cfg.centroid);
    let solution = match &input.prior_attitude {
        Some(prior) => {
            let gate = cfg.star_id.gate_radius_px + 3.0 * input.prior_sigma * camera.focal_px();
            identify_stars_recursive(&centroids, prior, &kvec.stars, camera, gate, &cfg.star_id, rng)?
        }
        None => identify_stars_lis(&centroids, camera, kvec, &cfg.star_id, rng)?,
    };
    let a_raw = solution.dcm();
    let a_corr = if input.correct_aberration {
        corrected_attitude(&solution, &centroids, kvec, camera, &input.v_est)?
    } else {
        a_raw
    };
    let q_corr = AttitudeQuat::from_dcm(&a_corr);
    let covariance = planet_projection_covariance(
        &q_corr,
        &input.r_est,
        &input.r_pl,
        cfg.sigma_att / 2.0,
        input.sigma_r,
        cfg.sigma_rpl,
        camera,
    )
    .ok()
    .filter(|c| camera.contains(&c.mean));
    let planet_pixel = covariance.as_ref().and_then(|cov| {
        let spikes: Vec<Pixel> = solution.spikes.iter().map(|&i| centroids[i].position).collect();
        identify_planet(&spikes, cov)
    });
    Ok(IpResult {
        centroids,
        solution,
        a_raw,
        a_corr,
        q_corr,
        covariance,
        planet_pixel,
    })
}
