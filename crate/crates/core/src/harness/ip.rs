//! Image-processing-only campaign over random poses and attitudes.

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{rms, stream_rng, worker_pool, Environment, ScenarioConfig};
use crate::constants::{jd_to_seconds, ARCSEC, AU_KM, SECONDS_PER_DAY};
use crate::ephemeris::PlanetId;
use crate::error::{NavError, Result};
use crate::imgproc::{process_image, IpInput};
use crate::math::{angle_between, ecliptic_to_equatorial, rotation_angle, AttitudeQuat, Vec3};
use crate::scene::{apparent_magnitude, Renderer};

/// Span of epochs the random scenes are drawn from [days].
const EPOCH_SPAN_DAYS: f64 = 12.0 * 365.25;
/// Planets closer than this to the image border are not counted as present.
const BORDER_MARGIN_PX: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IpScene {
    pub index: usize,
    pub epoch: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: AttitudeQuat,
    /// Brightest planet inside the field of view.
    pub planet: PlanetId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IpOutcome {
    AttitudeFailed,
    WrongAttitude,
    PlanetMissed,
    PlanetMislocated,
    Success,
}

impl IpOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            IpOutcome::AttitudeFailed => "attitude_failed",
            IpOutcome::WrongAttitude => "wrong_attitude",
            IpOutcome::PlanetMissed => "planet_missed",
            IpOutcome::PlanetMislocated => "planet_mislocated",
            IpOutcome::Success => "success",
        }
    }

    pub fn right_attitude(self) -> bool {
        !matches!(self, IpOutcome::AttitudeFailed | IpOutcome::WrongAttitude)
    }
}

/// Result of the image-processing chain on one scene at one `sigma_r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IpSceneResult {
    pub scene: usize,
    pub sigma_r_km: f64,
    pub planet: PlanetId,
    pub outcome: IpOutcome,
    pub attitude_error_arcsec: Option<f64>,
    pub true_pixel: Vector2<f64>,
    pub detected_pixel: Option<Vector2<f64>>,
    /// Whether the true planet pixel lies inside the 3-sigma search ellipse.
    pub gate_contains_truth: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IpLevelStats {
    pub sigma_r_km: f64,
    pub scenes: usize,
    pub attitude_failed: usize,
    pub wrong_attitude: usize,
    /// Planet missed or mislocated while the attitude was right.
    pub wrong_planet_right_attitude: usize,
    pub planet_missed: usize,
    pub planet_mislocated: usize,
    pub success: usize,
    /// `wrong_planet_right_attitude` over scenes with a right attitude.
    pub wrong_detection_rate_right_attitude: f64,
    /// Every non-success over all scenes.
    pub wrong_detection_rate: f64,
    /// Root mean square of the principal attitude error angle.
    pub attitude_error_rms_arcsec: f64,
    pub attitude_error_std_arcsec: f64,
    pub projection_error_mean_px: [f64; 2],
    pub projection_error_cov_px2: [[f64; 2]; 2],
    pub projection_error_cov_det_px4: f64,
    pub gate_checked: usize,
    pub gate_contained: usize,
    pub gate_containment: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IpCampaignReport {
    pub seed: u64,
    pub scenes_requested: usize,
    pub scenes: usize,
    /// Random draws needed to find `scenes` scenes with a planet in view.
    pub draws: usize,
    pub levels: Vec<IpLevelStats>,
}

fn gaussian3(rng: &mut impl Rng) -> Vec3 {
    Vec3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}

fn random_attitude(rng: &mut impl Rng) -> AttitudeQuat {
    let v = gaussian3(rng);
    let w: f64 = rng.sample(StandardNormal);
    AttitudeQuat::new(w, v).normalized()
}

/// Draw random scenes until `scenes` of them contain a visible planet.
pub fn draw_ip_scenes(cfg: &ScenarioConfig, env: &Environment) -> Result<(Vec<IpScene>, usize)> {
    let ipc = &cfg.ip_campaign;
    let mut rng = stream_rng(cfg.seed, 0, 1);
    let ecl = ecliptic_to_equatorial();
    let t0 = jd_to_seconds(cfg.trajectory.departure_jd);
    let sea_min = cfg.filter.sea_min_deg.to_radians();
    let mut out = Vec::with_capacity(ipc.scenes);
    let mut draws = 0;
    while out.len() < ipc.scenes {
        if draws >= ipc.max_draws {
            return Err(NavError::Config(format!(
                "only {} of {} scenes with a planet in view after {draws} draws",
                out.len(),
                ipc.scenes
            )));
        }
        draws += 1;
        let epoch = t0 + rng.random_range(0.0..EPOCH_SPAN_DAYS) * SECONDS_PER_DAY;
        let n = gaussian3(&mut rng);
        let attitude = random_attitude(&mut rng);
        let s = ipc.pose_sigma_au;
        let r_ecl = Vec3::new(n.x * s[0], n.y * s[1], n.z * s[2]) * AU_KM;
        if r_ecl.norm() < ipc.min_sun_distance_au * AU_KM {
            continue;
        }
        // Prograde circular speed in the ecliptic plane.
        let along = Vec3::z().cross(&r_ecl).normalize();
        let v_ecl = along * (cfg.dynamics.mu_sun / r_ecl.norm()).sqrt();
        let (position, velocity) = (ecl * r_ecl, ecl * v_ecl);
        let a = attitude.dcm();
        let boresight = a.transpose() * Vec3::z();
        if angle_between(&boresight, &(-position)) < sea_min {
            continue;
        }
        let mut best: Option<(f64, PlanetId)> = None;
        let mut too_close = false;
        for planet in env.ephemeris.planet_ids() {
            let (r_pl, _) = env.ephemeris.planet_state(planet, epoch)?;
            let rel = r_pl - position;
            if rel.norm() < ipc.min_planet_distance_km {
                too_close = true;
                break;
            }
            let mag = apparent_magnitude(planet, &r_pl, &position);
            if mag >= cfg.filter.mag_limit {
                continue;
            }
            let Some(px) = env.camera.project(&a, &rel.normalize()) else {
                continue;
            };
            let m = BORDER_MARGIN_PX;
            let inside = px.x > m
                && px.y > m
                && px.x < env.camera.width as f64 - m
                && px.y < env.camera.height as f64 - m;
            if inside && best.is_none_or(|(b, _)| mag < b) {
                best = Some((mag, planet));
            }
        }
        if too_close {
            continue;
        }
        if let Some((_, planet)) = best {
            out.push(IpScene {
                index: out.len(),
                epoch,
                position,
                velocity,
                attitude,
                planet,
            });
        }
    }
    Ok((out, draws))
}

/// Render one scene and run the chain at every configured `sigma_r`.
/// The image, the estimate perturbation directions and the RANSAC stream
/// are shared across levels.
pub fn process_ip_scene(cfg: &ScenarioConfig, env: &Environment, scene: &IpScene) -> Result<Vec<IpSceneResult>> {
    let ipc = &cfg.ip_campaign;
    let renderer = Renderer::new(&env.catalog, &env.ephemeris, &env.camera, cfg.noise.clone());
    let mut rng = stream_rng(cfg.seed, scene.index as u64, 2);
    let (image, truth) = renderer.render(&scene.position, &scene.velocity, &scene.attitude, scene.epoch, &mut rng)?;
    let Some(true_pixel) = truth.planet(scene.planet).map(|p| p.pixel) else {
        return Err(NavError::Degenerate(format!("scene {} lost its planet", scene.index)));
    };
    let dr = gaussian3(&mut rng);
    let dv = gaussian3(&mut rng);
    let (r_pl, _) = env.ephemeris.planet_state(scene.planet, scene.epoch)?;
    let a_true = scene.attitude.dcm();
    let ip_seed: u64 = rng.random();
    let mut results = Vec::with_capacity(ipc.sigma_r_km.len());
    for &sigma_r in &ipc.sigma_r_km {
        let input = IpInput {
            prior_attitude: None,
            prior_sigma: 0.0,
            r_est: scene.position + dr * sigma_r,
            v_est: scene.velocity + dv * ipc.sigma_v_km_s,
            r_pl,
            sigma_r,
            correct_aberration: true,
        };
        let mut ip_rng = stream_rng(ip_seed, 0, 0);
        let base = IpSceneResult {
            scene: scene.index,
            sigma_r_km: sigma_r,
            planet: scene.planet,
            outcome: IpOutcome::AttitudeFailed,
            attitude_error_arcsec: None,
            true_pixel,
            detected_pixel: None,
            gate_contains_truth: None,
        };
        let ip = match process_image(&image, &input, &env.camera, &env.kvec, &cfg.ip, &mut ip_rng) {
            Ok(ip) => ip,
            Err(NavError::IdentificationFailure(_)) | Err(NavError::Degenerate(_)) => {
                results.push(base);
                continue;
            }
            Err(e) => return Err(e),
        };
        let att_err = rotation_angle(&ip.a_corr, &a_true) / ARCSEC;
        let gate = ip.covariance.as_ref().map(|c| c.contains(&true_pixel));
        let outcome = if att_err > ipc.wrong_attitude_arcsec {
            IpOutcome::WrongAttitude
        } else {
            match ip.planet_pixel {
                None => IpOutcome::PlanetMissed,
                Some(p) if (p - true_pixel).norm() > ipc.wrong_planet_px => IpOutcome::PlanetMislocated,
                Some(_) => IpOutcome::Success,
            }
        };
        results.push(IpSceneResult {
            outcome,
            attitude_error_arcsec: Some(att_err),
            detected_pixel: ip.planet_pixel,
            gate_contains_truth: gate,
            ..base
        });
    }
    Ok(results)
}

/// Aggregate statistics for one `sigma_r` level.
pub fn ip_level_stats(sigma_r_km: f64, rows: &[&IpSceneResult]) -> IpLevelStats {
    let count = |o: IpOutcome| rows.iter().filter(|r| r.outcome == o).count();
    let attitude_failed = count(IpOutcome::AttitudeFailed);
    let wrong_attitude = count(IpOutcome::WrongAttitude);
    let planet_missed = count(IpOutcome::PlanetMissed);
    let planet_mislocated = count(IpOutcome::PlanetMislocated);
    let success = count(IpOutcome::Success);
    let right = rows.len() - attitude_failed - wrong_attitude;
    let wrong_right = planet_missed + planet_mislocated;

    let att: Vec<f64> = rows
        .iter()
        .filter(|r| r.outcome.right_attitude())
        .filter_map(|r| r.attitude_error_arcsec)
        .collect();
    let att_mean = att.iter().sum::<f64>() / att.len() as f64;
    let att_std = (att.iter().map(|a| (a - att_mean).powi(2)).sum::<f64>() / (att.len() as f64 - 1.0)).sqrt();

    let errs: Vec<Vector2<f64>> = rows
        .iter()
        .filter(|r| r.outcome == IpOutcome::Success)
        .filter_map(|r| r.detected_pixel.map(|d| d - r.true_pixel))
        .collect();
    let n = errs.len() as f64;
    let mean = errs.iter().fold(Vector2::zeros(), |s, e| s + e) / n;
    let cov = errs
        .iter()
        .fold(Matrix2::zeros(), |s, e| s + (e - mean) * (e - mean).transpose())
        / (n - 1.0);

    let gates: Vec<bool> = rows.iter().filter_map(|r| r.gate_contains_truth).collect();
    let contained = gates.iter().filter(|g| **g).count();
    IpLevelStats {
        sigma_r_km,
        scenes: rows.len(),
        attitude_failed,
        wrong_attitude,
        wrong_planet_right_attitude: wrong_right,
        planet_missed,
        planet_mislocated,
        success,
        wrong_detection_rate_right_attitude: wrong_right as f64 / right as f64,
        wrong_detection_rate: (rows.len() - success) as f64 / rows.len() as f64,
        attitude_error_rms_arcsec: rms(att.iter().copied()),
        attitude_error_std_arcsec: att_std,
        projection_error_mean_px: [mean.x, mean.y],
        projection_error_cov_px2: [[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]],
        projection_error_cov_det_px4: cov.determinant(),
        gate_checked: gates.len(),
        gate_contained: contained,
        gate_containment: contained as f64 / gates.len() as f64,
    }
}

/// Random-pose campaign: every scene is processed at every `sigma_r` level.
pub fn run_ip_campaign(cfg: &ScenarioConfig) -> Result<(IpCampaignReport, Vec<IpSceneResult>)> {
    cfg.validate()?;
    let env = Environment::build(cfg)?;
    let (scenes, draws) = draw_ip_scenes(cfg, &env)?;
    let pool = worker_pool()?;
    let per_scene: Vec<Result<Vec<IpSceneResult>>> =
        pool.install(|| scenes.par_iter().map(|s| process_ip_scene(cfg, &env, s)).collect());
    let mut rows = Vec::with_capacity(scenes.len() * cfg.ip_campaign.sigma_r_km.len());
    for r in per_scene {
        rows.extend(r?);
    }
    let levels = cfg
        .ip_campaign
        .sigma_r_km
        .iter()
        .map(|&s| {
            let subset: Vec<&IpSceneResult> = rows.iter().filter(|r| r.sigma_r_km == s).collect();
            ip_level_stats(s, &subset)
        })
        .collect();
    let report = IpCampaignReport {
        seed: cfg.seed,
        scenes_requested: cfg.ip_campaign.scenes,
        scenes: scenes.len(),
        draws,
        levels,
    };
    Ok((report, rows))
}
