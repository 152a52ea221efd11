//! Synthetic deep-space image renderer with ground truth.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, Pixel};
use crate::constants::{AU_KM, SPEED_OF_LIGHT};
use crate::ephemeris::{Ephemeris, PlanetId, StarCatalog};
use crate::error::{NavError, Result};
use crate::math::{angle_between, any_perpendicular, AttitudeQuat, Mat3, Vec3};

/// Sensor and pointing noise settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub read_noise_sigma: f64,
    /// Mean sky plus dark background per pixel [e-].
    pub background_e: f64,
    pub shot_noise: bool,
    pub n_cr: usize,
    /// Level written into cosmic-ray pixels [e-].
    pub saturation_e: f64,
    pub jitter_sigma: f64,
    pub attitude_knowledge_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            read_noise_sigma: 10.0,
            background_e: 20.0,
            shot_noise: true,
            n_cr: 1,
            saturation_e: 1.0e5,
            jitter_sigma: 0.02f64.to_radians(),
            attitude_knowledge_sigma: 20.0 * crate::constants::ARCSEC,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self {
            read_noise_sigma: 0.0,
            background_e: 0.0,
            shot_noise: false,
            n_cr: 0,
            jitter_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.read_noise_sigma,
            self.background_e,
            self.saturation_e,
            self.jitter_sigma,
            self.attitude_knowledge_sigma,
        ];
        if vals.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(NavError::Config("noise parameters must be non-negative".into()))
        }
    }
}

/// Which light effects the renderer applies to the truth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderOptions {
    pub aberration: bool,
    pub light_time: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            aberration: true,
            light_time: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SkyImage {
    pub width: usize,
    pub height: usize,
    /// Row-major intensities [e-].
    pub pixels: Vec<f32>,
    pub timestamp: f64,
}

impl SkyImage {
    pub fn new(width: usize, height: usize, timestamp: f64) -> Self {
        Self {
            width,
            height,
            pixels: vec![0.0; width * height],
            timestamp,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f32) {
        self.pixels[y * self.width + x] = value;
    }

    pub fn total(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum()
    }

    /// Binary PGM (P5) with 16-bit little-endian samples, clipped to 65535.
    pub fn to_pgm16(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 2);
        for &p in &self.pixels {
            let v = p.round().clamp(0.0, 65535.0) as u16;
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarTruth {
    pub star_id: u32,
    pub pixel: Pixel,
    pub vmag: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanetTruth {
    pub planet: PlanetId,
    pub pixel: Pixel,
    pub magnitude: f64,
    /// Light time used for the rendered position [s].
    pub light_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub star_truths: Vec<StarTruth>,
    pub planet_truths: Vec<PlanetTruth>,
    pub cosmic_rays: Vec<Pixel>,
    pub true_attitude: AttitudeQuat,
    pub true_position: Vec3,
    pub true_velocity: Vec3,
    pub epoch: f64,
}

impl GroundTruth {
    pub fn planet(&self, id: PlanetId) -> Option<&PlanetTruth> {
        self.planet_truths.iter().find(|p| p.planet == id)
    }
}

/// Absolute magnitude and phase polynomial (alpha in degrees).
fn photometric_law(planet: PlanetId) -> (f64, &'static [f64]) {
    match planet {
        PlanetId::Venus => (-4.40, &[0.0009, 0.000239, -0.00000065]),
        PlanetId::Earth => (-3.86, &[0.013]),
        PlanetId::Mars => (-1.52, &[0.016]),
        PlanetId::Jupiter => (-9.40, &[0.005]),
        PlanetId::Saturn => (-8.88, &[0.044]),
    }
}

/// Apparent visual magnitude of a planet seen from `r_sc`.
pub fn apparent_magnitude(planet: PlanetId, r_pl: &Vec3, r_sc: &Vec3) -> f64 {
    let (v10, poly) = photometric_law(planet);
    let to_obs = r_sc - r_pl;
    let d_sun = r_pl.norm() / AU_KM;
    let d_obs = to_obs.norm() / AU_KM;
    let alpha = angle_between(&(-r_pl), &to_obs).to_degrees();
    let phase: f64 = poly
        .iter()
        .enumerate()
        .map(|(k, c)| c * alpha.powi(k as i32 + 1))
        .sum();
    v10 + 5.0 * (d_sun * d_obs).log10() + phase
}

/// Attitude matrix with the boresight on `target_los` and the given roll
/// about it.
pub fn pointing_matrix(target_los: &Vec3, roll: f64) -> Mat3 {
    let z = target_los.normalize();
    let p = any_perpendicular(&z);
    let q = z.cross(&p);
    let x = p * roll.cos() + q * roll.sin();
    let y = z.cross(&x);
    Mat3::from_rows(&[x.transpose(), y.transpose(), z.transpose()])
}

/// Nominal attitude perturbed by a random small rotation of per-axis
/// standard deviation `jitter_sigma`.
pub fn jitter_attitude<R: Rng + ?Sized>(nominal: &Mat3, noise: &NoiseConfig, rng: &mut R) -> AttitudeQuat {
    let s = noise.jitter_sigma;
    let a = if s > 0.0 {
        let d: Vec3 = Vec3::from_fn(|_, _| s * rng.sample::<f64, _>(StandardNormal));
        AttitudeQuat::from_rotation_vector(&d).dcm() * nominal
    } else {
        *nominal
    };
    AttitudeQuat::from_dcm(&a)
}

/// Attitude with the boresight on `target_los`, uniform roll, and a small
/// random pointing error of per-axis standard deviation `jitter_sigma`.
pub fn true_attitude<R: Rng + ?Sized>(target_los: &Vec3, noise: &NoiseConfig, rng: &mut R) -> AttitudeQuat {
    let roll: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    jitter_attitude(&pointing_matrix(target_los, roll), noise, rng)
}

/// Exact special-relativistic aberration of a source direction for an
/// observer moving with velocity `v` [km/s].
pub fn relativistic_aberration(los: &Vec3, v: &Vec3) -> Vec3 {
    let beta = v / SPEED_OF_LIGHT;
    let b = beta.norm();
    if b == 0.0 {
        return *los;
    }
    let gamma = 1.0 / (1.0 - b * b).sqrt();
    let bhat = beta / b;
    let n = los + beta * gamma + bhat * ((gamma - 1.0) * los.dot(&bhat));
    (n / (gamma * (1.0 + los.dot(&beta)))).normalize()
}

/// Solve `|r_pl(t - dt) - r_sc| = c dt` by fixed-point iteration on the
/// Keplerian planet motion. Returns `(dt, r_pl(t - dt))`.
pub fn exact_light_time(ephem: &Ephemeris, planet: PlanetId, r_sc: &Vec3, t: f64) -> Result<(f64, Vec3)> {
    let mut dt = 0.0;
    let mut pos = ephem.planet_state(planet, t)?.0;
    for _ in 0..30 {
        let next = (pos - r_sc).norm() / SPEED_OF_LIGHT;
        pos = ephem.planet_state(planet, t - next)?.0;
        let done = (next - dt).abs() <= 1e-13 * next.max(1.0);
        dt = next;
        if done {
            break;
        }
    }
    Ok((dt, pos))
}

/// Splat a pixel-integrated Gaussian PSF; returns the energy deposited.
fn splat(image: &mut SkyImage, center: &Pixel, electrons: f64, sigma: f64) -> f64 {
    if electrons <= 0.0 {
        return 0.0;
    }
    let (w, h) = (image.width as i64, image.height as i64);
    if sigma <= 0.0 {
        let (ix, iy) = (center.x.floor() as i64, center.y.floor() as i64);
        if ix >= 0 && iy >= 0 && ix < w && iy < h {
            let idx = iy as usize * image.width + ix as usize;
            image.pixels[idx] += electrons as f32;
            return electrons;
        }
        return 0.0;
    }
    let radius = (5.0 * sigma).ceil() as i64 + 1;
    let (cx, cy) = (center.x.floor() as i64, center.y.floor() as i64);
    let x0 = (cx - radius).max(0);
    let x1 = (cx + radius).min(w - 1);
    let y0 = (cy - radius).max(0);
    let y1 = (cy + radius).min(h - 1);
    if x0 > x1 || y0 > y1 {
        return 0.0;
    }
    let cdf = |u: f64| 0.5 * (1.0 + libm::erf(u / (sigma * std::f64::consts::SQRT_2)));
    let fx: Vec<f64> = (x0..=x1)
        .map(|i| cdf(i as f64 + 1.0 - center.x) - cdf(i as f64 - center.x))
        .collect();
    let fy: Vec<f64> = (y0..=y1)
        .map(|j| cdf(j as f64 + 1.0 - center.y) - cdf(j as f64 - center.y))
        .collect();
    let mut total = 0.0;
    for (jj, &wy) in fy.iter().enumerate() {
        let row = (y0 as usize + jj) * image.width;
        for (ii, &wx) in fx.iter().enumerate() {
            let e = electrons * wx * wy;
            image.pixels[row + x0 as usize + ii] += e as f32;
            total += e;
        }
    }
    total
}

/// Renders frames for one camera and star catalog.
#[derive(Clone, Debug)]
pub struct Renderer<'a> {
    pub catalog: &'a StarCatalog,
    pub ephemeris: &'a Ephemeris,
    pub camera: &'a CameraModel,
    pub noise: NoiseConfig,
    pub options: RenderOptions,
}

impl<'a> Renderer<'a> {
    pub fn new(catalog: &'a StarCatalog, ephemeris: &'a Ephemeris, camera: &'a CameraModel, noise: NoiseConfig) -> Self {
        Self {
            catalog,
            ephemeris,
            camera,
            noise,
            options: RenderOptions::default(),
        }
    }

    fn warp(&self, los: &Vec3, v_sc: &Vec3) -> Vec3 {
        if self.options.aberration {
            relativistic_aberration(los, v_sc)
        } else {
            *los
        }
    }

    /// Apparent (light-time and aberration affected) line of sight of a
    /// planet, its light time, and its apparent magnitude.
    pub fn planet_apparent(&self, planet: PlanetId, r_sc: &Vec3, v_sc: &Vec3, t: f64) -> Result<(Vec3, f64, f64)> {
        let (dt, pos) = if self.options.light_time {
            exact_light_time(self.ephemeris, planet, r_sc, t)?
        } else {
            (0.0, self.ephemeris.planet_state(planet, t)?.0)
        };
        let los = (pos - r_sc).normalize();
        let mag = apparent_magnitude(planet, &pos, r_sc);
        Ok((self.warp(&los, v_sc), dt, mag))
    }

    /// Noise-free signal image plus ground truth.
    pub fn render_signal(&self, r_sc: &Vec3, v_sc: &Vec3, attitude: &AttitudeQuat, t: f64) -> Result<(SkyImage, GroundTruth)> {
        if !(r_sc.iter().chain(v_sc.iter()).all(|c| c.is_finite())) {
            return Err(NavError::InvalidArgument("spacecraft state is not finite".into()));
        }
        self.ephemeris.check_epoch(t)?;
        let cam = self.camera;
        let a = attitude.normalized().dcm();
        let mut image = SkyImage::new(cam.width, cam.height, t);
        let margin = 6.0 * cam.defocus_sigma + 2.0;
        let inside_margin = |p: &Pixel| {
            p.x > -margin && p.y > -margin && p.x < cam.width as f64 + margin && p.y < cam.height as f64 + margin
        };
        let cos_field = (cam.half_diagonal() + 0.01).cos();
        let boresight = a.row(2).transpose();

        let mut stars = Vec::new();
        for s in self.catalog.stars() {
            if s.los.dot(&boresight) < cos_field {
                continue;
            }
            let los = self.warp(&s.los, v_sc);
            if let Some(p) = cam.project(&a, &los) {
                if inside_margin(&p) {
                    splat(&mut image, &p, cam.magnitude_to_electrons(s.vmag), cam.defocus_sigma);
                    if cam.contains(&p) {
                        stars.push(StarTruth {
                            star_id: s.id,
                            pixel: p,
                            vmag: s.vmag,
                        });
                    }
                }
            }
        }

        let mut planets = Vec::new();
        for id in self.ephemeris.planet_ids() {
            let (los, dt, mag) = self.planet_apparent(id, r_sc, v_sc, t)?;
            if let Some(p) = cam.project(&a, &los) {
                if inside_margin(&p) {
                    splat(&mut image, &p, cam.magnitude_to_electrons(mag), cam.defocus_sigma);
                    if cam.contains(&p) {
                        planets.push(PlanetTruth {
                            planet: id,
                            pixel: p,
                            magnitude: mag,
                            light_time: dt,
                        });
                    }
                }
            }
        }

        let truth = GroundTruth {
            star_truths: stars,
            planet_truths: planets,
            cosmic_rays: Vec::new(),
            true_attitude: attitude.normalized(),
            true_position: *r_sc,
            true_velocity: *v_sc,
            epoch: t,
        };
        Ok((image, truth))
    }

    /// Full render: signal, cosmic rays, shot and read noise.
    pub fn render<R: Rng + ?Sized>(
        &self,
        r_sc: &Vec3,
        v_sc: &Vec3,
        attitude: &AttitudeQuat,
        t: f64,
        rng: &mut R,
    ) -> Result<(SkyImage, GroundTruth)> {
        let (mut image, mut truth) = self.render_signal(r_sc, v_sc, attitude, t)?;
        self.apply_noise(&mut image, rng);
        for _ in 0..self.noise.n_cr {
            let x = rng.random_range(0..image.width);
            let y = rng.random_range(0..image.height);
            image.set(x, y, self.noise.saturation_e as f32);
            truth.cosmic_rays.push(Pixel::new(x as f64 + 0.5, y as f64 + 0.5));
        }
        Ok((image, truth))
    }

    fn apply_noise<R: Rng + ?Sized>(&self, image: &mut SkyImage, rng: &mut R) {
        let nz = &self.noise;
        let bg = nz.background_e;
        let read = nz.read_noise_sigma;
        // Background-only pixels: Gaussian approximation of shot noise
        // folded together with read noise.
        let flat_sigma = if nz.shot_noise { (bg + read * read).sqrt() } else { read };
        for p in image.pixels.iter_mut() {
            let signal = *p as f64;
            let value = if nz.shot_noise && signal > 0.0 {
                let lambda = signal + bg;
                let counts = if lambda < 1e7 {
                    Poisson::new(lambda).map(|d| d.sample(rng)).unwrap_or(lambda)
                } else {
                    Normal::new(lambda, lambda.sqrt()).map(|d| d.sample(rng)).unwrap_or(lambda)
                };
                counts + read * rng.sample::<f64, _>(StandardNormal)
            } else if flat_sigma > 0.0 {
                signal + bg + flat_sigma * rng.sample::<f64, _>(StandardNormal)
            } else {
                signal + bg
            };
            *p = value.max(0.0) as f32;
        }
    }
}

/// Write the image as 16-bit PGM and the ground truth as a JSON sidecar
/// next to it (same stem, `.json`).
pub fn dump_image(image: &SkyImage, truth: &GroundTruth, pgm_path: &Path) -> Result<()> {
    let mut f = fs::File::create(pgm_path).map_err(|e| NavError::io(pgm_path, e))?;
    f.write_all(&image.to_pgm16()).map_err(|e| NavError::io(pgm_path, e))?;
    let json_path = pgm_path.with_extension("json");
    let text = serde_json::to_string_pretty(truth).expect("serializable ground truth");
    fs::write(&json_path, text).map_err(|e| NavError::io(&json_path, e))?;
    Ok(())
}
