//! Browser bindings: light-effect prediction, planet-pair selection and
//! rendering plus image processing of one frame on the nominal trajectory.

use navsim::camera::Pixel;
use navsim::constants::{jd_to_seconds, ARCSEC, AU_KM};
use navsim::dynamics::{propagate_state, ScaleSet, StateVector};
use navsim::ephemeris::PlanetId;
use navsim::harness::{nominal_initial_state, stream_rng, Environment, ScenarioConfig};
use navsim::imgproc::{process_image, IpInput};
use navsim::math::{rotation_angle, AttitudeQuat};
use navsim::measurement::{predict_from_states, MeasurementMode};
use navsim::scene::{jitter_attitude, pointing_matrix, GroundTruth, Renderer, SkyImage};
use navsim::selection::{figure_of_merit, select_optimal_pair, visible_planets, VisibilityThresholds};
use navsim::{NavError, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct PlanetRow {
    pub planet: PlanetId,
    pub magnitude: f64,
    pub sea_deg: f64,
    pub range_au: f64,
    pub visible: bool,
}

#[derive(Debug, Serialize)]
pub struct PairView {
    pub planets: Vec<PlanetRow>,
    pub pair: Option<(PlanetId, PlanetId)>,
    /// Figure of merit of the chosen pair [AU^2].
    pub merit: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct ModePixel {
    pub mode: &'static str,
    pub x: f64,
    pub y: f64,
    /// Offset from the geometric prediction [px].
    pub shift_px: f64,
}

#[derive(Debug, Serialize)]
pub struct LightEffectView {
    pub planet: PlanetId,
    pub light_time_s: f64,
    pub spacecraft_speed_km_s: f64,
    pub modes: Vec<ModePixel>,
}

#[derive(Debug, Serialize)]
pub struct ProcessView {
    pub centroids: usize,
    pub stars_identified: usize,
    pub spikes: usize,
    pub attitude_error_arcsec: f64,
    pub planet: Option<PlanetId>,
    pub true_pixel: Option<[f64; 2]>,
    pub detected_pixel: Option<[f64; 2]>,
    pub search_ellipse_px: Option<[f64; 3]>,
}

#[wasm_bindgen]
pub struct Demo {
    cfg: ScenarioConfig,
    env: Environment,
    x0: StateVector,
    frame: Option<(SkyImage, GroundTruth, PlanetId, StateVector)>,
}

fn js(e: NavError) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn to_json(v: &impl Serialize) -> String {
    serde_json::to_string(v).expect("serializable view")
}

impl Demo {
    pub fn build() -> Result<Self> {
        let cfg = ScenarioConfig::default();
        let env = Environment::build(&cfg)?;
        let x0 = nominal_initial_state(&cfg, &env.ephemeris)?;
        Ok(Self {
            cfg,
            env,
            x0,
            frame: None,
        })
    }

    fn state_at(&self, jd: f64) -> Result<(f64, StateVector)> {
        let t = jd_to_seconds(jd);
        let scales = ScaleSet::new(AU_KM, self.cfg.dynamics.mu_sun);
        let x = propagate_state(
            &self.x0,
            self.cfg.start_epoch(),
            t,
            &self.cfg.dynamics.params(),
            &scales,
            &self.env.ephemeris,
        )?;
        Ok((t, x))
    }

    fn thresholds(&self) -> VisibilityThresholds {
        VisibilityThresholds {
            mag_limit: self.cfg.filter.mag_limit,
            sea_min_deg: self.cfg.filter.sea_min_deg,
        }
    }

    pub fn pair_view(&self, jd: f64) -> Result<PairView> {
        let (t, x) = self.state_at(jd)?;
        let reports = visible_planets(t, &x.r, &self.env.ephemeris, &self.thresholds())?;
        let sigma_str = self.cfg.filter.sigma_str_px / self.env.camera.focal_px();
        let pair = select_optimal_pair(&reports, sigma_str);
        let merit = pair.map(|(a, b)| {
            let ra = reports.iter().find(|r| r.planet == a).unwrap();
            let rb = reports.iter().find(|r| r.planet == b).unwrap();
            figure_of_merit(&ra.los, &rb.los, &ra.position, &rb.position, sigma_str)
        });
        let planets = reports
            .iter()
            .map(|r| PlanetRow {
                planet: r.planet,
                magnitude: r.apparent_magnitude,
                sea_deg: r.sea.to_degrees(),
                range_au: (r.position - x.r).norm() / AU_KM,
                visible: r.visible,
            })
            .collect();
        Ok(PairView { planets, pair, merit })
    }

    pub fn light_effect_view(&self, jd: f64, planet: PlanetId) -> Result<LightEffectView> {
        let (t, x) = self.state_at(jd)?;
        let (r_pl, v_pl) = self.env.ephemeris.planet_state(planet, t)?;
        let q = AttitudeQuat::from_dcm(&pointing_matrix(&(r_pl - x.r), 0.0));
        let modes = [
            ("geometric", MeasurementMode::GEOMETRIC),
            ("light_time", MeasurementMode::CASE2_LT_ONLY),
            ("aberration", MeasurementMode::ABERRATION_ONLY),
            ("full", MeasurementMode::CASE1_FULL),
        ];
        let mut out = Vec::with_capacity(modes.len());
        let mut geometric: Option<Pixel> = None;
        let mut light_time_s = 0.0;
        for (name, mode) in modes {
            let p = predict_from_states(&x.r, &x.v, &q, &r_pl, &v_pl, &self.env.camera, mode)?;
            let g = *geometric.get_or_insert(p.pixel);
            if mode.light_time {
                light_time_s = p.light_time.delta_t;
            }
            out.push(ModePixel {
                mode: name,
                x: p.pixel.x,
                y: p.pixel.y,
                shift_px: (p.pixel - g).norm(),
            });
        }
        Ok(LightEffectView {
            planet,
            light_time_s,
            spacecraft_speed_km_s: x.v.norm(),
            modes: out,
        })
    }

    /// Render a frame pointed at `planet` and keep it for processing.
    pub fn render_frame(&mut self, jd: f64, planet: PlanetId, seed: u64) -> Result<&SkyImage> {
        let (t, x) = self.state_at(jd)?;
        let (r_pl, _) = self.env.ephemeris.planet_state(planet, t)?;
        let mut rng = stream_rng(seed, 0, 2);
        let roll = (seed % 360) as f64 * std::f64::consts::PI / 180.0;
        let q = jitter_attitude(&pointing_matrix(&(r_pl - x.r), roll), &self.cfg.noise, &mut rng);
        let renderer = Renderer::new(&self.env.catalog, &self.env.ephemeris, &self.env.camera, self.cfg.noise.clone());
        let (image, truth) = renderer.render(&x.r, &x.v, &q, t, &mut rng)?;
        self.frame = Some((image, truth, planet, x));
        Ok(&self.frame.as_ref().unwrap().0)
    }

    /// Lost-in-space processing of the last rendered frame.
    pub fn process_view(&self, sigma_r_km: f64) -> Result<ProcessView> {
        let (image, truth, planet, x) = self
            .frame
            .as_ref()
            .ok_or_else(|| NavError::InvalidArgument("render a frame first".into()))?;
        let (r_pl, _) = self.env.ephemeris.planet_state(*planet, image.timestamp)?;
        let input = IpInput {
            prior_attitude: None,
            prior_sigma: 0.0,
            r_est: x.r,
            v_est: x.v,
            r_pl,
            sigma_r: sigma_r_km,
            correct_aberration: true,
        };
        let mut rng = stream_rng(0, 0, 0);
        let ip = process_image(image, &input, &self.env.camera, &self.env.kvec, &self.cfg.ip, &mut rng)?;
        let true_pixel = truth.planet(*planet).map(|p| [p.pixel.x, p.pixel.y]);
        Ok(ProcessView {
            centroids: ip.centroids.len(),
            stars_identified: ip.solution.inliers.len(),
            spikes: ip.solution.spikes.len(),
            attitude_error_arcsec: rotation_angle(&ip.a_corr, &truth.true_attitude.dcm()) / ARCSEC,
            planet: true_pixel.map(|_| *planet),
            true_pixel,
            detected_pixel: ip.planet_pixel.map(|p| [p.x, p.y]),
            search_ellipse_px: ip.covariance.map(|c| [c.ellipse.a, c.ellipse.b, c.ellipse.psi]),
        })
    }
}

/// Logarithmic stretch of an electron image into RGBA bytes.
pub fn stretch_rgba(image: &SkyImage) -> Vec<u8> {
    let mut sorted: Vec<f32> = image.pixels.iter().step_by(97).copied().collect();
    sorted.sort_by(f32::total_cmp);
    let floor = sorted.get(sorted.len() / 2).copied().unwrap_or(0.0);
    let peak = image.pixels.iter().copied().fold(floor + 1.0, f32::max);
    let scale = 40.0f32;
    let norm = (1.0 + (peak - floor) / scale).ln();
    let mut out = Vec::with_capacity(image.pixels.len() * 4);
    for &p in &image.pixels {
        let v = ((1.0 + (p - floor).max(0.0) / scale).ln() / norm * 255.0) as u8;
        out.extend_from_slice(&[v, v, v, 255]);
    }
    out
}

fn parse_planet(name: &str) -> std::result::Result<PlanetId, JsValue> {
    name.parse().map_err(js)
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> std::result::Result<Demo, JsValue> {
        Demo::build().map_err(js)
    }

    pub fn width(&self) -> usize {
        self.env.camera.width
    }

    pub fn height(&self) -> usize {
        self.env.camera.height
    }

    #[wasm_bindgen(js_name = departureJd)]
    pub fn departure_jd(&self) -> f64 {
        self.cfg.trajectory.departure_jd
    }

    #[wasm_bindgen(js_name = startJd)]
    pub fn start_jd(&self) -> f64 {
        self.cfg.trajectory.departure_jd + self.cfg.trajectory.days_after_departure
    }

    /// Visibility table and the selected planet pair, as JSON.
    pub fn pairs(&self, jd: f64) -> std::result::Result<String, JsValue> {
        self.pair_view(jd).map(|v| to_json(&v)).map_err(js)
    }

    /// Predicted planet pixel under each light-effect model, as JSON.
    #[wasm_bindgen(js_name = lightEffects)]
    pub fn light_effects(&self, jd: f64, planet: &str) -> std::result::Result<String, JsValue> {
        self.light_effect_view(jd, parse_planet(planet)?).map(|v| to_json(&v)).map_err(js)
    }

    /// Render a frame and return it as RGBA bytes for a canvas.
    pub fn render(&mut self, jd: f64, planet: &str, seed: u32) -> std::result::Result<Vec<u8>, JsValue> {
        let planet = parse_planet(planet)?;
        self.render_frame(jd, planet, seed as u64).map(stretch_rgba).map_err(js)
    }

    /// Star identification and planet detection on the last frame, as JSON.
    pub fn process(&self, sigma_r_km: f64) -> std::result::Result<String, JsValue> {
        self.process_view(sigma_r_km).map(|v| to_json(&v)).map_err(js)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operations_run_natively() {
        let mut demo = Demo::build().unwrap();
        let jd = demo.start_jd() + 5.0;
        let pairs = demo.pair_view(jd).unwrap();
        assert_eq!(pairs.planets.len(), 5);
        let (a, _) = pairs.pair.expect("two planets visible after departure");

        let fx = demo.light_effect_view(jd, a).unwrap();
        assert_eq!(fx.modes[0].shift_px, 0.0);
        assert!(fx.light_time_s > 0.0);
        assert!(fx.modes[3].shift_px > 0.0);

        let img = demo.render_frame(jd, a, 3).unwrap();
        let rgba = stretch_rgba(img);
        assert_eq!(rgba.len(), demo.width() * demo.height() * 4);

        let view = demo.process_view(1.0e4).unwrap();
        assert!(view.stars_identified >= 3);
        assert!(view.attitude_error_arcsec < 60.0);
        if let (Some(t), Some(d)) = (view.true_pixel, view.detected_pixel) {
            assert!((t[0] - d[0]).hypot(t[1] - d[1]) < 2.0);
        }
    }

    #[test]
    fn process_needs_a_frame() {
        let demo = Demo::build().unwrap();
        assert!(demo.process_view(1.0e4).is_err());
    }
}
