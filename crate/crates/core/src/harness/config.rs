//! Scenario configuration shared by both campaigns.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::{CameraConfig, CameraModel};
use crate::constants::{jd_to_seconds, AU_KM, MU_SUN, SECONDS_PER_DAY, SPEED_OF_LIGHT, SUN_RADIUS_KM};
use crate::dynamics::{
    gm_driving_sigma, propagate_state, DynamicsParams, Mat12, ScaleSet, StateVector, TruthModel, SOLAR_SURFACE_FLUX,
};
use crate::ephemeris::{load_star_catalog, Ephemeris, PlanetId, StarCatalog};
use crate::error::{NavError, Result};
use crate::imgproc::IpConfig;
use crate::kvector::{build_kvector, KVectorCatalog};
use crate::measurement::MeasurementMode;
use crate::navigation::{ConopsSchedule, FilterConfig};
use crate::scene::NoiseConfig;
use crate::selection::VisibilityThresholds;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EphemerisConfig {
    /// JSON element set; the built-in mean J2000 elements when absent.
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CatalogConfig {
    /// CSV star catalog; a synthetic catalog is generated when absent.
    pub path: Option<PathBuf>,
    pub synthetic_seed: u64,
    pub synthetic_mag_min: f64,
    pub synthetic_mag_max: f64,
    /// Faintest star kept in the pair table.
    pub kvector_mag_limit: f64,
    pub kvector_max_angle_deg: f64,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        Self {
            path: None,
            synthetic_seed: 42,
            synthetic_mag_min: -1.5,
            synthetic_mag_max: 7.0,
            kvector_mag_limit: 5.5,
            kvector_max_angle_deg: 35.0,
        }
    }
}

/// Force-model settings. The Gauss–Markov sigmas are stationary standard
/// deviations; the driving intensities are derived from them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsConfig {
    pub mu_sun: f64,
    pub c_km_s: f64,
    /// Photospheric flux [W/m^2].
    pub p0_w_m2: f64,
    pub r0_km: f64,
    pub c_r: f64,
    pub area_m2: f64,
    pub mass_kg: f64,
    /// Inverse correlation time of both GM processes [1/s].
    pub xi_per_s: f64,
    pub sigma_r_km_s2: f64,
    pub sigma_srp_km_s2: f64,
    pub third_bodies: Vec<PlanetId>,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            mu_sun: MU_SUN,
            c_km_s: SPEED_OF_LIGHT,
            p0_w_m2: SOLAR_SURFACE_FLUX,
            r0_km: SUN_RADIUS_KM,
            c_r: 1.3,
            area_m2: 0.1,
            mass_kg: 20.0,
            xi_per_s: 1.0 / SECONDS_PER_DAY,
            sigma_r_km_s2: 1e-10,
            sigma_srp_km_s2: 1e-10,
            third_bodies: vec![PlanetId::Earth, PlanetId::Mars, PlanetId::Jupiter],
        }
    }
}

impl DynamicsConfig {
    pub fn params(&self) -> DynamicsParams {
        DynamicsParams {
            mu_sun: self.mu_sun,
            third_bodies: self.third_bodies.iter().map(|&p| (p, p.mu())).collect(),
            c: self.c_km_s,
            c_r: self.c_r,
            p0: self.p0_w_m2,
            r0_km: self.r0_km,
            area_m2: self.area_m2,
            mass_kg: self.mass_kg,
            xi: self.xi_per_s,
            sigma_r: gm_driving_sigma(self.sigma_r_km_s2, self.xi_per_s),
            sigma_srp: gm_driving_sigma(self.sigma_srp_km_s2, self.xi_per_s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthConfig {
    /// Bodies added to the filter's field for the truth trajectory.
    pub extra_bodies: Vec<PlanetId>,
    pub noise_step_s: f64,
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self {
            extra_bodies: vec![PlanetId::Venus, PlanetId::Saturn],
            noise_step_s: 600.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    pub sigma_r0_km: f64,
    pub sigma_v0_km_s: f64,
    pub sigma_eta_r0_km_s2: f64,
    pub sigma_eta_srp0_km_s2: f64,
    pub sigma_str_px: f64,
    pub k_gate: f64,
    pub mag_limit: f64,
    pub sea_min_deg: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            sigma_r0_km: 1e4,
            sigma_v0_km_s: 0.1,
            sigma_eta_r0_km_s2: 1e-10,
            sigma_eta_srp0_km_s2: 1e-10,
            sigma_str_px: 0.1,
            k_gate: 3.0,
            mag_limit: 7.0,
            sea_min_deg: 20.0,
        }
    }
}

impl FilterParams {
    pub fn initial_covariance(&self) -> Mat12 {
        let s = [
            self.sigma_r0_km,
            self.sigma_v0_km_s,
            self.sigma_eta_r0_km_s2,
            self.sigma_eta_srp0_km_s2,
        ];
        Mat12::from_diagonal(&crate::dynamics::Vec12::from_fn(|i, _| s[i / 3] * s[i / 3]))
    }
}

/// Reference transfer: the spacecraft leaves the Earth–Moon barycenter on a
/// tangential burn whose aphelion reaches `aphelion_au`, and navigation
/// starts `days_after_departure` later.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryConfig {
    pub departure_jd: f64,
    pub days_after_departure: f64,
    pub aphelion_au: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            departure_jd: DEFAULT_DEPARTURE_JD,
            days_after_departure: 60.0,
            aphelion_au: 1.524,
        }
    }
}

/// Departure of the late-2026 Earth–Mars Hohmann opportunity under the
/// built-in ephemeris.
pub const DEFAULT_DEPARTURE_JD: f64 = 2_461_342.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IpCampaignConfig {
    /// Scenes with at least one planet in the field of view.
    pub scenes: usize,
    pub sigma_r_km: Vec<f64>,
    pub sigma_v_km_s: f64,
    /// Heliocentric ecliptic position spread [AU].
    pub pose_sigma_au: [f64; 3],
    pub min_sun_distance_au: f64,
    pub min_planet_distance_km: f64,
    /// A solved attitude further than this from the truth counts as wrong.
    pub wrong_attitude_arcsec: f64,
    /// A detected planet further than this from its true pixel counts as wrong.
    pub wrong_planet_px: f64,
    pub max_draws: usize,
}

impl Default for IpCampaignConfig {
    fn default() -> Self {
        Self {
            scenes: 300,
            sigma_r_km: vec![1e4, 1e5, 1e6, 1e7],
            sigma_v_km_s: 0.1,
            pose_sigma_au: [3.0, 3.0, 0.07],
            min_sun_distance_au: 0.3,
            min_planet_distance_km: 1e7,
            wrong_attitude_arcsec: 300.0,
            wrong_planet_px: 2.0,
            max_draws: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub sample_count: usize,
    /// Ablation case 1..=5.
    pub case_mode: u8,
    pub ephemeris: EphemerisConfig,
    pub catalog: CatalogConfig,
    pub camera: CameraConfig,
    pub noise: NoiseConfig,
    pub ip: IpConfig,
    pub dynamics: DynamicsConfig,
    pub truth: TruthConfig,
    pub filter: FilterParams,
    pub schedule: ConopsSchedule,
    pub trajectory: TrajectoryConfig,
    pub ip_campaign: IpCampaignConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            sample_count: 10,
            case_mode: 1,
            ephemeris: EphemerisConfig::default(),
            catalog: CatalogConfig::default(),
            camera: CameraConfig::default(),
            noise: NoiseConfig::default(),
            ip: IpConfig::default(),
            dynamics: DynamicsConfig::default(),
            truth: TruthConfig::default(),
            filter: FilterParams::default(),
            schedule: ConopsSchedule::default(),
            trajectory: TrajectoryConfig::default(),
            ip_campaign: IpCampaignConfig::default(),
        }
    }
}

/// How the light effects are handled in one ablation case.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseWiring {
    pub correct_star_aberration: bool,
    pub correct_planet_aberration: bool,
    pub measurement_mode: MeasurementMode,
}

impl CaseWiring {
    /// 1: full model; 2: aberration removed in the image, light time in the
    /// model; 3: no correction; 4: aberration only; 5: light time only,
    /// with no aberration correction anywhere.
    pub fn for_case(case: u8) -> Result<Self> {
        let (star, planet, mode) = match case {
            1 => (true, false, MeasurementMode::CASE1_FULL),
            2 => (true, true, MeasurementMode::CASE2_LT_ONLY),
            3 => (true, false, MeasurementMode::GEOMETRIC),
            4 => (true, false, MeasurementMode::ABERRATION_ONLY),
            5 => (false, false, MeasurementMode::CASE2_LT_ONLY),
            _ => return Err(NavError::Config(format!("case_mode must be in 1..=5, got {case}"))),
        };
        Ok(Self {
            correct_star_aberration: star,
            correct_planet_aberration: planet,
            measurement_mode: mode,
        })
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| NavError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| NavError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable config")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NavError::Config(m.to_string()));
        CaseWiring::for_case(self.case_mode)?;
        for p in [&self.ephemeris.path, &self.catalog.path].into_iter().flatten() {
            if !p.exists() {
                return Err(NavError::Config(format!("referenced file {} does not exist", p.display())));
            }
        }
        CameraModel::from_config(&self.camera).map_err(|e| NavError::Config(e.to_string()))?;
        self.noise.validate().map_err(|e| NavError::Config(e.to_string()))?;
        self.schedule.validate().map_err(|e| NavError::Config(e.to_string()))?;
        self.dynamics.params().validate().map_err(|e| NavError::Config(e.to_string()))?;
        let f = &self.filter;
        let sig = [
            f.sigma_r0_km,
            f.sigma_v0_km_s,
            f.sigma_eta_r0_km_s2,
            f.sigma_eta_srp0_km_s2,
            f.sigma_str_px,
            f.k_gate,
        ];
        if sig.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("filter sigmas and k_gate must be positive");
        }
        if !(self.truth.noise_step_s > 0.0) {
            return bad("truth.noise_step_s must be positive");
        }
        let ipc = &self.ip_campaign;
        if ipc.sigma_r_km.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("ip_campaign.sigma_r_km entries must be non-negative");
        }
        if !(self.trajectory.aphelion_au > 1.0) {
            return bad("trajectory.aphelion_au must exceed 1");
        }
        Ok(())
    }

    pub fn wiring(&self) -> Result<CaseWiring> {
        CaseWiring::for_case(self.case_mode)
    }

    pub fn filter_config(&self) -> Result<FilterConfig> {
        let w = self.wiring()?;
        Ok(FilterConfig {
            sigma_px: self.filter.sigma_str_px,
            k_gate: self.filter.k_gate,
            measurement_mode: w.measurement_mode,
            correct_star_aberration: w.correct_star_aberration,
            correct_planet_aberration: w.correct_planet_aberration,
            visibility: VisibilityThresholds {
                mag_limit: self.filter.mag_limit,
                sea_min_deg: self.filter.sea_min_deg,
            },
            measurements_enabled: true,
        })
    }

    pub fn truth_model(&self) -> TruthModel {
        let mut params = self.dynamics.params();
        for &b in &self.truth.extra_bodies {
            if !params.third_bodies.iter().any(|(p, _)| *p == b) {
                params.third_bodies.push((b, b.mu()));
            }
        }
        TruthModel {
            params,
            noise_step: self.truth.noise_step_s,
        }
    }

    /// Navigation start epoch [s past J2000].
    pub fn start_epoch(&self) -> f64 {
        jd_to_seconds(self.trajectory.departure_jd) + self.trajectory.days_after_departure * SECONDS_PER_DAY
    }
}

/// Loaded, immutable environment shared by every sample.
pub struct Environment {
    pub ephemeris: Ephemeris,
    pub catalog: StarCatalog,
    pub kvec: KVectorCatalog,
    pub camera: CameraModel,
}

impl Environment {
    pub fn build(cfg: &ScenarioConfig) -> Result<Self> {
        let ephemeris = match &cfg.ephemeris.path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| NavError::io(p, e))?;
                let century = 36_525.0 * SECONDS_PER_DAY;
                Ephemeris::from_json(&text, (-century, century))?
            }
            None => Ephemeris::mean_j2000(),
        };
        let c = &cfg.catalog;
        let catalog = match &c.path {
            Some(p) => load_star_catalog(p)?,
            None => StarCatalog::synthetic(c.synthetic_seed, c.synthetic_mag_min, c.synthetic_mag_max),
        };
        let kvec = build_kvector(&catalog, c.kvector_mag_limit, c.kvector_max_angle_deg.to_radians());
        let camera = CameraModel::from_config(&cfg.camera)?;
        Ok(Self {
            ephemeris,
            catalog,
            kvec,
            camera,
        })
    }
}

/// Spacecraft state at departure: Earth–Moon barycenter position with a
/// tangential velocity giving the configured aphelion.
pub fn departure_state(traj: &TrajectoryConfig, mu_sun: f64, eph: &Ephemeris) -> Result<StateVector> {
    let t = jd_to_seconds(traj.departure_jd);
    let (r, v) = eph.planet_state(PlanetId::Earth, t)?;
    let rp = r.norm();
    let ra = traj.aphelion_au * AU_KM;
    let speed = (2.0 * mu_sun * ra / (rp * (rp + ra))).sqrt();
    let h = r.cross(&v).normalize();
    let dir = h.cross(&r).normalize();
    Ok(StateVector::new(r, dir * speed))
}

/// Nominal state at the navigation start. The departure arc is a pure
/// heliocentric two-body flight: the departure point coincides with the
/// Earth–Moon barycenter, where its attraction is singular.
pub fn nominal_initial_state(cfg: &ScenarioConfig, eph: &Ephemeris) -> Result<StateVector> {
    let x0 = departure_state(&cfg.trajectory, cfg.dynamics.mu_sun, eph)?;
    let two_body = DynamicsParams {
        third_bodies: Vec::new(),
        c_r: 0.0,
        ..cfg.dynamics.params()
    };
    let scales = ScaleSet::new(AU_KM, cfg.dynamics.mu_sun);
    propagate_state(
        &x0,
        jd_to_seconds(cfg.trajectory.departure_jd),
        cfg.start_epoch(),
        &two_body,
        &scales,
        eph,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_gives_defaults() {
        let cfg = ScenarioConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
    }

    #[test]
    fn partial_blocks_keep_other_defaults() {
        let cfg = ScenarioConfig::from_json(r#"{"filter": {"k_gate": 4.0}, "schedule": {"leg_count": 1}}"#).unwrap();
        assert_eq!(cfg.filter.k_gate, 4.0);
        assert_eq!(cfg.filter.sigma_str_px, 0.1);
        assert_eq!(cfg.schedule.leg_count, 1);
        assert_eq!(cfg.schedule.meas_period, 100.0);
    }

    #[test]
    fn round_trip() {
        let mut cfg = ScenarioConfig {
            case_mode: 4,
            ..ScenarioConfig::default()
        };
        cfg.ip_campaign.sigma_r_km = vec![1.0, 2.0];
        assert_eq!(ScenarioConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_case_and_missing_file() {
        assert!(matches!(
            ScenarioConfig::from_json(r#"{"case_mode": 6}"#),
            Err(NavError::Config(_))
        ));
        assert!(matches!(
            ScenarioConfig::from_json(r#"{"catalog": {"path": "/nonexistent/stars.csv"}}"#),
            Err(NavError::Config(_))
        ));
        assert!(matches!(ScenarioConfig::from_json("{ not json"), Err(NavError::Config(_))));
    }

    #[test]
    fn departure_reaches_aphelion() {
        let eph = Ephemeris::mean_j2000();
        let traj = TrajectoryConfig::default();
        let x = departure_state(&traj, MU_SUN, &eph).unwrap();
        let r = x.r.norm();
        let v2 = x.v.norm_squared();
        let a = 1.0 / (2.0 / r - v2 / MU_SUN);
        let e = 1.0 - r / a;
        assert!((a * (1.0 + e) / AU_KM - traj.aphelion_au).abs() < 1e-9);
        assert!(x.r.dot(&x.v).abs() < 1e-6 * r * x.v.norm());
    }

    #[test]
    fn case_wiring_table() {
        let c1 = CaseWiring::for_case(1).unwrap();
        assert!(c1.measurement_mode.light_time && c1.measurement_mode.aberration);
        let c2 = CaseWiring::for_case(2).unwrap();
        assert!(c2.correct_planet_aberration && !c2.measurement_mode.aberration);
        let c5 = CaseWiring::for_case(5).unwrap();
        assert!(!c5.correct_star_aberration && !c5.correct_planet_aberration && !c5.measurement_mode.aberration);
        assert!(CaseWiring::for_case(0).is_err());
    }
}
