//! Non-dimensional extended Kalman filter, innovation gating and the
//! observation/propagation executive.

use nalgebra::{Matrix2, SMatrix, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, Pixel};
use crate::constants::SECONDS_PER_DAY;
use crate::dynamics::{propagate, DynamicsParams, Mat12, ScaleSet, StateVector, TruthModel, Vec12};
use crate::ephemeris::{Ephemeris, PlanetId};
use crate::error::{NavError, Result};
use crate::imgproc::{correct_pixel_aberration, process_image, IpConfig, IpInput};
use crate::kvector::KVectorCatalog;
use crate::math::{symmetrize, AttitudeQuat, Mat3};
use crate::measurement::{predict_from_states, MeasurementMode};
use crate::scene::{jitter_attitude, pointing_matrix, Renderer};
use crate::selection::{select_optimal_pair, visible_planets, VisibilityThresholds};

pub type HMatrix = SMatrix<f64, 2, 12>;

/// Filter estimate, held in non-dimensional units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub x_nd: Vec12,
    pub p_nd: Mat12,
    pub epoch: f64,
    pub scales: ScaleSet,
}

impl FilterState {
    pub fn new(x: &StateVector, p: &Mat12, epoch: f64, scales: ScaleSet) -> Self {
        Self {
            x_nd: scales.state_to_nd(&x.to_vector()),
            p_nd: scales.cov_to_nd(p),
            epoch,
            scales,
        }
    }

    pub fn state(&self) -> StateVector {
        StateVector::from_vector(&self.scales.state_from_nd(&self.x_nd))
    }

    pub fn covariance(&self) -> Mat12 {
        self.scales.cov_from_nd(&self.p_nd)
    }

    pub fn propagate_to(&mut self, t: f64, params: &DynamicsParams, eph: &Ephemeris) -> Result<()> {
        if t < self.epoch {
            return Err(NavError::InvalidArgument("filter epoch must not decrease".into()));
        }
        let (x, p) = propagate(&self.state(), &self.covariance(), self.epoch, t, params, &self.scales, eph)?;
        *self = Self::new(&x, &p, t, self.scales);
        Ok(())
    }
}

/// Kalman correction with the Joseph-form covariance update.
pub fn ekf_update(
    x_p: &Vec12,
    p_p: &Mat12,
    innovation: &Vector2<f64>,
    h: &HMatrix,
    r: &Matrix2<f64>,
) -> Result<(Vec12, Mat12)> {
    let m = h * p_p * h.transpose() + r;
    let m_inv = m
        .try_inverse()
        .ok_or(NavError::SingularInnovation)?;
    let k = p_p * h.transpose() * m_inv;
    let x_c = x_p + k * innovation;
    let ikh = Mat12::identity() - k * h;
    let mut p_c = ikh * p_p * ikh.transpose() + k * r * k.transpose();
    symmetrize(&mut p_c);
    Ok((x_c, p_c))
}

/// Per-axis gate: accept unless some component exceeds `k sqrt(M_ii)`.
pub fn innovation_gate(innovation: &Vector2<f64>, m: &Matrix2<f64>, k: f64) -> bool {
    (0..2).all(|i| innovation[i].abs() <= k * m[(i, i)].sqrt())
}

/// Initial estimate `x_nominal + 3 sqrt(diag P0) * u`, `u` uniform in [-1, 1].
pub fn initialize_sample<R: Rng + ?Sized>(x_nominal: &Vec12, p0: &Mat12, rng: &mut R) -> Vec12 {
    Vec12::from_fn(|i, _| x_nominal[i] + 3.0 * p0[(i, i)].sqrt() * rng.random_range(-1.0..=1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConopsSchedule {
    pub leg_count: usize,
    pub track_duration: f64,
    pub meas_period: f64,
    pub slew_duration: f64,
    pub coast_duration: f64,
    /// Spacing of the records written during the coast arc.
    pub coast_checkpoint: f64,
}

impl Default for ConopsSchedule {
    fn default() -> Self {
        Self {
            leg_count: 3,
            track_duration: 3600.0,
            meas_period: 100.0,
            slew_duration: 1800.0,
            coast_duration: 10.0 * SECONDS_PER_DAY,
            coast_checkpoint: SECONDS_PER_DAY,
        }
    }
}

impl ConopsSchedule {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("track_duration", self.track_duration),
            ("meas_period", self.meas_period),
            ("slew_duration", self.slew_duration),
            ("coast_duration", self.coast_duration),
            ("coast_checkpoint", self.coast_checkpoint),
        ];
        for (name, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(NavError::Config(format!("schedule {name} must be positive")));
            }
        }
        if self.leg_count == 0 {
            return Err(NavError::Config("schedule leg_count must be positive".into()));
        }
        Ok(())
    }

    pub fn measurements_per_window(&self) -> usize {
        (self.track_duration / self.meas_period).floor() as usize
    }

    pub fn leg_duration(&self) -> f64 {
        2.0 * self.track_duration + self.slew_duration + self.coast_duration
    }

    /// Relative epochs (from leg start) of the coast checkpoints.
    pub fn coast_epochs(&self) -> Vec<f64> {
        let start = 2.0 * self.track_duration + self.slew_duration;
        let n = (self.coast_duration / self.coast_checkpoint).ceil() as usize;
        (1..=n)
            .map(|k| start + (k as f64 * self.coast_checkpoint).min(self.coast_duration))
            .collect()
    }

    pub fn records_per_leg(&self) -> usize {
        2 * self.measurements_per_window() + self.coast_epochs().len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementOutcome {
    Accepted,
    Gated,
    IpFailed,
    None,
}

impl MeasurementOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            MeasurementOutcome::Accepted => "accepted",
            MeasurementOutcome::Gated => "gated",
            MeasurementOutcome::IpFailed => "ip_failed",
            MeasurementOutcome::None => "none",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NavRecord {
    pub leg: usize,
    pub epoch: f64,
    pub x_true: Vec12,
    pub x_est: Vec12,
    pub p: Mat12,
    pub outcome: MeasurementOutcome,
    pub tracked_planet: Option<PlanetId>,
}

impl NavRecord {
    pub fn error(&self) -> Vec12 {
        self.x_est - self.x_true
    }

    /// Normalized estimation error squared, evaluated in the units of `scales`.
    pub fn nees(&self, scales: &ScaleSet) -> f64 {
        let e = scales.state_to_nd(&self.error());
        let p = scales.cov_to_nd(&self.p);
        match p.cholesky() {
            Some(c) => e.dot(&c.solve(&e)),
            None => f64::NAN,
        }
    }
}

/// Filter tuning and the light-effect wiring of the measurement chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Pixel measurement standard deviation.
    pub sigma_px: f64,
    pub k_gate: f64,
    pub measurement_mode: MeasurementMode,
    /// Correct stellar aberration before the final attitude solve.
    pub correct_star_aberration: bool,
    /// Correct the extracted planet pixel for aberration inside the IP.
    pub correct_planet_aberration: bool,
    pub visibility: VisibilityThresholds,
    /// Process images at all (false turns the executive into a pure propagator).
    pub measurements_enabled: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            sigma_px: 0.1,
            k_gate: 3.0,
            measurement_mode: MeasurementMode::CASE1_FULL,
            correct_star_aberration: true,
            correct_planet_aberration: false,
            visibility: VisibilityThresholds::default(),
            measurements_enabled: true,
        }
    }
}

/// Everything a sample needs besides its own state and random streams.
pub struct NavContext<'a> {
    pub ephemeris: &'a Ephemeris,
    pub renderer: Renderer<'a>,
    pub camera: &'a CameraModel,
    pub kvec: &'a KVectorCatalog,
    pub ip: IpConfig,
    pub filter: FilterConfig,
    pub dynamics: DynamicsParams,
    pub truth: TruthModel,
    pub schedule: ConopsSchedule,
}

/// Mutable state of one Monte Carlo sample.
#[derive(Clone, Debug)]
pub struct SampleState {
    pub filter: FilterState,
    pub truth: StateVector,
}

/// Independent random streams for truth noise, sensor noise and IP.
pub struct SampleRngs<R> {
    pub truth: R,
    pub sensor: R,
}

impl NavContext<'_> {
    fn advance(&self, s: &mut SampleState, t: f64, truth_rng: &mut impl Rng) -> Result<()> {
        s.truth = self
            .truth
            .advance(&s.truth, s.filter.epoch, t, &s.filter.scales, self.ephemeris, truth_rng)?;
        s.filter.propagate_to(t, &self.dynamics, self.ephemeris)
    }

    fn record(&self, s: &SampleState, leg: usize, outcome: MeasurementOutcome, planet: Option<PlanetId>) -> NavRecord {
        NavRecord {
            leg,
            epoch: s.filter.epoch,
            x_true: s.truth.to_vector(),
            x_est: s.filter.state().to_vector(),
            p: s.filter.covariance(),
            outcome,
            tracked_planet: planet,
        }
    }

    /// Render, process and (if consistent) apply one planet observation.
    /// Returns the outcome and the solved attitude for the next frame.
    fn observe(
        &self,
        s: &mut SampleState,
        planet: PlanetId,
        attitude: &AttitudeQuat,
        prior: Option<Mat3>,
        rng: &mut impl Rng,
    ) -> Result<(MeasurementOutcome, Option<Mat3>)> {
        let t = s.filter.epoch;
        let (image, _) = self.renderer.render(&s.truth.r, &s.truth.v, attitude, t, rng)?;
        let est = s.filter.state();
        let p = s.filter.covariance();
        let p_rr = p.fixed_view::<3, 3>(0, 0).into_owned();
        let sigma_r = p_rr.symmetric_eigenvalues().max().max(0.0).sqrt();
        let (r_pl, v_pl) = self.ephemeris.planet_state(planet, t)?;
        let prior_sigma = self.renderer.noise.jitter_sigma * std::f64::consts::SQRT_2;
        let input = IpInput {
            prior_attitude: prior,
            prior_sigma,
            r_est: est.r,
            v_est: est.v,
            r_pl,
            sigma_r,
            correct_aberration: self.filter.correct_star_aberration,
        };
        let ip = match process_image(&image, &input, self.camera, self.kvec, &self.ip, rng) {
            Ok(ip) => ip,
            Err(NavError::IdentificationFailure(_)) | Err(NavError::Degenerate(_)) => {
                return Ok((MeasurementOutcome::IpFailed, None));
            }
            Err(e) => return Err(e),
        };
        let next_prior = Some(ip.a_raw);
        let Some(mut pixel) = ip.planet_pixel else {
            return Ok((MeasurementOutcome::IpFailed, next_prior));
        };
        if self.filter.correct_planet_aberration {
            match correct_pixel_aberration(&pixel, &ip.a_corr, &est.v, self.camera) {
                Some(p) => pixel = p,
                None => return Ok((MeasurementOutcome::IpFailed, next_prior)),
            }
        }
        let outcome = self.apply_measurement(s, &pixel, &ip.q_corr, &r_pl, &v_pl)?;
        Ok((outcome, next_prior))
    }

    fn apply_measurement(
        &self,
        s: &mut SampleState,
        pixel: &Pixel,
        q: &AttitudeQuat,
        r_pl: &nalgebra::Vector3<f64>,
        v_pl: &nalgebra::Vector3<f64>,
    ) -> Result<MeasurementOutcome> {
        let est = s.filter.state();
        let pred = match predict_from_states(&est.r, &est.v, q, r_pl, v_pl, self.camera, self.filter.measurement_mode) {
            Ok(p) => p,
            Err(NavError::BehindCamera) => return Ok(MeasurementOutcome::IpFailed),
            Err(e) => return Err(e),
        };
        // Columns for r and v only, mapped to non-dimensional state units.
        let scales = s.filter.scales;
        let mut h = HMatrix::zeros();
        h.fixed_view_mut::<2, 6>(0, 0)
            .copy_from(&pred.jacobian_pi.fixed_view::<2, 6>(0, 0));
        for j in 0..3 {
            h.column_mut(j).scale_mut(scales.du);
            h.column_mut(3 + j).scale_mut(scales.vu());
        }
        let r = Matrix2::identity() * (self.filter.sigma_px * self.filter.sigma_px);
        let innovation = pixel - pred.pixel;
        let m = h * s.filter.p_nd * h.transpose() + r;
        if !innovation_gate(&innovation, &m, self.filter.k_gate) {
            return Ok(MeasurementOutcome::Gated);
        }
        let (x, p) = ekf_update(&s.filter.x_nd, &s.filter.p_nd, &innovation, &h, &r)?;
        s.filter.x_nd = x;
        s.filter.p_nd = p;
        Ok(MeasurementOutcome::Accepted)
    }

    /// Pair of planets to track this leg, chosen from the estimated state.
    pub fn select_targets(&self, s: &SampleState) -> Result<Vec<PlanetId>> {
        let est = s.filter.state();
        let reports = visible_planets(s.filter.epoch, &est.r, self.ephemeris, &self.filter.visibility)?;
        let sigma_str = self.filter.sigma_px / self.camera.focal_px();
        if let Some((a, b)) = select_optimal_pair(&reports, sigma_str) {
            return Ok(vec![a, b]);
        }
        Ok(reports.iter().filter(|r| r.visible).map(|r| r.planet).take(1).collect())
    }

    /// One CONOPS leg: track, slew, track, coast.
    pub fn run_navigation_leg<R: Rng>(
        &self,
        s: &mut SampleState,
        leg: usize,
        rngs: &mut SampleRngs<R>,
    ) -> Result<Vec<NavRecord>> {
        let sched = &self.schedule;
        let t_leg = s.filter.epoch;
        let targets = self.select_targets(s)?;
        let mut records = Vec::with_capacity(sched.records_per_leg());
        let n = sched.measurements_per_window();
        for window in 0..2 {
            let t_win = t_leg + window as f64 * (sched.track_duration + sched.slew_duration);
            // With a single visible planet it is tracked in both windows.
            let planet = targets.get(window).or(targets.first()).copied();
            let mut nominal: Option<Mat3> = None;
            let mut prior: Option<Mat3> = None;
            for k in 0..n {
                let t = t_win + k as f64 * sched.meas_period;
                self.advance(s, t, &mut rngs.truth)?;
                let outcome = match (planet, self.filter.measurements_enabled) {
                    (Some(pl), true) => {
                        let a_nom = match nominal {
                            Some(a) => a,
                            None => {
                                let (r_pl, _) = self.ephemeris.planet_state(pl, t)?;
                                let roll = rngs.sensor.random_range(0.0..std::f64::consts::TAU);
                                let a = pointing_matrix(&(r_pl - s.truth.r), roll);
                                nominal = Some(a);
                                a
                            }
                        };
                        let attitude = jitter_attitude(&a_nom, &self.renderer.noise, &mut rngs.sensor);
                        let (outcome, next) = self.observe(s, pl, &attitude, prior, &mut rngs.sensor)?;
                        prior = next;
                        outcome
                    }
                    _ => MeasurementOutcome::None,
                };
                records.push(self.record(s, leg, outcome, planet));
            }
        }
        for dt in sched.coast_epochs() {
            self.advance(s, t_leg + dt, &mut rngs.truth)?;
            records.push(self.record(s, leg, MeasurementOutcome::None, None));
        }
        Ok(records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_jacobian_leaves_state() {
        let x = Vec12::from_fn(|i, _| i as f64);
        let p = Mat12::identity() * 2.0;
        let (xc, pc) = ekf_update(&x, &p, &Vector2::new(1.0, -1.0), &HMatrix::zeros(), &Matrix2::identity()).unwrap();
        assert_eq!(xc, x);
        assert_eq!(pc, p);
    }

    #[test]
    fn huge_noise_gives_negligible_correction() {
        let x = Vec12::zeros();
        let p = Mat12::identity();
        let mut h = HMatrix::zeros();
        h[(0, 0)] = 1.0;
        h[(1, 4)] = 1.0;
        let (xc, pc) = ekf_update(&x, &p, &Vector2::new(1.0, 1.0), &h, &(Matrix2::identity() * 1e12)).unwrap();
        assert!(xc.norm() < 1e-11);
        assert_relative_eq!(pc, p, epsilon = 1e-11);
    }

    #[test]
    fn scalar_hand_case() {
        let x = Vec12::zeros();
        let p = Mat12::identity();
        let mut h = HMatrix::zeros();
        h[(0, 0)] = 1.0;
        let (xc, pc) = ekf_update(&x, &p, &Vector2::new(1.0, 0.0), &h, &Matrix2::identity()).unwrap();
        assert_relative_eq!(xc[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(pc[(0, 0)], 0.5, epsilon = 1e-15);
        assert_eq!(xc[1], 0.0);
        assert_eq!(pc[(1, 1)], 1.0);
    }

    #[test]
    fn singular_innovation_covariance() {
        let err = ekf_update(
            &Vec12::zeros(),
            &Mat12::zeros(),
            &Vector2::zeros(),
            &HMatrix::zeros(),
            &Matrix2::zeros(),
        )
        .unwrap_err();
        assert!(matches!(err, NavError::SingularInnovation));
    }

    #[test]
    fn gate_examples() {
        let m = Matrix2::new(4.0, 0.5, 0.5, 9.0);
        assert!(innovation_gate(&Vector2::zeros(), &m, 3.0));
        assert!(!innovation_gate(&Vector2::new(4.0 * 2.0, 0.0), &m, 3.0));
        assert!(innovation_gate(&Vector2::new(2.9 * 2.0, 2.9 * 3.0), &m, 3.0));
        assert!(!innovation_gate(&Vector2::new(0.0, -3.1 * 3.0), &m, 3.0));
    }

    #[test]
    fn sample_initialization() {
        let nominal = Vec12::from_fn(|i, _| 10.0 * i as f64);
        let mut p0 = Mat12::zeros();
        for i in 0..12 {
            p0[(i, i)] = [1e8, 1e-2, 1e-20][(i / 3).min(2)];
        }
        let zero = Mat12::zeros();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(initialize_sample(&nominal, &zero, &mut rng), nominal);
        let n = 10_000;
        let mut max_dev = Vec12::zeros();
        let mut sum2 = Vec12::zeros();
        for _ in 0..n {
            let x = initialize_sample(&nominal, &p0, &mut rng);
            let d = x - nominal;
            for i in 0..12 {
                max_dev[i] = f64::max(max_dev[i], d[i].abs());
                sum2[i] += d[i] * d[i];
            }
        }
        for i in 0..12 {
            let sigma = p0[(i, i)].sqrt();
            assert!(max_dev[i] <= 3.0 * sigma);
            assert!(max_dev[i] > 2.9 * sigma);
            // Uniform on [-3s, 3s] has variance 3 s^2.
            let var = sum2[i] / n as f64;
            assert!((var / (3.0 * sigma * sigma) - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn schedule_shape() {
        let s = ConopsSchedule::default();
        assert_eq!(s.measurements_per_window(), 36);
        assert_eq!(s.coast_epochs().len(), 10);
        assert_eq!(s.records_per_leg(), 82);
        assert_relative_eq!(s.leg_duration(), 10.0 * 86400.0 + 2.5 * 3600.0);
        assert_relative_eq!(*s.coast_epochs().last().unwrap(), s.leg_duration());
    }
}
