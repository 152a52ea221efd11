use approx::assert_relative_eq;
use navsim::constants::{AU_KM, MU_SUN, SECONDS_PER_DAY};
use navsim::dynamics::{
    propagate, propagate_state, state_transition, DynamicsParams, Mat12, ScaleSet, StateVector, TruthModel,
};
use navsim::ephemeris::Ephemeris;
use navsim::math::Vec3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn two_body() -> DynamicsParams {
    DynamicsParams {
        third_bodies: vec![],
        c_r: 0.0,
        sigma_r: 0.0,
        sigma_srp: 0.0,
        ..DynamicsParams::default()
    }
}

/// Elliptic two-body state from elements in the x-y plane (independent of
/// the integrator) at mean anomaly `m`.
fn kepler_state(a: f64, e: f64, m: f64) -> (Vec3, Vec3) {
    let mut ea = m;
    for _ in 0..50 {
        ea -= (ea - e * ea.sin() - m) / (1.0 - e * ea.cos());
    }
    let n = (MU_SUN / (a * a * a)).sqrt();
    let b = a * (1.0 - e * e).sqrt();
    let r = Vec3::new(a * (ea.cos() - e), b * ea.sin(), 0.0);
    let edot = n / (1.0 - e * ea.cos());
    let v = Vec3::new(-a * ea.sin() * edot, b * ea.cos() * edot, 0.0);
    (r, v)
}

#[test]
fn two_body_full_period_returns_to_start() {
    let eph = Ephemeris::mean_j2000();
    let a = 1.3 * AU_KM;
    let (r, v) = kepler_state(a, 0.2, 0.4);
    let period = std::f64::consts::TAU * (a * a * a / MU_SUN).sqrt();
    let x = StateVector::new(r, v);
    let x1 = propagate_state(&x, 0.0, period, &two_body(), &ScaleSet::default(), &eph).unwrap();
    assert!((x1.r - r).norm() < 1.0, "{}", (x1.r - r).norm());
    // Half period against the Kepler solution.
    let x_half = propagate_state(&x, 0.0, period / 2.0, &two_body(), &ScaleSet::default(), &eph).unwrap();
    let (r_half, _) = kepler_state(a, 0.2, 0.4 + std::f64::consts::PI);
    assert!((x_half.r - r_half).norm() < 1.0);
}

#[test]
fn two_body_conserves_energy_and_momentum() {
    let eph = Ephemeris::mean_j2000();
    let (r, v) = kepler_state(1.1 * AU_KM, 0.1, 1.0);
    let x = StateVector::new(r, v);
    let x1 = propagate_state(&x, 0.0, 200.0 * SECONDS_PER_DAY, &two_body(), &ScaleSet::default(), &eph).unwrap();
    let energy = |s: &StateVector| s.v.norm_squared() / 2.0 - MU_SUN / s.r.norm();
    assert_relative_eq!(energy(&x1), energy(&x), max_relative = 1e-10);
    assert_relative_eq!(x1.r.cross(&x1.v), r.cross(&v), max_relative = 1e-10);
}

#[test]
fn covariance_matches_stm_mapping_without_noise() {
    let eph = Ephemeris::mean_j2000();
    let params = DynamicsParams {
        sigma_r: 0.0,
        sigma_srp: 0.0,
        ..DynamicsParams::default()
    };
    let x = StateVector::new(Vec3::new(1.1 * AU_KM, 0.2 * AU_KM, 0.0), Vec3::new(-5.0, 28.0, 0.5));
    let mut p0 = Mat12::zeros();
    let sig = [1e4, 1e4, 1e4, 0.1, 0.1, 0.1, 1e-10, 1e-10, 1e-10, 1e-10, 1e-10, 1e-10];
    for i in 0..12 {
        p0[(i, i)] = sig[i] * sig[i];
    }
    p0[(0, 3)] = 0.3 * sig[0] * sig[3];
    p0[(3, 0)] = p0[(0, 3)];
    let (t0, t1) = (1.0e8, 1.0e8 + 5.0 * SECONDS_PER_DAY);
    let scales = ScaleSet::default();
    let (_, p1) = propagate(&x, &p0, t0, t1, &params, &scales, &eph).unwrap();
    let phi = state_transition(&x, t0, t1, &params, &scales, &eph).unwrap();
    let expected = phi * p0 * phi.transpose();
    for i in 0..12 {
        for j in 0..12 {
            let scale = (expected[(i, i)] * expected[(j, j)]).sqrt();
            assert!(((p1[(i, j)] - expected[(i, j)]) / scale).abs() < 1e-6, "({i},{j}) {} {} {}", p1[(i, j)], expected[(i, j)], scale);
        }
    }
    assert_eq!(p1, p1.transpose());
    assert!(p1.symmetric_eigenvalues().iter().all(|&l| l > -1e-9 * p1.norm()));
}

#[test]
fn gauss_markov_variance_reaches_stationary_value() {
    let eph = Ephemeris::mean_j2000();
    let params = DynamicsParams {
        sigma_r: 1e-10,
        sigma_srp: 2e-10,
        ..DynamicsParams::default()
    };
    let x = StateVector::new(Vec3::new(AU_KM, 0.0, 0.0), Vec3::new(0.0, 29.8, 0.0));
    let (_, p) = propagate(&x, &Mat12::zeros(), 0.0, 20.0 / params.xi, &params, &ScaleSet::default(), &eph).unwrap();
    let expected_r = params.sigma_r.powi(2) / (2.0 * params.xi);
    let expected_s = params.sigma_srp.powi(2) / (2.0 * params.xi);
    assert!((p[(6, 6)] / expected_r - 1.0).abs() < 0.05);
    assert!((p[(11, 11)] / expected_s - 1.0).abs() < 0.05);
}

#[test]
fn redimensionalized_result_independent_of_distance_unit() {
    let eph = Ephemeris::mean_j2000();
    let params = DynamicsParams::default();
    let x = StateVector::new(Vec3::new(1.2 * AU_KM, -0.3 * AU_KM, 1e6), Vec3::new(8.0, 25.0, 0.3));
    let p0 = Mat12::from_diagonal(&nalgebra::SVector::<f64, 12>::from_column_slice(&[
        1e8, 1e8, 1e8, 1e-2, 1e-2, 1e-2, 1e-20, 1e-20, 1e-20, 1e-20, 1e-20, 1e-20,
    ]));
    let (t0, t1) = (0.0, 3.0 * SECONDS_PER_DAY);
    let (xa, pa) = propagate(&x, &p0, t0, t1, &params, &ScaleSet::default(), &eph).unwrap();
    let (xb, pb) = propagate(&x, &p0, t0, t1, &params, &ScaleSet::new(AU_KM * 7.3, MU_SUN), &eph).unwrap();
    assert_relative_eq!(xa.r, xb.r, max_relative = 1e-10);
    assert_relative_eq!(xa.v, xb.v, max_relative = 1e-10);
    for i in 0..12 {
        assert_relative_eq!(pa[(i, i)], pb[(i, i)], max_relative = 1e-9);
    }
}

#[test]
fn truth_gm_realization_has_stationary_spread() {
    let eph = Ephemeris::mean_j2000();
    let truth = TruthModel::default();
    let (sr, _) = truth.stationary_sigmas();
    assert_relative_eq!(sr, 1e-10, max_relative = 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut x = StateVector::new(Vec3::new(AU_KM, 0.0, 0.0), Vec3::new(0.0, 29.8, 0.0));
    let mut sum2 = 0.0;
    let mut n = 0.0;
    let mut t = 0.0;
    for _ in 0..100 {
        x = truth.advance(&x, t, t + SECONDS_PER_DAY, &ScaleSet::default(), &eph, &mut rng).unwrap();
        t += SECONDS_PER_DAY;
        sum2 += x.eta_r.norm_squared() + x.eta_srp.norm_squared();
        n += 6.0;
    }
    let std = (sum2 / n).sqrt();
    assert!((std / 1e-10 - 1.0).abs() < 0.2, "{std}");
}
