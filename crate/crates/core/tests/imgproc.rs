use navsim::camera::{CameraConfig, CameraModel, Pixel};
use navsim::constants::{ARCSEC, AU_KM};
use navsim::ephemeris::{Ephemeris, StarCatalog, StarRecord};
use navsim::imgproc::*;
use navsim::kvector::{build_kvector, KVectorCatalog};
use navsim::math::{rotation_angle, AttitudeQuat, Mat3, Vec3};
use navsim::scene::{NoiseConfig, Renderer, SkyImage};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Fixture {
    catalog: StarCatalog,
    kvec: KVectorCatalog,
    eph: Ephemeris,
    cam: CameraModel,
}

fn fixture() -> Fixture {
    let catalog = StarCatalog::synthetic(42, -1.5, 7.0);
    let kvec = build_kvector(&catalog, 5.5, 35f64.to_radians());
    Fixture {
        catalog,
        kvec,
        eph: Ephemeris::new(Vec::new(), Ephemeris::mean_j2000().window),
        cam: CameraModel::from_config(&CameraConfig::default()).unwrap(),
    }
}

const R_SC: Vec3 = Vec3::new(AU_KM, 0.0, 0.0);
const V_SC: Vec3 = Vec3::new(0.0, 29.8, 0.0);
// Star-only scenes: the ephemeris holds no planets.
const T: f64 = 1e7;

fn random_attitude(rng: &mut ChaCha8Rng) -> AttitudeQuat {
    AttitudeQuat::from_rotation_vector(&Vec3::new(
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
    ))
}

/// The `n` brightest pair-table stars inside the field, as a catalog of
/// their own, for an attitude that has at least `n` of them.
fn bright_field(f: &Fixture, n: usize, rng: &mut ChaCha8Rng) -> (AttitudeQuat, StarCatalog) {
    loop {
        let q = random_attitude(rng);
        let a = q.dcm();
        let mut stars: Vec<StarRecord> = f
            .kvec
            .stars
            .stars()
            .iter()
            .filter(|s| {
                f.cam
                    .project(&a, &s.los)
                    .is_some_and(|p| p.x > 20.0 && p.y > 20.0 && p.x < 1004.0 && p.y < 1004.0)
            })
            .copied()
            .collect();
        if stars.len() < n {
            continue;
        }
        stars.sort_by(|x, y| x.vmag.total_cmp(&y.vmag));
        stars.truncate(n);
        return (q, StarCatalog::new(stars).unwrap());
    }
}

fn render_noiseless(f: &Fixture, catalog: &StarCatalog, q: &AttitudeQuat) -> (SkyImage, navsim::scene::GroundTruth) {
    let mut r = Renderer::new(catalog, &f.eph, &f.cam, NoiseConfig::noiseless());
    r.options.aberration = false;
    r.render_signal(&R_SC, &V_SC, q, T).unwrap()
}

fn truth_id_of(truth: &navsim::scene::GroundTruth, p: &Pixel) -> Option<u32> {
    truth
        .star_truths
        .iter()
        .find(|s| (s.pixel - p).norm() < 1.0)
        .map(|s| s.star_id)
}

#[test]
fn lost_in_space_matches_every_star_of_a_clean_field() {
    let f = fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let (q, cat) = bright_field(&f, 10, &mut rng);
        let (img, truth) = render_noiseless(&f, &cat, &q);
        let cents = extract_centroids(&img, &IpConfig::default().centroid);
        assert_eq!(cents.len(), 10);
        let sol = identify_stars_lis(&cents, &f.cam, &f.kvec, &StarIdConfig::default(), &mut rng).unwrap();
        assert_eq!(sol.inliers.len(), 10);
        assert!(sol.spikes.is_empty());
        for m in &sol.inliers {
            assert_eq!(truth_id_of(&truth, &cents[m.centroid_index].position), Some(m.star_id));
        }
        let e = rotation_angle(&sol.dcm(), &q.dcm()) / ARCSEC;
        assert!(e < 30.0, "attitude error {e} arcsec");
    }
}

#[test]
fn cosmic_ray_is_labelled_a_spike() {
    let f = fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (q, cat) = bright_field(&f, 10, &mut rng);
    let (mut img, _) = render_noiseless(&f, &cat, &q);
    let hit = Pixel::new(512.5, 300.5);
    img.set(512, 300, 1.0e5);
    let cents = extract_centroids(&img, &IpConfig::default().centroid);
    assert_eq!(cents.len(), 11);
    let sol = identify_stars_lis(&cents, &f.cam, &f.kvec, &StarIdConfig::default(), &mut rng).unwrap();
    assert_eq!(sol.inliers.len(), 10);
    assert_eq!(sol.spikes.len(), 1);
    assert!((cents[sol.spikes[0]].position - hit).norm() < 0.5);
    assert!(rotation_angle(&sol.dcm(), &q.dcm()) < 30.0 * ARCSEC);
}

#[test]
fn too_few_centroids_fail() {
    let f = fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (q, cat) = bright_field(&f, 2, &mut rng);
    let (img, _) = render_noiseless(&f, &cat, &q);
    let cents = extract_centroids(&img, &IpConfig::default().centroid);
    assert_eq!(cents.len(), 2);
    let err = identify_stars_lis(&cents, &f.cam, &f.kvec, &StarIdConfig::default(), &mut rng).unwrap_err();
    assert!(matches!(err, navsim::error::NavError::IdentificationFailure(_)));
}

fn offset(a: &Mat3, angle_deg: f64) -> Mat3 {
    AttitudeQuat::from_axis_angle(&Vec3::new(1.0, 1.0, 0.0).normalize(), angle_deg.to_radians()).dcm() * a
}

#[test]
fn recursive_identification_from_a_prior() {
    let f = fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (q, cat) = bright_field(&f, 15, &mut rng);
    let (img, truth) = render_noiseless(&f, &cat, &q);
    let cents = extract_centroids(&img, &IpConfig::default().centroid);
    let cfg = StarIdConfig::default();
    let a = q.dcm();

    let exact = identify_stars_recursive(&cents, &a, &f.kvec.stars, &f.cam, 20.0, &cfg, &mut rng).unwrap();
    assert_eq!(exact.inliers.len(), 15);
    let mut reference: Vec<(usize, u32)> = exact.inliers.iter().map(|m| (m.centroid_index, m.star_id)).collect();
    reference.sort();
    for (i, id) in &reference {
        assert_eq!(truth_id_of(&truth, &cents[*i].position), Some(*id));
    }

    let near = identify_stars_recursive(&cents, &offset(&a, 0.05), &f.kvec.stars, &f.cam, 20.0, &cfg, &mut rng).unwrap();
    let mut got: Vec<(usize, u32)> = near.inliers.iter().map(|m| (m.centroid_index, m.star_id)).collect();
    got.sort();
    assert_eq!(got, reference);

    assert!(identify_stars_recursive(&cents, &offset(&a, 5.0), &f.kvec.stars, &f.cam, 20.0, &cfg, &mut rng).is_err());
}

#[test]
fn centroid_noise_on_rendered_fields() {
    let f = fixture();
    let renderer = Renderer::new(&f.catalog, &f.eph, &f.cam, NoiseConfig::default());
    let cfg = IpConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut errs: Vec<Pixel> = Vec::new();
    for _ in 0..500 {
        let q = random_attitude(&mut rng);
        let (img, truth) = renderer.render(&R_SC, &V_SC, &q, T, &mut rng).unwrap();
        let cents = extract_centroids(&img, &cfg.centroid);
        for st in truth.star_truths.iter().filter(|s| s.vmag < 6.0) {
            if let Some(c) = cents.iter().find(|c| (c.position - st.pixel).norm() < 1.0) {
                errs.push(c.position - st.pixel);
            }
        }
    }
    let n = errs.len() as f64;
    assert!(n > 5000.0);
    let std = |k: usize| (errs.iter().map(|e| e[k] * e[k]).sum::<f64>() / n).sqrt();
    let (sx, sy) = (std(0), std(1));
    assert!(sx <= 0.15 && sy <= 0.15, "centroid std ({sx}, {sy}) px");
}

#[test]
fn lost_in_space_attitude_on_noisy_fields() {
    let f = fixture();
    let renderer = Renderer::new(&f.catalog, &f.eph, &f.cam, NoiseConfig::default());
    let cfg = IpConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut errs = Vec::new();
    for _ in 0..60 {
        let q = random_attitude(&mut rng);
        let (img, _) = renderer.render(&R_SC, &V_SC, &q, T, &mut rng).unwrap();
        let cents = extract_centroids(&img, &cfg.centroid);
        let sol = identify_stars_lis(&cents, &f.cam, &f.kvec, &cfg.star_id, &mut rng).unwrap();
        let a = corrected_attitude(&sol, &cents, &f.kvec, &f.cam, &V_SC).unwrap();
        errs.push(rotation_angle(&a, &q.dcm()) / ARCSEC);
    }
    let rms = (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();
    assert!(rms < 30.0, "rms attitude error {rms} arcsec");
    assert!(errs.iter().all(|e| *e < 120.0));
}

#[test]
fn aberration_correction_removes_the_velocity_bias() {
    let f = fixture();
    let renderer = Renderer::new(&f.catalog, &f.eph, &f.cam, NoiseConfig::noiseless());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let v = Vec3::new(0.0, 40.0, 0.0);
    let q = AttitudeQuat::from_dcm(&navsim::scene::pointing_matrix(&Vec3::new(1.0, 0.0, 0.2), 0.3));
    let (img, _) = renderer.render(&R_SC, &v, &q, T, &mut rng).unwrap();
    let cents = extract_centroids(&img, &IpConfig::default().centroid);
    let sol = identify_stars_lis(&cents, &f.cam, &f.kvec, &StarIdConfig::default(), &mut rng).unwrap();
    let raw = rotation_angle(&sol.dcm(), &q.dcm()) / ARCSEC;
    let corr = corrected_attitude(&sol, &cents, &f.kvec, &f.cam, &v).unwrap();
    let fixed = rotation_angle(&corr, &q.dcm()) / ARCSEC;
    assert!(raw > 20.0, "raw error {raw}");
    assert!(fixed < raw / 4.0, "raw {raw} corrected {fixed}");
}

proptest! {
    #[test]
    fn planet_choice_ignores_spike_order(
        pts in prop::collection::vec((400.0..600.0f64, 400.0..600.0f64), 1..12),
        shift in 0usize..12,
    ) {
        let cov = ProjectionCovariance::from_mean_and_covariance(
            Pixel::new(500.0, 500.0),
            nalgebra::Matrix2::new(300.0, 50.0, 50.0, 200.0),
        );
        let spikes: Vec<Pixel> = pts.iter().map(|&(x, y)| Pixel::new(x, y)).collect();
        let mut rotated = spikes.clone();
        rotated.rotate_left(shift % spikes.len());
        rotated.reverse();
        prop_assert_eq!(identify_planet(&spikes, &cov), identify_planet(&rotated, &cov));
    }
}
