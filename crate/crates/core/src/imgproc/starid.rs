//! Star identification: lost-in-space matching against the k-vector pair
//! table, and recursive association from a prior attitude.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::centroid::Centroid;
use super::wahba::{default_hypotheses, ransac_attitude, AttitudeSolution, IdMode, VectorMatch};
use crate::camera::CameraModel;
use crate::constants::ARCSEC;
use crate::ephemeris::StarCatalog;
use crate::error::{NavError, Result};
use crate::kvector::KVectorCatalog;
use crate::math::{angle_between, Mat3, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StarIdConfig {
    /// Brightest centroids used by the lost-in-space matcher.
    pub lis_max_stars: usize,
    /// Interstar-angle tolerance for pair-table queries [rad].
    pub angle_tol: f64,
    /// Intensity-threshold growth per lost-in-space retry.
    pub retry_factor: f64,
    pub max_retries: usize,
    /// RANSAC hypotheses; `None` means `min(100, C(n, 3))`.
    pub n_ransac: Option<usize>,
    pub inlier_threshold: f64,
    /// Recursive-mode association radius before prior scaling [px].
    pub gate_radius_px: f64,
}

impl Default for StarIdConfig {
    fn default() -> Self {
        Self {
            lis_max_stars: 12,
            angle_tol: 1.0e-4,
            retry_factor: 1.5,
            max_retries: 5,
            n_ransac: None,
            inlier_threshold: 60.0 * ARCSEC,
            gate_radius_px: 10.0,
        }
    }
}

impl StarIdConfig {
    fn hypotheses(&self, n: usize) -> usize {
        self.n_ransac.unwrap_or_else(|| default_hypotheses(n))
    }
}

/// Assign catalog stars to the given camera-frame directions by pair
/// voting and triad consistency. Returns `(local index, star id)` pairs.
fn vote_and_verify(dirs: &[Vec3], kvec: &KVectorCatalog, tol: f64) -> Vec<(usize, u32)> {
    let n = dirs.len();
    let mut votes: Vec<HashMap<u32, u32>> = vec![HashMap::new(); n];
    let mut theta = vec![vec![f64::NAN; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let t = angle_between(&dirs[i], &dirs[j]);
            theta[i][j] = t;
            theta[j][i] = t;
            if t > kvec.max_angle + tol {
                continue;
            }
            let mut members: HashSet<u32> = HashSet::new();
            for p in kvec.range_query(t, tol) {
                members.insert(p.star_a);
                members.insert(p.star_b);
            }
            for s in members {
                *votes[i].entry(s).or_default() += 1;
                *votes[j].entry(s).or_default() += 1;
            }
        }
    }

    let los = |id: u32| kvec.stars.by_id(id).map(|s| s.los).expect("pair members are in the table");
    let candidates: Vec<Vec<(u32, u32)>> = votes
        .iter()
        .map(|v| {
            let mut c: Vec<(u32, u32)> = v.iter().filter(|(_, &n)| n >= 2).map(|(&s, &n)| (s, n)).collect();
            c.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            c.truncate(5);
            c
        })
        .collect();
    let consistent = |i: usize, s: u32, j: usize, t: u32| {
        s != t && (angle_between(&los(s), &los(t)) - theta[i][j]).abs() <= tol
    };

    // Score each candidate by how many other centroids hold a compatible one.
    let mut chosen: Vec<Option<(u32, usize, u32)>> = vec![None; n];
    for i in 0..n {
        for &(s, v) in &candidates[i] {
            let score = (0..n)
                .filter(|&j| j != i && candidates[j].iter().any(|&(t, _)| consistent(i, s, j, t)))
                .count();
            let better = match chosen[i] {
                None => true,
                Some((bs, bscore, bv)) => (score, v, std::cmp::Reverse(s)) > (bscore, bv, std::cmp::Reverse(bs)),
            };
            if better && score >= 2 {
                chosen[i] = Some((s, score, v));
            }
        }
    }

    // A star claimed twice keeps only its best-scoring centroid.
    let mut owner: HashMap<u32, usize> = HashMap::new();
    for i in 0..n {
        if let Some((s, score, _)) = chosen[i] {
            match owner.get(&s) {
                Some(&k) if chosen[k].map(|c| c.1).unwrap_or(0) >= score => chosen[i] = None,
                Some(&k) => {
                    chosen[k] = None;
                    owner.insert(s, i);
                }
                None => {
                    owner.insert(s, i);
                }
            }
        }
    }

    // Prune assignments that do not close at least two consistent triads.
    loop {
        let active: Vec<usize> = (0..n).filter(|&i| chosen[i].is_some()).collect();
        let support = |i: usize| {
            let s = chosen[i].unwrap().0;
            active
                .iter()
                .filter(|&&j| j != i && consistent(i, s, j, chosen[j].unwrap().0))
                .count()
        };
        let worst = active.iter().map(|&i| (support(i), i)).min();
        match worst {
            Some((sup, i)) if sup < 2 => chosen[i] = None,
            _ => break,
        }
    }
    (0..n).filter_map(|i| chosen[i].map(|c| (i, c.0))).collect()
}

/// Lost-in-space identification with the intensity-threshold retry
/// heuristic, followed by association of every catalog star in the field.
pub fn identify_stars_lis<R: Rng + ?Sized>(
    centroids: &[Centroid],
    camera: &CameraModel,
    kvec: &KVectorCatalog,
    cfg: &StarIdConfig,
    rng: &mut R,
) -> Result<AttitudeSolution> {
    if centroids.len() < 3 {
        return Err(NavError::IdentificationFailure(format!(
            "{} centroids, need 3",
            centroids.len()
        )));
    }
    let mut order: Vec<usize> = (0..centroids.len()).collect();
    order.sort_by(|&a, &b| {
        centroids[b]
            .total_intensity
            .total_cmp(&centroids[a].total_intensity)
            .then(a.cmp(&b))
    });
    let dirs: Vec<Vec3> = centroids.iter().map(|c| camera.unproject_camera(&c.position)).collect();

    let mut threshold = order.iter().map(|&i| centroids[i].total_intensity).fold(f64::INFINITY, f64::min);
    let mut last_set: Vec<usize> = Vec::new();
    for _ in 0..=cfg.max_retries {
        let set: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&i| centroids[i].total_intensity >= threshold)
            .take(cfg.lis_max_stars)
            .collect();
        threshold *= cfg.retry_factor;
        if set.len() < 3 {
            break;
        }
        if set == last_set {
            continue;
        }
        last_set = set.clone();
        let local: Vec<Vec3> = set.iter().map(|&i| dirs[i]).collect();
        let assigned = vote_and_verify(&local, kvec, cfg.angle_tol);
        if assigned.len() < 3 {
            continue;
        }
        let matches: Vec<VectorMatch> = assigned
            .iter()
            .map(|&(k, id)| VectorMatch {
                centroid_index: set[k],
                star_id: id,
                obs: local[k],
                cat: kvec.stars.by_id(id).unwrap().los,
            })
            .collect();
        let seed = ransac_attitude(
            &matches,
            cfg.hypotheses(matches.len()),
            cfg.inlier_threshold,
            camera.focal_px(),
            centroids.len(),
            IdMode::LostInSpace,
            rng,
        );
        let Ok(seed) = seed else { continue };
        // Extend to the whole field with the seed attitude.
        let full = associate(centroids, &seed.dcm(), &kvec.stars, camera, cfg.gate_radius_px, cfg, IdMode::LostInSpace, rng);
        return Ok(full.unwrap_or(seed));
    }
    Err(NavError::IdentificationFailure("no consistent star asterism".into()))
}

/// Associate catalog stars projected through `prior` with the nearest
/// centroid within `gate_radius_px`, then solve with RANSAC.
pub fn identify_stars_recursive<R: Rng + ?Sized>(
    centroids: &[Centroid],
    prior: &Mat3,
    catalog: &StarCatalog,
    camera: &CameraModel,
    gate_radius_px: f64,
    cfg: &StarIdConfig,
    rng: &mut R,
) -> Result<AttitudeSolution> {
    if centroids.len() < 3 {
        return Err(NavError::IdentificationFailure(format!(
            "{} centroids, need 3",
            centroids.len()
        )));
    }
    associate(centroids, prior, catalog, camera, gate_radius_px, cfg, IdMode::Recursive, rng)
}

#[allow(clippy::too_many_arguments)]
fn associate<R: Rng + ?Sized>(
    centroids: &[Centroid],
    prior: &Mat3,
    catalog: &StarCatalog,
    camera: &CameraModel,
    gate: f64,
    cfg: &StarIdConfig,
    mode: IdMode,
    rng: &mut R,
) -> Result<AttitudeSolution> {
    let boresight = prior.row(2).transpose();
    let cos_field = (camera.half_diagonal() + 0.02).cos();
    // Best (distance, star) per centroid.
    let mut best: HashMap<usize, (f64, u32)> = HashMap::new();
    for s in catalog.stars() {
        if s.los.dot(&boresight) < cos_field {
            continue;
        }
        let Some(p) = camera.project(prior, &s.los) else { continue };
        if p.x < -gate || p.y < -gate || p.x > camera.width as f64 + gate || p.y > camera.height as f64 + gate {
            continue;
        }
        let nearest = centroids
            .iter()
            .enumerate()
            .map(|(i, c)| ((c.position - p).norm(), i))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some((d, i)) = nearest {
            if d <= gate {
                let entry = best.entry(i).or_insert((f64::INFINITY, 0));
                if d < entry.0 || (d == entry.0 && s.id < entry.1) {
                    *entry = (d, s.id);
                }
            }
        }
    }
    let mut pairs: Vec<(usize, u32)> = best.into_iter().map(|(i, (_, s))| (i, s)).collect();
    pairs.sort_unstable();
    if pairs.len() < 3 {
        return Err(NavError::IdentificationFailure(format!(
            "{} associations inside the gate",
            pairs.len()
        )));
    }
    let matches: Vec<VectorMatch> = pairs
        .iter()
        .map(|&(i, id)| VectorMatch {
            centroid_index: i,
            star_id: id,
            obs: camera.unproject_camera(&centroids[i].position),
            cat: catalog.by_id(id).unwrap().los,
        })
        .collect();
    ransac_attitude(
        &matches,
        cfg.hypotheses(matches.len()),
        cfg.inlier_threshold,
        camera.focal_px(),
        centroids.len(),
        mode,
        rng,
    )
}
