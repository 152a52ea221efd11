//! Attitude from vector pairs (Wahba's problem via SVD) and a RANSAC
//! wrapper that labels misidentified objects as spikes.

use nalgebra::SVD;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::math::{angle_between, AttitudeQuat, Mat3, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarMatch {
    pub centroid_index: usize,
    pub star_id: u32,
    /// Angular residual of the final model expressed in pixels.
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdMode {
    LostInSpace,
    Recursive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttitudeSolution {
    pub attitude: AttitudeQuat,
    pub inliers: Vec<StarMatch>,
    /// Centroid indices not explained by the attitude model.
    pub spikes: Vec<usize>,
    pub mode: IdMode,
}

impl AttitudeSolution {
    pub fn dcm(&self) -> Mat3 {
        self.attitude.dcm()
    }
}

/// Candidate correspondence between an observed camera-frame direction and a
/// catalog inertial direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VectorMatch {
    pub centroid_index: usize,
    pub star_id: u32,
    pub obs: Vec3,
    pub cat: Vec3,
}

/// Proper orthogonal `A` minimizing `sum |obs_i - A cat_i|^2`.
pub fn solve_wahba_svd(obs: &[Vec3], cat: &[Vec3]) -> Result<Mat3> {
    if obs.len() != cat.len() {
        return Err(NavError::InvalidArgument("vector lists differ in length".into()));
    }
    if obs.len() < 2 {
        return Err(NavError::Degenerate("at least two vector pairs are needed".into()));
    }
    let mut b = Mat3::zeros();
    for (o, c) in obs.iter().zip(cat) {
        b += o * c.transpose();
    }
    let svd = SVD::new(b, true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    if s[1] <= 1e-12 * s[0].max(f64::MIN_POSITIVE) {
        return Err(NavError::Degenerate("vector pairs are collinear".into()));
    }
    let d = (u.determinant() * v_t.determinant()).signum();
    let a = u * Mat3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * v_t;
    Ok(a)
}

fn residuals(a: &Mat3, matches: &[VectorMatch]) -> Vec<f64> {
    matches.iter().map(|m| angle_between(&m.obs, &(a * m.cat))).collect()
}

fn fit(matches: &[VectorMatch], idx: &[usize]) -> Result<Mat3> {
    let obs: Vec<Vec3> = idx.iter().map(|&i| matches[i].obs).collect();
    let cat: Vec<Vec3> = idx.iter().map(|&i| matches[i].cat).collect();
    solve_wahba_svd(&obs, &cat)
}

/// All triples of `0..n` in lexicographic order.
fn all_triples(n: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                out.push([i, j, k]);
            }
        }
    }
    out
}

/// Default hypothesis count `min(100, C(n, 3))`.
pub fn default_hypotheses(n: usize) -> usize {
    let c = if n < 3 { 0 } else { n * (n - 1) * (n - 2) / 6 };
    c.min(100)
}

/// RANSAC over 3-star Wahba hypotheses. `all_centroids` is the number of
/// extracted centroids, used to report every unexplained one as a spike.
pub fn ransac_attitude<R: Rng + ?Sized>(
    matches: &[VectorMatch],
    n_r: usize,
    inlier_threshold: f64,
    focal_px: f64,
    all_centroids: usize,
    mode: IdMode,
    rng: &mut R,
) -> Result<AttitudeSolution> {
    if n_r == 0 {
        return Err(NavError::InvalidArgument("RANSAC needs at least one hypothesis".into()));
    }
    let n = matches.len();
    if n < 3 {
        return Err(NavError::IdentificationFailure(format!("{n} matches, need 3")));
    }
    let total = n * (n - 1) * (n - 2) / 6;
    let hypotheses: Vec<[usize; 3]> = if total <= n_r {
        all_triples(n)
    } else {
        (0..n_r)
            .map(|_| {
                let s = sample(rng, n, 3);
                let mut t = [s.index(0), s.index(1), s.index(2)];
                t.sort_unstable();
                t
            })
            .collect()
    };

    // Best by (inlier count desc, residual sum asc, hypothesis index asc).
    let mut best: Option<(usize, f64, Mat3)> = None;
    for triple in &hypotheses {
        let Ok(a) = fit(matches, triple) else { continue };
        let res = residuals(&a, matches);
        let (count, sum) = res
            .iter()
            .filter(|&&r| r < inlier_threshold)
            .fold((0usize, 0.0), |(c, s), r| (c + 1, s + r));
        let better = match &best {
            None => true,
            Some((bc, bs, _)) => count > *bc || (count == *bc && sum < *bs),
        };
        if better {
            best = Some((count, sum, a));
        }
    }
    let (count, _, mut a) = best.ok_or_else(|| NavError::IdentificationFailure("all hypotheses degenerate".into()))?;
    if count < 3 {
        return Err(NavError::IdentificationFailure("no model with three inliers".into()));
    }

    let mut inlier_idx: Vec<usize> = Vec::new();
    for _ in 0..3 {
        let res = residuals(&a, matches);
        let next: Vec<usize> = (0..n).filter(|&i| res[i] < inlier_threshold).collect();
        if next.len() < 3 {
            break;
        }
        a = fit(matches, &next)?;
        if next == inlier_idx {
            break;
        }
        inlier_idx = next;
    }
    if inlier_idx.len() < 3 {
        return Err(NavError::IdentificationFailure("refit lost its inliers".into()));
    }
    let res = residuals(&a, matches);
    let inliers: Vec<StarMatch> = inlier_idx
        .iter()
        .map(|&i| StarMatch {
            centroid_index: matches[i].centroid_index,
            star_id: matches[i].star_id,
            residual: res[i] * focal_px,
        })
        .collect();
    let mut spikes: Vec<usize> = (0..all_centroids)
        .filter(|c| !inliers.iter().any(|m| m.centroid_index == *c))
        .collect();
    spikes.sort_unstable();
    Ok(AttitudeSolution {
        attitude: AttitudeQuat::from_dcm(&a),
        inliers,
        spikes,
        mode,
    })
}
