//! Planet visibility and optimal beacon-pair selection.

use serde::{Deserialize, Serialize};

use crate::constants::AU_KM;
use crate::ephemeris::{Ephemeris, PlanetId};
use crate::error::Result;
use crate::math::{angle_between, Mat3, Vec3};
use crate::scene::apparent_magnitude;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisibilityThresholds {
    pub mag_limit: f64,
    pub sea_min_deg: f64,
}

impl Default for VisibilityThresholds {
    fn default() -> Self {
        Self {
            mag_limit: 7.0,
            sea_min_deg: 20.0,
        }
    }
}

impl VisibilityThresholds {
    pub fn is_visible(&self, magnitude: f64, sea: f64) -> bool {
        magnitude < self.mag_limit && sea > self.sea_min_deg.to_radians()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibilityReport {
    pub planet: PlanetId,
    pub apparent_magnitude: f64,
    /// Sun-probe-planet angle [rad].
    pub sea: f64,
    pub visible: bool,
    /// Heliocentric planet position [km].
    pub position: Vec3,
    /// Unit line of sight from the spacecraft to the planet.
    pub los: Vec3,
}

/// Visibility of every planet in the ephemeris as seen from `r_sc` at `t`.
pub fn visible_planets(
    t: f64,
    r_sc: &Vec3,
    ephemeris: &Ephemeris,
    thresholds: &VisibilityThresholds,
) -> Result<Vec<VisibilityReport>> {
    ephemeris
        .planet_ids()
        .into_iter()
        .map(|planet| {
            let (r_pl, _) = ephemeris.planet_state(planet, t)?;
            let rho = r_pl - r_sc;
            let magnitude = apparent_magnitude(planet, &r_pl, r_sc);
            let sea = angle_between(&rho, &(-r_sc));
            Ok(VisibilityReport {
                planet,
                apparent_magnitude: magnitude,
                sea,
                visible: thresholds.is_visible(magnitude, sea),
                position: r_pl,
                los: rho.normalize(),
            })
        })
        .collect()
}

/// Triangulation figure of merit for a pair of beacons. Returns +inf for
/// (anti)parallel lines of sight.
pub fn figure_of_merit(rho_i: &Vec3, rho_j: &Vec3, r_i: &Vec3, r_j: &Vec3, sigma_str: f64) -> f64 {
    let cos_g = rho_i.dot(rho_j).clamp(-1.0, 1.0);
    let sin2 = 1.0 - cos_g * cos_g;
    if sin2 <= 1e-24 {
        return f64::INFINITY;
    }
    let d = (r_i - r_j) / AU_KM;
    let eye = Mat3::identity();
    let m = (eye - rho_i * rho_i.transpose()) + (eye - rho_j * rho_j.transpose());
    sigma_str * sigma_str * (1.0 + cos_g * cos_g) / (sin2 * sin2) * d.dot(&(m * d))
}

/// Pair of visible planets minimizing the figure of merit; ties go to the
/// lower planet-id pair. `None` when fewer than two planets are visible.
pub fn select_optimal_pair(reports: &[VisibilityReport], sigma_str: f64) -> Option<(PlanetId, PlanetId)> {
    let mut visible: Vec<&VisibilityReport> = reports.iter().filter(|r| r.visible).collect();
    visible.sort_by_key(|r| r.planet);
    let mut best: Option<(f64, PlanetId, PlanetId)> = None;
    for (k, a) in visible.iter().enumerate() {
        for b in &visible[k + 1..] {
            let j = figure_of_merit(&a.los, &b.los, &a.position, &b.position, sigma_str);
            if best.is_none_or(|(bj, _, _)| j < bj) {
                best = Some((j, a.planet, b.planet));
            }
        }
    }
    best.map(|(_, a, b)| (a, b))
}
