//! Keplerian planet ephemerides and the onboard star catalog.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constants::{jd_to_seconds, J2000_JD, MU_SUN, SECONDS_PER_DAY};
use crate::error::{NavError, Result};
use crate::math::{ecliptic_to_equatorial, radec_to_unit, Mat3, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanetId {
    Venus,
    /// Earth–Moon barycenter.
    Earth,
    Mars,
    Jupiter,
    Saturn,
}

impl PlanetId {
    pub const ALL: [PlanetId; 5] = [
        PlanetId::Venus,
        PlanetId::Earth,
        PlanetId::Mars,
        PlanetId::Jupiter,
        PlanetId::Saturn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlanetId::Venus => "venus",
            PlanetId::Earth => "earth",
            PlanetId::Mars => "mars",
            PlanetId::Jupiter => "jupiter",
            PlanetId::Saturn => "saturn",
        }
    }

    /// System gravitational parameter [km^3/s^2].
    pub fn mu(self) -> f64 {
        match self {
            PlanetId::Venus => 324_858.592,
            PlanetId::Earth => 403_503.235_502,
            PlanetId::Mars => 42_828.375_214,
            PlanetId::Jupiter => 126_712_764.8,
            PlanetId::Saturn => 37_940_585.2,
        }
    }
}

impl fmt::Display for PlanetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlanetId {
    type Err = NavError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "venus" => Ok(PlanetId::Venus),
            "earth" | "emb" | "earth-moon" => Ok(PlanetId::Earth),
            "mars" => Ok(PlanetId::Mars),
            "jupiter" => Ok(PlanetId::Jupiter),
            "saturn" => Ok(PlanetId::Saturn),
            other => Err(NavError::UnknownPlanet(other.to_string())),
        }
    }
}

/// Classical orbital elements referred to the ecliptic J2000 frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeplerElements {
    pub a_km: f64,
    pub e: f64,
    pub i_deg: f64,
    pub raan_deg: f64,
    pub argp_deg: f64,
    pub m0_deg: f64,
    pub epoch_jd_tdb: f64,
}

#[derive(Clone, Debug)]
pub struct PlanetEphemeris {
    pub planet: PlanetId,
    pub elements: KeplerElements,
    pub mu_parent: f64,
    /// Perifocal-to-equatorial rotation, cached.
    pqw_to_n: Mat3,
    mean_motion: f64,
    epoch_s: f64,
}

/// Solve Kepler's equation `E - e sin E = M` for the eccentric anomaly.
pub fn solve_kepler(mean_anomaly: f64, e: f64) -> f64 {
    let m = mean_anomaly.rem_euclid(std::f64::consts::TAU);
    let mut ecc_anom = if e < 0.8 { m } else { std::f64::consts::PI };
    for _ in 0..50 {
        let f = ecc_anom - e * ecc_anom.sin() - m;
        let step = f / (1.0 - e * ecc_anom.cos());
        ecc_anom -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    ecc_anom
}

impl PlanetEphemeris {
    pub fn new(planet: PlanetId, elements: KeplerElements, mu_parent: f64) -> Result<Self> {
        if !(elements.a_km > 0.0) {
            return Err(NavError::InvalidArgument(format!(
                "{planet}: semi-major axis must be positive"
            )));
        }
        if !(0.0..1.0).contains(&elements.e) {
            return Err(NavError::InvalidArgument(format!(
                "{planet}: eccentricity must lie in [0, 1)"
            )));
        }
        let (i, raan, argp) = (
            elements.i_deg.to_radians(),
            elements.raan_deg.to_radians(),
            elements.argp_deg.to_radians(),
        );
        let rz = |a: f64| {
            let (s, c) = a.sin_cos();
            Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
        };
        let rx = |a: f64| {
            let (s, c) = a.sin_cos();
            Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
        };
        let pqw_to_ecl = rz(raan) * rx(i) * rz(argp);
        Ok(Self {
            planet,
            elements,
            mu_parent,
            pqw_to_n: ecliptic_to_equatorial() * pqw_to_ecl,
            mean_motion: (mu_parent / elements.a_km.powi(3)).sqrt(),
            epoch_s: jd_to_seconds(elements.epoch_jd_tdb),
        })
    }

    pub fn period(&self) -> f64 {
        std::f64::consts::TAU / self.mean_motion
    }

    /// Heliocentric position [km] and velocity [km/s] in frame N at `t`
    /// seconds past J2000 TDB.
    pub fn state(&self, t: f64) -> (Vec3, Vec3) {
        let el = &self.elements;
        let m = el.m0_deg.to_radians() + self.mean_motion * (t - self.epoch_s);
        let ecc = el.e;
        let ea = solve_kepler(m, ecc);
        let (se, ce) = ea.sin_cos();
        let b = el.a_km * (1.0 - ecc * ecc).sqrt();
        let r_pqw = Vec3::new(el.a_km * (ce - ecc), b * se, 0.0);
        let r = el.a_km * (1.0 - ecc * ce);
        let edot = self.mean_motion * el.a_km / r;
        let v_pqw = Vec3::new(-el.a_km * se * edot, b * ce * edot, 0.0);
        (self.pqw_to_n * r_pqw, self.pqw_to_n * v_pqw)
    }
}

/// Set of planet ephemerides with a validity window.
#[derive(Clone, Debug)]
pub struct Ephemeris {
    planets: HashMap<PlanetId, PlanetEphemeris>,
    pub window: (f64, f64),
}

impl Ephemeris {
    pub fn new(planets: Vec<PlanetEphemeris>, window: (f64, f64)) -> Self {
        Self {
            planets: planets.into_iter().map(|p| (p.planet, p)).collect(),
            window,
        }
    }

    /// Mean J2000 elements (ecliptic) for the five bodies used by the
    /// toolkit, valid over J2000 +/- 100 years.
    pub fn mean_j2000() -> Self {
        let planets = default_elements()
            .into_iter()
            .map(|(id, el)| PlanetEphemeris::new(id, el, MU_SUN).expect("built-in elements"))
            .collect();
        let century = 36_525.0 * SECONDS_PER_DAY;
        Self::new(planets, (-century, century))
    }

    /// Parse the JSON ephemeris configuration (object keyed by planet name).
    pub fn from_json(text: &str, window: (f64, f64)) -> Result<Self> {
        let raw: HashMap<String, KeplerElements> =
            serde_json::from_str(text).map_err(|e| NavError::Config(format!("ephemeris: {e}")))?;
        let mut planets = Vec::with_capacity(raw.len());
        for (name, el) in raw {
            planets.push(PlanetEphemeris::new(name.parse()?, el, MU_SUN)?);
        }
        Ok(Self::new(planets, window))
    }

    pub fn to_json(&self) -> String {
        let map: std::collections::BTreeMap<&str, KeplerElements> = self
            .planets
            .values()
            .map(|p| (p.planet.name(), p.elements))
            .collect();
        serde_json::to_string_pretty(&map).expect("serializable")
    }

    pub fn get(&self, planet: PlanetId) -> Result<&PlanetEphemeris> {
        self.planets
            .get(&planet)
            .ok_or_else(|| NavError::UnknownPlanet(planet.to_string()))
    }

    pub fn contains(&self, planet: PlanetId) -> bool {
        self.planets.contains_key(&planet)
    }

    pub fn planet_ids(&self) -> Vec<PlanetId> {
        let mut ids: Vec<_> = self.planets.keys().copied().collect();
        ids.sort();
        ids
    }

    pub fn check_epoch(&self, t: f64) -> Result<()> {
        if t < self.window.0 || t > self.window.1 || !t.is_finite() {
            return Err(NavError::OutsideEphemerisWindow {
                t,
                start: self.window.0,
                end: self.window.1,
            });
        }
        Ok(())
    }

    /// Planet heliocentric position [km] and velocity [km/s] in frame N.
    pub fn planet_state(&self, planet: PlanetId, t: f64) -> Result<(Vec3, Vec3)> {
        self.check_epoch(t)?;
        Ok(self.get(planet)?.state(t))
    }

    /// Position only, without the window check (used inside integrators
    /// whose span has already been validated).
    pub(crate) fn position_unchecked(&self, planet: PlanetId, t: f64) -> Option<Vec3> {
        self.planets.get(&planet).map(|p| p.state(t).0)
    }
}

fn default_elements() -> Vec<(PlanetId, KeplerElements)> {
    use crate::constants::AU_KM;
    // Mean elements at J2000 referred to the ecliptic (JPL approximate
    // positions of the major planets, 1800-2050 fit).
    let mk = |a_au: f64, e: f64, i: f64, raan: f64, lon_peri: f64, mean_lon: f64| KeplerElements {
        a_km: a_au * AU_KM,
        e,
        i_deg: i,
        raan_deg: raan,
        argp_deg: lon_peri - raan,
        m0_deg: mean_lon - lon_peri,
        epoch_jd_tdb: J2000_JD,
    };
    vec![
        (
            PlanetId::Venus,
            mk(0.723_335_66, 0.006_776_72, 3.394_676_05, 76.679_842_55, 131.602_467_18, 181.979_099_50),
        ),
        (
            PlanetId::Earth,
            mk(1.000_002_61, 0.016_711_23, -0.000_015_31, 0.0, 102.937_681_93, 100.464_571_66),
        ),
        (
            PlanetId::Mars,
            mk(1.523_710_34, 0.093_394_10, 1.849_691_42, 49.559_538_91, -23.943_629_59, -4.553_432_05),
        ),
        (
            PlanetId::Jupiter,
            mk(5.202_887_00, 0.048_386_24, 1.304_396_95, 100.473_909_09, 14.728_479_83, 34.396_440_51),
        ),
        (
            PlanetId::Saturn,
            mk(9.536_675_94, 0.053_861_79, 2.485_991_87, 113.662_424_48, 92.598_878_31, 49.954_244_23),
        ),
    ]
}

/// One catalog star.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarRecord {
    pub id: u32,
    /// Unit line of sight in frame N.
    pub los: Vec3,
    pub vmag: f64,
}

impl StarRecord {
    pub fn new(id: u32, los: Vec3, vmag: f64) -> Result<Self> {
        if (los.norm() - 1.0).abs() > 1e-12 {
            return Err(NavError::InvalidArgument(format!(
                "star {id}: line of sight is not unit length"
            )));
        }
        Ok(Self { id, los, vmag })
    }

    pub fn from_radec_deg(id: u32, ra_deg: f64, dec_deg: f64, vmag: f64) -> Self {
        Self {
            id,
            los: radec_to_unit(ra_deg.to_radians(), dec_deg.to_radians()),
            vmag,
        }
    }
}

/// The star catalog, indexed by star id.
#[derive(Clone, Debug, Default)]
pub struct StarCatalog {
    stars: Vec<StarRecord>,
    index: HashMap<u32, usize>,
}

impl StarCatalog {
    pub fn new(stars: Vec<StarRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(stars.len());
        for (i, s) in stars.iter().enumerate() {
            if (s.los.norm() - 1.0).abs() > 1e-12 {
                return Err(NavError::InvalidArgument(format!(
                    "star {}: line of sight is not unit length",
                    s.id
                )));
            }
            if index.insert(s.id, i).is_some() {
                return Err(NavError::DuplicateStar(s.id));
            }
        }
        Ok(Self { stars, index })
    }

    pub fn stars(&self) -> &[StarRecord] {
        &self.stars
    }

    pub fn len(&self) -> usize {
        self.stars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stars.is_empty()
    }

    pub fn by_id(&self, id: u32) -> Option<&StarRecord> {
        self.index.get(&id).map(|&i| &self.stars[i])
    }

    /// Stars not fainter than `mag_limit`.
    pub fn brighter_than(&self, mag_limit: f64) -> StarCatalog {
        let stars = self
            .stars
            .iter()
            .filter(|s| s.vmag <= mag_limit)
            .copied()
            .collect();
        StarCatalog::new(stars).expect("subset of a valid catalog")
    }

    /// Random sky with uniform directions and a magnitude distribution
    /// following `log10 N(<m) = 0.512 m + 0.64`, which tracks whole-sky
    /// star counts between magnitude 0 and 7.
    pub fn synthetic(seed: u64, mag_min: f64, mag_max: f64) -> StarCatalog {
        let count = |m: f64| 10f64.powf(0.512 * m + 0.64);
        let (n_lo, n_hi) = (count(mag_min), count(mag_max));
        let total = (n_hi - n_lo).round().max(0.0) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stars = Vec::with_capacity(total);
        for id in 0..total {
            let u: f64 = rng.random();
            let mag = ((n_lo + u * (n_hi - n_lo)).log10() - 0.64) / 0.512;
            let z: f64 = rng.random_range(-1.0..1.0);
            let lon: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let rho = (1.0 - z * z).sqrt();
            let los = Vec3::new(rho * lon.cos(), rho * lon.sin(), z).normalize();
            stars.push(StarRecord {
                id: id as u32 + 1,
                los,
                vmag: mag,
            });
        }
        StarCatalog::new(stars).expect("synthetic ids are unique")
    }

    /// Serialize as `star_id,ra_deg,dec_deg,vmag` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("star_id,ra_deg,dec_deg,vmag\n");
        for s in &self.stars {
            let ra = s.los.y.atan2(s.los.x).to_degrees().rem_euclid(360.0);
            let dec = s.los.z.clamp(-1.0, 1.0).asin().to_degrees();
            out.push_str(&format!("{},{:.10},{:.10},{:.4}\n", s.id, ra, dec, s.vmag));
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<StarCatalog> {
        let mut stars = Vec::new();
        let mut seen = HashMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if n == 0 && line.starts_with("star_id") {
                let cols: Vec<_> = line.split(',').map(str::trim).collect();
                if cols != ["star_id", "ra_deg", "dec_deg", "vmag"] {
                    return Err(NavError::CatalogParse {
                        line: line_no,
                        msg: format!("unexpected header `{line}`"),
                    });
                }
                continue;
            }
            let fields: Vec<_> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(NavError::CatalogParse {
                    line: line_no,
                    msg: format!("expected 4 fields, found {}", fields.len()),
                });
            }
            let bad = |what: &str| NavError::CatalogParse {
                line: line_no,
                msg: format!("cannot parse {what}"),
            };
            let id: u32 = fields[0].parse().map_err(|_| bad("star_id"))?;
            let ra: f64 = fields[1].parse().map_err(|_| bad("ra_deg"))?;
            let dec: f64 = fields[2].parse().map_err(|_| bad("dec_deg"))?;
            let vmag: f64 = fields[3].parse().map_err(|_| bad("vmag"))?;
            if !(ra.is_finite() && dec.is_finite() && vmag.is_finite()) || dec.abs() > 90.0 {
                return Err(NavError::CatalogParse {
                    line: line_no,
                    msg: "coordinates out of range".into(),
                });
            }
            if seen.insert(id, line_no).is_some() {
                return Err(NavError::DuplicateStar(id));
            }
            stars.push(StarRecord::from_radec_deg(id, ra, dec, vmag));
        }
        StarCatalog::new(stars)
    }
}

/// Load a star catalog CSV (`star_id,ra_deg,dec_deg,vmag`).
pub fn load_star_catalog(path: impl AsRef<Path>) -> Result<StarCatalog> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| NavError::io(path, e))?;
    StarCatalog::parse_csv(&text)
}
