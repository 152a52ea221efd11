//! Physical constants shared across modules.

/// Speed of light in vacuum [km/s].
pub const SPEED_OF_LIGHT: f64 = 299_792.458;

/// Astronomical unit [km].
pub const AU_KM: f64 = 149_597_870.7;

/// Heliocentric gravitational parameter [km^3/s^2].
pub const MU_SUN: f64 = 1.327_124_400_41e11;

/// Solar radius [km].
pub const SUN_RADIUS_KM: f64 = 695_700.0;

/// Julian date of the J2000 epoch.
pub const J2000_JD: f64 = 2_451_545.0;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Mean obliquity of the ecliptic at J2000 [rad].
pub const OBLIQUITY_J2000: f64 = 23.439_291_1 * std::f64::consts::PI / 180.0;

pub const ARCSEC: f64 = std::f64::consts::PI / (180.0 * 3600.0);

/// Inverse CDF of the chi-square distribution with two degrees of freedom
/// at probability 0.9973 (the 3-sigma level).
pub const CHI2_2DOF_3SIGMA: f64 = 11.8292;

/// Seconds since J2000 (TDB) for a Julian date.
pub fn jd_to_seconds(jd: f64) -> f64 {
    (jd - J2000_JD) * SECONDS_PER_DAY
}

pub fn seconds_to_jd(t: f64) -> f64 {
    J2000_JD + t / SECONDS_PER_DAY
}
