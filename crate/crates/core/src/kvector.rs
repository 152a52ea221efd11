//! Interstar-angle pair table with a k-vector index for search-less range
//! queries.

use serde::Serialize;

use crate::ephemeris::StarCatalog;
use crate::math::angle_between;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StarPair {
    pub angle: f64,
    pub star_a: u32,
    pub star_b: u32,
}

#[derive(Clone, Debug)]
pub struct KVectorCatalog {
    pairs: Vec<StarPair>,
    k_vector: Vec<usize>,
    slope: f64,
    intercept: f64,
    pub mag_limit: f64,
    pub max_angle: f64,
    /// The stars that take part in the pair table.
    pub stars: StarCatalog,
}

impl KVectorCatalog {
    pub fn pairs(&self) -> &[StarPair] {
        &self.pairs
    }

    pub fn k_vector(&self) -> &[usize] {
        &self.k_vector
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Stored pairs with `|pair.angle - angle| <= tol`, in table order.
    pub fn range_query(&self, angle: f64, tol: f64) -> &[StarPair] {
        let (lo, hi) = (angle - tol, angle + tol);
        let n = self.pairs.len();
        if n == 0 || !(tol > 0.0) {
            return &[];
        }
        let (start, end) = if n < 2 {
            (0, n)
        } else {
            let last = (n - 1) as f64;
            let jb = ((lo - self.intercept) / self.slope).floor() - 1.0;
            let jt = ((hi - self.intercept) / self.slope).ceil();
            if jt < 0.0 || jb > last {
                return &[];
            }
            let jb = jb.clamp(0.0, last) as usize;
            let jt = jt.clamp(0.0, last) as usize;
            (self.k_vector[jb], self.k_vector[jt])
        };
        let window = &self.pairs[start..end];
        let a = window.partition_point(|p| p.angle < lo);
        let b = window.partition_point(|p| p.angle <= hi);
        &window[a..b.max(a)]
    }
}

/// Angles are stored on a 1e-12 rad grid so that geometrically equal
/// separations compare equal and fall back to the id ordering.
fn snap(angle: f64) -> f64 {
    (angle * 1e12).round() / 1e12
}

/// Build the pair table from every star pair with both magnitudes at most
/// `mag_limit` and separation at most `max_angle` [rad].
pub fn build_kvector(catalog: &StarCatalog, mag_limit: f64, max_angle: f64) -> KVectorCatalog {
    let stars = catalog.brighter_than(mag_limit);
    let list = stars.stars();
    let cos_cut = max_angle.cos() - 1e-12;
    let mut pairs = Vec::new();
    for (i, s) in list.iter().enumerate() {
        for t in &list[i + 1..] {
            if s.los.dot(&t.los) < cos_cut {
                continue;
            }
            let angle = snap(angle_between(&s.los, &t.los));
            if angle <= max_angle {
                let (a, b) = if s.id < t.id { (s.id, t.id) } else { (t.id, s.id) };
                pairs.push(StarPair {
                    angle,
                    star_a: a,
                    star_b: b,
                });
            }
        }
    }
    pairs.sort_by(|x, y| {
        x.angle
            .total_cmp(&y.angle)
            .then(x.star_a.cmp(&y.star_a))
            .then(x.star_b.cmp(&y.star_b))
    });

    let n = pairs.len();
    let (slope, intercept, k_vector) = if n >= 2 {
        let (s_min, s_max) = (pairs[0].angle, pairs[n - 1].angle);
        let delta = f64::EPSILON * s_max.abs().max(1.0) * 4.0;
        let slope = (s_max - s_min + 2.0 * delta) / (n - 1) as f64;
        let intercept = s_min - delta;
        let mut k = Vec::with_capacity(n);
        let mut count = 0usize;
        for i in 0..n {
            let z = intercept + slope * i as f64;
            while count < n && pairs[count].angle <= z {
                count += 1;
            }
            k.push(count);
        }
        // The last line point sits above s_max, so it must cover everything.
        k[n - 1] = n;
        (slope, intercept, k)
    } else {
        (1.0, 0.0, vec![n; n])
    };

    KVectorCatalog {
        pairs,
        k_vector,
        slope,
        intercept,
        mag_limit,
        max_angle,
        stars,
    }
}
