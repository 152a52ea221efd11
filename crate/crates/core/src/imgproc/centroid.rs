//! Bright-object extraction: local-maximum seeds, Niblack thresholding in a
//! square window, intensity-weighted center of gravity.

use serde::{Deserialize, Serialize};

use crate::camera::Pixel;
use crate::scene::SkyImage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CentroidConfig {
    /// Niblack weight on the window standard deviation.
    pub k_niblack: f64,
    /// Seed detection level above the global background, in background sigmas.
    pub detect_sigma: f64,
    /// Largest window half-size [px].
    pub max_half_window: usize,
    /// Subtract the global background level from the weights.
    pub subtract_background: bool,
}

impl Default for CentroidConfig {
    fn default() -> Self {
        Self {
            k_niblack: 0.5,
            detect_sigma: 5.0,
            max_half_window: 8,
            subtract_background: true,
        }
    }
}

/// Inclusive pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Window {
    pub fn contains(&self, p: &Pixel) -> bool {
        p.x >= self.x0 as f64 && p.y >= self.y0 as f64 && p.x <= (self.x1 + 1) as f64 && p.y <= (self.y1 + 1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub position: Pixel,
    /// Background-subtracted signal inside the thresholded window [e-].
    pub total_intensity: f64,
    pub peak: f64,
    pub window: Window,
}

/// Robust global background level and spread (median, scaled MAD) from a
/// strided pixel sample.
pub fn background_stats(image: &SkyImage) -> (f64, f64) {
    let n = image.pixels.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let stride = if n > 50_000 { 13 } else { 1 };
    let mut sample: Vec<f32> = image.pixels.iter().step_by(stride).copied().collect();
    let mid = sample.len() / 2;
    sample.select_nth_unstable_by(mid, f32::total_cmp);
    let median = sample[mid] as f64;
    let mut dev: Vec<f32> = sample.iter().map(|&p| (p as f64 - median).abs() as f32).collect();
    dev.select_nth_unstable_by(mid, f32::total_cmp);
    (median, 1.4826 * dev[mid] as f64)
}

pub fn extract_centroids(image: &SkyImage, cfg: &CentroidConfig) -> Vec<Centroid> {
    let (w, h) = (image.width, image.height);
    if w == 0 || h == 0 {
        return Vec::new();
    }
    let (bg, bg_sigma) = background_stats(image);
    // Noise-free frames have no spread; any positive signal is then a detection.
    let detect = bg + cfg.detect_sigma * bg_sigma.max(1e-3);
    let px = |x: usize, y: usize| image.pixels[y * w + x] as f64;

    let mut out: Vec<Centroid> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = px(x, y);
            if v <= detect || !is_local_max(image, x, y, v) {
                continue;
            }
            // Grow the window until a ring with no detected pixel is found;
            // that ring is the one-pixel margin.
            let mut half = 1;
            while half < cfg.max_half_window && ring_has_signal(image, x, y, half, detect) {
                half += 1;
            }
            let win = Window {
                x0: x.saturating_sub(half),
                y0: y.saturating_sub(half),
                x1: (x + half).min(w - 1),
                y1: (y + half).min(h - 1),
            };
            if let Some(c) = weighted_centroid(image, win, if cfg.subtract_background { bg } else { 0.0 }, cfg.k_niblack, v) {
                out.push(c);
            }
        }
    }
    dedupe(out)
}

fn is_local_max(image: &SkyImage, x: usize, y: usize, v: f64) -> bool {
    let (w, h) = (image.width as i64, image.height as i64);
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            if dx == 0 && dy == 0 {
                continue;
            }
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx < 0 || ny < 0 || nx >= w || ny >= h {
                continue;
            }
            let n = image.get(nx as usize, ny as usize) as f64;
            // Plateaus resolve to their first pixel in raster order.
            let earlier = dy < 0 || (dy == 0 && dx < 0);
            if n > v || (earlier && n == v) {
                return false;
            }
        }
    }
    true
}

fn ring_has_signal(image: &SkyImage, x: usize, y: usize, r: usize, level: f64) -> bool {
    let (w, h) = (image.width as i64, image.height as i64);
    let r = r as i64;
    for dy in -r..=r {
        for dx in -r..=r {
            if dx.abs() != r && dy.abs() != r {
                continue;
            }
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx >= 0 && ny >= 0 && nx < w && ny < h && image.get(nx as usize, ny as usize) as f64 > level {
                return true;
            }
        }
    }
    false
}

fn weighted_centroid(image: &SkyImage, win: Window, bg: f64, k: f64, peak: f64) -> Option<Centroid> {
    let mut n = 0.0;
    let (mut s1, mut s2) = (0.0, 0.0);
    for y in win.y0..=win.y1 {
        for x in win.x0..=win.x1 {
            let v = image.get(x, y) as f64;
            n += 1.0;
            s1 += v;
            s2 += v * v;
        }
    }
    let mean = s1 / n;
    let var = (s2 / n - mean * mean).max(0.0);
    let threshold = mean + k * var.sqrt();
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for y in win.y0..=win.y1 {
        for x in win.x0..=win.x1 {
            let v = image.get(x, y) as f64;
            if v >= threshold && v > bg {
                let wgt = v - bg;
                sw += wgt;
                sx += wgt * (x as f64 + 0.5);
                sy += wgt * (y as f64 + 0.5);
            }
        }
    }
    if !(sw > 0.0) {
        return None;
    }
    Some(Centroid {
        position: Pixel::new(sx / sw, sy / sw),
        total_intensity: sw,
        peak,
        window: win,
    })
}

/// Drop centroids closer than one pixel to a brighter one.
fn dedupe(mut list: Vec<Centroid>) -> Vec<Centroid> {
    list.sort_by(|a, b| b.total_intensity.total_cmp(&a.total_intensity));
    let mut kept: Vec<Centroid> = Vec::with_capacity(list.len());
    for c in list {
        if kept.iter().all(|k| (k.position - c.position).norm() >= 1.0) {
            kept.push(c);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(image: &mut SkyImage, cx: f64, cy: f64, energy: f64, sigma: f64) {
        let cdf = |u: f64| 0.5 * (1.0 + libm::erf(u / (sigma * std::f64::consts::SQRT_2)));
        for y in 0..image.height {
            for x in 0..image.width {
                let fx = cdf(x as f64 + 1.0 - cx) - cdf(x as f64 - cx);
                let fy = cdf(y as f64 + 1.0 - cy) - cdf(y as f64 - cy);
                let idx = y * image.width + x;
                image.pixels[idx] += (energy * fx * fy) as f32;
            }
        }
    }

    #[test]
    fn symmetric_blob_centroid() {
        let mut img = SkyImage::new(256, 256, 0.0);
        blob(&mut img, 100.0, 200.0, 5e4, 0.5);
        let c = extract_centroids(&img, &CentroidConfig::default());
        assert_eq!(c.len(), 1);
        assert!((c[0].position - Pixel::new(100.0, 200.0)).norm() < 0.05);
        assert!(c[0].window.contains(&c[0].position));
        assert!(c[0].total_intensity > 0.0);
    }

    #[test]
    fn two_separate_blobs() {
        let mut img = SkyImage::new(200, 200, 0.0);
        blob(&mut img, 60.3, 80.7, 2e4, 0.5);
        blob(&mut img, 110.3, 80.7, 1e4, 0.5);
        for p in img.pixels.iter_mut() {
            *p += 20.0;
        }
        let c = extract_centroids(&img, &CentroidConfig::default());
        assert_eq!(c.len(), 2);
        // Sorted by intensity.
        assert!((c[0].position.x - 60.3).abs() < 0.1);
        assert!((c[1].position.x - 110.3).abs() < 0.1);
    }

    #[test]
    fn empty_image_has_no_centroids() {
        let img = SkyImage::new(64, 64, 0.0);
        assert!(extract_centroids(&img, &CentroidConfig::default()).is_empty());
    }

    #[test]
    fn single_hot_pixel() {
        let mut img = SkyImage::new(32, 32, 0.0);
        img.pixels.iter_mut().for_each(|p| *p = 20.0);
        img.set(10, 20, 1e5);
        let c = extract_centroids(&img, &CentroidConfig::default());
        assert_eq!(c.len(), 1);
        assert!((c[0].position - Pixel::new(10.5, 20.5)).norm() < 1e-9);
    }
}
