//! Adaptive Dormand–Prince 5(4) integrator.

use crate::error::{NavError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dopri5Config {
    pub rtol: f64,
    pub atol: f64,
    /// Only the first `control_len` components drive step-size control
    /// (`None` = all of them).
    pub control_len: Option<usize>,
    pub h_init: Option<f64>,
    pub max_steps: usize,
}

impl Default for Dopri5Config {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-15,
            control_len: None,
            h_init: None,
            max_steps: 200_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights (same as the last stage row, FSAL).
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
/// Difference between fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate `dy/dt = f(t, y)` from `t0` to `t1` (either direction) in place.
/// `post_step` runs on every accepted state (e.g. to symmetrize a covariance).
pub fn integrate<F, P>(f: F, t0: f64, y: &mut [f64], t1: f64, cfg: &Dopri5Config, post_step: P) -> Result<IntegrationStats>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    P: FnMut(&mut [f64]),
{
    let scale = |a: &[f64], b: &[f64], i: usize| cfg.atol + cfg.rtol * a[i].abs().max(b[i].abs());
    integrate_scaled(f, t0, y, t1, cfg, post_step, scale)
}

/// Like [`integrate`] with a caller-supplied error scale for component `i`
/// given the states at the start and end of the step.
pub fn integrate_scaled<F, P, S>(
    mut f: F,
    t0: f64,
    y: &mut [f64],
    t1: f64,
    cfg: &Dopri5Config,
    mut post_step: P,
    err_scale: S,
) -> Result<IntegrationStats>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    P: FnMut(&mut [f64]),
    S: Fn(&[f64], &[f64], usize) -> f64,
{
    let n = y.len();
    let mut stats = IntegrationStats::default();
    let span = t1 - t0;
    if span == 0.0 || n == 0 {
        return Ok(stats);
    }
    let dir = span.signum();
    let m = cfg.control_len.unwrap_or(n).min(n);
    let mut k = vec![vec![0.0; n]; 7];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut t = t0;
    f(t, y, &mut k[0]);

    let mut h = match cfg.h_init {
        Some(h) => h.abs().min(span.abs()),
        None => {
            let d0 = rms((0..m).map(|i| y[i] / err_scale(y, y, i)));
            let d1 = rms((0..m).map(|i| k[0][i] / err_scale(y, y, i)));
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            h0.min(span.abs())
        }
    };
    let mut last_rejected = false;

    loop {
        let remaining = (t1 - t) * dir;
        if remaining <= 0.0 {
            break;
        }
        if stats.accepted + stats.rejected >= cfg.max_steps {
            return Err(NavError::Integrator(format!("step limit reached at t = {t}")));
        }
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        let hs = h * dir;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                ytmp[i] = y[i] + hs * acc;
            }
            f(t + C[s] * hs, &ytmp, &mut k[s]);
        }
        // Stage 7 was evaluated at the fifth-order solution.
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..6 {
                acc += B[j] * k[j][i];
            }
            ynew[i] = y[i] + hs * acc;
        }
        let err = rms((0..m).map(|i| {
            let mut e = 0.0;
            for j in 0..7 {
                e += E[j] * k[j][i];
            }
            hs * e / err_scale(y, &ynew, i)
        }));
        if !err.is_finite() {
            return Err(NavError::Integrator(format!("non-finite error estimate at t = {t}")));
        }
        if err <= 1.0 {
            stats.accepted += 1;
            t = if last { t1 } else { t + hs };
            y.copy_from_slice(&ynew);
            post_step(y);
            f(t, y, &mut k[0]);
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= if last_rejected { fac.min(1.0) } else { fac };
            last_rejected = false;
            if last {
                break;
            }
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            last_rejected = true;
        }
        if h < 1e-14 * t.abs().max(span.abs()) {
            return Err(NavError::Integrator(format!("step size underflow at t = {t}")));
        }
    }
    Ok(stats)
}

fn rms(it: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = it.fold((0.0, 0usize), |(s, c), v| (s + v * v, c + 1));
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}
