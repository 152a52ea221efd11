//! Full-filter Monte Carlo campaign and its statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{nominal_initial_state, rms, stream_rng, worker_pool, Environment, ScenarioConfig};
use crate::constants::AU_KM;
use crate::dynamics::{Mat12, ScaleSet, StateVector};
use crate::error::Result;
use crate::navigation::{
    initialize_sample, FilterState, MeasurementOutcome, NavContext, NavRecord, SampleRngs, SampleState,
};
use crate::scene::Renderer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleHistory {
    pub sample: usize,
    pub records: Vec<NavRecord>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub accepted: usize,
    pub gated: usize,
    pub ip_failed: usize,
    pub none: usize,
}

impl OutcomeCounts {
    fn add(&mut self, o: MeasurementOutcome) {
        match o {
            MeasurementOutcome::Accepted => self.accepted += 1,
            MeasurementOutcome::Gated => self.gated += 1,
            MeasurementOutcome::IpFailed => self.ip_failed += 1,
            MeasurementOutcome::None => self.none += 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegSummary {
    pub leg: usize,
    pub end_epoch: f64,
    /// Sample mean of 3 sqrt(trace P_rr) after the last measurement of
    /// the leg, before the coast arc [km].
    pub tracking_sigma3_position_km: f64,
    pub tracking_sigma3_velocity_km_s: f64,
    /// Sample mean of 3 sqrt(trace P_rr) at the end of the leg [km].
    pub sigma3_position_km: f64,
    pub sigma3_velocity_km_s: f64,
    /// Over every sample and every epoch of the leg.
    pub rmse_position_km: f64,
    pub rmse_velocity_km_s: f64,
    pub anees: f64,
    pub outcomes: OutcomeCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterCampaignReport {
    pub seed: u64,
    pub case_mode: u8,
    pub sample_count: usize,
    pub leg_count: usize,
    pub epochs_per_sample: usize,
    pub initial_sigma3_position_km: f64,
    pub initial_sigma3_velocity_km_s: f64,
    pub legs: Vec<LegSummary>,
    pub final_sigma3_position_km: f64,
    pub final_sigma3_velocity_km_s: f64,
    /// RMSE over every sample and every epoch of the last leg.
    pub final_leg_rmse_position_km: f64,
    pub final_leg_rmse_velocity_km_s: f64,
    pub final_leg_anees: f64,
    /// Two-sided 95 % band of the sample-averaged NEES for 12 states.
    pub nees_band_95: [f64; 2],
    /// Per-epoch series (index aligned with `epochs`).
    pub epochs: Vec<f64>,
    pub rmse_position_km: Vec<f64>,
    pub rmse_velocity_km_s: Vec<f64>,
    pub anees_series: Vec<f64>,
    pub sigma3_position_km: Vec<f64>,
    pub sigma3_velocity_km_s: Vec<f64>,
}

/// Scales used by every filter and every NEES evaluation.
pub fn campaign_scales(cfg: &ScenarioConfig) -> ScaleSet {
    ScaleSet::new(AU_KM, cfg.dynamics.mu_sun)
}

pub fn sigma3_position(p: &Mat12) -> f64 {
    3.0 * (p[(0, 0)] + p[(1, 1)] + p[(2, 2)]).max(0.0).sqrt()
}

pub fn sigma3_velocity(p: &Mat12) -> f64 {
    3.0 * (p[(3, 3)] + p[(4, 4)] + p[(5, 5)]).max(0.0).sqrt()
}

/// Two-sided 95 % interval of the mean of `samples` NEES values with
/// `dof` degrees of freedom each.
pub fn nees_band(dof: usize, samples: usize) -> [f64; 2] {
    if samples == 0 {
        return [f64::NAN, f64::NAN];
    }
    let k = (dof * samples) as f64;
    let chi = ChiSquared::new(k).expect("positive dof");
    let n = samples as f64;
    [chi.inverse_cdf(0.025) / n, chi.inverse_cdf(0.975) / n]
}

/// One Monte Carlo sample over every configured leg.
pub fn run_filter_sample(
    cfg: &ScenarioConfig,
    ctx: &NavContext<'_>,
    x_nominal: &StateVector,
    sample: usize,
) -> Result<SampleHistory> {
    let scales = campaign_scales(cfg);
    let p0 = cfg.filter.initial_covariance();
    let mut init = stream_rng(cfg.seed, sample as u64, 0);
    let mut truth = *x_nominal;
    ctx.truth.sample_initial_gm(&mut truth, &mut init);
    let x_est = StateVector::from_vector(&initialize_sample(&x_nominal.to_vector(), &p0, &mut init));
    let mut state = SampleState {
        filter: FilterState::new(&x_est, &p0, cfg.start_epoch(), scales),
        truth,
    };
    let mut rngs = SampleRngs {
        truth: stream_rng(cfg.seed, sample as u64, 1),
        sensor: stream_rng(cfg.seed, sample as u64, 2),
    };
    let mut records = Vec::with_capacity(cfg.schedule.leg_count * cfg.schedule.records_per_leg());
    for leg in 0..cfg.schedule.leg_count {
        records.extend(ctx.run_navigation_leg(&mut state, leg, &mut rngs)?);
    }
    Ok(SampleHistory { sample, records })
}

/// Aggregate statistics from raw histories.
pub fn summarize_filter_campaign(cfg: &ScenarioConfig, histories: &[SampleHistory]) -> FilterCampaignReport {
    let scales = campaign_scales(cfg);
    let p0 = cfg.filter.initial_covariance();
    let epochs_per_sample = histories.first().map_or(0, |h| h.records.len());
    let n = histories.len();
    let at = |k: usize| histories.iter().map(move |h| &h.records[k]);
    let mut epochs = Vec::with_capacity(epochs_per_sample);
    let mut rmse_r = Vec::with_capacity(epochs_per_sample);
    let mut rmse_v = Vec::with_capacity(epochs_per_sample);
    let mut anees = Vec::with_capacity(epochs_per_sample);
    let mut s3r = Vec::with_capacity(epochs_per_sample);
    let mut s3v = Vec::with_capacity(epochs_per_sample);
    for k in 0..epochs_per_sample {
        epochs.push(histories[0].records[k].epoch);
        rmse_r.push(rms(at(k).map(|r| r.error().fixed_rows::<3>(0).norm())));
        rmse_v.push(rms(at(k).map(|r| r.error().fixed_rows::<3>(3).norm())));
        anees.push(at(k).map(|r| r.nees(&scales)).sum::<f64>() / n as f64);
        s3r.push(at(k).map(|r| sigma3_position(&r.p)).sum::<f64>() / n as f64);
        s3v.push(at(k).map(|r| sigma3_velocity(&r.p)).sum::<f64>() / n as f64);
    }
    let legs: Vec<LegSummary> = (0..cfg.schedule.leg_count)
        .filter_map(|leg| {
            let idx: Vec<usize> = (0..epochs_per_sample)
                .filter(|&k| histories[0].records[k].leg == leg)
                .collect();
            let last = *idx.last()?;
            let tracked = idx[(2 * cfg.schedule.measurements_per_window()).clamp(1, idx.len()) - 1];
            let mut outcomes = OutcomeCounts::default();
            for h in histories {
                for &k in &idx {
                    outcomes.add(h.records[k].outcome);
                }
            }
            let all = || histories.iter().flat_map(|h| idx.iter().map(move |&k| &h.records[k]));
            Some(LegSummary {
                leg,
                end_epoch: epochs[last],
                tracking_sigma3_position_km: s3r[tracked],
                tracking_sigma3_velocity_km_s: s3v[tracked],
                sigma3_position_km: s3r[last],
                sigma3_velocity_km_s: s3v[last],
                rmse_position_km: rms(all().map(|r| r.error().fixed_rows::<3>(0).norm())),
                rmse_velocity_km_s: rms(all().map(|r| r.error().fixed_rows::<3>(3).norm())),
                anees: all().map(|r| r.nees(&scales)).sum::<f64>() / (idx.len() * n) as f64,
                outcomes,
            })
        })
        .collect();
    let last_leg = legs.last();
    FilterCampaignReport {
        seed: cfg.seed,
        case_mode: cfg.case_mode,
        sample_count: n,
        leg_count: cfg.schedule.leg_count,
        epochs_per_sample,
        initial_sigma3_position_km: sigma3_position(&p0),
        initial_sigma3_velocity_km_s: sigma3_velocity(&p0),
        final_sigma3_position_km: s3r.last().copied().unwrap_or(f64::NAN),
        final_sigma3_velocity_km_s: s3v.last().copied().unwrap_or(f64::NAN),
        final_leg_rmse_position_km: last_leg.map_or(f64::NAN, |l| l.rmse_position_km),
        final_leg_rmse_velocity_km_s: last_leg.map_or(f64::NAN, |l| l.rmse_velocity_km_s),
        final_leg_anees: last_leg.map_or(f64::NAN, |l| l.anees),
        nees_band_95: nees_band(12, n),
        legs,
        epochs,
        rmse_position_km: rmse_r,
        rmse_velocity_km_s: rmse_v,
        anees_series: anees,
        sigma3_position_km: s3r,
        sigma3_velocity_km_s: s3v,
    }
}

/// Monte Carlo over `sample_count` samples of the configured case.
pub fn run_filter_campaign(cfg: &ScenarioConfig) -> Result<(FilterCampaignReport, Vec<SampleHistory>)> {
    cfg.validate()?;
    let env = Environment::build(cfg)?;
    let x_nominal = nominal_initial_state(cfg, &env.ephemeris)?;
    let ctx = NavContext {
        ephemeris: &env.ephemeris,
        renderer: Renderer::new(&env.catalog, &env.ephemeris, &env.camera, cfg.noise.clone()),
        camera: &env.camera,
        kvec: &env.kvec,
        ip: cfg.ip.clone(),
        filter: cfg.filter_config()?,
        dynamics: cfg.dynamics.params(),
        truth: cfg.truth_model(),
        schedule: cfg.schedule,
    };
    let pool = worker_pool()?;
    let results: Vec<Result<SampleHistory>> = pool.install(|| {
        (0..cfg.sample_count)
            .into_par_iter()
            .map(|i| run_filter_sample(cfg, &ctx, &x_nominal, i))
            .collect()
    });
    let histories = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((summarize_filter_campaign(cfg, &histories), histories))
}

/// Position and velocity RMSE of the last leg for each requested case,
/// all cases sharing the same seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRmse {
    pub case_mode: u8,
    pub rmse_position_km: f64,
    pub rmse_velocity_km_s: f64,
    pub anees: f64,
}

pub fn run_ablation(cfg: &ScenarioConfig, cases: &[u8]) -> Result<Vec<(CaseRmse, FilterCampaignReport)>> {
    cases
        .iter()
        .map(|&case| {
            let mut c = cfg.clone();
            c.case_mode = case;
            let (report, _) = run_filter_campaign(&c)?;
            Ok((
                CaseRmse {
                    case_mode: case,
                    rmse_position_km: report.final_leg_rmse_position_km,
                    rmse_velocity_km_s: report.final_leg_rmse_velocity_km_s,
                    anees: report.final_leg_anees,
                },
                report,
            ))
        })
        .collect()
}
