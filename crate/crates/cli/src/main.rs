use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use navsim::constants::{jd_to_seconds, AU_KM};
use navsim::dynamics::{propagate_state, ScaleSet};
use navsim::ephemeris::PlanetId;
use navsim::harness::*;
use navsim::scene::{dump_image, jitter_attitude, pointing_matrix, Renderer};
use navsim::selection::{visible_planets, VisibilityThresholds};
use navsim::{NavError, Result};
use rand::Rng;

#[derive(Parser)]
#[command(name = "navsim", version, about = "Optical navigation simulation campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Image-processing Monte Carlo over random scenes.
    IpCampaign {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of scenes.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Single position uncertainty level [km] instead of the configured list.
        #[arg(long = "sigma-r")]
        sigma_r: Option<f64>,
    },
    /// Navigation filter Monte Carlo.
    FilterCampaign {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Light-effect case 1..5.
        #[arg(long = "case")]
        case_mode: Option<u8>,
        #[arg(long)]
        legs: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render one frame of the nominal trajectory as 16-bit PGM plus JSON truth.
    RenderOne {
        #[arg(long)]
        config: PathBuf,
        /// Julian date of the frame.
        #[arg(long)]
        epoch: f64,
        #[arg(long)]
        out: PathBuf,
        /// Planet to point at; defaults to the brightest visible one.
        #[arg(long)]
        planet: Option<PlanetId>,
    },
}

fn load_config(path: &Path) -> Result<ScenarioConfig> {
    ScenarioConfig::load(path).map_err(|e| match e {
        NavError::Io { .. } => NavError::Config(e.to_string()),
        other => other,
    })
}

fn ip_campaign(
    config: &Path,
    out: &Path,
    samples: Option<usize>,
    seed: Option<u64>,
    sigma_r: Option<f64>,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(n) = samples {
        cfg.ip_campaign.scenes = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(km) = sigma_r {
        cfg.ip_campaign.sigma_r_km = vec![km];
    }
    cfg.validate()?;
    let (report, rows) = run_ip_campaign(&cfg)?;
    let files = emit_report(out, &report, &ip_histories_csv(&rows), &cfg)?;
    for l in &report.levels {
        println!(
            "sigma_r {:>10.0} km  wrong detection {:6.2} %  attitude rms {:6.2} arcsec",
            l.sigma_r_km,
            100.0 * l.wrong_detection_rate_right_attitude,
            l.attitude_error_rms_arcsec
        );
    }
    println!("wrote {}", files.report.display());
    Ok(())
}

fn filter_campaign(
    config: &Path,
    out: &Path,
    case_mode: Option<u8>,
    legs: Option<usize>,
    samples: Option<usize>,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(c) = case_mode {
        cfg.case_mode = c;
    }
    if let Some(n) = legs {
        cfg.schedule.leg_count = n;
    }
    if let Some(n) = samples {
        cfg.sample_count = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let (report, histories) = run_filter_campaign(&cfg)?;
    let files = emit_report(out, &report, &filter_histories_csv(&cfg, &histories), &cfg)?;
    for l in &report.legs {
        println!(
            "leg {}  3sigma {:10.1} km {:8.5} km/s  rmse {:10.1} km  anees {:6.2}",
            l.leg, l.sigma3_position_km, l.sigma3_velocity_km_s, l.rmse_position_km, l.anees
        );
    }
    println!("wrote {}", files.report.display());
    Ok(())
}

fn render_one(config: &Path, epoch_jd: f64, out: &Path, planet: Option<PlanetId>) -> Result<()> {
    let cfg = load_config(config)?;
    cfg.validate()?;
    if !epoch_jd.is_finite() {
        return Err(NavError::Config(format!("epoch {epoch_jd} is not a Julian date")));
    }
    let env = Environment::build(&cfg)?;
    let t = jd_to_seconds(epoch_jd);
    let x0 = nominal_initial_state(&cfg, &env.ephemeris)?;
    let scales = ScaleSet::new(AU_KM, cfg.dynamics.mu_sun);
    let x = propagate_state(&x0, cfg.start_epoch(), t, &cfg.dynamics.params(), &scales, &env.ephemeris)?;
    let thresholds = VisibilityThresholds {
        mag_limit: cfg.filter.mag_limit,
        sea_min_deg: cfg.filter.sea_min_deg,
    };
    let reports = visible_planets(t, &x.r, &env.ephemeris, &thresholds)?;
    let target = match planet {
        Some(p) => reports
            .iter()
            .find(|r| r.planet == p)
            .ok_or_else(|| NavError::UnknownPlanet(p.to_string()))?,
        None => reports
            .iter()
            .filter(|r| r.visible)
            .min_by(|a, b| a.apparent_magnitude.total_cmp(&b.apparent_magnitude))
            .ok_or_else(|| NavError::InvalidArgument("no planet is visible at this epoch".into()))?,
    };
    let mut rng = stream_rng(cfg.seed, 0, 2);
    let roll = rng.random_range(0.0..std::f64::consts::TAU);
    let attitude = jitter_attitude(&pointing_matrix(&target.los, roll), &cfg.noise, &mut rng);
    let renderer = Renderer::new(&env.catalog, &env.ephemeris, &env.camera, cfg.noise.clone());
    let (image, truth) = renderer.render(&x.r, &x.v, &attitude, t, &mut rng)?;
    dump_image(&image, &truth, out)?;
    println!(
        "{} at magnitude {:.2}; {} stars, {} planets in frame; wrote {}",
        target.planet,
        target.apparent_magnitude,
        truth.star_truths.len(),
        truth.planet_truths.len(),
        out.display()
    );
    Ok(())
}

fn exit_code(e: &NavError) -> u8 {
    match e {
        NavError::Config(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::IpCampaign {
            config,
            out,
            samples,
            seed,
            sigma_r,
        } => ip_campaign(config, out, *samples, *seed, *sigma_r),
        Command::FilterCampaign {
            config,
            out,
            case_mode,
            legs,
            samples,
            seed,
        } => filter_campaign(config, out, *case_mode, *legs, *samples, *seed),
        Command::RenderOne {
            config,
            epoch,
            out,
            planet,
        } => render_one(config, *epoch, out, *planet),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("navsim: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
