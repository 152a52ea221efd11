//! Report files: `report.json`, `histories.csv` and `config.echo.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{campaign_scales, IpSceneResult, SampleHistory, ScenarioConfig};
use crate::error::{NavError, Result};

const STATE_NAMES: [&str; 12] = [
    "rx", "ry", "rz", "vx", "vy", "vz", "etar_x", "etar_y", "etar_z", "etasrp_x", "etasrp_y", "etasrp_z",
];

#[derive(Clone, Debug, PartialEq)]
pub struct EmittedFiles {
    pub report: PathBuf,
    pub histories: PathBuf,
    pub config_echo: PathBuf,
}

/// One row per sample and epoch: errors, 3-sigma bounds and NEES.
pub fn filter_histories_csv(cfg: &ScenarioConfig, histories: &[SampleHistory]) -> String {
    let scales = campaign_scales(cfg);
    let mut out = String::from("sample,leg,epoch_s,outcome,planet");
    for n in STATE_NAMES {
        write!(out, ",err_{n}").unwrap();
    }
    for n in STATE_NAMES {
        write!(out, ",sigma3_{n}").unwrap();
    }
    out.push_str(",nees\n");
    for h in histories {
        for r in &h.records {
            let planet = r.tracked_planet.map_or("", |p| p.name());
            write!(out, "{},{},{:.3},{},{}", h.sample, r.leg, r.epoch, r.outcome.as_str(), planet).unwrap();
            let e = r.error();
            for i in 0..12 {
                write!(out, ",{:e}", e[i]).unwrap();
            }
            for i in 0..12 {
                write!(out, ",{:e}", 3.0 * r.p[(i, i)].max(0.0).sqrt()).unwrap();
            }
            writeln!(out, ",{:e}", r.nees(&scales)).unwrap();
        }
    }
    out
}

/// One row per scene and `sigma_r` level.
pub fn ip_histories_csv(rows: &[IpSceneResult]) -> String {
    let mut out = String::from(
        "scene,sigma_r_km,planet,outcome,attitude_error_arcsec,true_x,true_y,detected_x,detected_y,gate_contains_truth\n",
    );
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
    for r in rows {
        writeln!(
            out,
            "{},{:e},{},{},{},{:e},{:e},{},{},{}",
            r.scene,
            r.sigma_r_km,
            r.planet.name(),
            r.outcome.as_str(),
            opt(r.attitude_error_arcsec),
            r.true_pixel.x,
            r.true_pixel.y,
            opt(r.detected_pixel.map(|p| p.x)),
            opt(r.detected_pixel.map(|p| p.y)),
            r.gate_contains_truth.map_or(String::new(), |g| g.to_string()),
        )
        .unwrap();
    }
    out
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| NavError::io(path, e))
}

/// Write the three report files into `out_dir`, creating it if needed.
pub fn emit_report(
    out_dir: impl AsRef<Path>,
    report: &impl Serialize,
    histories_csv: &str,
    cfg: &ScenarioConfig,
) -> Result<EmittedFiles> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| NavError::io(dir, e))?;
    let files = EmittedFiles {
        report: dir.join("report.json"),
        histories: dir.join("histories.csv"),
        config_echo: dir.join("config.echo.json"),
    };
    let json = serde_json::to_string_pretty(report).map_err(|e| NavError::InvalidArgument(e.to_string()))?;
    write(&files.report, &json)?;
    write(&files.histories, histories_csv)?;
    write(&files.config_echo, &cfg.to_json())?;
    Ok(files)
}
