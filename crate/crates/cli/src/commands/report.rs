use std::collections::BTreeMap;

use serde::Serialize;

use tpxspec::synth::{PowerSetting, Preset, SensorChannel};
use tpxspec::Histogram1D;

use super::analyze::{self, Summary};
use super::{calibrate, generate};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{OutputDir, Provenance};
use crate::svg::{Plot, BLUE, GREEN, RED};

#[derive(Clone, Debug, Serialize)]
pub struct ScaleRow {
    pub slope_nm_per_pix: f64,
    pub intercept_nm: f64,
    pub residual_rms_nm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SettingRow {
    pub preset: String,
    pub power_mw: u32,
    pub measured: Summary,
    pub published: PowerSetting,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub calibration: BTreeMap<SensorChannel, ScaleRow>,
    pub settings: Vec<SettingRow>,
    /// Reconstructed pump central values rise with pump power.
    pub pump_central_increasing: bool,
}

fn spectrum_line(h: &Histogram1D) -> Vec<(f64, f64)> {
    h.axis
        .centers()
        .into_iter()
        .zip(h.counts.iter().map(|&c| c as f64))
        .collect()
}

/// Generates an argon run and calibrates on it, then generates and analyzes
/// each pair preset against that calibration. Each run gets its own
/// subdirectory; `report.json` and the overview plots go in `out`.
pub fn run(config: &RunConfig, presets: &[Preset], provenance: &Provenance) -> CliResult<Report> {
    if let Some(p) = presets.iter().find(|p| p.power_setting().is_none()) {
        return Err(CliError::Validation(format!(
            "report needs pair-source presets, got {p}"
        )));
    }
    let sub = |name: &str| -> CliResult<OutputDir> {
        OutputDir::create(&config.out.join(name), provenance.clone())
    };

    let mut argon = config.clone();
    argon.synth.preset = Preset::Argon;
    argon.synth.source = None;
    argon.synth.detector = None;
    let mut argon_out = sub("argon")?;
    let generated = generate::run(&argon, &mut argon_out)?;
    eprintln!("report: argon, {} hits", generated.hits);
    let hits = argon_out.path(&format!("hits.{}", config.format.extension()));
    let cal = calibrate::run(&argon, &hits, &mut argon_out)?;
    let calibration_path = argon_out.path("calibration.json");
    argon_out.finish()?;

    let mut settings = Vec::new();
    let mut spectra = Vec::new();
    for (k, &preset) in presets.iter().enumerate() {
        let mut run = config.clone();
        run.seed = config.seed + k as u64 + 1;
        run.synth.preset = preset;
        run.synth.source = None;
        run.synth.detector = None;
        let mut out = sub(preset.name())?;
        let generated = generate::run(&run, &mut out)?;
        run.cluster.timewalk = Some(out.path("timewalk.csv"));
        let hits = out.path(&format!("hits.{}", config.format.extension()));
        let (analysis, summary) = analyze::run(&run, &hits, &calibration_path, &mut out)?;
        out.finish()?;
        eprintln!(
            "report: {preset}, {} hits, {} coincidences",
            generated.hits,
            analysis.coincidences.len()
        );
        let published = *preset.power_setting().expect("pair preset");
        spectra.push((preset, analysis.signal_spectrum, analysis.idler_spectrum));
        settings.push(SettingRow {
            preset: preset.name().to_string(),
            power_mw: published.power_mw,
            measured: summary,
            published,
        });
    }

    settings.sort_by_key(|r| r.power_mw);
    let centrals: Vec<Option<f64>> = settings
        .iter()
        .map(|r| r.measured.pump.central_nm)
        .collect();
    let pump_central_increasing = centrals.iter().all(Option::is_some)
        && centrals.windows(2).all(|w| w[0].unwrap() < w[1].unwrap());

    let mut out = OutputDir::create(&config.out, provenance.clone())?;
    let mut overlay = Plot::new(
        "Coincident spectra by pump power",
        "wavelength (nm)",
        "counts",
    );
    for (preset, signal, idler) in &spectra {
        overlay = overlay
            .line(spectrum_line(signal), BLUE)
            .line(spectrum_line(idler), RED)
            .note(preset.name());
    }
    out.write_svg("spectra_by_power.svg", &overlay.render())?;
    let measured: Vec<(f64, f64)> = settings
        .iter()
        .filter_map(|r| r.measured.pump.central_nm.map(|c| (r.power_mw as f64, c)))
        .collect();
    let published: Vec<(f64, f64)> = settings
        .iter()
        .map(|r| (r.power_mw as f64, r.published.pump_central_nm))
        .collect();
    let mut trend = Plot::new(
        "Pump central wavelength",
        "pump power (mW)",
        "central wavelength (nm)",
    )
    .line(measured.clone(), GREEN)
    .markers(measured.clone(), GREEN)
    .markers(published.clone(), RED)
    .note("green: reconstructed, red: published");
    let (lo_nm, hi_nm) = measured
        .iter()
        .chain(&published)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.1), hi.max(p.1))
        });
    if lo_nm <= hi_nm {
        trend = trend.y_range(lo_nm - 0.2, hi_nm + 0.2);
    }
    if let (Some(lo), Some(hi)) = (settings.first(), settings.last()) {
        trend = trend.x_range(lo.power_mw as f64 - 10.0, hi.power_mw as f64 + 10.0);
    }
    out.write_svg("pump_trend.svg", &trend.render())?;

    let report = Report {
        calibration: cal
            .channels
            .iter()
            .map(|(&ch, e)| {
                (
                    ch,
                    ScaleRow {
                        slope_nm_per_pix: e.calibration.slope,
                        intercept_nm: e.calibration.intercept,
                        residual_rms_nm: e.calibration.residual_rms,
                    },
                )
            })
            .collect(),
        settings,
        pump_central_increasing,
    };
    out.write_json("report.json", &report)?;
    out.finish()?;
    Ok(report)
}
