use std::collections::BTreeMap;
use std::path::Path;

use tpxspec::calibration::{calibrate_channel, ChannelCalibration};
use tpxspec::pipeline::photons_in;
use tpxspec::synth::SensorChannel;
use tpxspec::Exec;

use super::{load_photons, CalibrationFile, ChannelEntry};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::OutputDir;
use crate::svg::{Plot, BLUE, GREY, RED};

const CHANNELS: [SensorChannel; 2] = [SensorChannel::Bottom, SensorChannel::Top];
/// Gaussian overlays are drawn this many window widths wide.
const CURVE_POINTS: usize = 80;

fn spectrum_plot(channel: SensorChannel, cal: &ChannelCalibration) -> String {
    let mut plot = Plot::new(
        format!("Argon projection, {channel} channel"),
        "pixel",
        "counts",
    )
    .histogram(&cal.spectrum, BLUE);
    for line in &cal.lines {
        let Some(fit) = &line.fit else { continue };
        let (lo, hi) = line.window;
        let curve = (0..=CURVE_POINTS)
            .map(|k| {
                let x = lo + (hi - lo) * k as f64 / CURVE_POINTS as f64;
                (x, fit.eval(x))
            })
            .collect();
        plot = if line.included() {
            plot.line(curve, RED)
        } else {
            plot.dashed(curve, GREY)
        };
    }
    plot.note(format!("{} nm/pix", fmt_sig(cal.model.slope)))
        .render()
}

fn fit_plot(channel: SensorChannel, cal: &ChannelCalibration) -> String {
    let m = &cal.model;
    let points: Vec<(f64, f64)> = m
        .line_points
        .iter()
        .map(|p| (p.pixel, p.reference_nm))
        .collect();
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min) - 10.0;
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max) + 10.0;
    Plot::new(
        format!("Wavelength scale, {channel} channel"),
        "pixel",
        "wavelength (nm)",
    )
    .markers(points, BLUE)
    .line(
        vec![
            (lo, m.pixel_to_wavelength(lo)),
            (hi, m.pixel_to_wavelength(hi)),
        ],
        RED,
    )
    .note(format!(
        "λ = {} · x + {}",
        fmt_sig(m.slope),
        fmt_sig(m.intercept)
    ))
    .note(format!("residual rms {:.4} nm", m.residual_rms))
    .render()
}

fn fmt_sig(v: f64) -> String {
    format!("{v:.5}")
}

/// Fits both channels. Writes `calibration.json`, per-channel projection
/// CSVs and line-fit plots. Fails if either channel cannot be calibrated.
pub fn run(config: &RunConfig, hits: &Path, out: &mut OutputDir) -> CliResult<CalibrationFile> {
    let exec = Exec::default();
    let cluster = config.cluster.cluster_config()?;
    let photons = load_photons(hits, config, &cluster, exec)?;
    let mut channels = BTreeMap::new();
    let mut failures = Vec::new();
    for channel in CHANNELS {
        let roi = config.calib.roi(channel)?;
        let windows = config.calib.windows(channel);
        let inside = photons_in(&photons, &roi);
        let cal = match calibrate_channel(
            &inside,
            &roi,
            &config.calib.lines_nm,
            &windows,
            config.calib.projection_bins,
            exec,
        ) {
            Ok(cal) => cal,
            Err(tpxspec::Error::Config(m)) => {
                return Err(CliError::Validation(format!("calib: {m}")))
            }
            Err(e) => {
                failures.push(format!("{channel}: {e}"));
                continue;
            }
        };
        for line in cal.excluded() {
            eprintln!(
                "warning: {channel} line {} nm excluded: {}",
                line.reference_nm,
                line.failure.as_deref().unwrap_or("fit failed")
            );
        }
        out.write_csv(&format!("projection_{channel}.csv"), &cal.spectrum.to_csv())?;
        out.write_svg(
            &format!("calibration_{channel}_lines.svg"),
            &spectrum_plot(channel, &cal),
        )?;
        out.write_svg(
            &format!("calibration_{channel}_scale.svg"),
            &fit_plot(channel, &cal),
        )?;
        channels.insert(
            channel,
            ChannelEntry {
                roi,
                calibration: cal.report(),
            },
        );
    }
    if !failures.is_empty() {
        return Err(CliError::Fit(format!(
            "calibration failed: {}",
            failures.join("; ")
        )));
    }
    let file = CalibrationFile { channels };
    out.write_json("calibration.json", &file)?;
    Ok(file)
}
