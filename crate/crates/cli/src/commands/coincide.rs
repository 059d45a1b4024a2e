use std::path::Path;

use serde::Serialize;

use tpxspec::coincidence::{
    dt_histogram, fit_temporal_resolution, match_closest, select_coincidences,
};
use tpxspec::{Exec, GaussianFit};

use super::analyze::{dt_svg, pairs_csv, prepare};
use crate::config::RunConfig;
use crate::error::CliResult;
use crate::output::OutputDir;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoincideSummary {
    pub n_signal: usize,
    pub n_idler: usize,
    pub n_matched: usize,
    pub n_coincidences: usize,
    pub window_ns: f64,
    pub resolution_fit: Option<GaussianFit>,
    pub warnings: Vec<String>,
}

/// Pairs the channels and fits the Δt peak, without spectral products.
pub fn run(
    config: &RunConfig,
    hits: &Path,
    calibration: &Path,
    out: &mut OutputDir,
) -> CliResult<CoincideSummary> {
    let exec = Exec::default();
    let data = prepare(config, hits, calibration, exec)?;
    let matched = match_closest(
        &data.signal,
        &data.idler,
        &data.signal_channel.calibration,
        &data.idler_channel.calibration,
    );
    let hist = dt_histogram(
        &matched,
        config.coinc.dt_range_ns,
        config.coinc.dt_bin_ns,
        exec,
    )?;
    let mut warnings = Vec::new();
    let fit = if hist.in_range() > 0 {
        let f = fit_temporal_resolution(&hist)?;
        if !f.converged {
            warnings.push("Δt fit did not converge".to_string());
        }
        Some(f)
    } else {
        warnings.push("Δt histogram is empty".to_string());
        None
    };
    let coincidences = select_coincidences(&matched, config.coinc.window_ns)?;
    if coincidences.is_empty() {
        warnings.push(format!(
            "no coincidences within ±{} ns",
            config.coinc.window_ns
        ));
    }
    out.write_csv("coincidences.csv", &pairs_csv(&coincidences))?;
    out.write_csv("dt_histogram.csv", &hist.to_csv())?;
    out.write_svg("dt.svg", &dt_svg(&hist, fit.as_ref()))?;
    let summary = CoincideSummary {
        n_signal: data.signal.len(),
        n_idler: data.idler.len(),
        n_matched: matched.len(),
        n_coincidences: coincidences.len(),
        window_ns: config.coinc.window_ns,
        resolution_fit: fit,
        warnings,
    };
    out.write_json("coincide.json", &summary)?;
    Ok(summary)
}
