use std::path::Path;

use serde::Serialize;

use tpxspec::coincidence::PhotonPair;
use tpxspec::pipeline::{analyze, photons_in, Analysis, CalibratedChannel};
use tpxspec::{Exec, GaussianFit, Histogram1D, PhotonEvent};

use super::{load_photons, CalibrationFile};
use crate::config::RunConfig;
use crate::error::CliResult;
use crate::output::OutputDir;
use crate::svg::{Plot, BLUE, GREEN, RED};

/// Clustered photons of both channels with their calibrations.
pub struct ChannelData {
    pub signal: Vec<PhotonEvent>,
    pub idler: Vec<PhotonEvent>,
    pub signal_channel: CalibratedChannel,
    pub idler_channel: CalibratedChannel,
}

pub fn prepare(
    config: &RunConfig,
    hits: &Path,
    calibration: &Path,
    exec: Exec,
) -> CliResult<ChannelData> {
    let cal = CalibrationFile::load(calibration)?;
    let signal_channel = cal.channel(config.coinc.signal_channel, calibration)?;
    let idler_channel = cal.channel(config.coinc.idler_channel(), calibration)?;
    let cluster = config.cluster.cluster_config()?;
    let photons = load_photons(hits, config, &cluster, exec)?;
    Ok(ChannelData {
        signal: photons_in(&photons, &signal_channel.roi),
        idler: photons_in(&photons, &idler_channel.roi),
        signal_channel,
        idler_channel,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChannelStats {
    pub median_nm: Option<f64>,
    pub fwhm_nm: Option<f64>,
    pub n_entries: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PumpStats {
    pub central_nm: Option<f64>,
    pub rms_nm: Option<f64>,
    pub gaussian_sigma_nm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoincidenceStats {
    pub n_signal: usize,
    pub n_idler: usize,
    pub n_matched: usize,
    pub n_coincidences: usize,
    pub window_ns: f64,
    pub resolution_sigma_ns: Option<f64>,
    pub resolution_fwhm_ns: Option<f64>,
    pub resolution_fit: Option<GaussianFit>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandStats {
    pub k: f64,
    pub pump_lo_nm: f64,
    pub pump_hi_nm: f64,
    pub fraction_inside: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub signal: ChannelStats,
    pub idler: ChannelStats,
    pub pump: PumpStats,
    pub coincidence: CoincidenceStats,
    pub band: Option<BandStats>,
    pub jsi_correlation: Option<f64>,
    pub signal_pump_correlation: Option<f64>,
    pub idler_pump_correlation: Option<f64>,
    pub warnings: Vec<String>,
}

impl Summary {
    pub fn of(a: &Analysis, window_ns: f64, band_k: f64) -> Self {
        let channel = |s: &Option<tpxspec::spectra::SpectralSummary>| ChannelStats {
            median_nm: s.as_ref().map(|s| s.median_nm),
            fwhm_nm: s.as_ref().and_then(|s| s.fwhm_nm),
            n_entries: s.as_ref().map_or(0, |s| s.n_entries),
        };
        let resolution = a.resolution.as_ref().filter(|f| f.converged);
        Summary {
            signal: channel(&a.signal_summary),
            idler: channel(&a.idler_summary),
            pump: PumpStats {
                central_nm: a.pump.as_ref().map(|p| p.central_value_nm),
                rms_nm: a.pump.as_ref().map(|p| p.rms_nm),
                gaussian_sigma_nm: a
                    .pump
                    .as_ref()
                    .filter(|p| p.gaussian_fit.converged)
                    .map(|p| p.gaussian_fit.sigma.abs()),
            },
            coincidence: CoincidenceStats {
                n_signal: a.n_signal,
                n_idler: a.n_idler,
                n_matched: a.n_matched,
                n_coincidences: a.coincidences.len(),
                window_ns,
                resolution_sigma_ns: resolution.map(|f| f.sigma.abs()),
                resolution_fwhm_ns: resolution.map(|f| f.fwhm()),
                resolution_fit: a.resolution.clone(),
            },
            band: a.band.as_ref().map(|b| BandStats {
                k: band_k,
                pump_lo_nm: b.pump_lo_nm,
                pump_hi_nm: b.pump_hi_nm,
                fraction_inside: a.band_fraction,
            }),
            jsi_correlation: a.jsi.as_ref().and_then(|j| j.correlation),
            signal_pump_correlation: a
                .pump_correlation
                .as_ref()
                .and_then(|c| c.signal_correlation),
            idler_pump_correlation: a
                .pump_correlation
                .as_ref()
                .and_then(|c| c.idler_correlation),
            warnings: a.warnings.clone(),
        }
    }
}

pub fn pairs_csv(pairs: &[PhotonPair]) -> String {
    let mut s = String::with_capacity(64 * pairs.len() + 64);
    s.push_str(PhotonPair::csv_header());
    s.push('\n');
    for p in pairs {
        s.push_str(&p.csv_row());
        s.push('\n');
    }
    s
}

fn fit_curve(fit: &GaussianFit, hist: &Histogram1D) -> Vec<(f64, f64)> {
    let n = 4 * hist.axis.n_bins;
    (0..=n)
        .map(|k| {
            let x = hist.axis.lo + (hist.axis.hi - hist.axis.lo) * k as f64 / n as f64;
            (x, fit.eval(x))
        })
        .collect()
}

pub fn dt_svg(hist: &Histogram1D, fit: Option<&GaussianFit>) -> String {
    let mut plot =
        Plot::new("Signal − idler arrival time", "Δt (ns)", "pairs").histogram(hist, BLUE);
    if let Some(fit) = fit.filter(|f| f.converged) {
        plot = plot
            .line(fit_curve(fit, hist), RED)
            .note(format!("σ = {:.2} ns", fit.sigma.abs()));
    }
    plot.render()
}

/// Writes the summary and every table and figure analogue.
pub fn write_products(a: &Analysis, config: &RunConfig, out: &mut OutputDir) -> CliResult<Summary> {
    let summary = Summary::of(a, config.coinc.window_ns, config.spectra.band_k);
    out.write_json("summary.json", &summary)?;
    out.write_csv("coincidences.csv", &pairs_csv(&a.coincidences))?;
    out.write_csv("dt_histogram.csv", &a.dt_histogram.to_csv())?;
    out.write_svg("dt.svg", &dt_svg(&a.dt_histogram, a.resolution.as_ref()))?;
    out.write_csv("signal_spectrum.csv", &a.signal_spectrum.to_csv())?;
    out.write_csv("idler_spectrum.csv", &a.idler_spectrum.to_csv())?;

    let mut spectra = Plot::new(
        "Coincident signal and idler spectra",
        "wavelength (nm)",
        "counts",
    )
    .histogram(&a.signal_spectrum, BLUE)
    .histogram(&a.idler_spectrum, RED);
    for (name, s) in [("signal", &summary.signal), ("idler", &summary.idler)] {
        if let (Some(m), Some(f)) = (s.median_nm, s.fwhm_nm) {
            spectra = spectra.note(format!("{name}: median {m:.2} nm, FWHM {f:.2} nm"));
        }
    }
    out.write_svg("spectra.svg", &spectra.render())?;

    if let Some(pump) = &a.pump {
        out.write_csv("pump_histogram.csv", &pump.histogram.to_csv())?;
        let mut plot = Plot::new(
            "Reconstructed pump wavelength",
            "pump wavelength (nm)",
            "pairs",
        )
        .histogram(&pump.histogram, GREEN);
        if pump.gaussian_fit.converged {
            plot = plot.line(fit_curve(&pump.gaussian_fit, &pump.histogram), RED);
        }
        let plot = plot.note(format!(
            "central {:.3} nm, rms {:.3} nm",
            pump.central_value_nm, pump.rms_nm
        ));
        out.write_svg("pump.svg", &plot.render())?;
    }
    if let Some(jsi) = &a.jsi {
        out.write_csv("jsi.csv", &jsi.hist.to_csv())?;
        let mut plot = Plot::new(
            "Joint spectral intensity",
            "signal wavelength (nm)",
            "idler wavelength (nm)",
        )
        .heatmap(&jsi.hist);
        if let Some(band) = &a.band {
            plot = plot
                .dashed(band.lower_curve.clone(), RED)
                .dashed(band.upper_curve.clone(), RED);
        }
        if let Some(r) = jsi.correlation {
            plot = plot.note(format!("r = {r:.3}"));
        }
        out.write_svg("jsi.svg", &plot.render())?;
    }
    if let Some(c) = &a.pump_correlation {
        for (name, hist, r) in [
            ("signal", &c.signal_vs_pump, c.signal_correlation),
            ("idler", &c.idler_vs_pump, c.idler_correlation),
        ] {
            out.write_csv(&format!("{name}_vs_pump.csv"), &hist.to_csv())?;
            let mut plot = Plot::new(
                format!("Pump versus {name} wavelength"),
                format!("{name} wavelength (nm)"),
                "pump wavelength (nm)",
            )
            .heatmap(hist);
            if let Some(r) = r {
                plot = plot.note(format!("r = {r:.3}"));
            }
            out.write_svg(&format!("{name}_vs_pump.svg"), &plot.render())?;
        }
    }
    Ok(summary)
}

pub fn run(
    config: &RunConfig,
    hits: &Path,
    calibration: &Path,
    out: &mut OutputDir,
) -> CliResult<(Analysis, Summary)> {
    let exec = Exec::default();
    let data = prepare(config, hits, calibration, exec)?;
    let analysis = analyze(
        &data.signal,
        &data.idler,
        &data.signal_channel.calibration,
        &data.idler_channel.calibration,
        &config.analysis_settings(),
        exec,
    )?;
    let summary = write_products(&analysis, config, out)?;
    Ok((analysis, summary))
}
