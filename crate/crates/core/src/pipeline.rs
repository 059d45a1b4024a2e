//! Stage composition: hits → photons → per-channel photons → pairs →
//! spectra. Used by the command-line tool, the acceptance suite and the
//! benches.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationModel, RegionOfInterest};
use crate::clustering::{extract_photons, ClusterConfig, PhotonEvent};
use crate::coincidence::{
    dt_histogram, fit_temporal_resolution, match_closest, select_coincidences, PhotonPair,
    DEFAULT_HIST_BIN_NS, DEFAULT_HIST_RANGE_NS, DEFAULT_WINDOW_NS,
};
use crate::error::Result;
use crate::event_io::{chunk_by_time, read_hits, HitFormat, PixelHit};
use crate::exec::Exec;
use crate::fit::GaussianFit;
use crate::histogram::{Axis, Histogram1D};
use crate::spectra::{
    default_jsi_ranges, jsi_band_mask, jsi_histogram, pump_channel_correlation, reconstruct_pump,
    spectral_summary, JointSpectrum, PumpBand, PumpChannelCorrelation, PumpReconstruction,
    SpectralSummary, DEFAULT_JSI_BINS, DEFAULT_PUMP_BIN_NM, DEFAULT_PUMP_RANGE_NM,
    DEFAULT_SPECTRUM_BIN_NM, DEFAULT_SPECTRUM_RANGE_NM,
};

/// Time chunking of the hit stream for clustering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunking {
    pub span_ticks: u64,
    pub overlap_ticks: u64,
}

impl Default for Chunking {
    fn default() -> Self {
        Self {
            span_ticks: 1 << 22,
            overlap_ticks: 1 << 10,
        }
    }
}

/// Clusters a time-sorted hit stream into time-sorted photons.
pub fn photons_from_hits<I>(
    hits: I,
    cluster: &ClusterConfig,
    chunking: Chunking,
    exec: Exec,
) -> Result<Vec<PhotonEvent>>
where
    I: IntoIterator<Item = Result<PixelHit>>,
{
    let chunks = chunk_by_time(hits, chunking.span_ticks, chunking.overlap_ticks)?;
    extract_photons(chunks, cluster, exec)
}

/// Photons of a sorted hit vector.
pub fn photons_from_sorted(
    hits: &[PixelHit],
    cluster: &ClusterConfig,
    chunking: Chunking,
    exec: Exec,
) -> Result<Vec<PhotonEvent>> {
    photons_from_hits(hits.iter().copied().map(Ok), cluster, chunking, exec)
}

/// Photons whose centroid lies inside `roi`, in their original order.
pub fn photons_in(photons: &[PhotonEvent], roi: &RegionOfInterest) -> Vec<PhotonEvent> {
    photons
        .iter()
        .filter(|p| roi.contains(p.cx, p.cy))
        .copied()
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisSettings {
    pub window_ns: f64,
    pub dt_range_ns: (f64, f64),
    pub dt_bin_ns: f64,
    pub spectrum_range_nm: (f64, f64),
    pub spectrum_bin_nm: f64,
    pub pump_range_nm: (f64, f64),
    pub pump_bin_nm: f64,
    pub jsi_bins: usize,
    /// Half-width of the pump band, in pump rms units.
    pub band_k: f64,
    /// Pump rms for the band instead of the reconstructed one.
    pub band_rms_nm: Option<f64>,
    pub correlation_bins: usize,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            window_ns: DEFAULT_WINDOW_NS,
            dt_range_ns: DEFAULT_HIST_RANGE_NS,
            dt_bin_ns: DEFAULT_HIST_BIN_NS,
            spectrum_range_nm: DEFAULT_SPECTRUM_RANGE_NM,
            spectrum_bin_nm: DEFAULT_SPECTRUM_BIN_NM,
            pump_range_nm: DEFAULT_PUMP_RANGE_NM,
            pump_bin_nm: DEFAULT_PUMP_BIN_NM,
            jsi_bins: DEFAULT_JSI_BINS,
            band_k: 2.0,
            band_rms_nm: None,
            correlation_bins: DEFAULT_JSI_BINS,
        }
    }
}

impl AnalysisSettings {
    fn spectrum_bins(&self) -> usize {
        bins_for(self.spectrum_range_nm, self.spectrum_bin_nm)
    }

    fn pump_bins(&self) -> usize {
        bins_for(self.pump_range_nm, self.pump_bin_nm)
    }
}

fn bins_for(range: (f64, f64), width: f64) -> usize {
    ((range.1 - range.0) / width).round().max(1.0) as usize
}

/// Everything derived from the two channels' photons.
#[derive(Clone, Debug, PartialEq)]
pub struct Analysis {
    pub n_signal: usize,
    pub n_idler: usize,
    pub n_matched: usize,
    pub dt_histogram: Histogram1D,
    pub resolution: Option<GaussianFit>,
    pub coincidences: Vec<PhotonPair>,
    pub signal_spectrum: Histogram1D,
    pub idler_spectrum: Histogram1D,
    pub signal_summary: Option<SpectralSummary>,
    pub idler_summary: Option<SpectralSummary>,
    pub pump: Option<PumpReconstruction>,
    pub jsi: Option<JointSpectrum>,
    pub band: Option<PumpBand>,
    pub band_fraction: Option<f64>,
    pub pump_correlation: Option<PumpChannelCorrelation>,
    pub warnings: Vec<String>,
}

/// Pairs the channels, selects coincidences and computes every spectral
/// product. Stages that need coincidences are skipped, with a warning, when
/// there are none.
pub fn analyze(
    signal: &[PhotonEvent],
    idler: &[PhotonEvent],
    signal_cal: &CalibrationModel,
    idler_cal: &CalibrationModel,
    settings: &AnalysisSettings,
    exec: Exec,
) -> Result<Analysis> {
    let mut warnings = Vec::new();
    let matched = match_closest(signal, idler, signal_cal, idler_cal);
    let dt_hist = dt_histogram(&matched, settings.dt_range_ns, settings.dt_bin_ns, exec)?;
    let resolution = if dt_hist.in_range() > 0 {
        let fit = fit_temporal_resolution(&dt_hist)?;
        if !fit.converged {
            warnings.push("Δt fit did not converge".to_string());
        }
        Some(fit)
    } else {
        warnings.push("Δt histogram is empty".to_string());
        None
    };
    let coincidences = select_coincidences(&matched, settings.window_ns)?;

    let spectrum_axis = Axis::new(
        settings.spectrum_range_nm.0,
        settings.spectrum_range_nm.1,
        settings.spectrum_bins(),
        "nm",
    )?;
    let lambda_s: Vec<f64> = coincidences.iter().map(|p| p.lambda_signal_nm).collect();
    let lambda_i: Vec<f64> = coincidences.iter().map(|p| p.lambda_idler_nm).collect();
    let signal_spectrum = Histogram1D::from_values(spectrum_axis.clone(), &lambda_s, exec);
    let idler_spectrum = Histogram1D::from_values(spectrum_axis, &lambda_i, exec);

    let mut analysis = Analysis {
        n_signal: signal.len(),
        n_idler: idler.len(),
        n_matched: matched.len(),
        dt_histogram: dt_hist,
        resolution,
        coincidences: Vec::new(),
        signal_spectrum,
        idler_spectrum,
        signal_summary: None,
        idler_summary: None,
        pump: None,
        jsi: None,
        band: None,
        band_fraction: None,
        pump_correlation: None,
        warnings,
    };
    if coincidences.is_empty() {
        analysis.warnings.push(format!(
            "no coincidences within ±{} ns; spectral products skipped",
            settings.window_ns
        ));
        return Ok(analysis);
    }

    let n_bins = settings.spectrum_bins();
    let signal_summary = spectral_summary(&lambda_s, n_bins, settings.spectrum_range_nm, exec)?;
    let idler_summary = spectral_summary(&lambda_i, n_bins, settings.spectrum_range_nm, exec)?;
    for (name, s) in [("signal", &signal_summary), ("idler", &idler_summary)] {
        if s.fwhm_nm.is_none() {
            analysis.warnings.push(format!("{name} FWHM unresolved"));
        }
    }
    let pump = reconstruct_pump(
        &coincidences,
        settings.pump_bins(),
        settings.pump_range_nm,
        exec,
    )?;
    let (sig_range, idl_range) = default_jsi_ranges(&signal_summary, &idler_summary);
    let jsi = jsi_histogram(&coincidences, settings.jsi_bins, sig_range, idl_range, exec)?;
    let band_rms = settings.band_rms_nm.unwrap_or(pump.rms_nm);
    let band = if band_rms > 0.0 {
        let band = jsi_band_mask(&jsi.hist, pump.central_value_nm, band_rms, settings.band_k)?;
        analysis.band_fraction = Some(band.in_band_fraction(&coincidences));
        Some(band)
    } else {
        analysis
            .warnings
            .push("pump rms is zero; no band drawn".to_string());
        None
    };
    analysis.pump_correlation = Some(pump_channel_correlation(
        &coincidences,
        settings.correlation_bins,
        exec,
    )?);
    analysis.signal_summary = Some(signal_summary);
    analysis.idler_summary = Some(idler_summary);
    analysis.pump = Some(pump);
    analysis.jsi = Some(jsi);
    analysis.band = band;
    analysis.coincidences = coincidences;
    Ok(analysis)
}

/// One calibrated spectrometer channel.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibratedChannel {
    pub roi: RegionOfInterest,
    pub calibration: CalibrationModel,
}

/// Read → cluster → split → calibrate-apply → coincide → analyze.
pub fn analyze_stream<R: BufRead>(
    source: R,
    format: HitFormat,
    cluster: &ClusterConfig,
    chunking: Chunking,
    signal: &CalibratedChannel,
    idler: &CalibratedChannel,
    settings: &AnalysisSettings,
    exec: Exec,
) -> Result<Analysis> {
    let photons = photons_from_hits(read_hits(source, format), cluster, chunking, exec)?;
    let sig = photons_in(&photons, &signal.roi);
    let idl = photons_in(&photons, &idler.roi);
    analyze(
        &sig,
        &idl,
        &signal.calibration,
        &idler.calibration,
        settings,
        exec,
    )
}
