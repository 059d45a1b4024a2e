//! Run configuration: a TOML file, then `--set key=value` overrides, then
//! the dedicated global flags. The resolved configuration is hashed and the
//! hash is stamped on every output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use tpxspec::calibration::{RegionOfInterest, ARGON_LINES_NM, FINE_PROJECTION_BINS};
use tpxspec::clustering::{ClusterConfig, DEFAULT_WINDOW_TICKS};
use tpxspec::coincidence::{DEFAULT_HIST_BIN_NS, DEFAULT_HIST_RANGE_NS, DEFAULT_WINDOW_NS};
use tpxspec::pipeline::{AnalysisSettings, Chunking};
use tpxspec::spectra::{
    DEFAULT_JSI_BINS, DEFAULT_PUMP_BIN_NM, DEFAULT_PUMP_RANGE_NM, DEFAULT_SPECTRUM_BIN_NM,
    DEFAULT_SPECTRUM_RANGE_NM,
};
use tpxspec::synth::{argon_seed_windows, DetectorModel, Preset, SensorChannel, SourceModel};
use tpxspec::{Adjacency, HitFormat, TimeWalkTable};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub format: HitFormat,
    pub io: IoSection,
    pub synth: SynthSection,
    pub cluster: ClusterSection,
    pub calib: CalibSection,
    pub coinc: CoincSection,
    pub spectra: SpectraSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out: PathBuf::from("out"),
            format: HitFormat::Phx1,
            io: IoSection::default(),
            synth: SynthSection::default(),
            cluster: ClusterSection::default(),
            calib: CalibSection::default(),
            coinc: CoincSection::default(),
            spectra: SpectraSection::default(),
        }
    }
}

/// Input files. Unset paths fall back to the conventional names inside `out`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    pub hits: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub preset: Preset,
    /// Seconds; the preset default when unset.
    pub duration_s: Option<f64>,
    /// Replaces the preset's source when set.
    pub source: Option<SourceModel>,
    /// Replaces the preset's detector model when set.
    pub detector: Option<DetectorModel>,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            preset: Preset::Argon,
            duration_s: None,
            source: None,
            detector: None,
        }
    }
}

impl SynthSection {
    pub fn source(&self) -> SourceModel {
        self.source.clone().unwrap_or_else(|| self.preset.source())
    }

    pub fn detector(&self) -> DetectorModel {
        self.detector
            .clone()
            .unwrap_or_else(|| self.preset.detector())
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
            .unwrap_or_else(|| self.preset.default_duration_s())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub window_ticks: u64,
    pub adjacency: Adjacency,
    /// `tot_threshold,correction_ns` CSV; no correction when unset.
    pub timewalk: Option<PathBuf>,
    pub span_ticks: u64,
    pub overlap_ticks: u64,
}

impl Default for ClusterSection {
    fn default() -> Self {
        let chunking = Chunking::default();
        Self {
            window_ticks: DEFAULT_WINDOW_TICKS,
            adjacency: Adjacency::Eight,
            timewalk: None,
            span_ticks: chunking.span_ticks,
            overlap_ticks: chunking.overlap_ticks,
        }
    }
}

impl ClusterSection {
    pub fn chunking(&self) -> Chunking {
        Chunking {
            span_ticks: self.span_ticks,
            overlap_ticks: self.overlap_ticks,
        }
    }

    pub fn cluster_config(&self) -> CliResult<ClusterConfig> {
        let walk = match &self.timewalk {
            None => TimeWalkTable::identity(),
            Some(path) => {
                let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
                TimeWalkTable::from_csv(std::io::BufReader::new(file))
                    .map_err(|e| CliError::at(path, e))?
            }
        };
        Ok(ClusterConfig {
            window_ticks: self.window_ticks,
            adjacency: self.adjacency,
            walk,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibSection {
    pub lines_nm: Vec<f64>,
    pub projection_bins: usize,
    /// `[y_min, y_max)` sensor rows of each channel.
    pub bottom_rows: (u16, u16),
    pub top_rows: (u16, u16),
    /// Pixel windows around each line; the preset windows when unset.
    pub bottom_windows: Option<Vec<(f64, f64)>>,
    pub top_windows: Option<Vec<(f64, f64)>>,
}

impl Default for CalibSection {
    fn default() -> Self {
        Self {
            lines_nm: ARGON_LINES_NM.to_vec(),
            projection_bins: FINE_PROJECTION_BINS,
            bottom_rows: (32, 96),
            top_rows: (160, 224),
            bottom_windows: None,
            top_windows: None,
        }
    }
}

impl CalibSection {
    pub fn roi(&self, channel: SensorChannel) -> CliResult<RegionOfInterest> {
        let (lo, hi) = match channel {
            SensorChannel::Bottom => self.bottom_rows,
            SensorChannel::Top => self.top_rows,
        };
        RegionOfInterest::full_width(lo, hi)
            .map_err(|e| CliError::Validation(format!("calib.{channel}_rows: {e}")))
    }

    pub fn windows(&self, channel: SensorChannel) -> Vec<(f64, f64)> {
        let custom = match channel {
            SensorChannel::Bottom => &self.bottom_windows,
            SensorChannel::Top => &self.top_windows,
        };
        custom
            .clone()
            .unwrap_or_else(|| argon_seed_windows(channel))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoincSection {
    pub signal_channel: SensorChannel,
    pub window_ns: f64,
    pub dt_range_ns: (f64, f64),
    pub dt_bin_ns: f64,
}

impl Default for CoincSection {
    fn default() -> Self {
        Self {
            signal_channel: SensorChannel::Bottom,
            window_ns: DEFAULT_WINDOW_NS,
            dt_range_ns: DEFAULT_HIST_RANGE_NS,
            dt_bin_ns: DEFAULT_HIST_BIN_NS,
        }
    }
}

impl CoincSection {
    pub fn idler_channel(&self) -> SensorChannel {
        match self.signal_channel {
            SensorChannel::Bottom => SensorChannel::Top,
            SensorChannel::Top => SensorChannel::Bottom,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectraSection {
    pub range_nm: (f64, f64),
    pub bin_nm: f64,
    pub pump_range_nm: (f64, f64),
    pub pump_bin_nm: f64,
    pub jsi_bins: usize,
    pub band_k: f64,
    pub band_rms_nm: Option<f64>,
    pub correlation_bins: usize,
}

impl Default for SpectraSection {
    fn default() -> Self {
        Self {
            range_nm: DEFAULT_SPECTRUM_RANGE_NM,
            bin_nm: DEFAULT_SPECTRUM_BIN_NM,
            pump_range_nm: DEFAULT_PUMP_RANGE_NM,
            pump_bin_nm: DEFAULT_PUMP_BIN_NM,
            jsi_bins: DEFAULT_JSI_BINS,
            band_k: 2.0,
            band_rms_nm: None,
            correlation_bins: DEFAULT_JSI_BINS,
        }
    }
}

impl RunConfig {
    pub fn analysis_settings(&self) -> AnalysisSettings {
        AnalysisSettings {
            window_ns: self.coinc.window_ns,
            dt_range_ns: self.coinc.dt_range_ns,
            dt_bin_ns: self.coinc.dt_bin_ns,
            spectrum_range_nm: self.spectra.range_nm,
            spectrum_bin_nm: self.spectra.bin_nm,
            pump_range_nm: self.spectra.pump_range_nm,
            pump_bin_nm: self.spectra.pump_bin_nm,
            jsi_bins: self.spectra.jsi_bins,
            band_k: self.spectra.band_k,
            band_rms_nm: self.spectra.band_rms_nm,
            correlation_bins: self.spectra.correlation_bins,
        }
    }

    pub fn hits_path(&self) -> PathBuf {
        self.io
            .hits
            .clone()
            .unwrap_or_else(|| self.out.join(format!("hits.{}", self.format.extension())))
    }

    pub fn calibration_path(&self) -> PathBuf {
        self.io
            .calibration
            .clone()
            .unwrap_or_else(|| self.out.join("calibration.json"))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("configuration serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}

/// A configuration together with where it came from.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: RunConfig,
    pub file: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub hash: String,
}

/// Parses the right-hand side of `key=value` as a TOML value, falling back
/// to a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn apply_override(table: &mut Table, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("override '{assignment}' is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Validation(format!("bad override key '{key}'")));
    }
    let (last, parents) = parts.split_last().expect("at least one key part");
    let mut node = table;
    for part in parents {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        node = entry.as_table_mut().ok_or_else(|| {
            CliError::Validation(format!("override key '{key}': '{part}' is not a section"))
        })?;
    }
    node.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

pub fn load(file: Option<&Path>, overrides: &[String]) -> CliResult<Resolved> {
    let mut table = match file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            text.parse::<Table>()
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        }
        None => Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let config: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| {
            CliError::Validation(format!("configuration: {}", e.message()))
        })?;
    let hash = config.hash();
    Ok(Resolved {
        config,
        file: file.map(Path::to_path_buf),
        overrides: overrides.to_vec(),
        hash,
    })
}
