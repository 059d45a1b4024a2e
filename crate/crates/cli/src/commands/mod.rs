pub mod analyze;
pub mod calibrate;
pub mod coincide;
pub mod generate;
pub mod report;
pub mod selftest;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use tpxspec::calibration::CalibrationReport;
use tpxspec::clustering::ClusterConfig;
use tpxspec::event_io::read_hits;
use tpxspec::pipeline::{photons_from_hits, CalibratedChannel};
use tpxspec::synth::SensorChannel;
use tpxspec::{Exec, HitFormat, PhotonEvent, RegionOfInterest};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// The format named by the file extension, else the configured one.
pub fn format_of(path: &Path, fallback: HitFormat) -> HitFormat {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("phx1") => HitFormat::Phx1,
        Some("csv") => HitFormat::Csv,
        _ => fallback,
    }
}

/// Reads and clusters a hit file.
pub fn load_photons(
    path: &Path,
    config: &RunConfig,
    cluster: &ClusterConfig,
    exec: Exec,
) -> CliResult<Vec<PhotonEvent>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let format = format_of(path, config.format);
    photons_from_hits(
        read_hits(BufReader::with_capacity(1 << 20, file), format),
        cluster,
        config.cluster.chunking(),
        exec,
    )
    .map_err(|e| CliError::at(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelEntry {
    pub roi: RegionOfInterest,
    pub calibration: CalibrationReport,
}

/// The persisted output of `calibrate`: one entry per sensor channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub channels: BTreeMap<SensorChannel, ChannelEntry>,
}

impl CalibrationFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let file = File::open(path).map_err(|e| {
            if e.kind() == io::ErrorKind::NotFound {
                CliError::io(
                    path,
                    io::Error::new(
                        io::ErrorKind::NotFound,
                        "calibration not found; run `tpxspec calibrate` first",
                    ),
                )
            } else {
                CliError::io(path, e)
            }
        })?;
        serde_json::from_reader(BufReader::new(file)).map_err(|e| {
            CliError::Validation(format!("{}: not a calibration file: {e}", path.display()))
        })
    }

    pub fn channel(&self, channel: SensorChannel, path: &Path) -> CliResult<CalibratedChannel> {
        let entry = self.channels.get(&channel).ok_or_else(|| {
            CliError::Validation(format!(
                "{}: no calibration for the {channel} channel",
                path.display()
            ))
        })?;
        Ok(CalibratedChannel {
            roi: entry.roi,
            calibration: entry.calibration.to_model(),
        })
    }
}
