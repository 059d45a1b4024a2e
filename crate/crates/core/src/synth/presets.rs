//! Named generator configurations: an argon calibration lamp and three
//! photon-pair source settings at 50, 100 and 150 mW pump power.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationModel, RegionOfInterest, ARGON_LINES_NM};
use crate::clustering::TimeWalkTable;
use crate::error::{Error, Result};
use crate::spectra::idler_for;

use super::{
    ArgonSource, ChannelOptics, DetectorModel, EmissionLine, SensorChannel, SourceModel, SpdcSource,
};

/// Truth dispersion of the bottom (signal) channel, `(nm/pixel, nm)`.
pub const BOTTOM_DISPERSION: (f64, f64) = (0.462, 744.416);
/// Truth dispersion of the top (idler) channel, `(nm/pixel, nm)`.
pub const TOP_DISPERSION: (f64, f64) = (0.467, 739.880);

const BOTTOM_ROWS: (u16, u16) = (32, 96);
const TOP_ROWS: (u16, u16) = (160, 224);
const Y_SIGMA_PIX: f64 = 5.0;

const ARGON_LINE_SIGMA_NM: f64 = 0.15;
const ARGON_RATE_HZ: f64 = 10_000.0;
const PAIR_RATE_HZ: f64 = 50_000.0;
/// Coincidence timing resolution of the pair presets, ns; split evenly
/// between the two photons.
const PAIR_JITTER_NS: f64 = 7.0;
const SEED_HALF_WIDTH_PIX: f64 = 3.0;
const PRESET_CLUSTER_SIZE: f64 = 9.0;

/// Residual scales used when trading the idler median against the pump
/// central value in [`reconcile_power_setting`].
const IDLER_MEDIAN_SCALE_NM: f64 = 0.2;
const PUMP_CENTRAL_SCALE_NM: f64 = 0.05;

/// Published spectral summary of one pump-power setting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSetting {
    pub power_mw: u32,
    pub signal_median_nm: f64,
    pub signal_fwhm_nm: f64,
    pub idler_median_nm: f64,
    pub idler_fwhm_nm: f64,
    pub pump_central_nm: f64,
    pub pump_rms_nm: f64,
}

pub const POWER_SETTINGS: [PowerSetting; 3] = [
    PowerSetting {
        power_mw: 50,
        signal_median_nm: 802.8,
        signal_fwhm_nm: 5.9,
        idler_median_nm: 814.0,
        idler_fwhm_nm: 3.8,
        pump_central_nm: 404.13,
        pump_rms_nm: 0.27,
    },
    PowerSetting {
        power_mw: 100,
        signal_median_nm: 806.5,
        signal_fwhm_nm: 8.3,
        idler_median_nm: 811.4,
        idler_fwhm_nm: 5.1,
        pump_central_nm: 404.47,
        pump_rms_nm: 0.33,
    },
    PowerSetting {
        power_mw: 150,
        signal_median_nm: 810.4,
        signal_fwhm_nm: 9.9,
        idler_median_nm: 808.9,
        idler_fwhm_nm: 6.9,
        pump_central_nm: 404.80,
        pump_rms_nm: 0.43,
    },
];

/// Pump mean and pump/signal correlation that make a Gaussian pump and a
/// Gaussian signal marginal produce the published idler statistics.
///
/// Energy conservation ties the idler to pump and signal, so the three
/// published medians are over-determined: the pump mean is moved off its
/// published central value by the amount that balances the two residuals
/// (each in units of its scale). The correlation then matches the idler
/// spread to first order, clamped to `[-1, 1]`.
pub fn reconcile_power_setting(setting: &PowerSetting) -> (f64, f64) {
    let s = setting.signal_median_nm;
    let sensitivity = |p: f64| (s / (s - p)).powi(2);
    let p0 = setting.pump_central_nm;
    let miss = idler_for(p0, s) - setting.idler_median_nm;
    let c = sensitivity(p0);
    let (a2, b2) = (IDLER_MEDIAN_SCALE_NM.powi(2), PUMP_CENTRAL_SCALE_NM.powi(2));
    let shift = -miss * c / a2 / (c * c / a2 + 1.0 / b2);
    let pump = p0 + shift;

    let d_signal = (pump / (s - pump)).powi(2);
    let d_pump = sensitivity(pump);
    let sigma = |fwhm: f64| fwhm / super::FWHM_PER_SIGMA;
    let (ss, sp, si) = (
        sigma(setting.signal_fwhm_nm),
        setting.pump_rms_nm,
        sigma(setting.idler_fwhm_nm),
    );
    let rho = if ss > 0.0 && sp > 0.0 {
        ((d_signal * ss).powi(2) + (d_pump * sp).powi(2) - si * si)
            / (2.0 * d_signal * d_pump * ss * sp)
    } else {
        0.0
    };
    (pump, rho.clamp(-1.0, 1.0))
}

/// Seed windows `(lo, hi)` in pixels around each argon line, placed with
/// the nominal dispersion of `channel`.
pub fn argon_seed_windows(channel: SensorChannel) -> Vec<(f64, f64)> {
    let model = dispersion(channel);
    ARGON_LINES_NM
        .iter()
        .map(|&nm| {
            let px = model.wavelength_to_pixel(nm);
            (px - SEED_HALF_WIDTH_PIX, px + SEED_HALF_WIDTH_PIX)
        })
        .collect()
}

fn dispersion(channel: SensorChannel) -> CalibrationModel {
    let (slope, intercept) = match channel {
        SensorChannel::Bottom => BOTTOM_DISPERSION,
        SensorChannel::Top => TOP_DISPERSION,
    };
    CalibrationModel::linear(slope, intercept)
}

/// Full-width optics for one sensor half.
pub fn channel_optics(channel: SensorChannel) -> ChannelOptics {
    let (y_min, y_max) = match channel {
        SensorChannel::Bottom => BOTTOM_ROWS,
        SensorChannel::Top => TOP_ROWS,
    };
    ChannelOptics {
        channel,
        roi: RegionOfInterest::full_width(y_min, y_max).expect("preset rows fit the sensor"),
        dispersion: dispersion(channel),
        y_sigma_pix: Y_SIGMA_PIX,
    }
}

/// Time-walk injected by the preset detectors, `(ToT threshold, delay ns)`.
pub fn injected_timewalk() -> TimeWalkTable {
    TimeWalkTable::new(vec![
        (1, 30.0),
        (10, 20.0),
        (20, 12.0),
        (30, 8.0),
        (45, 4.0),
        (60, 2.0),
        (80, 0.0),
    ])
    .expect("increasing thresholds")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "argon")]
    Argon,
    #[serde(rename = "spdc-50mw")]
    Spdc50,
    #[serde(rename = "spdc-100mw")]
    Spdc100,
    #[serde(rename = "spdc-150mw")]
    Spdc150,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Argon,
        Preset::Spdc50,
        Preset::Spdc100,
        Preset::Spdc150,
    ];
    pub const PAIR_SOURCES: [Preset; 3] = [Preset::Spdc50, Preset::Spdc100, Preset::Spdc150];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Argon => "argon",
            Preset::Spdc50 => "spdc-50mw",
            Preset::Spdc100 => "spdc-100mw",
            Preset::Spdc150 => "spdc-150mw",
        }
    }

    /// The published numbers behind a pair-source preset.
    pub fn power_setting(self) -> Option<&'static PowerSetting> {
        match self {
            Preset::Argon => None,
            Preset::Spdc50 => Some(&POWER_SETTINGS[0]),
            Preset::Spdc100 => Some(&POWER_SETTINGS[1]),
            Preset::Spdc150 => Some(&POWER_SETTINGS[2]),
        }
    }

    pub fn source(self) -> SourceModel {
        match self.power_setting() {
            None => SourceModel::Argon(ArgonSource {
                lines: ARGON_LINES_NM
                    .iter()
                    .map(|&nm| EmissionLine {
                        nm,
                        relative_intensity: 1.0,
                    })
                    .collect(),
                line_sigma_nm: ARGON_LINE_SIGMA_NM,
                photon_rate_hz: ARGON_RATE_HZ,
                channels: vec![
                    channel_optics(SensorChannel::Bottom),
                    channel_optics(SensorChannel::Top),
                ],
            }),
            Some(setting) => {
                let (pump_mean_nm, rho) = reconcile_power_setting(setting);
                SourceModel::Spdc(SpdcSource {
                    pump_mean_nm,
                    pump_rms_nm: setting.pump_rms_nm,
                    pump_signal_correlation: rho,
                    signal_mean_nm: setting.signal_median_nm,
                    signal_fwhm_nm: setting.signal_fwhm_nm,
                    pair_rate_hz: PAIR_RATE_HZ,
                    signal: channel_optics(SensorChannel::Bottom),
                    idler: channel_optics(SensorChannel::Top),
                })
            }
        }
    }

    /// Detector response used by every preset. Clusters are larger than the
    /// generic default so centroids do not lock onto pixel centers.
    pub fn detector(self) -> DetectorModel {
        DetectorModel {
            timewalk_truth: injected_timewalk(),
            jitter_ns: PAIR_JITTER_NS / std::f64::consts::SQRT_2,
            dark_rate_hz: 2_000.0,
            efficiency: 0.9,
            mean_cluster_size: PRESET_CLUSTER_SIZE,
            ..DetectorModel::default()
        }
    }

    pub fn default_duration_s(self) -> f64 {
        match self {
            Preset::Argon => 10.0,
            _ => 3.0,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown preset {s:?} (expected one of: {})",
                    Preset::ALL.map(|p| p.name()).join(", ")
                ))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("spdc-75mw".parse::<Preset>().is_err());
    }

    #[test]
    fn every_preset_validates() {
        for p in Preset::ALL {
            p.source().validate().unwrap();
            p.detector().validate().unwrap();
        }
    }

    #[test]
    fn reconciled_pump_stays_near_published_central() {
        for s in &POWER_SETTINGS {
            let (pump, rho) = reconcile_power_setting(s);
            assert!(
                (pump - s.pump_central_nm).abs() < 0.03,
                "{} mW: {pump}",
                s.power_mw
            );
            assert!((0.5..=1.0).contains(&rho), "{} mW: {rho}", s.power_mw);
            let idler = idler_for(pump, s.signal_median_nm);
            assert!(
                (idler - s.idler_median_nm).abs() < 0.15,
                "{} mW idler {idler}",
                s.power_mw
            );
        }
    }

    #[test]
    fn reconciliation_reference_values() {
        let (pump, rho) = reconcile_power_setting(&POWER_SETTINGS[0]);
        assert!((pump - 404.1558).abs() < 2e-3, "{pump}");
        assert!((rho - 0.9268).abs() < 2e-3, "{rho}");
        let (_, rho) = reconcile_power_setting(&POWER_SETTINGS[1]);
        assert_eq!(rho, 1.0);
    }

    #[test]
    fn seed_windows_bracket_lines() {
        let w = argon_seed_windows(SensorChannel::Bottom);
        let px = (763.51 - 744.416) / 0.462;
        assert!(w[0].0 < px && px < w[0].1);
        assert_eq!(w.len(), 4);
    }
}
