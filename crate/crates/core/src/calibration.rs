//! Pixel→wavelength calibration from reference emission lines.
//!
//! Photons inside a channel's region of interest are projected onto the
//! dispersion (x) axis, each reference line is fitted with a Gaussian inside
//! a user-supplied seed window, and the fitted centers are regressed against
//! the reference wavelengths.

use serde::{Deserialize, Serialize};

use crate::clustering::PhotonEvent;
use crate::error::{Error, Result};
use crate::event_io::GRID_SIZE;
use crate::exec::Exec;
use crate::fit::{fit_gaussian_peak, GaussianFit};
use crate::histogram::{Axis, Histogram1D};

/// Singlet argon lines used for calibration, nm.
pub const ARGON_LINES_NM: [f64; 4] = [763.51, 772.38, 794.82, 826.45];
pub const DEFAULT_PROJECTION_BINS: usize = 256;
/// Eight bins per pixel, for lines narrower than a pixel.
pub const FINE_PROJECTION_BINS: usize = 2048;

/// Pixel box `[x_min, x_max) × [y_min, y_max)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionOfInterest {
    pub x_min: u16,
    pub x_max: u16,
    pub y_min: u16,
    pub y_max: u16,
}

impl RegionOfInterest {
    pub fn new(x_min: u16, x_max: u16, y_min: u16, y_max: u16) -> Result<Self> {
        if x_min >= x_max || y_min >= y_max {
            return Err(Error::Validation(format!(
                "empty region of interest x[{x_min},{x_max}) y[{y_min},{y_max})"
            )));
        }
        if x_max > GRID_SIZE || y_max > GRID_SIZE {
            return Err(Error::Validation(format!(
                "region of interest exceeds the {GRID_SIZE}-pixel grid"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    pub fn full_width(y_min: u16, y_max: u16) -> Result<Self> {
        Self::new(0, GRID_SIZE, y_min, y_max)
    }

    pub fn contains(&self, cx: f64, cy: f64) -> bool {
        cx >= self.x_min as f64
            && cx < self.x_max as f64
            && cy >= self.y_min as f64
            && cy < self.y_max as f64
    }

    pub fn overlaps_in_y(&self, other: &RegionOfInterest) -> bool {
        self.y_min < other.y_max && other.y_min < self.y_max
    }

    pub fn y_center(&self) -> f64 {
        0.5 * (self.y_min as f64 + self.y_max as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinePoint {
    pub pixel: f64,
    pub reference_nm: f64,
}

/// Linear pixel→wavelength map `nm = slope·pixel + intercept`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    /// nm per pixel.
    pub slope: f64,
    /// nm at pixel 0.
    pub intercept: f64,
    pub residual_rms: f64,
    pub line_points: Vec<LinePoint>,
    pub slope_stderr: Option<f64>,
    pub intercept_stderr: Option<f64>,
}

impl CalibrationModel {
    /// A model with no fit behind it, e.g. a generator's truth dispersion.
    pub fn linear(slope: f64, intercept: f64) -> Self {
        Self {
            slope,
            intercept,
            residual_rms: 0.0,
            line_points: Vec::new(),
            slope_stderr: None,
            intercept_stderr: None,
        }
    }

    pub fn pixel_to_wavelength(&self, cx: f64) -> f64 {
        self.slope * cx + self.intercept
    }

    pub fn wavelength_to_pixel(&self, nm: f64) -> f64 {
        (nm - self.intercept) / self.slope
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.line_points
            .iter()
            .map(|p| p.reference_nm - self.pixel_to_wavelength(p.pixel))
            .collect()
    }
}

/// Free-function form of [`CalibrationModel::pixel_to_wavelength`].
pub fn pixel_to_wavelength(model: &CalibrationModel, cx: f64) -> f64 {
    model.pixel_to_wavelength(cx)
}

/// X-projection of the photons inside `roi`, binned uniformly over
/// `[x_min, x_max)`.
pub fn project_spectrum(
    photons: &[PhotonEvent],
    roi: &RegionOfInterest,
    n_bins: usize,
    exec: Exec,
) -> Result<Histogram1D> {
    if n_bins < 2 {
        return Err(Error::Validation(format!(
            "projection needs at least 2 bins, got {n_bins}"
        )));
    }
    let axis = Axis::new(roi.x_min as f64, roi.x_max as f64, n_bins, "pixel")?;
    let xs: Vec<f64> = photons
        .iter()
        .filter(|p| roi.contains(p.cx, p.cy))
        .map(|p| p.cx)
        .collect();
    Ok(Histogram1D::from_values(axis, &xs, exec))
}

/// Ordinary least squares of reference wavelength on pixel position.
pub fn fit_linear_scale(points: &[LinePoint]) -> Result<CalibrationModel> {
    let n = points.len();
    let distinct = {
        let mut px: Vec<f64> = points.iter().map(|p| p.pixel).collect();
        px.sort_by(f64::total_cmp);
        px.dedup();
        px.len()
    };
    if distinct < 2 {
        return Err(Error::InsufficientData(format!(
            "linear scale needs 2 distinct pixel positions, got {distinct}"
        )));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.pixel).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.reference_nm).sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for p in points {
        let dx = p.pixel - mx;
        sxx += dx * dx;
        sxy += dx * (p.reference_nm - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = points
        .iter()
        .map(|p| {
            let r = p.reference_nm - (slope * p.pixel + intercept);
            r * r
        })
        .sum();
    let (slope_stderr, intercept_stderr) = if n > 2 {
        let s2 = rss / (nf - 2.0);
        let sum_x2: f64 = points.iter().map(|p| p.pixel * p.pixel).sum();
        (
            Some((s2 / sxx).sqrt()),
            Some((s2 * sum_x2 / (nf * sxx)).sqrt()),
        )
    } else {
        (None, None)
    };
    Ok(CalibrationModel {
        slope,
        intercept,
        residual_rms: (rss / nf).sqrt(),
        line_points: points.to_vec(),
        slope_stderr,
        intercept_stderr,
    })
}

/// Outcome of fitting one reference line.
#[derive(Clone, Debug, PartialEq)]
pub struct LineFit {
    pub reference_nm: f64,
    pub window: (f64, f64),
    pub fit: Option<GaussianFit>,
    /// Why the line was left out of the linear fit, if it was.
    pub failure: Option<String>,
}

impl LineFit {
    pub fn included(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelCalibration {
    pub model: CalibrationModel,
    pub lines: Vec<LineFit>,
    pub spectrum: Histogram1D,
}

impl ChannelCalibration {
    pub fn excluded(&self) -> impl Iterator<Item = &LineFit> {
        self.lines.iter().filter(|l| !l.included())
    }

    pub fn report(&self) -> CalibrationReport {
        CalibrationReport {
            lines: self
                .lines
                .iter()
                .map(|l| LineReport {
                    reference_nm: l.reference_nm,
                    fitted_pixel: l.fit.as_ref().map(|f| f.mean),
                    sigma_pix: l.fit.as_ref().map(|f| f.sigma),
                    converged: l.included(),
                    failure: l.failure.clone(),
                })
                .collect(),
            slope: self.model.slope,
            intercept: self.model.intercept,
            residual_rms: self.model.residual_rms,
            slope_stderr: self.model.slope_stderr,
            intercept_stderr: self.model.intercept_stderr,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineReport {
    pub reference_nm: f64,
    pub fitted_pixel: Option<f64>,
    pub sigma_pix: Option<f64>,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Serialized per-channel calibration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub lines: Vec<LineReport>,
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    #[serde(default)]
    pub slope_stderr: Option<f64>,
    #[serde(default)]
    pub intercept_stderr: Option<f64>,
}

impl CalibrationReport {
    pub fn to_model(&self) -> CalibrationModel {
        CalibrationModel {
            slope: self.slope,
            intercept: self.intercept,
            residual_rms: self.residual_rms,
            line_points: self
                .lines
                .iter()
                .filter(|l| l.converged)
                .filter_map(|l| {
                    l.fitted_pixel.map(|pixel| LinePoint {
                        pixel,
                        reference_nm: l.reference_nm,
                    })
                })
                .collect(),
            slope_stderr: self.slope_stderr,
            intercept_stderr: self.intercept_stderr,
        }
    }
}

/// Project → fit each line → fit the linear scale. Lines whose Gaussian fit
/// fails or does not converge are excluded and reported.
pub fn calibrate_channel(
    photons: &[PhotonEvent],
    roi: &RegionOfInterest,
    reference_lines: &[f64],
    seed_windows: &[(f64, f64)],
    n_bins: usize,
    exec: Exec,
) -> Result<ChannelCalibration> {
    if reference_lines.len() != seed_windows.len() {
        return Err(Error::Config(format!(
            "{} reference lines but {} seed windows",
            reference_lines.len(),
            seed_windows.len()
        )));
    }
    let spectrum = project_spectrum(photons, roi, n_bins, exec)?;
    let jobs: Vec<(f64, (f64, f64))> = reference_lines
        .iter()
        .copied()
        .zip(seed_windows.iter().copied())
        .collect();
    let lines: Vec<LineFit> = exec.map(&jobs, |&(reference_nm, window)| {
        match fit_gaussian_peak(&spectrum, window) {
            Ok(fit) if fit.converged => LineFit {
                reference_nm,
                window,
                fit: Some(fit),
                failure: None,
            },
            Ok(fit) => LineFit {
                reference_nm,
                window,
                fit: Some(fit),
                failure: Some("Gaussian fit did not converge".into()),
            },
            Err(e) => LineFit {
                reference_nm,
                window,
                fit: None,
                failure: Some(e.to_string()),
            },
        }
    });
    let points: Vec<LinePoint> = lines
        .iter()
        .filter(|l| l.included())
        .map(|l| LinePoint {
            pixel: l.fit.as_ref().expect("included lines carry a fit").mean,
            reference_nm: l.reference_nm,
        })
        .collect();
    if points.len() < 2 {
        let failed: Vec<String> = lines
            .iter()
            .filter(|l| !l.included())
            .map(|l| {
                format!(
                    "{} nm: {}",
                    l.reference_nm,
                    l.failure.as_deref().unwrap_or("")
                )
            })
            .collect();
        return Err(Error::Calibration(format!(
            "{} of {} lines fitted, need 2; failed lines: {}",
            points.len(),
            lines.len(),
            failed.join("; ")
        )));
    }
    let model = fit_linear_scale(&points)?;
    Ok(ChannelCalibration {
        model,
        lines,
        spectrum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn photon(cx: f64, cy: f64) -> PhotonEvent {
        PhotonEvent {
            cx,
            cy,
            t_ns: 0.0,
            tot_sum: 1,
            n_pixels: 1,
            anchor_seq: 0,
        }
    }

    #[test]
    fn roi_validation() {
        assert!(RegionOfInterest::new(10, 10, 0, 5).is_err());
        assert!(RegionOfInterest::new(0, 257, 0, 5).is_err());
        assert!(RegionOfInterest::new(0, 256, 0, 256).is_ok());
    }

    #[test]
    fn projection_bins_and_excludes() {
        let roi = RegionOfInterest::new(0, 256, 20, 40).unwrap();
        let h = project_spectrum(
            &[photon(10.2, 30.0), photon(10.2, 50.0)],
            &roi,
            256,
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!(h.counts[10], 1);
        assert_eq!(h.in_range(), 1);
        assert!(project_spectrum(&[], &roi, 1, Exec::Sequential).is_err());
        let empty = project_spectrum(&[], &roi, 16, Exec::Sequential).unwrap();
        assert_eq!(empty.entries(), 0);
    }

    fn argon_points(slope: f64, intercept: f64) -> Vec<LinePoint> {
        ARGON_LINES_NM
            .iter()
            .map(|&nm| LinePoint {
                pixel: (nm - intercept) / slope,
                reference_nm: nm,
            })
            .collect()
    }

    #[test]
    fn collinear_argon_lines_recover_scale() {
        let model = fit_linear_scale(&argon_points(0.462, 744.416)).unwrap();
        assert!((model.slope - 0.462).abs() < 1e-9);
        assert!((model.intercept - 744.416).abs() < 1e-9);
        assert!(model.residual_rms < 1e-9);
    }

    #[test]
    fn two_points_interpolate_exactly() {
        let model = fit_linear_scale(&[
            LinePoint {
                pixel: 0.0,
                reference_nm: 700.0,
            },
            LinePoint {
                pixel: 100.0,
                reference_nm: 750.0,
            },
        ])
        .unwrap();
        assert_eq!(model.slope, 0.5);
        assert_eq!(model.intercept, 700.0);
        assert_eq!(model.residual_rms, 0.0);
        assert_eq!(model.slope_stderr, None);
    }

    #[test]
    fn degenerate_points_rejected() {
        let same = [
            LinePoint {
                pixel: 3.0,
                reference_nm: 700.0,
            },
            LinePoint {
                pixel: 3.0,
                reference_nm: 701.0,
            },
        ];
        assert!(matches!(
            fit_linear_scale(&same),
            Err(Error::InsufficientData(_))
        ));
        assert!(fit_linear_scale(&[]).is_err());
    }

    #[test]
    fn noisy_slope_is_unbiased() {
        let truth = argon_points(0.462, 744.416);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let slopes: Vec<f64> = (0..100)
            .map(|_| {
                let noisy: Vec<LinePoint> = truth
                    .iter()
                    .map(|p| LinePoint {
                        pixel: p.pixel,
                        reference_nm: p.reference_nm + noise.sample(&mut rng),
                    })
                    .collect();
                fit_linear_scale(&noisy).unwrap().slope
            })
            .collect();
        let mean = slopes.iter().sum::<f64>() / 100.0;
        let var = slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / 99.0;
        let stderr = (var / 100.0).sqrt();
        assert!(
            (mean - 0.462).abs() < 3.0 * stderr,
            "mean {mean} stderr {stderr}"
        );
    }

    #[test]
    fn wavelength_application() {
        assert!(
            (pixel_to_wavelength(&CalibrationModel::linear(0.462, 744.416), 100.0) - 790.616).abs()
                < 1e-9
        );
        assert_eq!(
            pixel_to_wavelength(&CalibrationModel::linear(0.467, 739.880), 0.0),
            739.880
        );
        assert_eq!(
            pixel_to_wavelength(&CalibrationModel::linear(1.0, 0.0), 5.5),
            5.5
        );
    }

    #[test]
    fn empty_windows_fail_calibration() {
        let roi = RegionOfInterest::new(0, 256, 0, 64).unwrap();
        let windows = [(40.0, 44.0), (58.0, 62.0), (106.0, 110.0), (175.0, 180.0)];
        let err = calibrate_channel(&[], &roi, &ARGON_LINES_NM, &windows, 256, Exec::Sequential);
        match err {
            Err(Error::Calibration(msg)) => assert!(msg.contains("763.51")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn report_round_trips_model() {
        let model = fit_linear_scale(&argon_points(0.467, 739.88)).unwrap();
        let cal = ChannelCalibration {
            lines: model
                .line_points
                .iter()
                .map(|p| LineFit {
                    reference_nm: p.reference_nm,
                    window: (p.pixel - 2.0, p.pixel + 2.0),
                    fit: Some(GaussianFit::unconverged(p.pixel, 0.3, 10.0, 0.0)),
                    failure: None,
                })
                .collect(),
            model: model.clone(),
            spectrum: Histogram1D::new(Axis::new(0.0, 256.0, 256, "pixel").unwrap()),
        };
        let back = cal.report().to_model();
        assert_eq!(back.slope, model.slope);
        assert_eq!(back.line_points, model.line_points);
    }
}
