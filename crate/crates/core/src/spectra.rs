//! Spectral statistics of coincident pairs: per-channel median and FWHM, the
//! joint spectral intensity, and the pump wavelength reconstructed from
//! energy conservation, `1/λp = 1/λs + 1/λi`.

use serde::{Deserialize, Serialize};

use crate::coincidence::PhotonPair;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fit::{fit_gaussian_points, GaussianFit, MIN_NONEMPTY_BINS};
use crate::histogram::{Axis, Histogram1D, Histogram2D};

pub const DEFAULT_SPECTRUM_RANGE_NM: (f64, f64) = (780.0, 840.0);
pub const DEFAULT_SPECTRUM_BIN_NM: f64 = 0.25;
pub const DEFAULT_PUMP_RANGE_NM: (f64, f64) = (400.0, 410.0);
pub const DEFAULT_PUMP_BIN_NM: f64 = 0.02;
pub const DEFAULT_JSI_BINS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub median_nm: f64,
    /// `None` when the peak is unresolved or a half-maximum crossing is
    /// missing.
    pub fwhm_nm: Option<f64>,
    pub n_entries: usize,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Full width at half maximum of a binned distribution.
///
/// From the first maximum bin, walks outwards to the first bin at or below
/// half the maximum on each side and interpolates linearly between the
/// adjacent bin centers.
pub fn fwhm_from_histogram(hist: &Histogram1D) -> Option<f64> {
    let counts = &hist.counts;
    let n = counts.len();
    let imax = hist.argmax();
    let peak = counts[imax] as f64;
    if peak == 0.0 {
        return None;
    }
    let half = 0.5 * peak;
    let y = |i: usize| counts[i] as f64;
    let left_low = imax == 0 || y(imax - 1) <= half;
    let right_low = imax + 1 == n || y(imax + 1) <= half;
    if left_low && right_low {
        return None;
    }
    let w = hist.axis.width();
    let mut j = imax;
    while j > 0 && y(j - 1) > half {
        j -= 1;
    }
    if j == 0 {
        return None;
    }
    let left = hist.axis.center(j - 1) + (half - y(j - 1)) / (y(j) - y(j - 1)) * w;
    let mut k = imax;
    while k + 1 < n && y(k + 1) > half {
        k += 1;
    }
    if k + 1 == n {
        return None;
    }
    let right = hist.axis.center(k) + (y(k) - half) / (y(k) - y(k + 1)) * w;
    Some(right - left)
}

/// Median of the raw values and FWHM of their histogram over `range`.
pub fn spectral_summary(
    wavelengths: &[f64],
    n_bins: usize,
    range: (f64, f64),
    exec: Exec,
) -> Result<SpectralSummary> {
    let median_nm = median(wavelengths)
        .ok_or_else(|| Error::InsufficientData("no wavelengths to summarize".into()))?;
    let hist = Histogram1D::from_values(
        Axis::new(range.0, range.1, n_bins, "nm")?,
        wavelengths,
        exec,
    );
    Ok(SpectralSummary {
        median_nm,
        fwhm_nm: fwhm_from_histogram(&hist),
        n_entries: wavelengths.len(),
    })
}

/// `λs·λi/(λs+λi)`; the Planck constant and light speed cancel.
pub fn pump_wavelength(lambda_signal_nm: f64, lambda_idler_nm: f64) -> Result<f64> {
    if !(lambda_signal_nm > 0.0 && lambda_idler_nm > 0.0)
        || !lambda_signal_nm.is_finite()
        || !lambda_idler_nm.is_finite()
    {
        return Err(Error::Domain(format!(
            "wavelengths must be positive and finite, got ({lambda_signal_nm}, {lambda_idler_nm})"
        )));
    }
    Ok(lambda_signal_nm * lambda_idler_nm / (lambda_signal_nm + lambda_idler_nm))
}

/// Idler wavelength fixed by a pump and signal wavelength (`λs > λp`).
pub fn idler_for(pump_nm: f64, lambda_signal_nm: f64) -> f64 {
    pump_nm * lambda_signal_nm / (lambda_signal_nm - pump_nm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PumpReconstruction {
    pub lambda_pump_nm: Vec<f64>,
    /// Gaussian-fit mean, or the sample mean when the fit is unusable.
    pub central_value_nm: f64,
    /// Sample standard deviation of the per-pair values.
    pub rms_nm: f64,
    pub gaussian_fit: GaussianFit,
    pub histogram: Histogram1D,
}

fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let shift = values[0];
    let mean = shift + values.iter().map(|v| v - shift).sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn reconstruct_pump(
    pairs: &[PhotonPair],
    n_bins: usize,
    range: (f64, f64),
    exec: Exec,
) -> Result<PumpReconstruction> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData(
            "no pairs for pump reconstruction".into(),
        ));
    }
    let lambda_pump_nm = exec
        .map(pairs, |p| {
            pump_wavelength(p.lambda_signal_nm, p.lambda_idler_nm)
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let histogram = Histogram1D::from_values(
        Axis::new(range.0, range.1, n_bins, "nm")?,
        &lambda_pump_nm,
        exec,
    );
    let (mean, sd) = mean_and_sd(&lambda_pump_nm);
    let gaussian_fit = if histogram.nonempty_bins() >= MIN_NONEMPTY_BINS {
        let xs = histogram.axis.centers();
        let ys: Vec<f64> = histogram.counts.iter().map(|&c| c as f64).collect();
        fit_gaussian_points(&xs, &ys, histogram.axis.width(), range)
    } else {
        GaussianFit::unconverged(mean, sd, histogram.counts[histogram.argmax()] as f64, 0.0)
    };
    let central_value_nm = if gaussian_fit.converged {
        gaussian_fit.mean
    } else {
        mean
    };
    Ok(PumpReconstruction {
        lambda_pump_nm,
        central_value_nm,
        rms_nm: sd,
        gaussian_fit,
        histogram,
    })
}

/// Pearson correlation; `None` for fewer than two points or zero variance.
pub fn pearson(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointSpectrum {
    /// x: signal wavelength, y: idler wavelength.
    pub hist: Histogram2D,
    pub correlation: Option<f64>,
}

pub fn jsi_histogram(
    pairs: &[PhotonPair],
    bins_per_axis: usize,
    signal_range: (f64, f64),
    idler_range: (f64, f64),
    exec: Exec,
) -> Result<JointSpectrum> {
    if bins_per_axis < 2 {
        return Err(Error::Validation(format!(
            "JSI needs at least 2 bins per axis, got {bins_per_axis}"
        )));
    }
    let x = Axis::new(signal_range.0, signal_range.1, bins_per_axis, "signal nm")?;
    let y = Axis::new(idler_range.0, idler_range.1, bins_per_axis, "idler nm")?;
    let points: Vec<(f64, f64)> = pairs
        .iter()
        .map(|p| (p.lambda_signal_nm, p.lambda_idler_nm))
        .collect();
    Ok(JointSpectrum {
        hist: Histogram2D::from_points(x, y, &points, exec),
        correlation: pearson(&points),
    })
}

/// Channel ranges centered on each median, ±3 FWHM wide.
pub fn default_jsi_ranges(
    signal: &SpectralSummary,
    idler: &SpectralSummary,
) -> ((f64, f64), (f64, f64)) {
    let range = |s: &SpectralSummary| {
        let half = 3.0 * s.fwhm_nm.unwrap_or(1.0);
        (s.median_nm - half, s.median_nm + half)
    };
    (range(signal), range(idler))
}

/// Iso-pump curves bounding `central ± k·rms` in the (λs, λi) plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PumpBand {
    pub pump_lo_nm: f64,
    pub pump_hi_nm: f64,
    /// `(λs, λi)` points of the curve at `pump_lo_nm`.
    pub lower_curve: Vec<(f64, f64)>,
    /// `(λs, λi)` points of the curve at `pump_hi_nm`.
    pub upper_curve: Vec<(f64, f64)>,
}

impl PumpBand {
    pub fn contains(&self, lambda_signal_nm: f64, lambda_idler_nm: f64) -> bool {
        match pump_wavelength(lambda_signal_nm, lambda_idler_nm) {
            Ok(p) => p >= self.pump_lo_nm && p <= self.pump_hi_nm,
            Err(_) => false,
        }
    }

    pub fn in_band_fraction(&self, pairs: &[PhotonPair]) -> f64 {
        if pairs.is_empty() {
            return 0.0;
        }
        let inside = pairs
            .iter()
            .filter(|p| self.contains(p.lambda_signal_nm, p.lambda_idler_nm))
            .count();
        inside as f64 / pairs.len() as f64
    }
}

fn iso_pump_curve(pump_nm: f64, signal_axis: &Axis) -> Vec<(f64, f64)> {
    (0..=signal_axis.n_bins)
        .map(|i| signal_axis.edge(i))
        .filter(|&s| s > pump_nm)
        .map(|s| (s, idler_for(pump_nm, s)))
        .collect()
}

pub fn jsi_band_mask(
    hist: &Histogram2D,
    pump_central_nm: f64,
    pump_rms_nm: f64,
    k: f64,
) -> Result<PumpBand> {
    if !(pump_rms_nm > 0.0) {
        return Err(Error::Validation(format!(
            "pump rms must be positive, got {pump_rms_nm}"
        )));
    }
    if !(k >= 0.0) {
        return Err(Error::Validation(format!(
            "band half-width must be non-negative, got {k}"
        )));
    }
    let lo = pump_central_nm - k * pump_rms_nm;
    let hi = pump_central_nm + k * pump_rms_nm;
    Ok(PumpBand {
        pump_lo_nm: lo,
        pump_hi_nm: hi,
        lower_curve: iso_pump_curve(lo, &hist.x),
        upper_curve: iso_pump_curve(hi, &hist.x),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PumpChannelCorrelation {
    /// x: signal wavelength, y: pump wavelength.
    pub signal_vs_pump: Histogram2D,
    /// x: idler wavelength, y: pump wavelength.
    pub idler_vs_pump: Histogram2D,
    pub signal_correlation: Option<f64>,
    pub idler_correlation: Option<f64>,
}

/// Data range padded by 1% per side. A (numerically) constant sample gets a
/// unit-wide range with the value at the center of a bin.
fn padded_range(values: impl Iterator<Item = f64>, n_bins: usize) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    let span = hi - lo;
    if span > 1e-9 * lo.abs().max(1.0) {
        (lo - 0.01 * span, hi + 0.01 * span)
    } else {
        let mid = 0.5 * (lo + hi);
        let shift = if n_bins.is_multiple_of(2) {
            0.5 / n_bins as f64
        } else {
            0.0
        };
        (mid - 0.5 - shift, mid + 0.5 - shift)
    }
}

pub fn pump_channel_correlation(
    pairs: &[PhotonPair],
    n_bins: usize,
    exec: Exec,
) -> Result<PumpChannelCorrelation> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData(
            "no pairs for pump correlation".into(),
        ));
    }
    let pumps = exec
        .map(pairs, |p| {
            pump_wavelength(p.lambda_signal_nm, p.lambda_idler_nm)
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let pump_range = padded_range(pumps.iter().copied(), n_bins);
    let sig_range = padded_range(pairs.iter().map(|p| p.lambda_signal_nm), n_bins);
    let idl_range = padded_range(pairs.iter().map(|p| p.lambda_idler_nm), n_bins);
    let sig_points: Vec<(f64, f64)> = pairs
        .iter()
        .zip(&pumps)
        .map(|(p, &l)| (p.lambda_signal_nm, l))
        .collect();
    let idl_points: Vec<(f64, f64)> = pairs
        .iter()
        .zip(&pumps)
        .map(|(p, &l)| (p.lambda_idler_nm, l))
        .collect();
    let pump_axis = Axis::new(pump_range.0, pump_range.1, n_bins, "pump nm")?;
    Ok(PumpChannelCorrelation {
        signal_vs_pump: Histogram2D::from_points(
            Axis::new(sig_range.0, sig_range.1, n_bins, "signal nm")?,
            pump_axis.clone(),
            &sig_points,
            exec,
        ),
        idler_vs_pump: Histogram2D::from_points(
            Axis::new(idl_range.0, idl_range.1, n_bins, "idler nm")?,
            pump_axis,
            &idl_points,
            exec,
        ),
        signal_correlation: pearson(&sig_points),
        idler_correlation: pearson(&idl_points),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::CalibrationModel;
    use crate::clustering::PhotonEvent;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn pair(ls: f64, li: f64) -> PhotonPair {
        let ev = PhotonEvent {
            cx: 0.0,
            cy: 0.0,
            t_ns: 0.0,
            tot_sum: 1,
            n_pixels: 1,
            anchor_seq: 0,
        };
        let mut p = PhotonPair::new(
            ev,
            ev,
            &CalibrationModel::linear(1.0, 0.0),
            &CalibrationModel::linear(1.0, 0.0),
        );
        p.lambda_signal_nm = ls;
        p.lambda_idler_nm = li;
        p
    }

    #[test]
    fn pump_spot_values() {
        assert!((pump_wavelength(802.8, 814.0).unwrap() - 404.18).abs() < 0.01);
        assert!((pump_wavelength(810.4, 808.9).unwrap() - 404.82).abs() < 0.01);
        assert_eq!(pump_wavelength(810.0, 810.0).unwrap(), 405.0);
        assert!(pump_wavelength(0.0, 800.0).is_err());
        assert!(pump_wavelength(800.0, -1.0).is_err());
    }

    #[test]
    fn idler_inverts_pump() {
        let li = idler_for(404.80, 810.4);
        let reciprocal = 1.0 / (1.0 / 404.80 - 1.0 / 810.4);
        assert!((li - reciprocal).abs() < 1e-9, "{li}");
        assert!((li - 808.80).abs() < 0.005, "{li}");
        assert!((pump_wavelength(810.4, li).unwrap() - 404.80).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn pump_is_symmetric_and_below_both(a in 300.0f64..1500.0, b in 300.0f64..1500.0) {
            let ab = pump_wavelength(a, b).unwrap();
            prop_assert_eq!(ab, pump_wavelength(b, a).unwrap());
            prop_assert!(ab < a.min(b));
            let harmonic = 2.0 / (1.0 / a + 1.0 / b);
            prop_assert!((ab - harmonic / 2.0).abs() <= 1e-12 * ab);
        }
    }

    #[test]
    fn gaussian_summary_matches_inputs() {
        let sigma = 9.9 / crate::fit::FWHM_PER_SIGMA;
        let normal = Normal::new(810.4, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let values: Vec<f64> = (0..100_000).map(|_| normal.sample(&mut rng)).collect();
        let s = spectral_summary(&values, 240, (780.0, 840.0), Exec::Parallel).unwrap();
        assert!((s.median_nm - 810.4).abs() < 0.1);
        let fwhm = s.fwhm_nm.unwrap();
        assert!((fwhm / 9.9 - 1.0).abs() < 0.1, "fwhm {fwhm}");
    }

    #[test]
    fn triangle_fwhm_is_analytic() {
        // Counts 100 - 10·|i - 50| at bin centers of width 0.5: half maximum
        // sits 5 bins from the apex on each side, so FWHM = 10 bins = 5.0.
        let axis = Axis::new(0.0, 50.0, 100, "nm").unwrap();
        let mut values = Vec::new();
        for i in 40..=60usize {
            let c = 100 - 10 * (i as i64 - 50).unsigned_abs() as usize;
            values.extend(std::iter::repeat_n(axis.center(i), c));
        }
        let s = spectral_summary(&values, 100, (0.0, 50.0), Exec::Sequential).unwrap();
        assert!((s.fwhm_nm.unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(s.median_nm, axis.center(50));
    }

    #[test]
    fn identical_values_have_no_fwhm() {
        let s = spectral_summary(&[805.3; 1000], 240, (780.0, 840.0), Exec::Sequential).unwrap();
        assert_eq!(s.median_nm, 805.3);
        assert_eq!(s.fwhm_nm, None);
        assert!(spectral_summary(&[], 240, (780.0, 840.0), Exec::Sequential).is_err());
    }

    #[test]
    fn identical_pairs_reconstruct_exactly() {
        let pairs = vec![pair(810.0, 809.0); 500];
        let r = reconstruct_pump(&pairs, 500, (400.0, 410.0), Exec::Sequential).unwrap();
        assert_eq!(r.rms_nm, 0.0);
        assert!((r.central_value_nm - pump_wavelength(810.0, 809.0).unwrap()).abs() < 1e-9);
        assert!(reconstruct_pump(&[], 500, (400.0, 410.0), Exec::Sequential).is_err());
    }

    #[test]
    fn fixed_pump_lies_on_curve_and_anticorrelates() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pairs: Vec<PhotonPair> = (0..20_000)
            .map(|_| {
                let s = rng.random_range(795.0..825.0);
                pair(s, idler_for(404.8, s))
            })
            .collect();
        let jsi =
            jsi_histogram(&pairs, 100, (790.0, 830.0), (790.0, 830.0), Exec::Parallel).unwrap();
        assert!(jsi.correlation.unwrap() < -0.99);
        let r = reconstruct_pump(&pairs, 500, (400.0, 410.0), Exec::Parallel).unwrap();
        assert!(r.rms_nm < 1e-9);
        let band = jsi_band_mask(&jsi.hist, 404.8, 0.1, 0.0).unwrap();
        assert_eq!(band.lower_curve, band.upper_curve);
        let width = jsi.hist.y.width();
        for p in &pairs {
            let curve_i = idler_for(404.8, p.lambda_signal_nm);
            assert!((curve_i - p.lambda_idler_nm).abs() < width);
        }
    }

    #[test]
    fn degenerate_point_on_zero_width_band() {
        let x = Axis::new(800.0, 820.0, 20, "nm").unwrap();
        let h = Histogram2D::new(x.clone(), x);
        let band = jsi_band_mask(&h, 405.0, 0.4, 0.0).unwrap();
        assert!(band.contains(810.0, 810.0));
        assert!(band
            .lower_curve
            .iter()
            .any(|&(s, i)| s == 810.0 && (i - 810.0).abs() < 1e-9));
        assert!(jsi_band_mask(&h, 405.0, 0.0, 2.0).is_err());
    }

    #[test]
    fn independent_wavelengths_are_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pairs: Vec<PhotonPair> = (0..100_000)
            .map(|_| {
                pair(
                    rng.random_range(800.0..820.0),
                    rng.random_range(800.0..820.0),
                )
            })
            .collect();
        let jsi =
            jsi_histogram(&pairs, 100, (800.0, 820.0), (800.0, 820.0), Exec::Parallel).unwrap();
        assert!(jsi.correlation.unwrap().abs() < 0.05);
    }

    #[test]
    fn single_pair_single_bin() {
        let pairs = [pair(810.0, 809.0)];
        let jsi =
            jsi_histogram(&pairs, 10, (800.0, 820.0), (800.0, 820.0), Exec::Sequential).unwrap();
        assert_eq!(jsi.hist.nonempty_bins(), 1);
        assert_eq!(jsi.correlation, None);
        let corr = pump_channel_correlation(&pairs, 10, Exec::Sequential).unwrap();
        assert_eq!(corr.signal_vs_pump.nonempty_bins(), 1);
        assert_eq!(corr.idler_vs_pump.nonempty_bins(), 1);
        assert!(
            jsi_histogram(&pairs, 1, (800.0, 820.0), (800.0, 820.0), Exec::Sequential).is_err()
        );
    }

    #[test]
    fn fixed_pump_gives_flat_ridge() {
        let pairs: Vec<PhotonPair> = (0..200)
            .map(|i| {
                let s = 800.0 + i as f64 * 0.1;
                pair(s, idler_for(404.8, s))
            })
            .collect();
        let corr = pump_channel_correlation(&pairs, 20, Exec::Sequential).unwrap();
        // Constant pump: every entry lands in a single pump row.
        let rows: std::collections::BTreeSet<usize> = (0..20)
            .flat_map(|ix| (0..20).map(move |iy| (ix, iy)))
            .filter(|&(ix, iy)| corr.signal_vs_pump.get(ix, iy) > 0)
            .map(|(_, iy)| iy)
            .collect();
        assert_eq!(rows.len(), 1);
    }
}
