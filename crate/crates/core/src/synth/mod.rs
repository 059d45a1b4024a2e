//! Seeded generator of pixel-hit streams with truth labels.
//!
//! Two sources are modeled: an argon lamp illuminating both spectrometer
//! channels with a few narrow lines, and a photon-pair source sending the
//! signal photon to one channel and the idler to the other. Photons are
//! mapped to pixels through a known (truth) dispersion per channel and
//! rendered as small clusters by a [`DetectorModel`].
//!
//! A run is one deterministic stream per seed. Output hits are sorted by
//! `(toa, y, x)` and each carries a [`HitOrigin`] pointing back at its
//! [`TruthRecord`].

mod presets;
mod render;

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationModel, RegionOfInterest};
use crate::clustering::TimeWalkTable;
use crate::error::{Error, Result};
use crate::event_io::{PixelHit, GRID_SIZE};
use crate::spectra::idler_for;

pub use presets::{
    argon_seed_windows, channel_optics, injected_timewalk, reconcile_power_setting, PowerSetting,
    Preset, BOTTOM_DISPERSION, POWER_SETTINGS, TOP_DISPERSION,
};

/// FWHM of a Gaussian in units of its standard deviation.
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Per-photon detection response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorModel {
    /// Spatial spread of a cluster, pixels. Zero gives single-pixel clusters.
    pub psf_sigma_pix: f64,
    /// Expected number of pixels per photon (at least 1).
    pub mean_cluster_size: f64,
    /// Mean ToT of the brightest pixel.
    pub tot_peak: f64,
    /// Standard deviation of each pixel's ToT draw.
    pub tot_sigma: f64,
    /// Extra mean ToT on the brightest pixel.
    pub tot_anchor_bias: f64,
    pub timewalk_truth: TimeWalkTable,
    /// Per-photon Gaussian timing jitter, ns.
    pub jitter_ns: f64,
    /// Single-pixel background hits over the whole sensor, Hz.
    pub dark_rate_hz: f64,
    /// Detection probability per photon.
    pub efficiency: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            psf_sigma_pix: 0.7,
            mean_cluster_size: 4.0,
            tot_peak: 60.0,
            tot_sigma: 6.0,
            tot_anchor_bias: 8.0,
            timewalk_truth: TimeWalkTable::identity(),
            jitter_ns: 0.0,
            dark_rate_hz: 0.0,
            efficiency: 1.0,
        }
    }
}

impl DetectorModel {
    /// Single-pixel, lossless, noiseless detection.
    pub fn ideal() -> Self {
        Self {
            psf_sigma_pix: 0.0,
            mean_cluster_size: 1.0,
            tot_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.psf_sigma_pix,
            self.mean_cluster_size,
            self.tot_peak,
            self.tot_sigma,
            self.tot_anchor_bias,
            self.jitter_ns,
            self.dark_rate_hz,
            self.efficiency,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("detector parameters must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::Config(format!(
                "efficiency {} outside [0, 1]",
                self.efficiency
            )));
        }
        if self.psf_sigma_pix < 0.0 {
            return Err(Error::Config(format!(
                "psf_sigma_pix {} is negative",
                self.psf_sigma_pix
            )));
        }
        if self.mean_cluster_size < 1.0 {
            return Err(Error::Config(format!(
                "mean_cluster_size {} below one pixel",
                self.mean_cluster_size
            )));
        }
        if self.tot_peak <= 0.0 || self.tot_sigma < 0.0 || self.tot_anchor_bias < 0.0 {
            return Err(Error::Config(
                "ToT peak must be positive, spread and bias non-negative".into(),
            ));
        }
        if self.dark_rate_hz < 0.0 || self.jitter_ns < 0.0 {
            return Err(Error::Config(
                "dark rate and jitter must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Sensor half a photon lands on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorChannel {
    Bottom,
    Top,
}

impl SensorChannel {
    pub fn name(self) -> &'static str {
        match self {
            SensorChannel::Bottom => "bottom",
            SensorChannel::Top => "top",
        }
    }
}

impl fmt::Display for SensorChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SensorChannel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bottom" => Ok(SensorChannel::Bottom),
            "top" => Ok(SensorChannel::Top),
            other => Err(Error::Config(format!(
                "unknown channel {other:?} (expected bottom or top)"
            ))),
        }
    }
}

/// Geometry of one spectrometer channel on the sensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelOptics {
    pub channel: SensorChannel,
    pub roi: RegionOfInterest,
    /// Truth pixel→wavelength map.
    pub dispersion: CalibrationModel,
    /// Spread of photon positions across the dispersion axis, pixels.
    pub y_sigma_pix: f64,
}

impl ChannelOptics {
    /// Wavelengths whose pixel position lies in `[x_min, x_max − 1]`.
    pub fn wavelength_span(&self) -> (f64, f64) {
        let a = self.dispersion.pixel_to_wavelength(self.roi.x_min as f64);
        let b = self
            .dispersion
            .pixel_to_wavelength(self.roi.x_max as f64 - 1.0);
        (a.min(b), a.max(b))
    }

    pub fn accepts(&self, nm: f64) -> bool {
        let (lo, hi) = self.wavelength_span();
        nm >= lo && nm <= hi
    }

    fn validate(&self) -> Result<()> {
        if !(self.dispersion.slope.is_finite()
            && self.dispersion.slope != 0.0
            && self.dispersion.intercept.is_finite())
        {
            return Err(Error::Config(format!(
                "{} channel dispersion is degenerate",
                self.channel
            )));
        }
        if !(self.y_sigma_pix >= 0.0 && self.y_sigma_pix.is_finite()) {
            return Err(Error::Config(format!(
                "{} channel y spread must be non-negative",
                self.channel
            )));
        }
        if self.roi.x_max > GRID_SIZE || self.roi.y_max > GRID_SIZE {
            return Err(Error::Config(format!(
                "{} channel region exceeds the sensor",
                self.channel
            )));
        }
        Ok(())
    }

    fn draw_y<R: Rng>(&self, rng: &mut R) -> f64 {
        let y = self.roi.y_center() - 0.5;
        let y = if self.y_sigma_pix > 0.0 {
            y + self.y_sigma_pix * rng.sample::<f64, _>(rand_distr::StandardNormal)
        } else {
            y
        };
        y.clamp(self.roi.y_min as f64, self.roi.y_max as f64 - 1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmissionLine {
    pub nm: f64,
    pub relative_intensity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArgonSource {
    pub lines: Vec<EmissionLine>,
    /// Gaussian width of every line, nm.
    pub line_sigma_nm: f64,
    /// Total photon rate over all lines and channels, Hz.
    pub photon_rate_hz: f64,
    /// Channels illuminated by the lamp, each photon picks one uniformly.
    pub channels: Vec<ChannelOptics>,
}

impl ArgonSource {
    pub fn validate(&self) -> Result<()> {
        if self.lines.is_empty() || self.channels.is_empty() {
            return Err(Error::Config(
                "argon source needs lines and channels".into(),
            ));
        }
        if !(self.photon_rate_hz > 0.0 && self.photon_rate_hz.is_finite()) {
            return Err(Error::Config(format!(
                "photon rate {} must be positive",
                self.photon_rate_hz
            )));
        }
        if !(self.line_sigma_nm >= 0.0 && self.line_sigma_nm.is_finite()) {
            return Err(Error::Config("line width must be non-negative".into()));
        }
        if self
            .lines
            .iter()
            .any(|l| !(l.relative_intensity > 0.0 && l.relative_intensity.is_finite()))
        {
            return Err(Error::Config("line intensities must be positive".into()));
        }
        for ch in &self.channels {
            ch.validate()?;
            let (lo, hi) = ch.wavelength_span();
            for line in &self.lines {
                if !ch.accepts(line.nm) {
                    return Err(Error::Config(format!(
                        "line {} nm outside the {} channel span [{lo:.3}, {hi:.3}] nm",
                        line.nm, ch.channel
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpdcSource {
    pub pump_mean_nm: f64,
    pub pump_rms_nm: f64,
    /// Correlation coefficient between pump and signal wavelength draws.
    /// Zero draws them independently.
    #[serde(default)]
    pub pump_signal_correlation: f64,
    /// Center of the Gaussian signal marginal, nm.
    pub signal_mean_nm: f64,
    pub signal_fwhm_nm: f64,
    pub pair_rate_hz: f64,
    pub signal: ChannelOptics,
    pub idler: ChannelOptics,
}

impl SpdcSource {
    pub fn validate(&self) -> Result<()> {
        let values = [
            self.pump_mean_nm,
            self.pump_rms_nm,
            self.pump_signal_correlation,
            self.signal_mean_nm,
            self.signal_fwhm_nm,
            self.pair_rate_hz,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(
                "pair-source parameters must be finite".into(),
            ));
        }
        if self.pair_rate_hz <= 0.0 {
            return Err(Error::Config(format!(
                "pair rate {} must be positive",
                self.pair_rate_hz
            )));
        }
        if self.pump_rms_nm < 0.0 || self.signal_fwhm_nm < 0.0 {
            return Err(Error::Config(
                "pump rms and signal FWHM must be non-negative".into(),
            ));
        }
        if !(-1.0..=1.0).contains(&self.pump_signal_correlation) {
            return Err(Error::Config(format!(
                "pump/signal correlation {} outside [-1, 1]",
                self.pump_signal_correlation
            )));
        }
        if !(self.pump_mean_nm > 0.0 && self.signal_mean_nm > self.pump_mean_nm) {
            return Err(Error::Config(
                "signal must be redder than a positive pump wavelength".into(),
            ));
        }
        self.signal.validate()?;
        self.idler.validate()?;
        if self.signal.channel == self.idler.channel
            || self.signal.roi.overlaps_in_y(&self.idler.roi)
        {
            return Err(Error::Config(
                "signal and idler channels must be disjoint".into(),
            ));
        }
        let idler_mean = idler_for(self.pump_mean_nm, self.signal_mean_nm);
        for (ch, nm, what) in [
            (&self.signal, self.signal_mean_nm, "signal"),
            (&self.idler, idler_mean, "idler"),
        ] {
            if !ch.accepts(nm) {
                let (lo, hi) = ch.wavelength_span();
                return Err(Error::Config(format!(
                    "{what} center {nm:.3} nm outside the {} channel span [{lo:.3}, {hi:.3}] nm",
                    ch.channel
                )));
            }
        }
        Ok(())
    }

    pub fn signal_sigma_nm(&self) -> f64 {
        self.signal_fwhm_nm / FWHM_PER_SIGMA
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum SourceModel {
    Argon(ArgonSource),
    Spdc(SpdcSource),
}

impl SourceModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            SourceModel::Argon(s) => s.validate(),
            SourceModel::Spdc(s) => s.validate(),
        }
    }
}

/// Ground truth for one emitted photon. `photon_id` equals its index in the
/// truth stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub photon_id: u64,
    pub pair_id: Option<u64>,
    pub channel: SensorChannel,
    pub lambda_true_nm: f64,
    pub t_true_ns: f64,
    /// Detected and inside its channel's acceptance.
    pub survived: bool,
}

impl TruthRecord {
    pub fn csv_header() -> &'static str {
        "photon_id,pair_id,channel,lambda_true_nm,t_true_ns,survived"
    }

    pub fn csv_row(&self) -> String {
        let pair = self.pair_id.map(|p| p.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{:.9},{:.6},{}",
            self.photon_id,
            pair,
            self.channel,
            self.lambda_true_nm,
            self.t_true_ns,
            self.survived as u8
        )
    }
}

/// Truth label of one hit: the index of its photon, or a dark count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HitOrigin(u32);

impl HitOrigin {
    pub const DARK: HitOrigin = HitOrigin(u32::MAX);

    fn photon(id: u64) -> Self {
        HitOrigin(
            u32::try_from(id)
                .ok()
                .filter(|&v| v != u32::MAX)
                .expect("photon id fits the origin label"),
        )
    }

    pub fn photon_id(self) -> Option<u64> {
        (self != Self::DARK).then_some(self.0 as u64)
    }

    pub fn is_dark(self) -> bool {
        self == Self::DARK
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SynthOutput {
    /// Sorted by `(toa, y, x)`.
    pub hits: Vec<PixelHit>,
    /// `origins[i]` labels `hits[i]`.
    pub origins: Vec<HitOrigin>,
    pub truth: Vec<TruthRecord>,
}

impl SynthOutput {
    pub fn survivors(&self) -> impl Iterator<Item = &TruthRecord> {
        self.truth.iter().filter(|t| t.survived)
    }

    pub fn dark_hits(&self) -> usize {
        self.origins.iter().filter(|o| o.is_dark()).count()
    }
}

/// Accumulates hits with their labels, then sorts them into a stream.
struct Emitter {
    rng: ChaCha8Rng,
    hits: Vec<PixelHit>,
    origins: Vec<HitOrigin>,
    truth: Vec<TruthRecord>,
    jitter: Option<Normal<f64>>,
}

impl Emitter {
    fn new(seed: u64, det: &DetectorModel) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            hits: Vec::new(),
            origins: Vec::new(),
            truth: Vec::new(),
            jitter: (det.jitter_ns > 0.0)
                .then(|| Normal::new(0.0, det.jitter_ns).expect("finite jitter")),
        }
    }

    /// Records a photon; if it is detected and accepted, renders its cluster.
    fn photon(
        &mut self,
        det: &DetectorModel,
        optics: &ChannelOptics,
        nm: f64,
        t_ns: f64,
        pair_id: Option<u64>,
    ) {
        let photon_id = self.truth.len() as u64;
        let detected = det.efficiency >= 1.0 || self.rng.random::<f64>() < det.efficiency;
        let survived = detected && optics.accepts(nm);
        self.truth.push(TruthRecord {
            photon_id,
            pair_id,
            channel: optics.channel,
            lambda_true_nm: nm,
            t_true_ns: t_ns,
            survived,
        });
        if !survived {
            return;
        }
        let x0 = optics.dispersion.wavelength_to_pixel(nm);
        let y0 = optics.draw_y(&mut self.rng);
        let t_det = match &self.jitter {
            Some(j) => t_ns + j.sample(&mut self.rng),
            None => t_ns,
        };
        let before = self.hits.len();
        render::render_cluster(&mut self.rng, det, x0, y0, t_det, &mut self.hits);
        let origin = HitOrigin::photon(photon_id);
        self.origins
            .resize(self.origins.len() + self.hits.len() - before, origin);
    }

    fn darks(&mut self, det: &DetectorModel, duration_ns: f64) {
        if det.dark_rate_hz == 0.0 {
            return;
        }
        let mean = det.dark_rate_hz * duration_ns * 1e-9;
        let n = Poisson::new(mean)
            .expect("positive dark mean")
            .sample(&mut self.rng) as u64;
        for _ in 0..n {
            let t = self.rng.random::<f64>() * duration_ns;
            let x = self.rng.random_range(0..GRID_SIZE);
            let y = self.rng.random_range(0..GRID_SIZE);
            let tot = render::draw_tot(&mut self.rng, det.tot_peak, det.tot_sigma);
            let toa = render::ns_to_ticks(t + det.timewalk_truth.correction_ns(tot));
            self.hits.push(PixelHit::new(x, y, toa, tot));
            self.origins.push(HitOrigin::DARK);
        }
    }

    fn finish(self) -> SynthOutput {
        let mut labelled: Vec<(PixelHit, HitOrigin)> =
            self.hits.into_iter().zip(self.origins).collect();
        labelled.sort_by_key(|(h, _)| h.order_key());
        let (hits, origins) = labelled.into_iter().unzip();
        SynthOutput {
            hits,
            origins,
            truth: self.truth,
        }
    }
}

fn check_duration(duration_s: f64) -> Result<f64> {
    if duration_s > 0.0 && duration_s.is_finite() {
        Ok(duration_s * 1e9)
    } else {
        Err(Error::Validation(format!(
            "duration must be positive, got {duration_s} s"
        )))
    }
}

/// Exponential inter-arrival times at `rate_hz` over `[0, duration_ns)`.
fn arrival_gaps(rate_hz: f64) -> Exp<f64> {
    Exp::new(rate_hz * 1e-9).expect("positive rate")
}

pub fn generate_argon(
    source: &ArgonSource,
    det: &DetectorModel,
    duration_s: f64,
    seed: u64,
) -> Result<SynthOutput> {
    source.validate()?;
    det.validate()?;
    let duration_ns = check_duration(duration_s)?;
    let weights = WeightedIndex::new(source.lines.iter().map(|l| l.relative_intensity))
        .map_err(|e| Error::Config(format!("line intensities: {e}")))?;
    let width = (source.line_sigma_nm > 0.0)
        .then(|| Normal::new(0.0, source.line_sigma_nm).expect("finite width"));
    let gaps = arrival_gaps(source.photon_rate_hz);
    let mut em = Emitter::new(seed, det);
    let mut t = gaps.sample(&mut em.rng);
    while t < duration_ns {
        let line = &source.lines[weights.sample(&mut em.rng)];
        let channel = &source.channels[em.rng.random_range(0..source.channels.len())];
        let nm = match &width {
            Some(w) => line.nm + w.sample(&mut em.rng),
            None => line.nm,
        };
        em.photon(det, channel, nm, t, None);
        t += gaps.sample(&mut em.rng);
    }
    em.darks(det, duration_ns);
    Ok(em.finish())
}

pub fn generate_spdc(
    source: &SpdcSource,
    det: &DetectorModel,
    duration_s: f64,
    seed: u64,
) -> Result<SynthOutput> {
    source.validate()?;
    det.validate()?;
    let duration_ns = check_duration(duration_s)?;
    let gaps = arrival_gaps(source.pair_rate_hz);
    let rho = source.pump_signal_correlation;
    let rho_c = (1.0 - rho * rho).max(0.0).sqrt();
    let sigma_s = source.signal_sigma_nm();
    let mut em = Emitter::new(seed, det);
    let mut pair_id = 0u64;
    let mut t = gaps.sample(&mut em.rng);
    while t < duration_ns {
        let z_signal: f64 = em.rng.sample(rand_distr::StandardNormal);
        let z_pump: f64 = em.rng.sample(rand_distr::StandardNormal);
        let lambda_s = source.signal_mean_nm + sigma_s * z_signal;
        let lambda_p = source.pump_mean_nm + source.pump_rms_nm * (rho * z_signal + rho_c * z_pump);
        let lambda_i = idler_for(lambda_p, lambda_s);
        em.photon(det, &source.signal, lambda_s, t, Some(pair_id));
        em.photon(det, &source.idler, lambda_i, t, Some(pair_id));
        pair_id += 1;
        t += gaps.sample(&mut em.rng);
    }
    em.darks(det, duration_ns);
    Ok(em.finish())
}

pub fn generate(
    source: &SourceModel,
    det: &DetectorModel,
    duration_s: f64,
    seed: u64,
) -> Result<SynthOutput> {
    match source {
        SourceModel::Argon(s) => generate_argon(s, det, duration_s, seed),
        SourceModel::Spdc(s) => generate_spdc(s, det, duration_s, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::ARGON_LINES_NM;
    use crate::spectra::pump_wavelength;

    fn noiseless_argon() -> (ArgonSource, DetectorModel) {
        let SourceModel::Argon(mut src) = Preset::Argon.source() else {
            unreachable!()
        };
        src.line_sigma_nm = 0.0;
        for ch in &mut src.channels {
            ch.y_sigma_pix = 0.0;
        }
        (src, DetectorModel::ideal())
    }

    fn spdc_150() -> SpdcSource {
        let SourceModel::Spdc(src) = Preset::Spdc150.source() else {
            unreachable!()
        };
        src
    }

    #[test]
    fn noiseless_argon_hits_exact_line_pixels() {
        let (src, det) = noiseless_argon();
        let out = generate_argon(&src, &det, 0.05, 1).unwrap();
        assert_eq!(out.hits.len(), out.truth.len());
        for (hit, origin) in out.hits.iter().zip(&out.origins) {
            let truth = &out.truth[origin.photon_id().unwrap() as usize];
            let optics = src
                .channels
                .iter()
                .find(|c| c.channel == truth.channel)
                .unwrap();
            let px = optics
                .dispersion
                .wavelength_to_pixel(truth.lambda_true_nm)
                .round();
            assert_eq!(hit.x as f64, px);
            assert!(ARGON_LINES_NM.contains(&truth.lambda_true_nm));
        }
    }

    #[test]
    fn argon_photon_count_is_poisson() {
        let SourceModel::Argon(src) = Preset::Argon.source() else {
            unreachable!()
        };
        let out = generate_argon(&src, &DetectorModel::default(), 1.0, 9).unwrap();
        let mean = src.photon_rate_hz;
        assert!((out.truth.len() as f64 - mean).abs() < 5.0 * mean.sqrt());
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let det = Preset::Spdc150.detector();
        let a = generate_spdc(&spdc_150(), &det, 0.01, 42).unwrap();
        let b = generate_spdc(&spdc_150(), &det, 0.01, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_spdc(&spdc_150(), &det, 0.01, 43).unwrap();
        assert_ne!(a.hits, c.hits);
    }

    #[test]
    fn line_outside_span_is_config_error() {
        let (mut src, det) = noiseless_argon();
        src.lines.push(EmissionLine {
            nm: 900.0,
            relative_intensity: 1.0,
        });
        assert!(matches!(
            generate_argon(&src, &det, 1.0, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_duration_rejected() {
        let (src, det) = noiseless_argon();
        assert!(matches!(
            generate_argon(&src, &det, 0.0, 0),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn zero_pump_jitter_idler_is_exact() {
        let mut src = spdc_150();
        src.pump_rms_nm = 0.0;
        src.pump_mean_nm = 404.80;
        src.signal_fwhm_nm = 0.0;
        src.signal_mean_nm = 810.4;
        let out = generate_spdc(&src, &DetectorModel::ideal(), 0.001, 3).unwrap();
        let idler = out
            .truth
            .iter()
            .find(|t| t.channel == SensorChannel::Top)
            .unwrap();
        assert!((idler.lambda_true_nm - 808.80).abs() < 0.005);
        assert_eq!(idler.lambda_true_nm, 404.80 * 810.4 / (810.4 - 404.80));
    }

    #[test]
    fn truth_pairs_conserve_energy_and_share_time() {
        let src = spdc_150();
        let out = generate_spdc(&src, &Preset::Spdc150.detector(), 0.02, 5).unwrap();
        for pair in out.truth.chunks(2) {
            assert_eq!(pair[0].pair_id, pair[1].pair_id);
            assert_eq!(pair[0].t_true_ns, pair[1].t_true_ns);
            let pump = pump_wavelength(pair[0].lambda_true_nm, pair[1].lambda_true_nm).unwrap();
            let expected = idler_for(pump, pair[0].lambda_true_nm);
            assert!((expected - pair[1].lambda_true_nm).abs() <= 1e-12 * pair[1].lambda_true_nm);
        }
    }

    #[test]
    fn every_hit_traces_to_a_survivor_or_dark() {
        let out = generate_spdc(&spdc_150(), &Preset::Spdc150.detector(), 0.02, 8).unwrap();
        assert_eq!(out.hits.len(), out.origins.len());
        let mut hit_count = vec![0usize; out.truth.len()];
        for o in &out.origins {
            if let Some(id) = o.photon_id() {
                assert!(out.truth[id as usize].survived);
                hit_count[id as usize] += 1;
            }
        }
        for (t, &n) in out.truth.iter().zip(&hit_count) {
            assert_eq!(t.survived, n > 0, "photon {}", t.photon_id);
        }
        assert!(out.dark_hits() > 0);
        assert!(out
            .hits
            .windows(2)
            .all(|w| w[0].order_key() <= w[1].order_key()));
    }

    #[test]
    fn singles_rate_matches_efficiency() {
        let src = spdc_150();
        let det = DetectorModel {
            efficiency: 0.6,
            ..Preset::Spdc150.detector()
        };
        let duration = 0.5;
        let out = generate_spdc(&src, &det, duration, 21).unwrap();
        let pairs = (out.truth.len() / 2) as f64;
        assert!(
            (pairs - src.pair_rate_hz * duration).abs()
                < 5.0 * (src.pair_rate_hz * duration).sqrt()
        );
        for ch in [SensorChannel::Bottom, SensorChannel::Top] {
            let singles = out.survivors().filter(|t| t.channel == ch).count() as f64;
            let p = det.efficiency;
            let bound = 5.0 * (pairs * p * (1.0 - p)).sqrt() + pairs * 0.002;
            assert!(
                (singles - pairs * p).abs() < bound,
                "{ch}: {singles} vs {}",
                pairs * p
            );
        }
    }

    #[test]
    fn out_of_span_idlers_are_flagged() {
        let mut src = spdc_150();
        src.idler.roi = RegionOfInterest::new(0, 150, 160, 224).unwrap();
        let out = generate_spdc(&src, &DetectorModel::ideal(), 0.01, 2).unwrap();
        let dropped: Vec<_> = out
            .truth
            .iter()
            .filter(|t| t.channel == SensorChannel::Top && !t.survived)
            .collect();
        assert!(!dropped.is_empty());
        assert!(dropped.iter().all(|t| !src.idler.accepts(t.lambda_true_nm)));
    }

    #[test]
    fn truth_csv_row_layout() {
        let rec = TruthRecord {
            photon_id: 3,
            pair_id: None,
            channel: SensorChannel::Top,
            lambda_true_nm: 772.38,
            t_true_ns: 12.5,
            survived: true,
        };
        assert_eq!(
            TruthRecord::csv_header(),
            "photon_id,pair_id,channel,lambda_true_nm,t_true_ns,survived"
        );
        assert_eq!(rec.csv_row(), "3,,top,772.380000000,12.500000,1");
    }
}
