//! The nine acceptance criteria as runnable checks.
//!
//! Each check returns an [`Outcome`] with the measured values, so the same
//! code backs the `acceptance` test target and the `selftest` command.
//! Generator runs shared by several criteria are computed once per
//! [`Suite`].

use std::fmt;
use std::io::Cursor;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calibration::{
    calibrate_channel, fit_linear_scale, CalibrationModel, LinePoint, ARGON_LINES_NM,
    FINE_PROJECTION_BINS,
};
use crate::clustering::{
    extract_clusters, extract_photons, label_clusters, Adjacency, ClusterConfig, PhotonEvent,
};
use crate::coincidence::match_closest_indices;
use crate::error::{Error, Result};
use crate::event_io::{chunk_by_time, write_hits, HitChunk, HitFormat, PixelHit};
use crate::exec::Exec;
use crate::histogram::{Axis, Histogram1D};
use crate::oracle::{brute_force_clusters, brute_force_matching, naive_histogram, photon_multiset};
use crate::pipeline::{
    analyze, analyze_stream, photons_from_sorted, photons_in, Analysis, AnalysisSettings,
    CalibratedChannel, Chunking,
};
use crate::spectra::pump_wavelength;
use crate::synth::{
    argon_seed_windows, generate, injected_timewalk, Preset, SensorChannel, SourceModel,
    SynthOutput, BOTTOM_DISPERSION, POWER_SETTINGS, TOP_DISPERSION,
};

pub const ARGON_SIGMA_NM: f64 = 0.15;
pub const PAIR_JITTER_NS: f64 = 7.0;
pub const MIN_PAIRS: usize = 100_000;
pub const THROUGHPUT_HITS: usize = 10_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {} [{}] {}: {} ({:.2} s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

pub const TITLES: [&str; 9] = [
    "calibration arithmetic",
    "calibration closed loop",
    "coincidence resolution",
    "spectral summaries by pump power",
    "pump reconstruction by pump power",
    "pump spot values",
    "anti-correlation and pump band",
    "oracle equivalences",
    "throughput",
];

fn outcome(id: u8, elapsed: Duration, result: Result<(bool, String)>) -> Outcome {
    let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
    Outcome {
        id,
        title: TITLES[id as usize - 1],
        passed,
        detail,
        elapsed,
    }
}

fn within_rel(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

fn truth_model(channel: SensorChannel) -> CalibrationModel {
    let (slope, intercept) = match channel {
        SensorChannel::Bottom => BOTTOM_DISPERSION,
        SensorChannel::Top => TOP_DISPERSION,
    };
    CalibrationModel::linear(slope, intercept)
}

fn preset_cluster_config() -> ClusterConfig {
    ClusterConfig {
        walk: injected_timewalk(),
        ..ClusterConfig::default()
    }
}

/// One generated photon-pair dataset pushed through the pipeline with the
/// truth dispersion as calibration.
#[derive(Clone, Debug)]
pub struct PairRun {
    pub preset: Preset,
    pub analysis: Analysis,
    /// Pairs with both photons detected.
    pub truth_pairs: usize,
    /// Truth pairs matched to each other within the window.
    pub retained_pairs: usize,
    pub elapsed: Duration,
}

impl PairRun {
    /// Duration giving comfortably more than [`MIN_PAIRS`] coincidences.
    pub fn duration_for(preset: Preset) -> f64 {
        let SourceModel::Spdc(src) = preset.source() else {
            return preset.default_duration_s();
        };
        let eff = preset.detector().efficiency;
        1.2 * MIN_PAIRS as f64 / (src.pair_rate_hz * eff * eff)
    }

    pub fn run(preset: Preset, seed: u64, exec: Exec) -> Result<PairRun> {
        let start = Instant::now();
        let SourceModel::Spdc(src) = preset.source() else {
            return Err(Error::Config(format!("{preset} is not a pair source")));
        };
        let out = generate(
            &preset.source(),
            &preset.detector(),
            Self::duration_for(preset),
            seed,
        )?;
        let photons = photons_from_sorted(
            &out.hits,
            &preset_cluster_config(),
            Chunking::default(),
            exec,
        )?;
        let signal = photons_in(&photons, &src.signal.roi);
        let idler = photons_in(&photons, &src.idler.roi);
        let settings = AnalysisSettings::default();
        let analysis = analyze(
            &signal,
            &idler,
            &truth_model(src.signal.channel),
            &truth_model(src.idler.channel),
            &settings,
            exec,
        )?;
        let truth_pairs = out
            .truth
            .chunks(2)
            .filter(|p| p.len() == 2 && p[0].survived && p[1].survived)
            .count();
        let pair_of = |p: &PhotonEvent| {
            out.origins[p.anchor_seq as usize]
                .photon_id()
                .and_then(|id| out.truth[id as usize].pair_id)
        };
        let retained_pairs = analysis
            .coincidences
            .iter()
            .filter(
                |c| matches!((pair_of(&c.signal), pair_of(&c.idler)), (Some(a), Some(b)) if a == b),
            )
            .count();
        Ok(PairRun {
            preset,
            analysis,
            truth_pairs,
            retained_pairs,
            elapsed: start.elapsed(),
        })
    }
}

pub struct Suite {
    pub seed: u64,
    pub exec: Exec,
    pairs: [OnceLock<std::result::Result<PairRun, String>>; 3],
}

impl Suite {
    pub fn new(seed: u64, exec: Exec) -> Self {
        Self {
            seed,
            exec,
            pairs: Default::default(),
        }
    }

    /// The run for the `k`-th pair preset (50, 100, 150 mW).
    pub fn pair_run(&self, k: usize) -> Result<&PairRun> {
        self.pairs[k]
            .get_or_init(|| {
                PairRun::run(Preset::PAIR_SOURCES[k], self.seed + k as u64 + 1, self.exec)
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| Error::InsufficientData(e.clone()))
    }

    pub fn run(&self, id: u8) -> Outcome {
        match id {
            1 => calibration_arithmetic(),
            2 => calibration_closed_loop(self.seed, self.exec),
            3 => self.coincidence_resolution(),
            4 => self.table_one(),
            5 => self.table_two(),
            6 => pump_spot_values(),
            7 => self.anticorrelation(),
            8 => oracle_equivalences(self.seed, self.exec),
            9 => throughput(self.seed, THROUGHPUT_HITS),
            _ => panic!("no acceptance criterion {id}"),
        }
    }

    pub fn run_all(&self) -> Vec<Outcome> {
        (1..=9).map(|id| self.run(id)).collect()
    }

    fn coincidence_resolution(&self) -> Outcome {
        let start = Instant::now();
        let result = self.pair_run(2).map(|run| {
            let fit = run.analysis.resolution.as_ref();
            let sigma = fit.map_or(f64::NAN, |f| f.sigma.abs());
            let converged = fit.is_some_and(|f| f.converged);
            let retained = run.retained_pairs as f64 / run.truth_pairs.max(1) as f64;
            let fast = run.elapsed < Duration::from_secs(30);
            (
                converged && within_rel(sigma, PAIR_JITTER_NS, 0.10) && retained >= 0.99 && fast,
                format!(
                    "{}: σ = {sigma:.3} ns (target {PAIR_JITTER_NS} ± 10%), retained {:.2}% of {} truth pairs (≥ 99%), run {:.1} s (< 30 s)",
                    run.preset,
                    100.0 * retained,
                    run.truth_pairs,
                    run.elapsed.as_secs_f64()
                ),
            )
        });
        outcome(3, start.elapsed(), result)
    }

    fn table_one(&self) -> Outcome {
        let start = Instant::now();
        let result = (|| {
            let mut ok = true;
            let mut parts = Vec::new();
            for (k, setting) in POWER_SETTINGS.iter().enumerate() {
                let run = self.pair_run(k)?;
                let a = &run.analysis;
                let n = a.coincidences.len();
                let (Some(s), Some(i)) = (&a.signal_summary, &a.idler_summary) else {
                    return Ok((false, format!("{}: no spectral summary", run.preset)));
                };
                let check = |median: f64, fwhm: Option<f64>, t_med: f64, t_fwhm: f64| {
                    (median - t_med).abs() <= 0.2
                        && fwhm.is_some_and(|f| within_rel(f, t_fwhm, 0.10))
                };
                let good = n >= MIN_PAIRS
                    && check(
                        s.median_nm,
                        s.fwhm_nm,
                        setting.signal_median_nm,
                        setting.signal_fwhm_nm,
                    )
                    && check(
                        i.median_nm,
                        i.fwhm_nm,
                        setting.idler_median_nm,
                        setting.idler_fwhm_nm,
                    )
                    && run.elapsed < Duration::from_secs(60);
                ok &= good;
                parts.push(format!(
                    "{} mW n={n} signal {:.2}/{:.2} (vs {}/{}) idler {:.2}/{:.2} (vs {}/{})",
                    setting.power_mw,
                    s.median_nm,
                    s.fwhm_nm.unwrap_or(f64::NAN),
                    setting.signal_median_nm,
                    setting.signal_fwhm_nm,
                    i.median_nm,
                    i.fwhm_nm.unwrap_or(f64::NAN),
                    setting.idler_median_nm,
                    setting.idler_fwhm_nm
                ));
            }
            Ok((ok, parts.join("; ")))
        })();
        outcome(4, start.elapsed(), result)
    }

    fn table_two(&self) -> Outcome {
        let start = Instant::now();
        let result = (|| {
            let mut ok = true;
            let mut parts = Vec::new();
            let mut centrals = Vec::new();
            for (k, setting) in POWER_SETTINGS.iter().enumerate() {
                let run = self.pair_run(k)?;
                let pump = run.analysis.pump.as_ref().ok_or_else(|| {
                    Error::InsufficientData(format!("{}: no pump reconstruction", run.preset))
                })?;
                ok &= (pump.central_value_nm - setting.pump_central_nm).abs() <= 0.05
                    && within_rel(pump.rms_nm, setting.pump_rms_nm, 0.15);
                centrals.push(pump.central_value_nm);
                parts.push(format!(
                    "{} mW central {:.3} (vs {} ± 0.05) rms {:.3} (vs {} ± 15%)",
                    setting.power_mw,
                    pump.central_value_nm,
                    setting.pump_central_nm,
                    pump.rms_nm,
                    setting.pump_rms_nm
                ));
            }
            let increasing = centrals.windows(2).all(|w| w[0] < w[1]);
            parts.push(format!("centrals strictly increasing: {increasing}"));
            Ok((ok && increasing, parts.join("; ")))
        })();
        outcome(5, start.elapsed(), result)
    }

    fn anticorrelation(&self) -> Outcome {
        let start = Instant::now();
        let result = (|| {
            let run = self.pair_run(0)?;
            let setting = &POWER_SETTINGS[0];
            let a = &run.analysis;
            let (Some(jsi), Some(pump)) = (&a.jsi, &a.pump) else {
                return Ok((false, "no JSI".to_string()));
            };
            let settings = AnalysisSettings::default();
            let band = crate::spectra::jsi_band_mask(
                &jsi.hist,
                pump.central_value_nm,
                setting.pump_rms_nm,
                settings.band_k,
            )?;
            let fraction = band.in_band_fraction(&a.coincidences);
            let r = jsi.correlation.unwrap_or(f64::NAN);
            Ok((
                r <= -0.5 && (fraction - 0.95).abs() <= 0.02,
                format!(
                    "{}: Pearson r = {r:.3} (≤ −0.5), ±2σ band with rms {} nm holds {:.2}% of {} pairs (95 ± 2%)",
                    run.preset,
                    setting.pump_rms_nm,
                    100.0 * fraction,
                    a.coincidences.len()
                ),
            ))
        })();
        outcome(7, start.elapsed(), result)
    }
}

pub fn calibration_arithmetic() -> Outcome {
    let start = Instant::now();
    let (slope, intercept) = BOTTOM_DISPERSION;
    let points: Vec<LinePoint> = ARGON_LINES_NM
        .iter()
        .map(|&nm| LinePoint {
            pixel: (nm - intercept) / slope,
            reference_nm: nm,
        })
        .collect();
    let result = fit_linear_scale(&points).map(|m| {
        let (ds, di) = ((m.slope - slope).abs(), (m.intercept - intercept).abs());
        let elapsed = start.elapsed();
        (
            ds < 1e-9 && di < 1e-9 && elapsed < Duration::from_secs(1),
            format!(
                "slope {:.12} (|Δ| = {ds:.1e}), intercept {:.9} (|Δ| = {di:.1e}), both < 1e-9",
                m.slope, m.intercept
            ),
        )
    });
    outcome(1, start.elapsed(), result)
}

pub fn calibration_closed_loop(seed: u64, exec: Exec) -> Outcome {
    let start = Instant::now();
    let result = (|| {
        let preset = Preset::Argon;
        let SourceModel::Argon(src) = preset.source() else {
            unreachable!("argon preset")
        };
        let out = generate(
            &preset.source(),
            &preset.detector(),
            preset.default_duration_s(),
            seed,
        )?;
        let photons = photons_from_sorted(
            &out.hits,
            &preset_cluster_config(),
            Chunking::default(),
            exec,
        )?;
        let mut ok = true;
        let mut parts = Vec::new();
        for optics in &src.channels {
            let channel_photons = photons_in(&photons, &optics.roi);
            let cal = calibrate_channel(
                &channel_photons,
                &optics.roi,
                &ARGON_LINES_NM,
                &argon_seed_windows(optics.channel),
                FINE_PROJECTION_BINS,
                exec,
            )?;
            let truth = optics.dispersion.slope;
            let injected_sigma_pix = ARGON_SIGMA_NM / truth;
            let sigmas: Vec<f64> = cal
                .lines
                .iter()
                .map(|l| l.fit.as_ref().map_or(f64::NAN, |f| f.sigma.abs()))
                .collect();
            let sigma_ok = cal.lines.iter().all(|l| l.included())
                && sigmas
                    .iter()
                    .all(|&s| within_rel(s, injected_sigma_pix, 0.30));
            let slope_ok = within_rel(cal.model.slope, truth, 0.01);
            ok &= sigma_ok && slope_ok;
            parts.push(format!(
                "{}: slope {:.5} (truth {truth}, ±1%), σ/injected = [{}]",
                optics.channel,
                cal.model.slope,
                sigmas
                    .iter()
                    .map(|s| format!("{:.2}", s / injected_sigma_pix))
                    .collect::<Vec<_>>()
                    .join(", ")
            ));
        }
        let elapsed = start.elapsed();
        ok &= elapsed < Duration::from_secs(30);
        Ok((ok, parts.join("; ")))
    })();
    outcome(2, start.elapsed(), result)
}

pub fn pump_spot_values() -> Outcome {
    let start = Instant::now();
    let result = (|| {
        let a = pump_wavelength(802.8, 814.0)?;
        let b = pump_wavelength(810.4, 808.9)?;
        let spot = (a - 404.18).abs() <= 0.01 && (b - 404.82).abs() <= 0.01;
        let table = (a - POWER_SETTINGS[0].pump_central_nm).abs() <= 0.1
            && (b - POWER_SETTINGS[2].pump_central_nm).abs() <= 0.1;
        Ok((
            spot && table,
            format!("λp(802.8, 814.0) = {a:.4} (404.18 ± 0.01), λp(810.4, 808.9) = {b:.4} (404.82 ± 0.01), published pump centrals within 0.1: {table}"),
        ))
    })();
    outcome(6, start.elapsed(), result)
}

/// Random hits on a small patch so that chains and touching clusters are
/// common.
pub fn random_hits(n: usize, seed: u64) -> Vec<PixelHit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits: Vec<PixelHit> = (0..n)
        .map(|_| {
            PixelHit::new(
                rng.random_range(0..24),
                rng.random_range(0..24),
                rng.random_range(0..200_000),
                rng.random_range(1..200),
            )
        })
        .collect();
    hits.sort_by_key(|h| h.order_key());
    hits
}

pub fn oracle_equivalences(seed: u64, exec: Exec) -> Outcome {
    let start = Instant::now();
    let result = (|| {
        let mut parts = Vec::new();

        let window = 192;
        let hits = random_hits(10_000, seed);
        let truth = brute_force_clusters(&hits, window, Adjacency::Eight);
        let single = label_clusters(&hits, window, Adjacency::Eight);
        let mut chunked_ok = true;
        for (span, overlap) in [(400, 192), (5_000, 1_000), (40_000, 20_000)] {
            let chunks = chunk_by_time(hits.iter().copied().map(Ok), span, overlap)?;
            let config = ClusterConfig {
                window_ticks: window,
                ..ClusterConfig::default()
            };
            let groups: Vec<Vec<usize>> = extract_clusters(chunks, &config, exec)?
                .into_iter()
                .map(|c| c.seqs.iter().map(|&s| s as usize).collect())
                .collect();
            chunked_ok &= groups == truth;
        }
        let four_ok = label_clusters(&hits, window, Adjacency::Four)
            == brute_force_clusters(&hits, window, Adjacency::Four);
        let cluster_ok = single == truth && chunked_ok && four_ok;
        parts.push(format!(
            "clustering {} hits → {} clusters, equal: {cluster_ok}",
            hits.len(),
            truth.len()
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let quantize = |t: f64| (t / 1.5625).round() * 1.5625;
        let mut ts: Vec<f64> = (0..1_000)
            .map(|_| quantize(rng.random_range(0.0..200_000.0)))
            .collect();
        ts.sort_by(f64::total_cmp);
        let mut ti: Vec<f64> = ts
            .iter()
            .map(|&t| {
                if rng.random_bool(0.7) {
                    quantize(t + rng.random_range(-30.0..30.0))
                } else {
                    quantize(rng.random_range(0.0..200_000.0))
                }
            })
            .collect();
        ti.sort_by(f64::total_cmp);
        let matching_ok = match_closest_indices(&ts, &ti) == brute_force_matching(&ts, &ti);
        parts.push(format!("matching 1000×1000, equal: {matching_ok}"));

        let preset = Preset::Spdc150;
        let out = generate(&preset.source(), &preset.detector(), 0.2, seed)?;
        let config = preset_cluster_config();
        let whole = photon_multiset(&extract_photons(
            std::iter::once(Ok(HitChunk::whole(out.hits.clone()))),
            &config,
            exec,
        )?);
        let mut invariant = true;
        for span in [1u64 << 12, 30_000, 1 << 18, 1 << 22] {
            let chunking = Chunking {
                span_ticks: span,
                overlap_ticks: (span / 2).min(1 << 10),
            };
            invariant &=
                photon_multiset(&photons_from_sorted(&out.hits, &config, chunking, exec)?) == whole;
        }
        parts.push(format!(
            "chunked vs single-chunk photons ({}), identical: {invariant}",
            whole.len()
        ));
        Ok((cluster_ok && matching_ok && invariant, parts.join("; ")))
    })();
    outcome(8, start.elapsed(), result)
}

/// Generates at least `n_hits` pair-source hits, truncated to exactly
/// `n_hits`.
pub fn throughput_dataset(seed: u64, n_hits: usize) -> Result<SynthOutput> {
    let preset = Preset::Spdc150;
    let probe = generate(&preset.source(), &preset.detector(), 0.05, seed)?;
    let rate = probe.hits.len() as f64 / 0.05;
    let mut out = generate(
        &preset.source(),
        &preset.detector(),
        1.05 * n_hits as f64 / rate + 0.01,
        seed,
    )?;
    if out.hits.len() < n_hits {
        return Err(Error::InsufficientData(format!(
            "generated only {} hits",
            out.hits.len()
        )));
    }
    out.hits.truncate(n_hits);
    out.origins.truncate(n_hits);
    Ok(out)
}

pub fn throughput(seed: u64, n_hits: usize) -> Outcome {
    let start = Instant::now();
    let result = (|| {
        let out = throughput_dataset(seed, n_hits)?;
        let mut phx1 = Vec::with_capacity(8 + 16 * out.hits.len());
        write_hits(&mut phx1, HitFormat::Phx1, &out.hits)?;
        drop(out);
        let SourceModel::Spdc(src) = Preset::Spdc150.source() else {
            unreachable!("pair preset")
        };
        let signal = CalibratedChannel {
            roi: src.signal.roi,
            calibration: truth_model(src.signal.channel),
        };
        let idler = CalibratedChannel {
            roi: src.idler.roi,
            calibration: truth_model(src.idler.channel),
        };
        let settings = AnalysisSettings::default();
        let timed = Instant::now();
        let analysis = analyze_stream(
            Cursor::new(&phx1),
            HitFormat::Phx1,
            &preset_cluster_config(),
            Chunking::default(),
            &signal,
            &idler,
            &settings,
            Exec::Sequential,
        )?;
        let elapsed = timed.elapsed();

        let dts: Vec<f64> = analysis.coincidences.iter().map(|p| p.dt_ns).collect();
        let axis = Axis::new(-200.0, 200.0, 200, "ns")?;
        let seq = Histogram1D::from_values(axis.clone(), &dts, Exec::Sequential);
        let par = Histogram1D::from_values(axis, &dts, Exec::Parallel);
        let (counts, under, over) = naive_histogram(&dts, -200.0, 200.0, 200);
        let exact =
            seq == par && seq.counts == counts && seq.underflow == under && seq.overflow == over;
        Ok((
            elapsed < Duration::from_secs(60) && exact,
            format!(
                "{n_hits} hits → {} coincidences in {:.2} s single-threaded (< 60 s); sharded histogram count-exact: {exact}",
                analysis.coincidences.len(),
                elapsed.as_secs_f64()
            ),
        ))
    })();
    outcome(9, start.elapsed(), result)
}
