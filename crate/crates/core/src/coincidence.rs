//! Signal/idler pairing by closest arrival time, Δt histogramming, the
//! coincidence window and the temporal-resolution fit.

use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationModel, RegionOfInterest};
use crate::clustering::PhotonEvent;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fit::{fit_gaussian_points, GaussianFit, MIN_NONEMPTY_BINS};
use crate::histogram::{Axis, Histogram1D};

pub const DEFAULT_WINDOW_NS: f64 = 20.0;
pub const DEFAULT_HIST_RANGE_NS: (f64, f64) = (-200.0, 200.0);
pub const DEFAULT_HIST_BIN_NS: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelTag {
    Signal,
    Idler,
}

/// A spectrometer channel: its tag, sensor region and wavelength scale.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    pub tag: ChannelTag,
    pub roi: RegionOfInterest,
    pub calibration: CalibrationModel,
}

/// Checks that the two channel regions do not share sensor rows.
pub fn check_disjoint(signal: &Channel, idler: &Channel) -> Result<()> {
    if signal.roi.overlaps_in_y(&idler.roi) {
        return Err(Error::Config(
            "signal and idler regions overlap in y".into(),
        ));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhotonPair {
    pub signal: PhotonEvent,
    pub idler: PhotonEvent,
    /// `signal.t_ns − idler.t_ns`.
    pub dt_ns: f64,
    pub lambda_signal_nm: f64,
    pub lambda_idler_nm: f64,
}

impl PhotonPair {
    pub fn new(
        signal: PhotonEvent,
        idler: PhotonEvent,
        signal_cal: &CalibrationModel,
        idler_cal: &CalibrationModel,
    ) -> Self {
        Self {
            dt_ns: signal.t_ns - idler.t_ns,
            lambda_signal_nm: signal_cal.pixel_to_wavelength(signal.cx),
            lambda_idler_nm: idler_cal.pixel_to_wavelength(idler.cx),
            signal,
            idler,
        }
    }

    pub fn csv_header() -> &'static str {
        "t_signal_ns,t_idler_ns,dt_ns,lambda_signal_nm,lambda_idler_nm"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.signal.t_ns,
            self.idler.t_ns,
            self.dt_ns,
            self.lambda_signal_nm,
            self.lambda_idler_nm
        )
    }
}

/// Skip list over idler slots: smallest unused slot `>= i`.
struct NextFree(Vec<usize>);

impl NextFree {
    fn new(n: usize) -> Self {
        Self((0..=n).collect())
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn remove(&mut self, i: usize) {
        self.0[i] = i + 1;
    }
}

/// Largest unused slot `<= k`, with slots shifted by one so that 0 means
/// "none".
struct PrevFree(Vec<usize>);

impl PrevFree {
    fn new(n: usize) -> Self {
        Self((0..=n).collect())
    }

    fn find(&mut self, mut k: usize) -> usize {
        while self.0[k] != k {
            self.0[k] = self.0[self.0[k]];
            k = self.0[k];
        }
        k
    }

    fn remove(&mut self, k: usize) {
        self.0[k] = k - 1;
    }
}

/// Nearest unused idler to `ts`, the earlier one on ties.
fn nearest_free(
    ts: f64,
    idler_t: &[f64],
    next: &mut NextFree,
    prev: &mut PrevFree,
) -> Option<usize> {
    let n = idler_t.len();
    let p = idler_t.partition_point(|&t| t < ts);
    let succ = Some(next.find(p)).filter(|&j| j < n);
    let pred = Some(prev.find(p)).filter(|&k| k > 0).map(|k| k - 1);
    match (pred, succ) {
        (None, None) => None,
        (Some(a), Some(b)) if ts - idler_t[a] > idler_t[b] - ts => Some(b),
        (Some(a), _) => {
            // Earliest unused idler sharing the predecessor's timestamp.
            let first = idler_t.partition_point(|&t| t < idler_t[a]);
            Some(next.find(first))
        }
        (None, Some(b)) => Some(b),
    }
}

/// Heap entry ordered by `(|Δt|, idler, signal)`, smallest first.
#[derive(PartialEq)]
struct Candidate {
    gap: f64,
    idler: usize,
    signal: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .gap
            .total_cmp(&self.gap)
            .then(other.idler.cmp(&self.idler))
            .then(other.signal.cmp(&self.signal))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Greedy one-to-one closest-time matching on sorted timestamps.
///
/// Pairs are formed in order of increasing |Δt|: the closest unused
/// (signal, idler) pair is always taken next, the earlier idler and then the
/// earlier signal on ties. Each photon is used at most once; photons left
/// without a partner are omitted. Returns `(signal, idler)` index pairs in
/// signal order.
///
/// Taking the closest pair first keeps a photon whose partner was lost from
/// claiming the partner of a neighbouring pair.
pub fn match_closest_indices(signal_t: &[f64], idler_t: &[f64]) -> Vec<(usize, usize)> {
    debug_assert!(
        signal_t.windows(2).all(|w| w[0] <= w[1]),
        "signal times must be sorted"
    );
    debug_assert!(
        idler_t.windows(2).all(|w| w[0] <= w[1]),
        "idler times must be sorted"
    );
    let n = idler_t.len();
    let mut next = NextFree::new(n);
    let mut prev = PrevFree::new(n);
    let mut used = vec![false; n];
    let mut heap = std::collections::BinaryHeap::with_capacity(signal_t.len());
    for (signal, &ts) in signal_t.iter().enumerate() {
        if let Some(idler) = nearest_free(ts, idler_t, &mut next, &mut prev) {
            heap.push(Candidate {
                gap: (ts - idler_t[idler]).abs(),
                idler,
                signal,
            });
        }
    }
    // Entries go stale when their idler is taken; a signal's best gap can
    // only grow, so a stale entry is re-evaluated and pushed back.
    let mut out = Vec::with_capacity(signal_t.len().min(n));
    while let Some(c) = heap.pop() {
        if !used[c.idler] {
            used[c.idler] = true;
            next.remove(c.idler);
            prev.remove(c.idler + 1);
            out.push((c.signal, c.idler));
            if out.len() == n {
                break;
            }
        } else if let Some(idler) = nearest_free(signal_t[c.signal], idler_t, &mut next, &mut prev)
        {
            heap.push(Candidate {
                gap: (signal_t[c.signal] - idler_t[idler]).abs(),
                idler,
                signal: c.signal,
            });
        }
    }
    out.sort_unstable();
    out
}

pub fn match_closest(
    signal: &[PhotonEvent],
    idler: &[PhotonEvent],
    signal_cal: &CalibrationModel,
    idler_cal: &CalibrationModel,
) -> Vec<PhotonPair> {
    let ts: Vec<f64> = signal.iter().map(|p| p.t_ns).collect();
    let ti: Vec<f64> = idler.iter().map(|p| p.t_ns).collect();
    match_closest_indices(&ts, &ti)
        .into_iter()
        .map(|(a, b)| PhotonPair::new(signal[a], idler[b], signal_cal, idler_cal))
        .collect()
}

pub fn dt_histogram(
    pairs: &[PhotonPair],
    range_ns: (f64, f64),
    bin_ns: f64,
    exec: Exec,
) -> Result<Histogram1D> {
    let axis = Axis::with_width(range_ns.0, range_ns.1, bin_ns, "ns")?;
    let dts: Vec<f64> = pairs.iter().map(|p| p.dt_ns).collect();
    Ok(Histogram1D::from_values(axis, &dts, exec))
}

/// Keeps pairs with `|dt| < window_ns`.
pub fn select_coincidences(pairs: &[PhotonPair], window_ns: f64) -> Result<Vec<PhotonPair>> {
    if !(window_ns > 0.0) {
        return Err(Error::Validation(format!(
            "coincidence window must be positive, got {window_ns}"
        )));
    }
    Ok(pairs
        .iter()
        .filter(|p| p.dt_ns.abs() < window_ns)
        .copied()
        .collect())
}

/// Gaussian peak over a flat accidental background across the whole Δt
/// histogram. Histograms with entries but fewer than five populated bins
/// return an unconverged moment estimate.
pub fn fit_temporal_resolution(hist: &Histogram1D) -> Result<GaussianFit> {
    let total = hist.in_range();
    if total == 0 {
        return Err(Error::InsufficientData("Δt histogram is empty".into()));
    }
    let xs = hist.axis.centers();
    let ys: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    if hist.nonempty_bins() < MIN_NONEMPTY_BINS {
        let mean = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / total as f64;
        let var = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| y * (x - mean).powi(2))
            .sum::<f64>()
            / total as f64;
        let peak = ys.iter().cloned().fold(0.0, f64::max);
        return Ok(GaussianFit::unconverged(mean, var.sqrt(), peak, 0.0));
    }
    Ok(fit_gaussian_points(
        &xs,
        &ys,
        hist.axis.width(),
        (hist.axis.lo, hist.axis.hi),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn photon(t_ns: f64) -> PhotonEvent {
        PhotonEvent {
            cx: 100.0,
            cy: 10.0,
            t_ns,
            tot_sum: 1,
            n_pixels: 1,
            anchor_seq: 0,
        }
    }

    fn pair_with_dt(dt: f64) -> PhotonPair {
        let cal = CalibrationModel::linear(1.0, 0.0);
        PhotonPair::new(photon(dt), photon(0.0), &cal, &cal)
    }

    #[test]
    fn closest_matching_small_case() {
        let pairs = match_closest_indices(&[0.0, 100.0], &[3.0, 250.0]);
        assert_eq!(pairs, vec![(0, 0), (1, 1)]);
        let cal = CalibrationModel::linear(1.0, 0.0);
        let full = match_closest(
            &[photon(0.0), photon(100.0)],
            &[photon(3.0), photon(250.0)],
            &cal,
            &cal,
        );
        let dts: Vec<f64> = full.iter().map(|p| p.dt_ns).collect();
        assert_eq!(dts, vec![-3.0, -150.0]);
    }

    #[test]
    fn lost_partner_does_not_cascade() {
        // The first signal's idler was lost; the other two pairs stay intact.
        let pairs = match_closest_indices(&[0.0, 10.0, 20.0], &[11.0, 21.0]);
        assert_eq!(pairs, vec![(1, 0), (2, 1)]);
    }

    #[test]
    fn no_idlers_no_pairs() {
        assert!(match_closest_indices(&[1.0, 2.0], &[]).is_empty());
    }

    #[test]
    fn identical_lists_pair_with_zero_dt() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 7.5).collect();
        let pairs = match_closest_indices(&t, &t);
        assert_eq!(pairs.len(), 50);
        assert!(pairs.iter().all(|&(a, b)| t[a] == t[b]));
    }

    #[test]
    fn ties_go_to_earlier_idler() {
        assert_eq!(match_closest_indices(&[10.0], &[5.0, 15.0]), vec![(0, 0)]);
        assert_eq!(
            match_closest_indices(&[10.0, 10.0, 10.0], &[5.0, 5.0, 15.0]),
            vec![(0, 0), (1, 1), (2, 2)]
        );
    }

    #[test]
    fn each_idler_used_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..1e4)).collect();
        let mut i: Vec<f64> = (0..300).map(|_| rng.random_range(0.0..1e4)).collect();
        s.sort_by(f64::total_cmp);
        i.sort_by(f64::total_cmp);
        let pairs = match_closest_indices(&s, &i);
        assert_eq!(pairs.len(), 300);
        let mut used: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        used.sort();
        used.dedup();
        assert_eq!(used.len(), 300);
    }

    #[test]
    fn dt_histogram_bins_by_hand() {
        let pairs = [pair_with_dt(-3.0), pair_with_dt(-150.0)];
        let h = dt_histogram(&pairs, (-200.0, 200.0), 10.0, Exec::Sequential).unwrap();
        assert_eq!(h.counts.len(), 40);
        assert_eq!(h.counts[19], 1);
        assert_eq!(h.counts[5], 1);
        assert_eq!(h.in_range(), 2);
        let empty = dt_histogram(&[], (-200.0, 200.0), 10.0, Exec::Sequential).unwrap();
        assert_eq!(empty.entries(), 0);
        let edge = dt_histogram(
            &[pair_with_dt(-190.0), pair_with_dt(500.0)],
            (-200.0, 200.0),
            10.0,
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!(edge.counts[1], 1);
        assert_eq!(edge.overflow, 1);
        assert!(dt_histogram(&pairs, (-200.0, 200.0), 0.0, Exec::Sequential).is_err());
    }

    #[test]
    fn window_selection() {
        let pairs = [pair_with_dt(-3.0), pair_with_dt(25.0), pair_with_dt(20.0)];
        let kept = select_coincidences(&pairs, 20.0).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].dt_ns, -3.0);
        assert_eq!(select_coincidences(&kept, 20.0).unwrap(), kept);
        assert!(select_coincidences(&pairs, 0.0).is_err());
    }

    #[test]
    fn resolution_fit_recovers_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let peak = Normal::new(0.0, 7.0).unwrap();
        let mut h = Histogram1D::new(Axis::with_width(-200.0, 200.0, 2.0, "ns").unwrap());
        for _ in 0..20_000 {
            h.fill(peak.sample(&mut rng));
        }
        for _ in 0..20_000 {
            h.fill(rng.random_range(-200.0..200.0));
        }
        let fit = fit_temporal_resolution(&h).unwrap();
        assert!(fit.converged);
        assert!((fit.sigma / 7.0 - 1.0).abs() < 0.1, "sigma {}", fit.sigma);
    }

    #[test]
    fn delta_histogram_is_flagged() {
        let mut h = Histogram1D::new(Axis::with_width(-200.0, 200.0, 2.0, "ns").unwrap());
        for _ in 0..1000 {
            h.fill(0.5);
        }
        assert!(!fit_temporal_resolution(&h).unwrap().converged);
        let empty = Histogram1D::new(Axis::with_width(-200.0, 200.0, 2.0, "ns").unwrap());
        assert!(fit_temporal_resolution(&empty).is_err());
    }

    #[test]
    fn uniform_background_has_no_peak() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut h = Histogram1D::new(Axis::with_width(-200.0, 200.0, 2.0, "ns").unwrap());
        for _ in 0..50_000 {
            h.fill(rng.random_range(-200.0..200.0));
        }
        let fit = fit_temporal_resolution(&h).unwrap();
        let noise = (50_000.0f64 / 200.0).sqrt();
        assert!(!fit.converged || fit.amplitude < 5.0 * noise, "{fit:?}");
    }
}
