//! Expansion of one detected photon into a cluster of pixel hits.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::event_io::{PixelHit, GRID_SIZE, MAX_TOA_TICKS, TICK_NS};

use super::DetectorModel;

const MAX_TOT: f64 = 1023.0;
const TOT_REDRAWS: usize = 16;

/// Converts a detection time to a tick count, clamping at the run start.
pub(crate) fn ns_to_ticks(t_ns: f64) -> u64 {
    ((t_ns.max(0.0) / TICK_NS).floor() as u64).min(MAX_TOA_TICKS)
}

/// Truncated-Gaussian ToT draw on `[1, 1023]`.
pub(crate) fn draw_tot<R: Rng>(rng: &mut R, mean: f64, sigma: f64) -> u16 {
    if sigma > 0.0 {
        let normal = Normal::new(mean, sigma).expect("finite ToT parameters");
        for _ in 0..TOT_REDRAWS {
            let v = normal.sample(rng).round();
            if (1.0..=MAX_TOT).contains(&v) {
                return v as u16;
            }
        }
    }
    mean.round().clamp(1.0, MAX_TOT) as u16
}

/// Number of pixels for one photon: `1 + Poisson(mean − 1)`.
fn draw_cluster_size<R: Rng>(rng: &mut R, det: &DetectorModel) -> usize {
    if det.psf_sigma_pix == 0.0 || det.mean_cluster_size <= 1.0 {
        return 1;
    }
    let extra = Poisson::new(det.mean_cluster_size - 1.0)
        .expect("positive cluster-size mean")
        .sample(rng);
    1 + extra as usize
}

/// Draws at most this many offsets per requested pixel before giving up on
/// finding new distinct pixels.
const DRAWS_PER_PIXEL: usize = 8;

/// Renders a photon centered at `(x0, y0)` and detected at `t_ns`.
///
/// Pixel offsets are drawn from a Gaussian of width `psf_sigma_pix` and
/// rounded to the grid until `n` distinct pixels are lit. Each pixel's mean
/// ToT follows the profile height at its center relative to the brightest
/// lit pixel, which also gets the anchor bias. Each pixel's arrival time is
/// shifted by the injected time-walk of its own ToT. Pixels falling off the
/// grid are dropped.
pub(crate) fn render_cluster<R: Rng>(
    rng: &mut R,
    det: &DetectorModel,
    x0: f64,
    y0: f64,
    t_ns: f64,
    out: &mut Vec<PixelHit>,
) {
    let n = draw_cluster_size(rng, det);
    let mut pixels: Vec<(i32, i32)> = Vec::with_capacity(n);
    if det.psf_sigma_pix == 0.0 {
        pixels.push((x0.round() as i32, y0.round() as i32));
    } else {
        let spread = Normal::new(0.0, det.psf_sigma_pix).expect("finite spread");
        for _ in 0..DRAWS_PER_PIXEL * n {
            let p = (
                (x0 + spread.sample(rng)).round() as i32,
                (y0 + spread.sample(rng)).round() as i32,
            );
            if !pixels.contains(&p) {
                pixels.push(p);
                if pixels.len() == n {
                    break;
                }
            }
        }
    }
    let two_var = 2.0 * det.psf_sigma_pix * det.psf_sigma_pix;
    let height = |&(x, y): &(i32, i32)| {
        if two_var == 0.0 {
            1.0
        } else {
            (-((x as f64 - x0).powi(2) + (y as f64 - y0).powi(2)) / two_var).exp()
        }
    };
    let heights: Vec<f64> = pixels.iter().map(height).collect();
    let brightest = (0..pixels.len()).fold(0, |b, i| if heights[i] > heights[b] { i } else { b });
    let peak = heights[brightest];
    for (i, &(x, y)) in pixels.iter().enumerate() {
        if !(0..GRID_SIZE as i32).contains(&x) || !(0..GRID_SIZE as i32).contains(&y) {
            continue;
        }
        let mut mean = det.tot_peak * heights[i] / peak;
        if i == brightest {
            mean += det.tot_anchor_bias;
        }
        let tot = draw_tot(rng, mean, det.tot_sigma);
        let toa = ns_to_ticks(t_ns + det.timewalk_truth.correction_ns(tot));
        out.push(PixelHit::new(x as u16, y as u16, toa, tot));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tick_conversion_floors_and_clamps() {
        assert_eq!(ns_to_ticks(0.0), 0);
        assert_eq!(ns_to_ticks(-5.0), 0);
        assert_eq!(ns_to_ticks(3.2), 2);
        assert_eq!(ns_to_ticks(1.5625 * 7.0), 7);
    }

    #[test]
    fn tot_draws_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let t = draw_tot(&mut rng, 2.0, 30.0);
            assert!((1..=1023).contains(&t));
        }
        assert_eq!(draw_tot(&mut rng, 0.2, 0.0), 1);
    }

    #[test]
    fn cluster_is_compact_around_center() {
        let det = DetectorModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let mut hits = Vec::new();
            render_cluster(&mut rng, &det, 100.3, 50.8, 1000.0, &mut hits);
            assert!(!hits.is_empty());
            for h in &hits {
                assert!((h.x as f64 - 100.3).abs() <= 4.0 && (h.y as f64 - 50.8).abs() <= 4.0);
            }
            let mut pixels: Vec<_> = hits.iter().map(|h| (h.x, h.y)).collect();
            pixels.sort();
            pixels.dedup();
            assert_eq!(pixels.len(), hits.len());
        }
    }

    #[test]
    fn corner_clusters_lose_off_grid_pixels() {
        let det = DetectorModel {
            mean_cluster_size: 9.0,
            ..DetectorModel::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut hits = Vec::new();
        for _ in 0..50 {
            render_cluster(&mut rng, &det, 0.0, 255.0, 10.0, &mut hits);
        }
        assert!(hits.iter().all(|h| h.x < 256 && h.y < 256));
    }
}
