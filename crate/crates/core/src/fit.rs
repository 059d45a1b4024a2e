//! Gaussian-plus-constant least-squares fitting (Levenberg–Marquardt).
//!
//! Model: `A·exp(−(x−μ)²/(2σ²)) + B`. Parameter order everywhere in this
//! module, including the covariance matrix, is `[A, μ, σ, B]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::Histogram1D;

pub const MAX_ITERATIONS: u32 = 200;
pub const RELATIVE_TOLERANCE: f64 = 1e-10;
/// Minimum nonempty bins in a fit window.
pub const MIN_NONEMPTY_BINS: usize = 5;
/// Fits narrower than this fraction of a bin are treated as unresolved.
const MIN_SIGMA_BINS: f64 = 0.25;
const LAMBDA_START: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub mean: f64,
    pub sigma: f64,
    pub offset: f64,
    /// Parameter covariance, order `[A, μ, σ, B]`; NaN when not estimable.
    pub covariance: [[f64; 4]; 4],
    pub converged: bool,
    pub iterations: u32,
    pub rss: f64,
}

impl GaussianFit {
    pub fn eval(&self, x: f64) -> f64 {
        gaussian(&[self.amplitude, self.mean, self.sigma, self.offset], x)
    }

    pub fn fwhm(&self) -> f64 {
        FWHM_PER_SIGMA * self.sigma
    }

    pub fn mean_stderr(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }

    pub fn sigma_stderr(&self) -> f64 {
        self.covariance[2][2].sqrt()
    }

    /// Moment estimate used when a least-squares fit is not possible.
    pub(crate) fn unconverged(mean: f64, sigma: f64, amplitude: f64, offset: f64) -> Self {
        Self {
            amplitude,
            mean,
            sigma,
            offset,
            covariance: [[f64::NAN; 4]; 4],
            converged: false,
            iterations: 0,
            rss: f64::NAN,
        }
    }
}

/// `2·sqrt(2·ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

#[inline]
fn gaussian(p: &[f64; 4], x: f64) -> f64 {
    let z = (x - p[1]) / p[2];
    p[0] * (-0.5 * z * z).exp() + p[3]
}

fn rss(p: &[f64; 4], xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - gaussian(p, x);
            r * r
        })
        .sum()
}

/// Normal equations `JᵀJ` and `Jᵀr` at `p`.
fn normal_equations(p: &[f64; 4], xs: &[f64], ys: &[f64]) -> ([[f64; 4]; 4], [f64; 4]) {
    let mut jtj = [[0.0; 4]; 4];
    let mut jtr = [0.0; 4];
    let (a, mu, s) = (p[0], p[1], p[2]);
    for (&x, &y) in xs.iter().zip(ys) {
        let d = x - mu;
        let e = (-0.5 * d * d / (s * s)).exp();
        let row = [e, a * e * d / (s * s), a * e * d * d / (s * s * s), 1.0];
        let r = y - (a * e + p[3]);
        for i in 0..4 {
            jtr[i] += row[i] * r;
            for j in 0..4 {
                jtj[i][j] += row[i] * row[j];
            }
        }
    }
    (jtj, jtr)
}

/// Solves a 4×4 system by Gaussian elimination with partial pivoting.
fn solve4(mut m: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    let scale = m.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    for col in 0..4 {
        let pivot = (col..4).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() <= scale * 1e-15 {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let mut acc = b[row];
        for k in row + 1..4 {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn invert4(m: &[[f64; 4]; 4]) -> Option<[[f64; 4]; 4]> {
    let mut inv = [[0.0; 4]; 4];
    for col in 0..4 {
        let mut e = [0.0; 4];
        e[col] = 1.0;
        let x = solve4(*m, e)?;
        for row in 0..4 {
            inv[row][col] = x[row];
        }
    }
    Some(inv)
}

/// Result of a raw Levenberg–Marquardt run.
#[derive(Clone, Debug)]
pub struct LmOutcome {
    pub params: [f64; 4],
    /// Residual sum of squares at the start and after every accepted step.
    pub rss_history: Vec<f64>,
    pub iterations: u32,
    /// Stopped on tolerance (or at a point no damped step can improve)
    /// rather than on the iteration limit.
    pub stopped_on_tolerance: bool,
}

/// Damped least squares from `init`. Steps are accepted only when they
/// strictly lower the residual sum of squares.
pub fn levenberg_marquardt(xs: &[f64], ys: &[f64], init: [f64; 4]) -> LmOutcome {
    let mut p = init;
    let mut current = rss(&p, xs, ys);
    let mut history = vec![current];
    let mut lambda = LAMBDA_START;
    let mut iterations = 0;
    let mut stopped = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        if current == 0.0 {
            stopped = true;
            break;
        }
        let (jtj, jtr) = normal_equations(&p, xs, ys);
        let mut accepted: Option<([f64; 4], f64, [f64; 4])> = None;
        while lambda <= LAMBDA_MAX {
            let mut m = jtj;
            for i in 0..4 {
                m[i][i] += if jtj[i][i] > 0.0 {
                    lambda * jtj[i][i]
                } else {
                    lambda
                };
            }
            if let Some(step) = solve4(m, jtr) {
                let trial = [
                    p[0] + step[0],
                    p[1] + step[1],
                    p[2] + step[2],
                    p[3] + step[3],
                ];
                if trial[2] > 0.0 && trial.iter().all(|v| v.is_finite()) {
                    let trial_rss = rss(&trial, xs, ys);
                    if trial_rss < current {
                        accepted = Some((trial, trial_rss, step));
                        lambda = (lambda * 0.1).max(1e-12);
                        break;
                    }
                }
            }
            lambda *= 10.0;
        }
        let Some((trial, trial_rss, step)) = accepted else {
            stopped = true;
            break;
        };
        let drop = current - trial_rss;
        p = trial;
        current = trial_rss;
        history.push(current);
        let small_step = step
            .iter()
            .zip(&p)
            .all(|(d, v)| d.abs() <= RELATIVE_TOLERANCE * (v.abs() + RELATIVE_TOLERANCE));
        if drop <= RELATIVE_TOLERANCE * current || small_step {
            stopped = true;
            break;
        }
    }
    LmOutcome {
        params: p,
        rss_history: history,
        iterations,
        stopped_on_tolerance: stopped,
    }
}

/// Initial guess: μ at the highest point, B at the lowest, A the difference,
/// σ the RMS width of the baseline-subtracted counts.
fn initial_guess(xs: &[f64], ys: &[f64], bin_width: f64) -> [f64; 4] {
    let (mut imax, mut ymin) = (0, f64::INFINITY);
    for (i, &y) in ys.iter().enumerate() {
        if y > ys[imax] {
            imax = i;
        }
        ymin = ymin.min(y);
    }
    let weights: Vec<f64> = ys.iter().map(|y| y - ymin).collect();
    let wsum: f64 = weights.iter().sum();
    let sigma = if wsum > 0.0 {
        let mean = xs.iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>() / wsum;
        let var = xs
            .iter()
            .zip(&weights)
            .map(|(x, w)| w * (x - mean) * (x - mean))
            .sum::<f64>()
            / wsum;
        var.sqrt().max(bin_width * 0.5)
    } else {
        bin_width
    };
    [ys[imax] - ymin, xs[imax], sigma, ymin]
}

/// Fits points `(xs, ys)` sampled on a grid of spacing `bin_width` lying in
/// `window`. Returns the fit with `converged = false` when the optimizer
/// hit the iteration limit or the result is degenerate.
pub fn fit_gaussian_points(
    xs: &[f64],
    ys: &[f64],
    bin_width: f64,
    window: (f64, f64),
) -> GaussianFit {
    fit_gaussian_traced(xs, ys, bin_width, window).0
}

pub fn fit_gaussian_traced(
    xs: &[f64],
    ys: &[f64],
    bin_width: f64,
    window: (f64, f64),
) -> (GaussianFit, Vec<f64>) {
    assert_eq!(xs.len(), ys.len());
    let init = initial_guess(xs, ys, bin_width);
    let outcome = levenberg_marquardt(xs, ys, init);
    let [a, mu, sigma, b] = outcome.params;
    let n = xs.len();
    let covariance = if n > 4 {
        let (jtj, _) = normal_equations(&outcome.params, xs, ys);
        let s2 = outcome.rss_history.last().copied().unwrap_or(f64::NAN) / (n - 4) as f64;
        invert4(&jtj)
            .map(|inv| inv.map(|row| row.map(|v| v * s2)))
            .unwrap_or([[f64::NAN; 4]; 4])
    } else {
        [[f64::NAN; 4]; 4]
    };
    let degenerate = !(a.is_finite() && mu.is_finite() && sigma.is_finite() && b.is_finite())
        || a <= 0.0
        || sigma <= MIN_SIGMA_BINS * bin_width
        || sigma > window.1 - window.0
        || mu < window.0
        || mu > window.1;
    let fit = GaussianFit {
        amplitude: a,
        mean: mu,
        sigma,
        offset: b,
        covariance,
        converged: outcome.stopped_on_tolerance && !degenerate,
        iterations: outcome.iterations,
        rss: *outcome.rss_history.last().unwrap_or(&f64::NAN),
    };
    (fit, outcome.rss_history)
}

/// Bin centers and counts of the bins whose centers fall in `window`.
pub fn window_points(hist: &Histogram1D, window: (f64, f64)) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &c) in hist.counts.iter().enumerate() {
        let x = hist.axis.center(i);
        if x >= window.0 && x <= window.1 {
            xs.push(x);
            ys.push(c as f64);
        }
    }
    (xs, ys)
}

/// Fits one peak inside `window` (axis units, inclusive on bin centers).
pub fn fit_gaussian_peak(hist: &Histogram1D, window: (f64, f64)) -> Result<GaussianFit> {
    let (xs, ys) = window_points(hist, window);
    let nonempty = ys.iter().filter(|&&y| y > 0.0).count();
    if nonempty < MIN_NONEMPTY_BINS {
        return Err(Error::InsufficientData(format!(
            "window [{}, {}] holds {nonempty} nonempty bins, need {MIN_NONEMPTY_BINS}",
            window.0, window.1
        )));
    }
    Ok(fit_gaussian_points(&xs, &ys, hist.axis.width(), window))
}
