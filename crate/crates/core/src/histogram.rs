//! Uniform-bin 1D and 2D count histograms with exact shard merging.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;

const SHARD_LEN: usize = 1 << 16;

/// Uniform binning of `[lo, hi)` into `n_bins` half-open bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n_bins: usize,
    pub unit: String,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n_bins: usize, unit: impl Into<String>) -> Result<Self> {
        if n_bins == 0 {
            return Err(Error::Validation("axis needs at least one bin".into()));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Validation(format!(
                "axis range [{lo}, {hi}) is empty or not finite"
            )));
        }
        Ok(Self {
            lo,
            hi,
            n_bins,
            unit: unit.into(),
        })
    }

    /// Axis with bins of (approximately) `width`, rounded to a whole count.
    pub fn with_width(lo: f64, hi: f64, width: f64, unit: impl Into<String>) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Validation(format!(
                "bin width must be positive, got {width}"
            )));
        }
        let n = ((hi - lo) / width).round().max(1.0) as usize;
        Self::new(lo, hi, n, unit)
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.n_bins as f64
    }

    pub fn edge(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.width()
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_bins).map(|i| self.center(i)).collect()
    }

    /// Bin of `x`: `Ok(i)`, or `Err(false)` below range, `Err(true)` above
    /// range or NaN. A value on an interior edge goes to the higher bin.
    pub fn locate(&self, x: f64) -> std::result::Result<usize, bool> {
        if x.is_nan() || x >= self.hi {
            return Err(true);
        }
        if x < self.lo {
            return Err(false);
        }
        let mut i = (((x - self.lo) / self.width()) as usize).min(self.n_bins - 1);
        if i > 0 && x < self.edge(i) {
            i -= 1;
        } else if i + 1 < self.n_bins && x >= self.edge(i + 1) {
            i += 1;
        }
        Ok(i)
    }

    fn check_same(&self, other: &Axis) -> Result<()> {
        if self.lo == other.lo && self.hi == other.hi && self.n_bins == other.n_bins {
            Ok(())
        } else {
            Err(Error::AxisMismatch(format!(
                "[{}, {})/{} vs [{}, {})/{}",
                self.lo, self.hi, self.n_bins, other.lo, other.hi, other.n_bins
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram1D {
    pub axis: Axis,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram1D {
    pub fn new(axis: Axis) -> Self {
        let counts = vec![0; axis.n_bins];
        Self {
            axis,
            counts,
            underflow: 0,
            overflow: 0,
        }
    }

    pub fn fill(&mut self, x: f64) {
        match self.axis.locate(x) {
            Ok(i) => self.counts[i] += 1,
            Err(false) => self.underflow += 1,
            Err(true) => self.overflow += 1,
        }
    }

    pub fn fill_all(&mut self, values: impl IntoIterator<Item = f64>) {
        for v in values {
            self.fill(v);
        }
    }

    /// Fills from a slice in fixed-size shards and merges them.
    pub fn from_values(axis: Axis, values: &[f64], exec: Exec) -> Self {
        let empty = Histogram1D::new(axis);
        exec.fold_shards(
            values,
            SHARD_LEN,
            || empty.clone(),
            |h, &v| h.fill(v),
            |mut a, b| {
                a.merge(&b).expect("shards share one axis");
                a
            },
        )
    }

    pub fn merge(&mut self, other: &Histogram1D) -> Result<()> {
        self.axis.check_same(&other.axis)?;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        Ok(())
    }

    pub fn in_range(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn entries(&self) -> u64 {
        self.in_range() + self.underflow + self.overflow
    }

    pub fn nonempty_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// First bin holding the maximum count.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("bin_lo_{u},bin_hi_{u},count\n", u = self.axis.unit);
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.axis.edge(i),
                self.axis.edge(i + 1),
                c
            ));
        }
        out
    }
}

/// Row-major 2D histogram: `counts[ix * ny + iy]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram2D {
    pub x: Axis,
    pub y: Axis,
    pub counts: Vec<u64>,
    /// Entries outside either axis range.
    pub outside: u64,
}

impl Histogram2D {
    pub fn new(x: Axis, y: Axis) -> Self {
        let counts = vec![0; x.n_bins * y.n_bins];
        Self {
            x,
            y,
            counts,
            outside: 0,
        }
    }

    pub fn fill(&mut self, xv: f64, yv: f64) {
        match (self.x.locate(xv), self.y.locate(yv)) {
            (Ok(i), Ok(j)) => self.counts[i * self.y.n_bins + j] += 1,
            _ => self.outside += 1,
        }
    }

    pub fn from_points(x: Axis, y: Axis, points: &[(f64, f64)], exec: Exec) -> Self {
        let empty = Histogram2D::new(x, y);
        exec.fold_shards(
            points,
            SHARD_LEN,
            || empty.clone(),
            |h, &(a, b)| h.fill(a, b),
            |mut a, b| {
                a.merge(&b).expect("shards share one binning");
                a
            },
        )
    }

    pub fn get(&self, ix: usize, iy: usize) -> u64 {
        self.counts[ix * self.y.n_bins + iy]
    }

    pub fn merge(&mut self, other: &Histogram2D) -> Result<()> {
        self.x.check_same(&other.x)?;
        self.y.check_same(&other.y)?;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.outside += other.outside;
        Ok(())
    }

    pub fn entries(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.outside
    }

    pub fn nonempty_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Matrix CSV: the header row holds y-bin centers, each following row
    /// starts with its x-bin center.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\\{}", self.x.unit, self.y.unit);
        for c in self.y.centers() {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
        for i in 0..self.x.n_bins {
            out.push_str(&format!("{}", self.x.center(i)));
            for j in 0..self.y.n_bins {
                out.push_str(&format!(",{}", self.get(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn edges_go_to_higher_bin() {
        let axis = Axis::new(-200.0, 200.0, 40, "ns").unwrap();
        assert_eq!(axis.locate(-190.0), Ok(1));
        assert_eq!(axis.locate(0.0), Ok(20));
        assert_eq!(axis.locate(-200.0), Ok(0));
        assert_eq!(axis.locate(200.0), Err(true));
        assert_eq!(axis.locate(-200.1), Err(false));
        assert_eq!(axis.locate(f64::NAN), Err(true));
    }

    #[test]
    fn tallies_account_for_every_entry() {
        let mut h = Histogram1D::new(Axis::new(0.0, 10.0, 10, "x").unwrap());
        h.fill_all([-1.0, 0.0, 5.5, 9.999, 10.0, 11.0]);
        assert_eq!(h.underflow, 1);
        assert_eq!(h.overflow, 2);
        assert_eq!(h.in_range(), 3);
        assert_eq!(h.entries(), 6);
    }

    #[test]
    fn merge_requires_same_axis() {
        let mut a = Histogram1D::new(Axis::new(0.0, 1.0, 4, "x").unwrap());
        let b = Histogram1D::new(Axis::new(0.0, 1.0, 5, "x").unwrap());
        assert!(a.merge(&b).is_err());
    }

    #[test]
    fn bad_axes_rejected() {
        assert!(Axis::new(1.0, 1.0, 3, "").is_err());
        assert!(Axis::new(0.0, 1.0, 0, "").is_err());
        assert!(Axis::with_width(0.0, 1.0, 0.0, "").is_err());
    }

    proptest! {
        #[test]
        fn sharded_fill_equals_single_pass(values in prop::collection::vec(-20.0f64..120.0, 0..3000), n_bins in 1usize..50) {
            let axis = Axis::new(0.0, 100.0, n_bins, "x").unwrap();
            let mut single = Histogram1D::new(axis.clone());
            single.fill_all(values.iter().copied());
            let mut shards = Histogram1D::new(axis.clone());
            for part in values.chunks(7) {
                let mut h = Histogram1D::new(axis.clone());
                h.fill_all(part.iter().copied());
                shards.merge(&h).unwrap();
            }
            prop_assert_eq!(&shards, &single);
            prop_assert_eq!(&Histogram1D::from_values(axis, &values, Exec::Parallel), &single);
            prop_assert_eq!(single.entries(), values.len() as u64);
        }

        #[test]
        fn merge_is_associative(a in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 0..200),
                                b in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 0..200),
                                c in prop::collection::vec((0.0f64..12.0, 0.0f64..10.0), 0..200)) {
            let x = Axis::new(0.0, 10.0, 7, "x").unwrap();
            let y = Axis::new(0.0, 10.0, 5, "y").unwrap();
            let mk = |pts: &[(f64, f64)]| Histogram2D::from_points(x.clone(), y.clone(), pts, Exec::Sequential);
            let (ha, hb, hc) = (mk(&a), mk(&b), mk(&c));
            let mut left = ha.clone();
            left.merge(&hb).unwrap();
            left.merge(&hc).unwrap();
            let mut right = hb.clone();
            right.merge(&hc).unwrap();
            let mut right_total = ha.clone();
            right_total.merge(&right).unwrap();
            prop_assert_eq!(&left, &right_total);
            prop_assert_eq!(left.entries(), (a.len() + b.len() + c.len()) as u64);
        }
    }
}
