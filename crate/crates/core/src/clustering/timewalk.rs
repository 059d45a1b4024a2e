use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-constant time-walk correction indexed by ToT.
///
/// The correction for a ToT value is that of the largest threshold not
/// exceeding it; values below the first threshold (or an empty table) get no
/// correction.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeWalkTable {
    entries: Vec<(u16, f64)>,
}

impl TimeWalkTable {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(entries: Vec<(u16, f64)>) -> Result<Self> {
        for pair in entries.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::Validation(format!(
                    "time-walk thresholds must strictly increase ({} then {})",
                    pair[0].0, pair[1].0
                )));
            }
        }
        if let Some((t, c)) = entries.iter().find(|(_, c)| !c.is_finite()) {
            return Err(Error::Validation(format!(
                "time-walk correction for threshold {t} is not finite ({c})"
            )));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(u16, f64)] {
        &self.entries
    }

    pub fn is_identity(&self) -> bool {
        self.entries.iter().all(|&(_, c)| c == 0.0)
    }

    pub fn correction_ns(&self, tot: u16) -> f64 {
        let n = self
            .entries
            .partition_point(|&(threshold, _)| threshold <= tot);
        if n == 0 {
            0.0
        } else {
            self.entries[n - 1].1
        }
    }

    /// Reads `tot_threshold,correction_ns` lines. A header line and `#`
    /// comments are skipped.
    pub fn from_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') || text.starts_with("tot_threshold") {
                continue;
            }
            let (a, b) = text.split_once(',').ok_or_else(|| {
                Error::parse_line(i as u64 + 1, "expected 'tot_threshold,correction_ns'")
            })?;
            let threshold: u16 = a
                .trim()
                .parse()
                .map_err(|e| Error::parse_line(i as u64 + 1, format!("tot_threshold: {e}")))?;
            let correction: f64 = b
                .trim()
                .parse()
                .map_err(|e| Error::parse_line(i as u64 + 1, format!("correction_ns: {e}")))?;
            entries.push((threshold, correction));
        }
        Self::new(entries)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tot_threshold,correction_ns\n");
        for (t, c) in &self.entries {
            out.push_str(&format!("{t},{c}\n"));
        }
        out
    }
}
