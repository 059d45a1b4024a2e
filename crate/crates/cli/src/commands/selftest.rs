use serde::Serialize;

use tpxspec::acceptance::{Outcome, Suite, TITLES};
use tpxspec::Exec;

use crate::error::{CliError, CliResult};
use crate::output::OutputDir;

#[derive(Clone, Debug, Serialize)]
pub struct Row {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed_s: f64,
}

impl From<&Outcome> for Row {
    fn from(o: &Outcome) -> Self {
        Row {
            id: o.id,
            title: o.title,
            passed: o.passed,
            detail: o.detail.clone(),
            elapsed_s: o.elapsed.as_secs_f64(),
        }
    }
}

/// Runs the acceptance criteria (all of them when `ids` is empty), printing
/// one line per criterion. Fails if any criterion fails.
pub fn run(seed: u64, ids: &[u8], out: &mut OutputDir) -> CliResult<Vec<Row>> {
    if let Some(bad) = ids
        .iter()
        .find(|&&id| id == 0 || id as usize > TITLES.len())
    {
        return Err(CliError::Validation(format!(
            "no criterion {bad}; ids run 1 to {}",
            TITLES.len()
        )));
    }
    let ids: Vec<u8> = if ids.is_empty() {
        (1..=TITLES.len() as u8).collect()
    } else {
        ids.to_vec()
    };
    let suite = Suite::new(seed, Exec::default());
    let mut rows = Vec::with_capacity(ids.len());
    for id in ids {
        let outcome = suite.run(id);
        println!("{outcome}");
        rows.push(Row::from(&outcome));
    }
    out.write_json("selftest.json", &rows)?;
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.id.to_string())
        .collect();
    if failed.is_empty() {
        Ok(rows)
    } else {
        Err(CliError::Validation(format!(
            "criteria failed: {}",
            failed.join(", ")
        )))
    }
}
