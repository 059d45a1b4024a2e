use serde::Serialize;

use tpxspec::synth::{generate, DetectorModel, SourceModel, TruthRecord};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::OutputDir;

#[derive(Clone, Debug, Serialize)]
pub struct GenerateSummary {
    pub hits: usize,
    pub photons: usize,
    pub detected: usize,
    pub dark_hits: usize,
    pub duration_s: f64,
    pub hit_file: String,
}

#[derive(Serialize)]
struct SourceRecord<'a> {
    preset: &'a str,
    duration_s: f64,
    source: &'a SourceModel,
    detector: &'a DetectorModel,
    summary: &'a GenerateSummary,
}

/// Writes `hits.<ext>`, `truth.csv`, `timewalk.csv` (the injected table)
/// and `source.json`.
pub fn run(config: &RunConfig, out: &mut OutputDir) -> CliResult<GenerateSummary> {
    let source = config.synth.source();
    let detector = config.synth.detector();
    let duration_s = config.synth.duration_s();
    let data = generate(&source, &detector, duration_s, config.seed).map_err(|e| match e {
        tpxspec::Error::Validation(m) | tpxspec::Error::Config(m) => CliError::Validation(m),
        other => other.into(),
    })?;

    let hit_file = format!("hits.{}", config.format.extension());
    out.write_hits(&hit_file, config.format, &data.hits)?;

    let mut truth = String::with_capacity(64 * data.truth.len() + 64);
    truth.push_str(TruthRecord::csv_header());
    truth.push('\n');
    for t in &data.truth {
        truth.push_str(&t.csv_row());
        truth.push('\n');
    }
    out.write_csv("truth.csv", &truth)?;
    out.write_csv("timewalk.csv", &detector.timewalk_truth.to_csv())?;

    let summary = GenerateSummary {
        hits: data.hits.len(),
        photons: data.truth.len(),
        detected: data.survivors().count(),
        dark_hits: data.dark_hits(),
        duration_s,
        hit_file: out.path(&hit_file).display().to_string(),
    };
    out.write_json(
        "source.json",
        &SourceRecord {
            preset: config.synth.preset.name(),
            duration_s,
            source: &source,
            detector: &detector,
            summary: &summary,
        },
    )?;
    Ok(summary)
}
